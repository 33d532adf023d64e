#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dardkit/attacks.hpp"
#include "dardkit/checkpoint.hpp"
#include "dardkit/data.hpp"
#include "dardkit/error.hpp"
#include "dardkit/model.hpp"
#include "dardkit/objectives.hpp"

namespace dardkit {

enum class Strategy { natural, sat, ard, dard, tdard, pgdard, onlyadv_ard };

inline std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::natural: return "natural";
        case Strategy::sat: return "sat";
        case Strategy::ard: return "ard";
        case Strategy::dard: return "dard";
        case Strategy::tdard: return "tdard";
        case Strategy::pgdard: return "pgdard";
        case Strategy::onlyadv_ard: return "onlyadv_ard";
    }
    return "?";
}

inline Strategy parse_strategy(const std::string& s) {
    for (Strategy v : {Strategy::natural, Strategy::sat, Strategy::ard, Strategy::dard, Strategy::tdard,
                       Strategy::pgdard, Strategy::onlyadv_ard}) {
        if (to_string(v) == s) {
            return v;
        }
    }
    throw ConfigError("unknown strategy '" + s + "' (expected natural, sat, ard, dard, tdard, pgdard or onlyadv_ard)");
}

inline bool needs_teacher(Strategy s) { return s != Strategy::natural && s != Strategy::sat; }

struct DistillConfig {
    Strategy strategy = Strategy::dard;
    double alpha_kd = 0.9;
    double tau = 1.0;
    double mix_beta = 0.5;
    double alpha_at = 0.5;
    KlOrientation kl_orientation = KlOrientation::teacher_student;
    AttackConfig attack = AttackConfig::for_kind(AttackKind::dpgd);
    int epochs = 30;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;
    SgdConfig sgd;

    void validate() const {
        if (!(mix_beta >= 0.0 && mix_beta <= 1.0)) {
            throw ConfigError("mix_beta must lie in [0, 1], got " + std::to_string(mix_beta));
        }
        if (epochs < 1) {
            throw ConfigError("epochs must be >= 1, got " + std::to_string(epochs));
        }
        if (batch_size == 0) {
            throw ConfigError("batch_size must be >= 1");
        }
        loss_config().validate();
        ATLossConfig{alpha_at}.validate();
        attack.validate();
        sgd.validate();
    }

    DistillLossConfig loss_config() const {
        DistillLossConfig c;
        c.alpha_kd = alpha_kd;
        c.tau = tau;
        c.dice_smooth = attack.dice_smooth;
        c.kl_orientation = kl_orientation;
        return c;
    }
};

/// Inner attack actually used by a strategy. sat, ard and pgdard always run
/// PGD with a random start; dard, tdard and onlyadv_ard run the configured
/// attack (DPGD by default).
inline AttackConfig inner_attack(const DistillConfig& cfg) {
    AttackConfig a = cfg.attack;
    switch (cfg.strategy) {
        case Strategy::sat:
        case Strategy::ard:
        case Strategy::pgdard:
            a.kind = AttackKind::pgd;
            a.random_start = true;
            break;
        default:
            break;
    }
    return a;
}

/// Soft-label mixing coefficient actually used (onlyadv_ard pins it to 0).
inline double effective_mix_beta(const DistillConfig& cfg) {
    return cfg.strategy == Strategy::onlyadv_ard ? 0.0 : cfg.mix_beta;
}

/// mix_beta * softmax_t(teacher(x)) + (1 - mix_beta) * softmax_t(teacher(x_adv)).
inline SoftLabels teacher_soft_label(const Classifier& teacher, const Matrix& x, const Matrix& x_adv, double mix_beta,
                                     double tau) {
    if (!(mix_beta >= 0.0 && mix_beta <= 1.0)) {
        throw ConfigError("mix_beta must lie in [0, 1], got " + std::to_string(mix_beta));
    }
    const SoftLabels nat = softmax_t(teacher.forward(x), tau);
    const SoftLabels adv = softmax_t(teacher.forward(x_adv), tau);
    Matrix mixed = mix_beta * nat.probs() + (1.0 - mix_beta) * adv.probs();
    // Renormalise away rounding so rows stay on the simplex.
    for (Eigen::Index i = 0; i < mixed.rows(); ++i) {
        mixed.row(i) /= mixed.row(i).sum();
    }
    return SoftLabels(std::move(mixed));
}

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double clean_acc = 0.0;              // %, student on clean training batches before each update
    std::optional<double> adv_acc;       // %, student on its inner adversarial examples
    double wall_time = 0.0;              // seconds

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["epoch"] = epoch;
        j["train_loss"] = train_loss;
        j["clean_acc"] = clean_acc;
        if (adv_acc) {
            j["adv_acc"] = *adv_acc;
        }
        j["wall_time"] = wall_time;
        return j;
    }
};

struct TrainLog {
    std::vector<EpochRecord> epochs;

    /// One JSON object per line.
    std::string to_jsonl() const {
        std::string out;
        for (const auto& e : epochs) {
            out += e.to_json().dump() + "\n";
        }
        return out;
    }
};

struct TrainResult {
    ModelState state;
    TrainLog log;
};

/// Trains a copy of `student` (its current parameters are the initial point)
/// and returns the final state. `teacher` must be given exactly for the
/// distillation strategies and is only read.
inline TrainResult train(const Classifier& student, const Classifier* teacher, const Dataset& data,
                         const DistillConfig& cfg) {
    cfg.validate();
    if (needs_teacher(cfg.strategy) && teacher == nullptr) {
        throw ConfigError("strategy '" + to_string(cfg.strategy) + "' needs a teacher model");
    }
    if (!needs_teacher(cfg.strategy) && teacher != nullptr) {
        throw ConfigError("strategy '" + to_string(cfg.strategy) + "' does not take a teacher model");
    }
    if (teacher && teacher->num_classes() != student.num_classes()) {
        throw ConfigError("teacher predicts " + std::to_string(teacher->num_classes()) + " classes, student " +
                          std::to_string(student.num_classes()));
    }
    if (data.num_classes != student.num_classes()) {
        throw ConfigError("dataset '" + data.id + "' has " + std::to_string(data.num_classes) + " classes, model " +
                          std::to_string(student.num_classes()));
    }
    if (data.input_shape() != student.input_shape()) {
        throw ConfigError("dataset shape " + to_string(data.input_shape()) + " does not match model input " +
                          to_string(student.input_shape()));
    }

    auto model = student.clone();
    const AttackConfig attack = inner_attack(cfg);
    const DistillLossConfig loss_cfg = cfg.loss_config();
    const double beta = effective_mix_beta(cfg);
    std::vector<double> momentum;

    TrainResult result;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto epoch_batches = batches(data, cfg.batch_size, cfg.seed, static_cast<std::uint64_t>(epoch));
        double loss_sum = 0.0;
        std::size_t seen = 0, clean_hits = 0, adv_hits = 0;

        for (std::size_t b = 0; b < epoch_batches.size(); ++b) {
            const Batch& batch = epoch_batches[b];
            const Matrix& x = batch.inputs;
            const std::vector<int>& y = batch.labels;

            const auto clean_pred = predictions(model->forward(x));
            for (std::size_t i = 0; i < y.size(); ++i) {
                clean_hits += clean_pred[i] == y[i] ? 1 : 0;
            }

            std::vector<ObjectiveTerm> terms;
            Matrix x_adv;
            if (cfg.strategy != Strategy::natural) {
                const std::uint64_t attack_seed = mix_seed(cfg.seed, (static_cast<std::uint64_t>(epoch) << 32) | b);
                x_adv = run_attack(*model, batch, attack, attack_seed).adversarials;
                const auto adv_pred = predictions(model->forward(x_adv));
                for (std::size_t i = 0; i < y.size(); ++i) {
                    adv_hits += adv_pred[i] == y[i] ? 1 : 0;
                }
            }

            switch (cfg.strategy) {
                case Strategy::natural:
                    terms.push_back({x, cross_entropy_loss(y)});
                    break;
                case Strategy::sat:
                    terms = at_terms(x, x_adv, y, ATLossConfig{cfg.alpha_at});
                    break;
                case Strategy::ard:
                    terms = dard_terms(softmax_t(teacher->forward(x), cfg.tau), x, x_adv, y, loss_cfg,
                                       CeInput::adversarial);
                    break;
                case Strategy::dard:
                case Strategy::pgdard:
                case Strategy::onlyadv_ard:
                    terms = dard_terms(teacher_soft_label(*teacher, x, x_adv, beta, cfg.tau), x, x_adv, y, loss_cfg,
                                       CeInput::adversarial);
                    break;
                case Strategy::tdard:
                    terms = dard_terms(teacher_soft_label(*teacher, x, x_adv, beta, cfg.tau), x, x_adv, y, loss_cfg,
                                       CeInput::natural);
                    break;
            }

            ObjectiveValue obj = evaluate_objective(*model, terms);
            if (!std::isfinite(obj.value)) {
                throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(b));
            }
            loss_sum += obj.value * static_cast<double>(y.size());
            seen += y.size();
            auto [next, buf] = sgd_step(model->state(), obj.param_grad, cfg.sgd, std::move(momentum));
            momentum = std::move(buf);
            model->set_state(std::move(next));
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(seen);
        rec.clean_acc = 100.0 * static_cast<double>(clean_hits) / static_cast<double>(seen);
        if (cfg.strategy != Strategy::natural) {
            rec.adv_acc = 100.0 * static_cast<double>(adv_hits) / static_cast<double>(seen);
        }
        rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.epochs.push_back(rec);
    }
    result.state = model->state();
    return result;
}

enum class TeacherRecipe { natural, sat };

inline std::string to_string(TeacherRecipe r) { return r == TeacherRecipe::natural ? "natural" : "sat"; }

inline TeacherRecipe parse_recipe(const std::string& s) {
    if (s == "natural") return TeacherRecipe::natural;
    if (s == "sat") return TeacherRecipe::sat;
    throw ConfigError("unknown teacher recipe '" + s + "' (expected natural or sat)");
}

/// Seed used to initialise a freshly built model for a run seeded with `seed`.
inline std::uint64_t init_seed(std::uint64_t seed) { return mix_seed(seed, 0x1417); }

/// Trains a teacher from scratch with `recipe` (natural or sat) and, when a
/// path is given, checkpoints it with a `recipe` metadata tag.
inline TrainResult pretrain_teacher(const std::string& architecture_id, const Dataset& data, TeacherRecipe recipe,
                                    DistillConfig cfg,
                                    const std::optional<std::filesystem::path>& checkpoint = std::nullopt) {
    cfg.strategy = recipe == TeacherRecipe::natural ? Strategy::natural : Strategy::sat;
    auto model = make_model(architecture_id, data.input_shape(), data.num_classes, init_seed(cfg.seed));
    TrainResult r = train(*model, nullptr, data, cfg);
    if (checkpoint) {
        save_checkpoint(r.state, *checkpoint);
        save_checkpoint_metadata(*checkpoint, {{"role", "teacher"},
                                               {"recipe", to_string(recipe)},
                                               {"architecture", architecture_id},
                                               {"dataset", data.id},
                                               {"seed", std::to_string(cfg.seed)}});
    }
    return r;
}

}  // namespace dardkit
