#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dardkit/data.hpp"
#include "dardkit/error.hpp"
#include "dardkit/model.hpp"
#include "dardkit/objectives.hpp"
#include "dardkit/tensor.hpp"

namespace dardkit {

enum class AttackKind { fgsm, bim, pgd, tpgd, dpgd };
enum class TargetRule { least_likely, fixed_class };

inline std::string to_string(AttackKind k) {
    switch (k) {
        case AttackKind::fgsm: return "fgsm";
        case AttackKind::bim: return "bim";
        case AttackKind::pgd: return "pgd";
        case AttackKind::tpgd: return "tpgd";
        case AttackKind::dpgd: return "dpgd";
    }
    return "?";
}

inline AttackKind parse_attack_kind(const std::string& s) {
    if (s == "fgsm") return AttackKind::fgsm;
    if (s == "bim") return AttackKind::bim;
    if (s == "pgd") return AttackKind::pgd;
    if (s == "tpgd") return AttackKind::tpgd;
    if (s == "dpgd") return AttackKind::dpgd;
    throw ConfigError("unknown attack kind '" + s + "' (expected fgsm, bim, pgd, tpgd or dpgd)");
}

/// l-inf attack hyperparameters. Defaults: eps = 8/255, step = 2/255, T = 20.
struct AttackConfig {
    AttackKind kind = AttackKind::pgd;
    double epsilon = 8.0 / 255.0;
    double step_size = 2.0 / 255.0;
    int iterations = 20;
    bool random_start = true;
    TargetRule target_rule = TargetRule::least_likely;
    int target_class = 0;  // fixed_class only
    PerSampleLoss dpgd_loss = PerSampleLoss::dice;
    double dice_smooth = 1.0;

    /// Paper defaults for `kind`; random start is on for pgd only.
    static AttackConfig for_kind(AttackKind kind) {
        AttackConfig c;
        c.kind = kind;
        c.random_start = kind == AttackKind::pgd;
        return c;
    }

    void validate() const {
        if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
            throw ConfigError("attack epsilon must be nonnegative, got " + std::to_string(epsilon));
        }
        if (kind != AttackKind::fgsm) {
            if (!(step_size > 0.0) || !std::isfinite(step_size)) {
                throw ConfigError("attack step_size must be positive, got " + std::to_string(step_size));
            }
            if (iterations < 1) {
                throw ConfigError("attack iterations must be >= 1, got " + std::to_string(iterations));
            }
        }
        if (!(dice_smooth > 0.0)) {
            throw ConfigError("attack dice_smooth must be positive");
        }
    }
};

/// Column label used in reports: FGSM, PGD20, BIM, T-PGD, DPGD20.
inline std::string attack_name(const AttackConfig& c) {
    switch (c.kind) {
        case AttackKind::fgsm: return "FGSM";
        case AttackKind::bim: return "BIM";
        case AttackKind::pgd: return "PGD" + std::to_string(c.iterations);
        case AttackKind::tpgd: return "T-PGD";
        case AttackKind::dpgd: return "DPGD" + std::to_string(c.iterations);
    }
    return "?";
}

struct AdvBatch {
    Batch originals;
    Matrix adversarials;
    int iterations_used = 0;

    Matrix perturbation() const { return adversarials - originals.inputs; }

    /// Largest absolute perturbation over the whole batch.
    double linf() const { return adversarials.size() ? perturbation().cwiseAbs().maxCoeff() : 0.0; }
};

/// Clamp to the eps-box around x_orig, then to [0, 1].
inline Matrix project(const Matrix& x_adv, const Matrix& x_orig, double epsilon) {
    if (!(epsilon >= 0.0)) {
        throw ConfigError("projection radius must be nonnegative, got " + std::to_string(epsilon));
    }
    if (x_adv.rows() != x_orig.rows() || x_adv.cols() != x_orig.cols()) {
        throw ContractViolation("project: candidate and original inputs differ in shape");
    }
    Matrix out(x_adv.rows(), x_adv.cols());
    for (Eigen::Index i = 0; i < x_adv.rows(); ++i) {
        for (Eigen::Index j = 0; j < x_adv.cols(); ++j) {
            const double lo = x_orig(i, j) - epsilon;
            const double hi = x_orig(i, j) + epsilon;
            const double v = std::min(std::max(x_adv(i, j), lo), hi);
            out(i, j) = std::min(std::max(v, 0.0), 1.0);
        }
    }
    return out;
}

/// Partition weight for iteration t in 1..T: (t - 1) / (2T).
inline double lambda_schedule(int t, int total) {
    if (total < 1 || t < 1 || t > total) {
        throw ContractViolation("lambda_schedule: iteration " + std::to_string(t) + " outside [1, " +
                                std::to_string(total) + "]");
    }
    return static_cast<double>(t - 1) / (2.0 * static_cast<double>(total));
}

/// Loss to ascend (or descend) at iteration t (1-based).
using StepLoss = std::function<LogitLoss(int t)>;

namespace detail {

inline void check_finite_rows(const Matrix& g) {
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        if (!g.row(i).allFinite()) {
            throw NumericalError("attack gradient is non-finite for sample " + std::to_string(i));
        }
    }
}

}  // namespace detail

/// `iterations` steps of x <- project(x + direction * step * sign(grad)).
/// direction is +1 for loss ascent and -1 for descent.
inline Matrix sign_gradient_steps(const Classifier& model, const Matrix& x_orig, Matrix x, double epsilon,
                                  double step, int iterations, const StepLoss& loss_at, double direction = 1.0) {
    for (int t = 1; t <= iterations; ++t) {
        Matrix g = model.differentiate(x, loss_at(t), GradMode::input).input_grad;
        detail::check_finite_rows(g);
        x += (direction * step) * g.unaryExpr(&sign0);
        x = project(x, x_orig, epsilon);
    }
    return x;
}

inline Matrix random_start_point(const Matrix& x, double epsilon, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-epsilon, epsilon);
    Matrix start = x;
    for (Eigen::Index i = 0; i < start.rows(); ++i) {
        for (Eigen::Index j = 0; j < start.cols(); ++j) {
            start(i, j) += u(rng);
        }
    }
    return project(start, x, epsilon);
}

namespace detail {

inline void expect_kind(const AttackConfig& cfg, std::initializer_list<AttackKind> kinds, const char* fn) {
    for (AttackKind k : kinds) {
        if (cfg.kind == k) {
            cfg.validate();
            return;
        }
    }
    throw ConfigError(std::string(fn) + " called with attack kind '" + to_string(cfg.kind) + "'");
}

inline AdvBatch finish(const Batch& batch, Matrix adv, int iterations) {
    AdvBatch out;
    out.originals = batch;
    out.adversarials = std::move(adv);
    out.iterations_used = iterations;
    return out;
}

}  // namespace detail

/// x_adv = clamp01(x + eps * sign(grad CE)).
inline AdvBatch fgsm(const Classifier& model, const Batch& batch, const AttackConfig& cfg) {
    detail::expect_kind(cfg, {AttackKind::fgsm}, "fgsm");
    Matrix g = input_gradient(model, batch.inputs, batch.labels, {});
    detail::check_finite_rows(g);
    Matrix adv = batch.inputs + cfg.epsilon * g.unaryExpr(&sign0);
    return detail::finish(batch, project(adv, batch.inputs, cfg.epsilon), 1);
}

/// Iterated FGSM with step size and projection, starting at x.
inline AdvBatch bim(const Classifier& model, const Batch& batch, const AttackConfig& cfg) {
    detail::expect_kind(cfg, {AttackKind::bim}, "bim");
    const auto ce = cross_entropy_loss(batch.labels);
    Matrix adv = sign_gradient_steps(model, batch.inputs, batch.inputs, cfg.epsilon, cfg.step_size, cfg.iterations,
                                     [&](int) { return ce; });
    return detail::finish(batch, std::move(adv), cfg.iterations);
}

/// BIM with an optional uniform random start in the eps-box.
inline AdvBatch pgd(const Classifier& model, const Batch& batch, const AttackConfig& cfg, std::uint64_t seed = 0) {
    detail::expect_kind(cfg, {AttackKind::pgd}, "pgd");
    const auto ce = cross_entropy_loss(batch.labels);
    Matrix start = cfg.random_start ? random_start_point(batch.inputs, cfg.epsilon, seed) : batch.inputs;
    Matrix adv = sign_gradient_steps(model, batch.inputs, std::move(start), cfg.epsilon, cfg.step_size,
                                     cfg.iterations, [&](int) { return ce; });
    return detail::finish(batch, std::move(adv), cfg.iterations);
}

/// Per-sample target classes for targeted PGD. least_likely picks the
/// smallest clean logit among classes other than the true label.
inline std::vector<int> resolve_targets(const Matrix& clean_logits, const std::vector<int>& labels,
                                        const AttackConfig& cfg) {
    std::vector<int> targets(labels.size());
    const auto k = static_cast<int>(clean_logits.cols());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (cfg.target_rule == TargetRule::least_likely) {
            int best = -1;
            for (int j = 0; j < k; ++j) {
                if (j != labels[i] && (best < 0 || clean_logits(static_cast<Eigen::Index>(i), j) <
                                                       clean_logits(static_cast<Eigen::Index>(i), best))) {
                    best = j;
                }
            }
            targets[i] = best;
        } else {
            if (cfg.target_class < 0 || cfg.target_class >= k) {
                throw ConfigError("target class " + std::to_string(cfg.target_class) + " is outside [0, " +
                                  std::to_string(k) + ")");
            }
            targets[i] = cfg.target_class;
        }
        if (targets[i] == labels[i]) {
            throw ContractViolation("tpgd: target for sample " + std::to_string(i) + " equals its true label " +
                                    std::to_string(labels[i]));
        }
    }
    return targets;
}

/// Targeted PGD: descend CE toward the resolved target class.
inline AdvBatch tpgd(const Classifier& model, const Batch& batch, const AttackConfig& cfg, std::uint64_t seed = 0) {
    detail::expect_kind(cfg, {AttackKind::tpgd}, "tpgd");
    const std::vector<int> targets = resolve_targets(model.forward(batch.inputs), batch.labels, cfg);
    const auto ce = cross_entropy_loss(targets);
    Matrix start = cfg.random_start ? random_start_point(batch.inputs, cfg.epsilon, seed) : batch.inputs;
    Matrix adv = sign_gradient_steps(model, batch.inputs, std::move(start), cfg.epsilon, cfg.step_size,
                                     cfg.iterations, [&](int) { return ce; }, -1.0);
    return detail::finish(batch, std::move(adv), cfg.iterations);
}

/// Step-t loss used by DPGD: the correct/wrong partitioned Dice (or CE) loss
/// weighted by lambda_schedule(t, T).
inline StepLoss dpgd_step_loss(const std::vector<int>& labels, const AttackConfig& cfg) {
    return [labels, cfg](int t) {
        return dpgd_partitioned_loss(labels, lambda_schedule(t, cfg.iterations), cfg.dice_smooth, cfg.dpgd_loss);
    };
}

inline AdvBatch dpgd(const Classifier& model, const Batch& batch, const AttackConfig& cfg, std::uint64_t seed = 0) {
    detail::expect_kind(cfg, {AttackKind::dpgd}, "dpgd");
    Matrix start = cfg.random_start ? random_start_point(batch.inputs, cfg.epsilon, seed) : batch.inputs;
    Matrix adv = sign_gradient_steps(model, batch.inputs, std::move(start), cfg.epsilon, cfg.step_size,
                                     cfg.iterations, dpgd_step_loss(batch.labels, cfg));
    return detail::finish(batch, std::move(adv), cfg.iterations);
}

/// Dispatches on cfg.kind.
inline AdvBatch run_attack(const Classifier& model, const Batch& batch, const AttackConfig& cfg, std::uint64_t seed = 0) {
    switch (cfg.kind) {
        case AttackKind::fgsm: return fgsm(model, batch, cfg);
        case AttackKind::bim: return bim(model, batch, cfg);
        case AttackKind::pgd: return pgd(model, batch, cfg, seed);
        case AttackKind::tpgd: return tpgd(model, batch, cfg, seed);
        case AttackKind::dpgd: return dpgd(model, batch, cfg, seed);
    }
    throw ConfigError("unsupported attack kind");
}

}  // namespace dardkit
