#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dardkit/error.hpp"
#include "dardkit/model.hpp"
#include "dardkit/tensor.hpp"

namespace dardkit {

/// Floor applied to probabilities before every logarithm.
inline constexpr double kProbFloor = 1e-12;

// ---------------------------------------------------------------------------
// Softmax and soft labels
// ---------------------------------------------------------------------------

/// Row-wise softmax of logits / tau, computed in the max-shifted form.
inline Matrix softmax(const Matrix& logits, double tau = 1.0) {
    Matrix p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
            p(i, j) = std::exp((logits(i, j) - m) / tau);
            sum += p(i, j);
        }
        p.row(i) /= sum;
    }
    return p;
}

/// A batch of probability vectors used as distillation targets (one per row).
class SoftLabels {
public:
    SoftLabels() = default;

    /// Validates nonnegativity and unit row sums (within 1e-6).
    explicit SoftLabels(Matrix probs) : probs_(std::move(probs)) {
        for (Eigen::Index i = 0; i < probs_.rows(); ++i) {
            if (!(probs_.row(i).minCoeff() >= 0.0) || std::abs(probs_.row(i).sum() - 1.0) > 1e-6) {
                throw ContractViolation("soft label row " + std::to_string(i) + " is not a probability vector");
            }
        }
    }

    const Matrix& probs() const { return probs_; }
    Eigen::Index rows() const { return probs_.rows(); }
    Eigen::Index cols() const { return probs_.cols(); }

private:
    Matrix probs_;
};

inline void check_tau(double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw ConfigError("temperature tau must be positive, got " + std::to_string(tau));
    }
}

/// softmax(logits / tau) as soft labels.
inline SoftLabels softmax_t(const Matrix& logits, double tau) {
    check_tau(tau);
    return SoftLabels(softmax(logits, tau));
}

// ---------------------------------------------------------------------------
// Cross-entropy
// ---------------------------------------------------------------------------

inline void check_labels(const Matrix& logits, const std::vector<int>& labels) {
    if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
        throw ContractViolation("logits have " + std::to_string(logits.rows()) + " rows but there are " +
                                std::to_string(labels.size()) + " labels");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= logits.cols()) {
            throw ContractViolation("label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                                    " is outside [0, " + std::to_string(logits.cols()) + ")");
        }
    }
}

/// Per-sample -log softmax(z)[y] = log sum_j exp(z_j - z_y). When y holds the
/// largest logit this goes through log1p so confident rows keep full precision.
inline std::vector<double> cross_entropy_per_sample(const Matrix& logits, const std::vector<int>& labels) {
    check_labels(logits, labels);
    std::vector<double> out(labels.size());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        const Eigen::RowVectorXd d = logits.row(i).array() - logits(i, y);
        const double m = d.maxCoeff();
        double v;
        if (m <= 0.0) {
            double rest = 0.0;
            for (Eigen::Index j = 0; j < d.size(); ++j) {
                rest += j == y ? 0.0 : std::exp(d(j));
            }
            v = std::log1p(rest);
        } else {
            v = m + std::log((d.array() - m).exp().sum());
        }
        out[static_cast<std::size_t>(i)] = v;
    }
    return out;
}

/// Mean cross-entropy over the batch.
inline double cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
    const auto per = cross_entropy_per_sample(logits, labels);
    if (per.empty()) {
        return 0.0;
    }
    double s = 0.0;
    for (double v : per) {
        s += v;
    }
    return s / static_cast<double>(per.size());
}

inline LogitLoss cross_entropy_loss(std::vector<int> labels) {
    return [labels = std::move(labels)](const Matrix& logits) {
        LossEval e;
        e.value = cross_entropy(logits, labels);
        e.dlogits = softmax(logits);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            e.dlogits(static_cast<Eigen::Index>(i), labels[i]) -= 1.0;
        }
        if (!labels.empty()) {
            e.dlogits /= static_cast<double>(labels.size());
        }
        return e;
    };
}

// ---------------------------------------------------------------------------
// KL divergence
// ---------------------------------------------------------------------------

/// teacher_student computes KL(target || student), the usual distillation
/// direction; student_teacher computes KL(student || target).
enum class KlOrientation { teacher_student, student_teacher };

namespace detail {

inline double kl_row(const Eigen::Ref<const Eigen::RowVectorXd>& p, const Eigen::Ref<const Eigen::RowVectorXd>& q) {
    // KL(p || q); zero-mass entries of p contribute nothing.
    double s = 0.0;
    for (Eigen::Index j = 0; j < p.size(); ++j) {
        if (p(j) > 0.0) {
            s += p(j) * (std::log(std::max(p(j), kProbFloor)) - std::log(std::max(q(j), kProbFloor)));
        }
    }
    return s;
}

}  // namespace detail

/// Mean over the batch of the KL divergence between matching rows.
inline double kl_div(const SoftLabels& student, const SoftLabels& target,
                     KlOrientation orientation = KlOrientation::teacher_student) {
    if (student.rows() != target.rows() || student.cols() != target.cols()) {
        throw ContractViolation("kl_div: student and target soft labels differ in shape");
    }
    if (student.rows() == 0) {
        return 0.0;
    }
    double s = 0.0;
    for (Eigen::Index i = 0; i < student.rows(); ++i) {
        s += orientation == KlOrientation::teacher_student ? detail::kl_row(target.probs().row(i), student.probs().row(i))
                                                           : detail::kl_row(student.probs().row(i), target.probs().row(i));
    }
    return s / static_cast<double>(student.rows());
}

/// KL between `target` and softmax(logits / tau), differentiable in the logits.
inline LogitLoss kl_loss(SoftLabels target, double tau, KlOrientation orientation) {
    check_tau(tau);
    return [target = std::move(target), tau, orientation](const Matrix& logits) {
        if (logits.rows() != target.rows() || logits.cols() != target.cols()) {
            throw ContractViolation("kl_loss: logits and soft labels differ in shape");
        }
        SoftLabels student(softmax(logits, tau));
        const Matrix& s = student.probs();
        const Matrix& t = target.probs();
        LossEval e;
        e.value = kl_div(student, target, orientation);
        e.dlogits.resize(logits.rows(), logits.cols());
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            if (orientation == KlOrientation::teacher_student) {
                const double mass = t.row(i).sum();
                e.dlogits.row(i) = (s.row(i) * mass - t.row(i)) / tau;
            } else {
                Eigen::RowVectorXd r(logits.cols());
                for (Eigen::Index j = 0; j < logits.cols(); ++j) {
                    r(j) = std::log(std::max(s(i, j), kProbFloor)) - std::log(std::max(t(i, j), kProbFloor));
                }
                const double mean_r = s.row(i).dot(r);
                e.dlogits.row(i) = s.row(i).cwiseProduct((r.array() - mean_r).matrix()) / tau;
            }
        }
        if (logits.rows() > 0) {
            e.dlogits /= static_cast<double>(logits.rows());
        }
        return e;
    };
}

// ---------------------------------------------------------------------------
// Dice loss
// ---------------------------------------------------------------------------

/// Per-sample soft Dice loss against the one-hot label:
///   1 - (2 p_y + s) / (sum_i p_i^2 + 1 + s)
inline std::vector<double> dice_loss(const Matrix& probs, const std::vector<int>& labels, double smooth = 1.0) {
    check_labels(probs, labels);
    if (!(smooth > 0.0)) {
        throw ConfigError("dice smoothing must be positive, got " + std::to_string(smooth));
    }
    std::vector<double> out(labels.size());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        const double py = probs(i, labels[static_cast<std::size_t>(i)]);
        const double denom = probs.row(i).squaredNorm() + 1.0 + smooth;
        out[static_cast<std::size_t>(i)] = 1.0 - (2.0 * py + smooth) / denom;
    }
    return out;
}

inline std::vector<double> dice_loss(const SoftLabels& probs, const std::vector<int>& labels, double smooth = 1.0) {
    return dice_loss(probs.probs(), labels, smooth);
}

namespace detail {

/// d(dice_i)/d(logits_i) for a single row with p = softmax(z).
inline Eigen::RowVectorXd dice_logit_grad(const Eigen::Ref<const Eigen::RowVectorXd>& p, int y, double smooth) {
    const double num = 2.0 * p(y) + smooth;
    const double den = p.squaredNorm() + 1.0 + smooth;
    Eigen::RowVectorXd g = p * (2.0 * num / (den * den));
    g(y) -= 2.0 / den;
    // softmax Jacobian: dz = p .* (g - <g, p>)
    const double gp = g.dot(p);
    return p.cwiseProduct((g.array() - gp).matrix());
}

inline Eigen::RowVectorXd ce_logit_grad(const Eigen::Ref<const Eigen::RowVectorXd>& p, int y) {
    Eigen::RowVectorXd g = p;
    g(y) -= 1.0;
    return g;
}

}  // namespace detail

/// Mean Dice loss over the batch (inputs are logits, tau = 1).
inline LogitLoss dice_loss_fn(std::vector<int> labels, double smooth) {
    if (!(smooth > 0.0)) {
        throw ConfigError("dice smoothing must be positive, got " + std::to_string(smooth));
    }
    return [labels = std::move(labels), smooth](const Matrix& logits) {
        const Matrix p = softmax(logits);
        const auto per = dice_loss(p, labels, smooth);
        LossEval e;
        e.dlogits.resize(logits.rows(), logits.cols());
        const double n = static_cast<double>(std::max<std::size_t>(labels.size(), 1));
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            e.value += per[static_cast<std::size_t>(i)] / n;
            e.dlogits.row(i) = detail::dice_logit_grad(p.row(i), labels[static_cast<std::size_t>(i)], smooth) / n;
        }
        return e;
    };
}

// ---------------------------------------------------------------------------
// Partitioned DPGD loss
// ---------------------------------------------------------------------------

enum class PerSampleLoss { dice, ce };

/// (1 - lambda) * mean(loss over currently-correct samples)
///   + lambda * mean(loss over currently-wrong samples).
/// Correctness is the argmax of the logits being evaluated (ties toward the
/// smallest index); an empty subset contributes 0 and its weight is unused.
inline LogitLoss dpgd_partitioned_loss(std::vector<int> labels, double lambda, double smooth,
                                       PerSampleLoss kind = PerSampleLoss::dice) {
    if (!(smooth > 0.0)) {
        throw ConfigError("dice smoothing must be positive, got " + std::to_string(smooth));
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ConfigError("partition weight lambda must lie in [0, 1], got " + std::to_string(lambda));
    }
    return [labels = std::move(labels), lambda, smooth, kind](const Matrix& logits) {
        check_labels(logits, labels);
        const Matrix p = softmax(logits);
        const std::vector<double> per =
            kind == PerSampleLoss::dice ? dice_loss(p, labels, smooth) : cross_entropy_per_sample(logits, labels);
        std::vector<char> correct(labels.size());
        std::size_t n_correct = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            correct[i] = argmax_row(logits.row(static_cast<Eigen::Index>(i))) == labels[i];
            n_correct += correct[i] ? 1 : 0;
        }
        const std::size_t n_wrong = labels.size() - n_correct;
        const double w_correct = n_correct ? (1.0 - lambda) / static_cast<double>(n_correct) : 0.0;
        const double w_wrong = n_wrong ? lambda / static_cast<double>(n_wrong) : 0.0;

        LossEval e;
        e.dlogits.resize(logits.rows(), logits.cols());
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            const double w = correct[i] ? w_correct : w_wrong;
            e.value += w * per[i];
            if (w == 0.0) {
                e.dlogits.row(row).setZero();
                continue;
            }
            e.dlogits.row(row) = w * (kind == PerSampleLoss::dice ? detail::dice_logit_grad(p.row(row), labels[i], smooth)
                                                                  : detail::ce_logit_grad(p.row(row), labels[i]));
        }
        return e;
    };
}

// ---------------------------------------------------------------------------
// Loss selection and input gradients
// ---------------------------------------------------------------------------

enum class LossKind { cross_entropy, dice, dpgd_partitioned };

struct LossSelector {
    LossKind kind = LossKind::cross_entropy;
    double lambda = 0.0;       // dpgd_partitioned only
    double dice_smooth = 1.0;  // dice and dpgd_partitioned
    PerSampleLoss per_sample = PerSampleLoss::dice;
};

inline LogitLoss make_loss(const LossSelector& sel, std::vector<int> labels) {
    switch (sel.kind) {
        case LossKind::cross_entropy:
            return cross_entropy_loss(std::move(labels));
        case LossKind::dice:
            return dice_loss_fn(std::move(labels), sel.dice_smooth);
        case LossKind::dpgd_partitioned:
            return dpgd_partitioned_loss(std::move(labels), sel.lambda, sel.dice_smooth, sel.per_sample);
    }
    throw ConfigError("unsupported loss kind");
}

/// Gradient of the mean-reduced loss with respect to the inputs.
inline Matrix input_gradient(const Classifier& model, const Matrix& x, const std::vector<int>& labels,
                             const LossSelector& sel) {
    return model.differentiate(x, make_loss(sel, labels), GradMode::input).input_grad;
}

/// c * loss; used for sign-invariance checks.
inline LogitLoss scaled(LogitLoss loss, double c) {
    return [loss = std::move(loss), c](const Matrix& logits) {
        LossEval e = loss(logits);
        e.value *= c;
        e.dlogits *= c;
        return e;
    };
}

/// w1 * a + w2 * b on the same logits.
inline LogitLoss weighted_sum(double w1, LogitLoss a, double w2, LogitLoss b) {
    return [w1, w2, a = std::move(a), b = std::move(b)](const Matrix& logits) {
        LossEval ea = a(logits);
        LossEval eb = b(logits);
        ea.value = w1 * ea.value + w2 * eb.value;
        ea.dlogits = w1 * ea.dlogits + w2 * eb.dlogits;
        return ea;
    };
}

// ---------------------------------------------------------------------------
// Training objectives
// ---------------------------------------------------------------------------

/// One model evaluation inside a training objective.
struct ObjectiveTerm {
    Matrix inputs;
    LogitLoss loss;
};

struct ObjectiveValue {
    double value = 0.0;
    std::vector<double> param_grad;
};

/// Sums the terms and their parameter gradients.
inline ObjectiveValue evaluate_objective(const Classifier& model, const std::vector<ObjectiveTerm>& terms) {
    ObjectiveValue out;
    out.param_grad.assign(model.parameter_count(), 0.0);
    for (const auto& term : terms) {
        GradResult r = model.differentiate(term.inputs, term.loss, GradMode::params);
        out.value += r.loss;
        for (std::size_t i = 0; i < out.param_grad.size(); ++i) {
            out.param_grad[i] += r.param_grad[i];
        }
    }
    return out;
}

struct ATLossConfig {
    double alpha_at = 0.5;

    void validate() const {
        if (!(alpha_at >= 0.0 && alpha_at <= 1.0)) {
            throw ConfigError("adversarial-training alpha must lie in [0, 1], got " + std::to_string(alpha_at));
        }
    }
};

/// alpha * CE(f(x), y) + (1 - alpha) * CE(f(x_adv), y) as training terms.
inline std::vector<ObjectiveTerm> at_terms(const Matrix& x, const Matrix& x_adv, const std::vector<int>& y,
                                           const ATLossConfig& cfg) {
    cfg.validate();
    std::vector<ObjectiveTerm> terms;
    terms.push_back({x, scaled(cross_entropy_loss(y), cfg.alpha_at)});
    terms.push_back({x_adv, scaled(cross_entropy_loss(y), 1.0 - cfg.alpha_at)});
    return terms;
}

inline double at_loss(const Classifier& model, const Matrix& x, const Matrix& x_adv, const std::vector<int>& y,
                      const ATLossConfig& cfg) {
    cfg.validate();
    if (x.rows() != x_adv.rows() || x.cols() != x_adv.cols()) {
        throw ContractViolation("at_loss: natural and adversarial inputs differ in shape");
    }
    return cfg.alpha_at * cross_entropy(model.forward(x), y) + (1.0 - cfg.alpha_at) * cross_entropy(model.forward(x_adv), y);
}

struct DistillLossConfig {
    double alpha_kd = 0.9;
    double tau = 1.0;
    double dice_smooth = 1.0;
    KlOrientation kl_orientation = KlOrientation::teacher_student;

    void validate() const {
        if (!(alpha_kd >= 0.0 && alpha_kd <= 1.0)) {
            throw ConfigError("alpha_kd must lie in [0, 1], got " + std::to_string(alpha_kd));
        }
        check_tau(tau);
        if (!(dice_smooth > 0.0)) {
            throw ConfigError("dice_smooth must be positive, got " + std::to_string(dice_smooth));
        }
    }
};

/// Which inputs feed the cross-entropy term of the distillation objective.
enum class CeInput { adversarial, natural };

/// (1 - alpha) * CE(S(x_ce), y) + alpha * tau^2 * KL(teacher_soft || S_tau(x_adv)),
/// with x_ce = x_adv for CeInput::adversarial and x_ce = x for CeInput::natural.
inline std::vector<ObjectiveTerm> dard_terms(const SoftLabels& teacher_soft, const Matrix& x, const Matrix& x_adv,
                                             const std::vector<int>& y, const DistillLossConfig& cfg, CeInput ce_input) {
    cfg.validate();
    if (teacher_soft.rows() != x_adv.rows()) {
        throw ContractViolation("dard_loss: teacher soft labels and adversarial batch differ in size");
    }
    const double kd_weight = cfg.alpha_kd * cfg.tau * cfg.tau;
    LogitLoss ce = cross_entropy_loss(y);
    LogitLoss kl = kl_loss(teacher_soft, cfg.tau, cfg.kl_orientation);
    std::vector<ObjectiveTerm> terms;
    if (ce_input == CeInput::adversarial) {
        terms.push_back({x_adv, weighted_sum(1.0 - cfg.alpha_kd, std::move(ce), kd_weight, std::move(kl))});
    } else {
        terms.push_back({x, scaled(std::move(ce), 1.0 - cfg.alpha_kd)});
        terms.push_back({x_adv, scaled(std::move(kl), kd_weight)});
    }
    return terms;
}

inline double dard_loss(const Classifier& student, const SoftLabels& teacher_soft, const Matrix& x, const Matrix& x_adv,
                        const std::vector<int>& y, const DistillLossConfig& cfg, CeInput ce_input) {
    cfg.validate();
    const Matrix& x_ce = ce_input == CeInput::adversarial ? x_adv : x;
    const double ce = cross_entropy(student.forward(x_ce), y);
    const double kl = kl_div(softmax_t(student.forward(x_adv), cfg.tau), teacher_soft, cfg.kl_orientation);
    return (1.0 - cfg.alpha_kd) * ce + cfg.alpha_kd * cfg.tau * cfg.tau * kl;
}

}  // namespace dardkit
