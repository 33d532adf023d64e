#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dardkit/error.hpp"
#include "dardkit/tensor.hpp"

namespace dardkit {

inline constexpr std::uint16_t kStateVersion = 1;

/// Flat parameter vector tagged with the architecture that owns it.
/// Parameters are kept in single precision so that checkpoints (float32
/// payload) round-trip bit-exactly; all arithmetic runs in double.
struct ModelState {
    std::string architecture_id;
    std::uint16_t version = kStateVersion;
    std::vector<float> parameters;

    bool operator==(const ModelState&) const = default;
};

/// 64-bit FNV-1a over the architecture id and raw parameter bytes.
inline std::uint64_t parameter_hash(const ModelState& state) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    mix(state.architecture_id.data(), state.architecture_id.size());
    mix(state.parameters.data(), state.parameters.size() * sizeof(float));
    return h;
}

struct SgdConfig {
    double learning_rate = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;

    void validate() const {
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
            throw ConfigError("sgd: learning_rate must be positive, got " + std::to_string(learning_rate));
        }
        if (!(momentum >= 0.0 && momentum < 1.0)) {
            throw ConfigError("sgd: momentum must lie in [0, 1), got " + std::to_string(momentum));
        }
        if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
            throw ConfigError("sgd: weight_decay must be nonnegative, got " + std::to_string(weight_decay));
        }
    }
};

/// One momentum-SGD update. Weight decay is folded into the gradient
/// (g + wd * theta) before the momentum accumulation.
inline std::pair<ModelState, std::vector<double>> sgd_step(const ModelState& state,
                                                           const std::vector<double>& grads,
                                                           const SgdConfig& cfg,
                                                           std::vector<double> momentum_buffer) {
    cfg.validate();
    const std::size_t n = state.parameters.size();
    if (grads.size() != n) {
        throw ContractViolation("sgd_step: gradient length " + std::to_string(grads.size()) +
                                " != parameter count " + std::to_string(n));
    }
    if (momentum_buffer.empty()) {
        momentum_buffer.assign(n, 0.0);
    } else if (momentum_buffer.size() != n) {
        throw ContractViolation("sgd_step: momentum buffer length " + std::to_string(momentum_buffer.size()) +
                                " != parameter count " + std::to_string(n));
    }
    ModelState next = state;
    for (std::size_t i = 0; i < n; ++i) {
        const double theta = state.parameters[i];
        const double g = grads[i] + cfg.weight_decay * theta;
        momentum_buffer[i] = cfg.momentum * momentum_buffer[i] + g;
        next.parameters[i] = static_cast<float>(theta - cfg.learning_rate * momentum_buffer[i]);
    }
    return {std::move(next), std::move(momentum_buffer)};
}

/// Value of a scalar loss and its gradient with respect to the logits.
struct LossEval {
    double value = 0.0;
    Matrix dlogits;
};

/// Scalar loss as a function of a logit matrix.
using LogitLoss = std::function<LossEval(const Matrix& logits)>;

enum class GradMode { input, params, both };

struct GradResult {
    double loss = 0.0;
    Matrix logits;
    Matrix input_grad;                 // empty unless mode is input or both
    std::vector<double> param_grad;    // empty unless mode is params or both
};

/// Differentiable classifier contract consumed by attacks, losses and trainers.
///
/// Implementations are pure functions of their state: `forward` and
/// `differentiate` never mutate the model.
class Classifier {
public:
    Classifier(std::string architecture_id, Shape input_shape, std::size_t num_classes)
        : input_shape_(std::move(input_shape)), num_classes_(num_classes) {
        if (num_classes_ < 2) {
            throw ConfigError("classifier needs at least 2 classes, got " + std::to_string(num_classes_));
        }
        if (shape_size(input_shape_) == 0) {
            throw ConfigError("classifier input shape " + to_string(input_shape_) + " is empty");
        }
        state_.architecture_id = std::move(architecture_id);
    }
    virtual ~Classifier() = default;

    const std::string& architecture_id() const { return state_.architecture_id; }
    std::size_t num_classes() const { return num_classes_; }
    const Shape& input_shape() const { return input_shape_; }
    std::size_t input_size() const { return shape_size(input_shape_); }
    virtual std::size_t parameter_count() const = 0;

    const ModelState& state() const { return state_; }

    void set_state(ModelState state) {
        if (state.architecture_id != state_.architecture_id) {
            throw IncompatibleError("state for architecture '" + state.architecture_id +
                                    "' cannot be loaded into a '" + state_.architecture_id + "' model");
        }
        if (state.version != kStateVersion) {
            throw IncompatibleError("state version " + std::to_string(state.version) + " is not supported (expected " +
                                    std::to_string(kStateVersion) + ")");
        }
        if (state.parameters.size() != parameter_count()) {
            throw IncompatibleError("state carries " + std::to_string(state.parameters.size()) +
                                    " parameters, architecture '" + state_.architecture_id + "' with input " +
                                    to_string(input_shape_) + " needs " + std::to_string(parameter_count()));
        }
        state_ = std::move(state);
        weights_.resize(static_cast<Eigen::Index>(state_.parameters.size()));
        for (std::size_t i = 0; i < state_.parameters.size(); ++i) {
            weights_[static_cast<Eigen::Index>(i)] = state_.parameters[i];
        }
    }

    /// Uniform initialisation in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer.
    void initialize(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        ModelState s;
        s.architecture_id = state_.architecture_id;
        s.parameters.reserve(parameter_count());
        for (const auto& [count, fan_in] : parameter_blocks()) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (std::size_t i = 0; i < count; ++i) {
                s.parameters.push_back(static_cast<float>(dist(rng)));
            }
        }
        set_state(std::move(s));
    }

    virtual std::unique_ptr<Classifier> clone() const = 0;

    /// Logits for a batch (one sample per row).
    Matrix forward(const Matrix& x) const {
        check_input(x);
        return forward_impl(x);
    }

    /// Evaluates `loss` on the logits of `x` and back-propagates it to the
    /// inputs and/or the parameters.
    GradResult differentiate(const Matrix& x, const LogitLoss& loss, GradMode mode) const {
        check_input(x);
        return differentiate_impl(x, loss, mode);
    }

protected:
    /// (parameter count, fan-in) per contiguous block, in storage order.
    virtual std::vector<std::pair<std::size_t, std::size_t>> parameter_blocks() const = 0;
    virtual Matrix forward_impl(const Matrix& x) const = 0;
    virtual GradResult differentiate_impl(const Matrix& x, const LogitLoss& loss, GradMode mode) const = 0;

    const Eigen::VectorXd& weights() const { return weights_; }

    void reset_zero() {
        ModelState s;
        s.architecture_id = state_.architecture_id;
        s.parameters.assign(parameter_count(), 0.0F);
        set_state(std::move(s));
    }

    static bool wants_input(GradMode m) { return m != GradMode::params; }
    static bool wants_params(GradMode m) { return m != GradMode::input; }

    static LossEval evaluate_loss(const LogitLoss& loss, const Matrix& logits) {
        LossEval e = loss(logits);
        if (e.dlogits.rows() != logits.rows() || e.dlogits.cols() != logits.cols()) {
            throw ContractViolation("loss returned a logit gradient of shape " + std::to_string(e.dlogits.rows()) +
                                    "x" + std::to_string(e.dlogits.cols()) + ", expected " +
                                    std::to_string(logits.rows()) + "x" + std::to_string(logits.cols()));
        }
        return e;
    }

private:
    void check_input(const Matrix& x) const {
        if (static_cast<std::size_t>(x.cols()) != input_size()) {
            throw ContractViolation("input has " + std::to_string(x.cols()) + " features per sample, model '" +
                                    architecture_id() + "' expects shape " + to_string(input_shape_) + " (" +
                                    std::to_string(input_size()) + " features)");
        }
        if (!x.allFinite()) {
            throw DataError("input batch contains non-finite values");
        }
    }

    Shape input_shape_;
    std::size_t num_classes_;
    ModelState state_;
    Eigen::VectorXd weights_;
};

using RowMap = Eigen::Map<const Matrix>;
using VecMap = Eigen::Map<const Eigen::RowVectorXd>;

/// logits = x W^T + b. Registered as "linear".
class LinearModel final : public Classifier {
public:
    LinearModel(Shape input_shape, std::size_t num_classes)
        : Classifier("linear", std::move(input_shape), num_classes) {
        reset_zero();
    }

    std::size_t parameter_count() const override { return num_classes() * input_size() + num_classes(); }
    std::unique_ptr<Classifier> clone() const override { return std::make_unique<LinearModel>(*this); }

protected:
    std::vector<std::pair<std::size_t, std::size_t>> parameter_blocks() const override {
        return {{num_classes() * input_size(), input_size()}, {num_classes(), input_size()}};
    }

    Matrix forward_impl(const Matrix& x) const override {
        const auto k = static_cast<Eigen::Index>(num_classes());
        const auto d = static_cast<Eigen::Index>(input_size());
        RowMap w(weights().data(), k, d);
        VecMap b(weights().data() + k * d, k);
        Matrix z = x * w.transpose();
        z.rowwise() += b;
        return z;
    }

    GradResult differentiate_impl(const Matrix& x, const LogitLoss& loss, GradMode mode) const override {
        const auto k = static_cast<Eigen::Index>(num_classes());
        const auto d = static_cast<Eigen::Index>(input_size());
        RowMap w(weights().data(), k, d);
        GradResult r;
        r.logits = forward_impl(x);
        LossEval e = evaluate_loss(loss, r.logits);
        r.loss = e.value;
        if (wants_input(mode)) {
            r.input_grad = e.dlogits * w;
        }
        if (wants_params(mode)) {
            r.param_grad.resize(parameter_count());
            Eigen::Map<Matrix> gw(r.param_grad.data(), k, d);
            gw.noalias() = e.dlogits.transpose() * x;
            Eigen::Map<Eigen::RowVectorXd> gb(r.param_grad.data() + k * d, k);
            gb = e.dlogits.colwise().sum();
        }
        return r;
    }
};

/// Two hidden ReLU layers of equal width. Registered as "mlp-2x<width>".
class Mlp final : public Classifier {
public:
    Mlp(Shape input_shape, std::size_t num_classes, std::size_t width)
        : Classifier("mlp-2x" + std::to_string(width), std::move(input_shape), num_classes), width_(width) {
        if (width_ == 0) {
            throw ConfigError("mlp width must be positive");
        }
        reset_zero();
    }

    std::size_t width() const { return width_; }

    std::size_t parameter_count() const override {
        const std::size_t d = input_size();
        const std::size_t h = width_;
        const std::size_t k = num_classes();
        return h * d + h + h * h + h + k * h + k;
    }

    std::unique_ptr<Classifier> clone() const override { return std::make_unique<Mlp>(*this); }

protected:
    std::vector<std::pair<std::size_t, std::size_t>> parameter_blocks() const override {
        const std::size_t d = input_size();
        const std::size_t h = width_;
        const std::size_t k = num_classes();
        return {{h * d, d}, {h, d}, {h * h, h}, {h, h}, {k * h, h}, {k, h}};
    }

    Matrix forward_impl(const Matrix& x) const override {
        Activations a = run(x);
        return std::move(a.logits);
    }

    GradResult differentiate_impl(const Matrix& x, const LogitLoss& loss, GradMode mode) const override {
        const Layout l = layout();
        Activations a = run(x);
        GradResult r;
        LossEval e = evaluate_loss(loss, a.logits);
        r.loss = e.value;
        r.logits = std::move(a.logits);

        const double* p = weights().data();
        RowMap w2(p + l.w2, l.h, l.h);
        RowMap w3(p + l.w3, l.k, l.h);
        RowMap w1(p + l.w1, l.h, l.d);

        Matrix dh2 = e.dlogits * w3;
        Matrix da2 = dh2.cwiseProduct(a.pre2.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
        Matrix dh1 = da2 * w2;
        Matrix da1 = dh1.cwiseProduct(a.pre1.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));

        if (wants_input(mode)) {
            r.input_grad = da1 * w1;
        }
        if (wants_params(mode)) {
            r.param_grad.assign(parameter_count(), 0.0);
            double* g = r.param_grad.data();
            Eigen::Map<Matrix>(g + l.w1, l.h, l.d).noalias() = da1.transpose() * x;
            Eigen::Map<Eigen::RowVectorXd>(g + l.b1, l.h) = da1.colwise().sum();
            Eigen::Map<Matrix>(g + l.w2, l.h, l.h).noalias() = da2.transpose() * a.h1;
            Eigen::Map<Eigen::RowVectorXd>(g + l.b2, l.h) = da2.colwise().sum();
            Eigen::Map<Matrix>(g + l.w3, l.k, l.h).noalias() = e.dlogits.transpose() * a.h2;
            Eigen::Map<Eigen::RowVectorXd>(g + l.b3, l.k) = e.dlogits.colwise().sum();
        }
        return r;
    }

private:
    struct Layout {
        Eigen::Index d, h, k;
        Eigen::Index w1, b1, w2, b2, w3, b3;
    };

    struct Activations {
        Matrix pre1, h1, pre2, h2, logits;
    };

    Layout layout() const {
        Layout l{};
        l.d = static_cast<Eigen::Index>(input_size());
        l.h = static_cast<Eigen::Index>(width_);
        l.k = static_cast<Eigen::Index>(num_classes());
        l.w1 = 0;
        l.b1 = l.w1 + l.h * l.d;
        l.w2 = l.b1 + l.h;
        l.b2 = l.w2 + l.h * l.h;
        l.w3 = l.b2 + l.h;
        l.b3 = l.w3 + l.k * l.h;
        return l;
    }

    Activations run(const Matrix& x) const {
        const Layout l = layout();
        const double* p = weights().data();
        Activations a;
        a.pre1.noalias() = x * RowMap(p + l.w1, l.h, l.d).transpose();
        a.pre1.rowwise() += VecMap(p + l.b1, l.h);
        a.h1 = a.pre1.cwiseMax(0.0);
        a.pre2.noalias() = a.h1 * RowMap(p + l.w2, l.h, l.h).transpose();
        a.pre2.rowwise() += VecMap(p + l.b2, l.h);
        a.h2 = a.pre2.cwiseMax(0.0);
        a.logits.noalias() = a.h2 * RowMap(p + l.w3, l.k, l.h).transpose();
        a.logits.rowwise() += VecMap(p + l.b3, l.k);
        return a;
    }

    std::size_t width_;
};

/// 3x3 valid convolution -> ReLU -> 2x2 average pooling -> dense head.
/// Registered as "cnn-tiny"; expects (C, H, W) inputs with H, W >= 4.
class TinyCnn final : public Classifier {
public:
    static constexpr std::size_t kFilters = 4;
    static constexpr std::size_t kKernel = 3;

    TinyCnn(Shape input_shape, std::size_t num_classes)
        : Classifier("cnn-tiny", std::move(input_shape), num_classes) {
        const Shape& s = this->input_shape();
        if (s.size() != 3 || s[1] < kKernel + 1 || s[2] < kKernel + 1) {
            throw ConfigError("cnn-tiny needs a (C, H, W) input with H, W >= 4, got " + to_string(s));
        }
        reset_zero();
    }

    std::size_t parameter_count() const override {
        const Dims g = dims();
        return kFilters * g.c * kKernel * kKernel + kFilters + num_classes() * g.features + num_classes();
    }

    std::unique_ptr<Classifier> clone() const override { return std::make_unique<TinyCnn>(*this); }

protected:
    std::vector<std::pair<std::size_t, std::size_t>> parameter_blocks() const override {
        const Dims g = dims();
        const std::size_t conv_fan = g.c * kKernel * kKernel;
        return {{kFilters * conv_fan, conv_fan},
                {kFilters, conv_fan},
                {num_classes() * g.features, g.features},
                {num_classes(), g.features}};
    }

    Matrix forward_impl(const Matrix& x) const override {
        Matrix pre, pooled;
        return run(x, pre, pooled);
    }

    GradResult differentiate_impl(const Matrix& x, const LogitLoss& loss, GradMode mode) const override {
        const Dims g = dims();
        const std::size_t k = num_classes();
        Matrix pre, pooled;
        GradResult r;
        r.logits = run(x, pre, pooled);
        LossEval e = evaluate_loss(loss, r.logits);
        r.loss = e.value;

        const double* p = weights().data();
        const std::size_t conv_w = 0;
        const std::size_t conv_b = kFilters * g.c * kKernel * kKernel;
        const std::size_t dense_w = conv_b + kFilters;
        const std::size_t dense_b = dense_w + k * g.features;
        RowMap wd(p + dense_w, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(g.features));

        Matrix dpooled = e.dlogits * wd;
        const Eigen::Index n = x.rows();
        // Gradient w.r.t. the conv pre-activations (n x F*OH*OW).
        Matrix dpre = Matrix::Zero(n, static_cast<Eigen::Index>(kFilters * g.oh * g.ow));
        for (Eigen::Index s = 0; s < n; ++s) {
            for (std::size_t f = 0; f < kFilters; ++f) {
                for (std::size_t i = 0; i < g.ph; ++i) {
                    for (std::size_t j = 0; j < g.pw; ++j) {
                        const double v = 0.25 * dpooled(s, idx(f, i, j, g.ph, g.pw));
                        for (std::size_t a = 0; a < 2; ++a) {
                            for (std::size_t b = 0; b < 2; ++b) {
                                const auto c = idx(f, 2 * i + a, 2 * j + b, g.oh, g.ow);
                                if (pre(s, c) > 0.0) {
                                    dpre(s, c) += v;
                                }
                            }
                        }
                    }
                }
            }
        }

        if (wants_input(mode)) {
            r.input_grad = Matrix::Zero(n, x.cols());
            for (Eigen::Index s = 0; s < n; ++s) {
                for (std::size_t f = 0; f < kFilters; ++f) {
                    for (std::size_t oy = 0; oy < g.oh; ++oy) {
                        for (std::size_t ox = 0; ox < g.ow; ++ox) {
                            const double d = dpre(s, idx(f, oy, ox, g.oh, g.ow));
                            if (d == 0.0) {
                                continue;
                            }
                            for (std::size_t c = 0; c < g.c; ++c) {
                                for (std::size_t ky = 0; ky < kKernel; ++ky) {
                                    for (std::size_t kx = 0; kx < kKernel; ++kx) {
                                        r.input_grad(s, idx(c, oy + ky, ox + kx, g.h, g.w)) +=
                                            d * p[conv_w + kernel_idx(f, c, ky, kx, g.c)];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        if (wants_params(mode)) {
            r.param_grad.assign(parameter_count(), 0.0);
            double* gp = r.param_grad.data();
            for (Eigen::Index s = 0; s < n; ++s) {
                for (std::size_t f = 0; f < kFilters; ++f) {
                    for (std::size_t oy = 0; oy < g.oh; ++oy) {
                        for (std::size_t ox = 0; ox < g.ow; ++ox) {
                            const double d = dpre(s, idx(f, oy, ox, g.oh, g.ow));
                            if (d == 0.0) {
                                continue;
                            }
                            gp[conv_b + f] += d;
                            for (std::size_t c = 0; c < g.c; ++c) {
                                for (std::size_t ky = 0; ky < kKernel; ++ky) {
                                    for (std::size_t kx = 0; kx < kKernel; ++kx) {
                                        gp[conv_w + kernel_idx(f, c, ky, kx, g.c)] +=
                                            d * x(s, idx(c, oy + ky, ox + kx, g.h, g.w));
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Eigen::Map<Matrix>(gp + dense_w, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(g.features))
                .noalias() = e.dlogits.transpose() * pooled;
            Eigen::Map<Eigen::RowVectorXd>(gp + dense_b, static_cast<Eigen::Index>(k)) = e.dlogits.colwise().sum();
        }
        return r;
    }

private:
    struct Dims {
        std::size_t c, h, w, oh, ow, ph, pw, features;
    };

    Dims dims() const {
        const Shape& s = input_shape();
        Dims g{};
        g.c = s[0];
        g.h = s[1];
        g.w = s[2];
        g.oh = g.h - kKernel + 1;
        g.ow = g.w - kKernel + 1;
        g.ph = g.oh / 2;
        g.pw = g.ow / 2;
        g.features = kFilters * g.ph * g.pw;
        return g;
    }

    static Eigen::Index idx(std::size_t c, std::size_t y, std::size_t x, std::size_t h, std::size_t w) {
        return static_cast<Eigen::Index>((c * h + y) * w + x);
    }

    static std::size_t kernel_idx(std::size_t f, std::size_t c, std::size_t ky, std::size_t kx, std::size_t channels) {
        return ((f * channels + c) * kKernel + ky) * kKernel + kx;
    }

    Matrix run(const Matrix& x, Matrix& pre, Matrix& pooled) const {
        const Dims g = dims();
        const std::size_t k = num_classes();
        const double* p = weights().data();
        const std::size_t conv_b = kFilters * g.c * kKernel * kKernel;
        const std::size_t dense_w = conv_b + kFilters;
        const std::size_t dense_b = dense_w + k * g.features;
        const Eigen::Index n = x.rows();

        pre.resize(n, static_cast<Eigen::Index>(kFilters * g.oh * g.ow));
        pooled = Matrix::Zero(n, static_cast<Eigen::Index>(g.features));
        for (Eigen::Index s = 0; s < n; ++s) {
            for (std::size_t f = 0; f < kFilters; ++f) {
                for (std::size_t oy = 0; oy < g.oh; ++oy) {
                    for (std::size_t ox = 0; ox < g.ow; ++ox) {
                        double acc = p[conv_b + f];
                        for (std::size_t c = 0; c < g.c; ++c) {
                            for (std::size_t ky = 0; ky < kKernel; ++ky) {
                                for (std::size_t kx = 0; kx < kKernel; ++kx) {
                                    acc += p[kernel_idx(f, c, ky, kx, g.c)] * x(s, idx(c, oy + ky, ox + kx, g.h, g.w));
                                }
                            }
                        }
                        pre(s, idx(f, oy, ox, g.oh, g.ow)) = acc;
                    }
                }
                for (std::size_t i = 0; i < g.ph; ++i) {
                    for (std::size_t j = 0; j < g.pw; ++j) {
                        double acc = 0.0;
                        for (std::size_t a = 0; a < 2; ++a) {
                            for (std::size_t b = 0; b < 2; ++b) {
                                acc += std::max(0.0, pre(s, idx(f, 2 * i + a, 2 * j + b, g.oh, g.ow)));
                            }
                        }
                        pooled(s, idx(f, i, j, g.ph, g.pw)) = 0.25 * acc;
                    }
                }
            }
        }
        Matrix logits = pooled * RowMap(p + dense_w, static_cast<Eigen::Index>(k),
                                        static_cast<Eigen::Index>(g.features)).transpose();
        logits.rowwise() += VecMap(p + dense_b, static_cast<Eigen::Index>(k));
        return logits;
    }
};

/// Builds a zero-parameter model for a registered architecture id:
/// "linear", "mlp-2x<width>" (e.g. "mlp-2x64") or "cnn-tiny".
inline std::unique_ptr<Classifier> make_model(const std::string& architecture_id, const Shape& input_shape,
                                              std::size_t num_classes) {
    if (architecture_id == "linear") {
        return std::make_unique<LinearModel>(input_shape, num_classes);
    }
    if (architecture_id == "cnn-tiny") {
        return std::make_unique<TinyCnn>(input_shape, num_classes);
    }
    constexpr std::string_view mlp_prefix = "mlp-2x";
    if (architecture_id.starts_with(mlp_prefix)) {
        const std::string width = architecture_id.substr(mlp_prefix.size());
        if (!width.empty() && width.find_first_not_of("0123456789") == std::string::npos && width.size() < 7) {
            return std::make_unique<Mlp>(input_shape, num_classes, std::stoul(width));
        }
    }
    throw ConfigError("unknown architecture '" + architecture_id + "' (expected linear, mlp-2x<width> or cnn-tiny)");
}

inline std::unique_ptr<Classifier> make_model(const std::string& architecture_id, const Shape& input_shape,
                                              std::size_t num_classes, std::uint64_t seed) {
    auto model = make_model(architecture_id, input_shape, num_classes);
    model->initialize(seed);
    return model;
}

}  // namespace dardkit
