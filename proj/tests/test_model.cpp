#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dardkit/model.hpp"
#include "dardkit/objectives.hpp"
#include "test_support.hpp"

namespace dk = dardkit;
using dk::Matrix;

namespace {

dk::LinearModel two_class_linear() {
    dk::LinearModel m({2}, 2);
    dk::ModelState s = m.state();
    s.parameters = {1.0f, -1.0f, -1.0f, 1.0f, 0.0f, 0.0f};
    m.set_state(s);
    return m;
}

// 0.5 * ||z - target||^2 / n, a quadratic head with a known minimiser.
dk::LogitLoss quadratic_head(Matrix target) {
    return [target = std::move(target)](const Matrix& z) {
        const double n = static_cast<double>(z.rows());
        dk::LossEval e;
        e.value = 0.5 * (z - target).squaredNorm() / n;
        e.dlogits = (z - target) / n;
        return e;
    };
}

}  // namespace

TEST(Forward, ZeroMlpGivesZeroLogits) {
    auto m = dk::make_model("mlp-2x64", {8}, 5);
    std::mt19937_64 rng(3);
    Matrix x = dk::testing::random_inputs(rng, 4, 8);
    Matrix z = m->forward(x);
    ASSERT_EQ(z.rows(), 4);
    ASSERT_EQ(z.cols(), 5);
    EXPECT_EQ(z.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Forward, HandLinearExample) {
    auto m = two_class_linear();
    Matrix x(1, 2);
    x << 0.3, 0.7;
    Matrix z = m.forward(x);
    // Scalar arithmetic, independent of the matrix path.
    EXPECT_NEAR(z(0, 0), 1.0 * 0.3 + -1.0 * 0.7, 1e-15);
    EXPECT_NEAR(z(0, 1), -1.0 * 0.3 + 1.0 * 0.7, 1e-15);
    EXPECT_NEAR(z(0, 0), -0.4, 1e-15);
    EXPECT_NEAR(z(0, 1), 0.4, 1e-15);
}

TEST(Forward, PureFunctionOfState) {
    for (const char* arch : {"linear", "mlp-2x16", "cnn-tiny"}) {
        auto m = dk::make_model(arch, {2, 6, 6}, 4, 11);
        std::mt19937_64 rng(5);
        Matrix x = dk::testing::random_inputs(rng, 3, 72);
        const auto before = dk::parameter_hash(m->state());
        Matrix a = m->forward(x);
        Matrix b = m->forward(x);
        EXPECT_TRUE(a == b) << arch;
        EXPECT_EQ(before, dk::parameter_hash(m->state())) << arch;
        EXPECT_TRUE(a.allFinite()) << arch;
    }
}

TEST(Forward, RejectsWrongWidth) {
    auto m = dk::make_model("mlp-2x8", {4}, 3, 1);
    EXPECT_THROW(m->forward(Matrix::Zero(2, 5)), dk::ContractViolation);
}

TEST(Forward, RejectsNonFiniteInput) {
    auto m = dk::make_model("linear", {3}, 2, 1);
    Matrix x = Matrix::Zero(1, 3);
    x(0, 1) = NAN;
    EXPECT_THROW(m->forward(x), dk::DataError);
}

TEST(Forward, UnknownArchitecture) {
    EXPECT_THROW(dk::make_model("resnet-18", {3, 32, 32}, 10), dk::ConfigError);
    EXPECT_THROW(dk::make_model("mlp-2x", {4}, 2), dk::ConfigError);
    EXPECT_THROW(dk::make_model("cnn-tiny", {12}, 2), dk::ConfigError);
}

TEST(Init, SeededAndBounded) {
    auto a = dk::make_model("mlp-2x32", {10}, 4, 99);
    auto b = dk::make_model("mlp-2x32", {10}, 4, 99);
    auto c = dk::make_model("mlp-2x32", {10}, 4, 100);
    EXPECT_EQ(a->state(), b->state());
    EXPECT_NE(a->state(), c->state());
    // First block is W1 with fan-in 10.
    const double bound = 1.0 / std::sqrt(10.0);
    for (std::size_t i = 0; i < 32 * 10; ++i) {
        EXPECT_LE(std::abs(a->state().parameters[i]), bound + 1e-7);
    }
}

TEST(State, RejectsForeignState) {
    auto mlp = dk::make_model("mlp-2x64", {4}, 3, 1);
    auto cnn = dk::make_model("cnn-tiny", {1, 4, 4}, 3, 1);
    EXPECT_THROW(cnn->set_state(mlp->state()), dk::IncompatibleError);
    dk::ModelState s = mlp->state();
    s.parameters.pop_back();
    EXPECT_THROW(mlp->set_state(s), dk::IncompatibleError);
}

class InputGradient : public ::testing::TestWithParam<std::string> {};

TEST_P(InputGradient, MatchesFiniteDifferences) {
    const std::string arch = GetParam();
    const std::size_t k = 4;
    auto m = dk::make_model(arch, {1, 5, 5}, k, 21);
    std::mt19937_64 rng(8);
    dk::testing::GradCheck acc;
    for (int trial = 0; trial < 6; ++trial) {
        Matrix x = dk::testing::random_inputs(rng, 3, 25, 0.05, 0.95);
        auto y = dk::testing::random_labels(rng, 3, static_cast<int>(k));
        for (auto kind : {dk::LossKind::cross_entropy, dk::LossKind::dice, dk::LossKind::dpgd_partitioned}) {
            dk::LossSelector sel;
            sel.kind = kind;
            sel.lambda = 0.3;
            if (kind == dk::LossKind::dpgd_partitioned && dk::testing::min_top2_margin(m->forward(x)) < 1e-3) {
                continue;  // partition could flip inside the difference stencil
            }
            const auto loss = dk::make_loss(sel, y);
            Matrix analytic = dk::input_gradient(*m, x, y, sel);
            Matrix numeric = dk::testing::finite_difference_input_grad(*m, x, loss);
            dk::testing::compare_gradients(analytic, numeric, acc);
        }
    }
    EXPECT_GT(acc.checked, 100u);
    EXPECT_EQ(acc.failures, 0u) << "worst relative error " << acc.worst;
}

INSTANTIATE_TEST_SUITE_P(Architectures, InputGradient, ::testing::Values("linear", "mlp-2x16", "cnn-tiny"),
                         [](const auto& info) {
                             std::string s = info.param;
                             for (auto& c : s) {
                                 if (c == '-') c = '_';
                             }
                             return s;
                         });

TEST(ParamGradient, MatchesFiniteDifferences) {
    for (const char* arch : {"linear", "mlp-2x8", "cnn-tiny"}) {
        auto m = dk::make_model(arch, {1, 4, 4}, 3, 4);
        std::mt19937_64 rng(12);
        Matrix x = dk::testing::random_inputs(rng, 5, 16);
        auto y = dk::testing::random_labels(rng, 5, 3);
        const auto loss = dk::cross_entropy_loss(y);
        const auto analytic = m->differentiate(x, loss, dk::GradMode::params).param_grad;
        ASSERT_EQ(analytic.size(), m->parameter_count());
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < m->parameter_count(); i += 7) {
            idx.push_back(i);
        }
        const auto numeric = dk::testing::finite_difference_param_grad(*m, x, loss, idx);
        for (std::size_t j = 0; j < idx.size(); ++j) {
            // float32 parameter storage limits the stencil; 1e-3 absolute is ample.
            EXPECT_NEAR(analytic[idx[j]], numeric[j], 1e-3) << arch << " param " << idx[j];
        }
    }
}

TEST(InputGradientLaws, QuadraticMinimumIsStationary) {
    dk::LinearModel m({3}, 3);
    dk::ModelState s = m.state();
    s.parameters = {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0};
    m.set_state(s);
    Matrix x(2, 3);
    x << 0.2, 0.5, 0.9, 0.1, 0.3, 0.7;
    const auto g = m.differentiate(x, quadratic_head(x), dk::GradMode::input).input_grad;
    EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
}

TEST(InputGradientLaws, ScalingLossScalesGradient) {
    auto m = dk::make_model("mlp-2x16", {6}, 3, 2);
    std::mt19937_64 rng(1);
    Matrix x = dk::testing::random_inputs(rng, 4, 6);
    auto y = dk::testing::random_labels(rng, 4, 3);
    const auto base = dk::cross_entropy_loss(y);
    const Matrix g1 = m->differentiate(x, base, dk::GradMode::input).input_grad;
    const Matrix g4 = m->differentiate(x, dk::scaled(base, 4.0), dk::GradMode::input).input_grad;
    // A power of two keeps the comparison exact.
    EXPECT_TRUE(g4 == 4.0 * g1);
}

TEST(InputGradientLaws, ShapeMatchesInput) {
    auto m = dk::make_model("cnn-tiny", {3, 5, 5}, 4, 2);
    Matrix x = Matrix::Constant(2, 75, 0.5);
    auto g = dk::input_gradient(*m, x, {0, 3}, {});
    EXPECT_EQ(g.rows(), 2);
    EXPECT_EQ(g.cols(), 75);
}

TEST(Sgd, DefaultsMatchTraining) {
    dk::SgdConfig c;
    EXPECT_EQ(c.learning_rate, 0.1);
    EXPECT_EQ(c.momentum, 0.9);
    EXPECT_EQ(c.weight_decay, 5e-4);
}

TEST(Sgd, ZeroGradientIsFixedPoint) {
    auto m = dk::make_model("mlp-2x4", {3}, 2, 5);
    dk::SgdConfig c;
    c.weight_decay = 0.0;
    auto [next, buf] = dk::sgd_step(m->state(), std::vector<double>(m->parameter_count(), 0.0), c, {});
    EXPECT_EQ(next, m->state());
}

TEST(Sgd, PlainGradientDescent) {
    dk::ModelState s{"linear", dk::kStateVersion, {0.5f, -0.25f, 1.0f}};
    dk::SgdConfig c{0.1, 0.0, 0.0};
    const std::vector<double> g = {1.0, 2.0, -4.0};
    auto [next, buf] = dk::sgd_step(s, g, c, {});
    for (std::size_t i = 0; i < g.size(); ++i) {
        EXPECT_EQ(next.parameters[i], static_cast<float>(static_cast<double>(s.parameters[i]) - 0.1 * g[i]));
    }
}

TEST(Sgd, TwoMomentumStepsOnConstantGradient) {
    dk::ModelState s{"linear", dk::kStateVersion, {0.0f, 0.0f}};
    dk::SgdConfig c{0.1, 0.9, 0.0};
    const std::vector<double> g = {1.0, -0.5};
    auto [s1, b1] = dk::sgd_step(s, g, c, {});
    auto [s2, b2] = dk::sgd_step(s1, g, c, b1);
    for (std::size_t i = 0; i < g.size(); ++i) {
        EXPECT_NEAR(s2.parameters[i], -0.1 * g[i] * 2.9, 1e-7);
    }
}

TEST(Sgd, WeightDecayFoldsIntoGradient) {
    dk::ModelState s{"linear", dk::kStateVersion, {2.0f}};
    dk::SgdConfig c{0.5, 0.0, 0.25};
    auto [next, buf] = dk::sgd_step(s, {0.0}, c, {});
    EXPECT_FLOAT_EQ(next.parameters[0], 2.0f - 0.5f * 0.25f * 2.0f);
}

TEST(Sgd, LengthMismatch) {
    dk::ModelState s{"linear", dk::kStateVersion, {1.0f, 2.0f}};
    EXPECT_THROW(dk::sgd_step(s, {1.0}, {}, {}), dk::ContractViolation);
    EXPECT_THROW(dk::sgd_step(s, {1.0, 1.0}, {}, {0.0}), dk::ContractViolation);
}

TEST(Sgd, RejectsBadConfig) {
    dk::ModelState s{"linear", dk::kStateVersion, {1.0f}};
    EXPECT_THROW(dk::sgd_step(s, {1.0}, {0.0, 0.9, 0.0}, {}), dk::ConfigError);
    EXPECT_THROW(dk::sgd_step(s, {1.0}, {0.1, 1.0, 0.0}, {}), dk::ConfigError);
    EXPECT_THROW(dk::sgd_step(s, {1.0}, {0.1, 0.9, -1.0}, {}), dk::ConfigError);
}
