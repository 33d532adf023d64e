#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dardkit/model.hpp"
#include "dardkit/objectives.hpp"
#include "test_support.hpp"

namespace dk = dardkit;
using dk::Matrix;

namespace {

Matrix row(std::initializer_list<double> v) {
    Matrix m(1, static_cast<Eigen::Index>(v.size()));
    Eigen::Index j = 0;
    for (double x : v) {
        m(0, j++) = x;
    }
    return m;
}

}  // namespace

TEST(CrossEntropy, UniformLogitsGiveLogK) {
    for (int k : {2, 3, 10, 100}) {
        EXPECT_NEAR(dk::cross_entropy(Matrix::Zero(4, k), {0, 1, 1, 0}), std::log(static_cast<double>(k)), 1e-12);
    }
}

TEST(CrossEntropy, ConfidentCorrectIsTiny) {
    // Oracle: log(1 + e^-20) evaluated with log1p.
    EXPECT_NEAR(dk::cross_entropy(row({10.0, -10.0}), {0}), std::log1p(std::exp(-20.0)), 1e-20);
    EXPECT_NEAR(dk::cross_entropy(row({10.0, -10.0}), {0}), 2.061153620314381e-09, 1e-20);
}

TEST(CrossEntropy, ShiftInvariant) {
    std::mt19937_64 rng(4);
    Matrix z = dk::testing::random_inputs(rng, 5, 7, -3.0, 3.0);
    auto y = dk::testing::random_labels(rng, 5, 7);
    Matrix shifted = z.array() + 123.0;
    EXPECT_NEAR(dk::cross_entropy(z, y), dk::cross_entropy(shifted, y), 1e-12);
}

TEST(CrossEntropy, ExtremeLogitsStayFinite) {
    EXPECT_TRUE(std::isfinite(dk::cross_entropy(row({1000.0, -1000.0}), {1})));
    EXPECT_NEAR(dk::cross_entropy(row({1000.0, -1000.0}), {1}), 2000.0, 1e-9);
}

TEST(CrossEntropy, LabelErrors) {
    EXPECT_THROW(dk::cross_entropy(Matrix::Zero(2, 3), {0}), dk::ContractViolation);
    EXPECT_THROW(dk::cross_entropy(Matrix::Zero(1, 3), {3}), dk::ContractViolation);
}

TEST(Softmax, TemperatureExample) {
    const auto s = dk::softmax_t(row({2.0, 0.0}), 2.0);
    const double e = std::exp(1.0);
    EXPECT_NEAR(s.probs()(0, 0), e / (e + 1.0), 1e-15);
    EXPECT_NEAR(s.probs()(0, 0), 0.7311, 1e-4);
    EXPECT_NEAR(s.probs()(0, 1), 0.2689, 1e-4);
}

TEST(Softmax, LargeTemperatureFlattens) {
    const auto s = dk::softmax_t(row({5.0, -1.0, 2.0}), 1e9);
    for (Eigen::Index j = 0; j < 3; ++j) {
        EXPECT_NEAR(s.probs()(0, j), 1.0 / 3.0, 1e-8);
    }
}

TEST(Softmax, RejectsBadTemperature) {
    EXPECT_THROW(dk::softmax_t(row({1.0, 0.0}), 0.0), dk::ConfigError);
    EXPECT_THROW(dk::softmax_t(row({1.0, 0.0}), -1.0), dk::ConfigError);
}

TEST(SoftLabelsType, ValidatesRows) {
    EXPECT_NO_THROW(dk::SoftLabels(row({0.25, 0.75})));
    EXPECT_THROW(dk::SoftLabels(row({0.5, 0.6})), dk::ContractViolation);
    EXPECT_THROW(dk::SoftLabels(row({-0.1, 1.1})), dk::ContractViolation);
}

TEST(Kl, HandExample) {
    const double a = std::exp(1.0) / (std::exp(1.0) + 1.0);
    const double expected = a * std::log(a / 0.5) + (1 - a) * std::log((1 - a) / 0.5);
    const dk::SoftLabels teacher = dk::softmax_t(row({2.0, 0.0}), 2.0);
    const dk::SoftLabels student(row({0.5, 0.5}));
    // Default orientation is KL(teacher || student).
    EXPECT_NEAR(dk::kl_div(student, teacher), expected, 1e-12);
    EXPECT_NEAR(dk::kl_div(student, teacher), 0.1109, 1e-4);
    const double reverse = 0.5 * std::log(0.5 / a) + 0.5 * std::log(0.5 / (1 - a));
    EXPECT_NEAR(dk::kl_div(student, teacher, dk::KlOrientation::student_teacher), reverse, 1e-12);
}

TEST(Kl, NonnegativeAndZeroOnlyAtEquality) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 200; ++trial) {
        const auto p = dk::softmax_t(dk::testing::random_inputs(rng, 3, 5, -4, 4), 1.0);
        const auto q = dk::softmax_t(dk::testing::random_inputs(rng, 3, 5, -4, 4), 1.0);
        EXPECT_GE(dk::kl_div(p, q), 0.0);
        EXPECT_GE(dk::kl_div(p, q, dk::KlOrientation::student_teacher), 0.0);
        EXPECT_NEAR(dk::kl_div(p, p), 0.0, 1e-15);
    }
}

TEST(Kl, FloorKeepsZeroProbabilitiesFinite) {
    const dk::SoftLabels teacher(row({1.0, 0.0}));
    const dk::SoftLabels student(row({0.0, 1.0}));
    const double v = dk::kl_div(student, teacher);
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_NEAR(v, -std::log(dk::kProbFloor), 1e-6);
}

TEST(Kl, LossGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(9);
    for (auto orient : {dk::KlOrientation::teacher_student, dk::KlOrientation::student_teacher}) {
        for (double tau : {1.0, 4.0}) {
            const auto target = dk::softmax_t(dk::testing::random_inputs(rng, 3, 4, -2, 2), tau);
            const auto loss = dk::kl_loss(target, tau, orient);
            Matrix z = dk::testing::random_inputs(rng, 3, 4, -2, 2);
            const dk::LossEval e = loss(z);
            EXPECT_NEAR(e.value, dk::kl_div(dk::softmax_t(z, tau), target, orient), 1e-14);
            for (Eigen::Index i = 0; i < z.rows(); ++i) {
                for (Eigen::Index j = 0; j < z.cols(); ++j) {
                    Matrix zp = z, zm = z;
                    zp(i, j) += 1e-6;
                    zm(i, j) -= 1e-6;
                    EXPECT_NEAR(e.dlogits(i, j), (loss(zp).value - loss(zm).value) / 2e-6, 1e-7);
                }
            }
        }
    }
}

TEST(Dice, HandExamples) {
    // One-hot correct, one-hot wrong, uniform over ten classes (smooth = 1).
    EXPECT_NEAR(dk::dice_loss(row({1.0, 0.0}), {0}, 1.0)[0], 0.0, 1e-15);
    EXPECT_NEAR(dk::dice_loss(row({0.0, 1.0}), {0}, 1.0)[0], 2.0 / 3.0, 1e-15);
    Matrix u = Matrix::Constant(1, 10, 0.1);
    EXPECT_NEAR(dk::dice_loss(u, {4}, 1.0)[0], 1.0 - 1.2 / 2.1, 1e-15);
    EXPECT_NEAR(dk::dice_loss(u, {4}, 1.0)[0], 0.4286, 1e-4);
}

TEST(Dice, BoundedOnSimplex) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const auto p = dk::softmax(dk::testing::random_inputs(rng, 4, 6, -5, 5));
        for (double v : dk::dice_loss(p, dk::testing::random_labels(rng, 4, 6), 1.0)) {
            EXPECT_GE(v, 0.0);
            EXPECT_LT(v, 1.0);
        }
    }
}

TEST(Dice, RejectsNonPositiveSmoothing) {
    EXPECT_THROW(dk::dice_loss(row({1.0, 0.0}), {0}, 0.0), dk::ConfigError);
    EXPECT_THROW(dk::dice_loss_fn({0}, -1.0), dk::ConfigError);
}

TEST(Partitioned, WeightsSubsets) {
    // Sample 0 correct, sample 1 wrong.
    Matrix z(2, 2);
    z << 2.0, 0.0, 2.0, 0.0;
    const std::vector<int> y = {0, 1};
    const auto per = dk::dice_loss(dk::softmax(z), y, 1.0);
    for (double lambda : {0.0, 0.225, 0.475}) {
        const auto e = dk::dpgd_partitioned_loss(y, lambda, 1.0)(z);
        EXPECT_NEAR(e.value, (1 - lambda) * per[0] + lambda * per[1], 1e-15);
    }
    const auto e0 = dk::dpgd_partitioned_loss(y, 0.0, 1.0)(z);
    EXPECT_EQ(e0.dlogits.row(1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Partitioned, EmptySubsetContributesZero) {
    Matrix z(2, 3);
    z << 3.0, 0.0, 0.0, 0.0, 3.0, 0.0;
    const std::vector<int> y = {0, 1};  // both correct
    const auto per = dk::dice_loss(dk::softmax(z), y, 1.0);
    const auto e = dk::dpgd_partitioned_loss(y, 0.4, 1.0)(z);
    EXPECT_NEAR(e.value, 0.6 * (per[0] + per[1]) / 2.0, 1e-15);
}

TEST(Partitioned, TiesGoToSmallestIndex) {
    // Tied logits: argmax is class 0, so label 0 counts as correct.
    Matrix z = Matrix::Zero(1, 3);
    const auto per = dk::dice_loss(dk::softmax(z), {0}, 1.0);
    EXPECT_NEAR(dk::dpgd_partitioned_loss({0}, 0.3, 1.0)(z).value, 0.7 * per[0], 1e-15);
    EXPECT_NEAR(dk::dpgd_partitioned_loss({1}, 0.3, 1.0)(z).value, 0.3 * per[0], 1e-15);
}

TEST(Partitioned, CeVariant) {
    Matrix z(2, 2);
    z << 1.0, 0.0, 1.0, 0.0;
    const auto ce = dk::cross_entropy_per_sample(z, {0, 1});
    EXPECT_NEAR(dk::dpgd_partitioned_loss({0, 1}, 0.25, 1.0, dk::PerSampleLoss::ce)(z).value,
                0.75 * ce[0] + 0.25 * ce[1], 1e-15);
}

TEST(Partitioned, RejectsBadLambda) {
    EXPECT_THROW(dk::dpgd_partitioned_loss({0}, -0.1, 1.0), dk::ConfigError);
    EXPECT_THROW(dk::dpgd_partitioned_loss({0}, 1.5, 1.0), dk::ConfigError);
}

class ObjectiveFixture : public ::testing::Test {
protected:
    void SetUp() override {
        std::mt19937_64 rng(31);
        model = dk::make_model("mlp-2x8", {5}, 3, 3);
        x = dk::testing::random_inputs(rng, 6, 5);
        x_adv = dk::testing::random_inputs(rng, 6, 5);
        y = dk::testing::random_labels(rng, 6, 3);
        teacher = dk::softmax_t(dk::testing::random_inputs(rng, 6, 3, -2, 2), 1.0);
    }
    std::unique_ptr<dk::Classifier> model;
    Matrix x, x_adv;
    std::vector<int> y;
    dk::SoftLabels teacher;
};

TEST_F(ObjectiveFixture, AtLossEndpointsAndAffinity) {
    const double ce_nat = dk::cross_entropy(model->forward(x), y);
    const double ce_adv = dk::cross_entropy(model->forward(x_adv), y);
    EXPECT_NEAR(dk::at_loss(*model, x, x_adv, y, {1.0}), ce_nat, 1e-14);
    EXPECT_NEAR(dk::at_loss(*model, x, x_adv, y, {0.0}), ce_adv, 1e-14);
    EXPECT_NEAR(dk::at_loss(*model, x, x_adv, y, {0.5}), 0.5 * (ce_nat + ce_adv), 1e-14);
    for (double a : {0.1, 0.3, 0.8}) {
        EXPECT_NEAR(dk::at_loss(*model, x, x_adv, y, {a}), a * ce_nat + (1 - a) * ce_adv, 1e-14);
    }
    EXPECT_THROW(dk::at_loss(*model, x, x_adv, y, {1.5}), dk::ConfigError);
}

TEST_F(ObjectiveFixture, AtTermsAgreeWithLoss) {
    const auto v = dk::evaluate_objective(*model, dk::at_terms(x, x_adv, y, {0.5}));
    EXPECT_NEAR(v.value, dk::at_loss(*model, x, x_adv, y, {0.5}), 1e-14);
}

TEST_F(ObjectiveFixture, DardEndpoints) {
    dk::DistillLossConfig c;
    c.alpha_kd = 0.0;
    EXPECT_NEAR(dk::dard_loss(*model, teacher, x, x_adv, y, c, dk::CeInput::adversarial),
                dk::cross_entropy(model->forward(x_adv), y), 1e-14);
    EXPECT_NEAR(dk::dard_loss(*model, teacher, x, x_adv, y, c, dk::CeInput::natural),
                dk::cross_entropy(model->forward(x), y), 1e-14);
    c.alpha_kd = 1.0;
    const double kl = dk::kl_div(dk::softmax_t(model->forward(x_adv), 1.0), teacher);
    EXPECT_NEAR(dk::dard_loss(*model, teacher, x, x_adv, y, c, dk::CeInput::adversarial), kl, 1e-14);
}

TEST_F(ObjectiveFixture, DardTemperatureFactor) {
    dk::DistillLossConfig c;
    c.alpha_kd = 1.0;
    c.tau = 3.0;
    const double kl = dk::kl_div(dk::softmax_t(model->forward(x_adv), 3.0), teacher);
    EXPECT_NEAR(dk::dard_loss(*model, teacher, x, x_adv, y, c, dk::CeInput::adversarial), 9.0 * kl, 1e-13);
}

TEST_F(ObjectiveFixture, DardTermsAgreeWithLoss) {
    dk::DistillLossConfig c;
    c.tau = 2.0;
    for (auto in : {dk::CeInput::adversarial, dk::CeInput::natural}) {
        const auto v = dk::evaluate_objective(*model, dk::dard_terms(teacher, x, x_adv, y, c, in));
        EXPECT_NEAR(v.value, dk::dard_loss(*model, teacher, x, x_adv, y, c, in), 1e-13);
    }
}

TEST_F(ObjectiveFixture, DardParameterGradient) {
    dk::DistillLossConfig c;
    c.tau = 2.0;
    const auto terms = dk::dard_terms(teacher, x, x_adv, y, c, dk::CeInput::natural);
    const auto analytic = dk::evaluate_objective(*model, terms).param_grad;
    auto probe = model->clone();
    for (std::size_t i = 0; i < model->parameter_count(); i += 5) {
        dk::ModelState s = model->state();
        const float orig = s.parameters[i];
        s.parameters[i] = orig + 1e-3f;
        const double hp = static_cast<double>(s.parameters[i]) - orig;
        probe->set_state(s);
        const double up = dk::dard_loss(*probe, teacher, x, x_adv, y, c, dk::CeInput::natural);
        s.parameters[i] = orig - 1e-3f;
        const double hm = orig - static_cast<double>(s.parameters[i]);
        probe->set_state(s);
        const double down = dk::dard_loss(*probe, teacher, x, x_adv, y, c, dk::CeInput::natural);
        EXPECT_NEAR(analytic[i], (up - down) / (hp + hm), 1e-4) << "param " << i;
    }
}

TEST_F(ObjectiveFixture, DistillConfigErrors) {
    dk::DistillLossConfig c;
    c.alpha_kd = 1.2;
    EXPECT_THROW(dk::dard_loss(*model, teacher, x, x_adv, y, c, dk::CeInput::adversarial), dk::ConfigError);
    c.alpha_kd = 0.5;
    c.tau = 0.0;
    EXPECT_THROW(dk::dard_loss(*model, teacher, x, x_adv, y, c, dk::CeInput::adversarial), dk::ConfigError);
}
