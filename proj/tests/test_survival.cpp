#include <jmie/survival.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace jmie;

namespace {

struct Setup {
    ModelSpec spec;
    Eigen::VectorXd beta;
    Eigen::VectorXd b;
    SurvivalParams sp;
};

Setup value_association(double shape, double scale, double alpha, double zeta, double gamma)
{
    Setup s;
    s.spec = preset_drop_slope_change({"w"}, "value");
    s.beta = Eigen::VectorXd(5);
    s.beta << 20.7, 1.6, 0.0, -15.5, -0.76; // the covariate does not enter the trajectory
    s.b = Eigen::Vector4d::Zero();
    s.sp.gamma = Eigen::VectorXd::Constant(1, gamma);
    s.sp.zeta = zeta;
    s.sp.alpha = Eigen::VectorXd::Constant(1, alpha);
    s.sp.baseline = BaselineHazard::weibull(shape, scale);
    return s;
}

// ∫_a^b exp(c0 + c1 s) ds
double exp_linear_integral(double c0, double c1, double a, double b)
{
    if (c1 == 0.0)
        return std::exp(c0) * (b - a);
    return (std::exp(c0 + c1 * b) - std::exp(c0 + c1 * a)) / c1;
}

} // namespace

TEST(Baseline, WeibullHazardAtOne)
{
    const auto h = BaselineHazard::weibull(20.4, 1.0);
    EXPECT_NEAR(std::exp(h.log_hazard(1.0)), 20.4, 1e-12);
    EXPECT_NEAR(h.weibull_cumulative(2.0), std::pow(2.0, 20.4), 1e-6);
    EXPECT_THROW(BaselineHazard::weibull(0.0), Error);
}

TEST(LogHazard, ValueAssociationWithIntermediateEvent)
{
    auto s = value_association(20.4, 1.0, 0.1, -0.5, 0.3);
    const std::vector<double> w{2.0};
    const Trajectory tr(s.spec.trajectory, 5.0, w, s.beta, s.b);
    const double lh0 = std::log(20.4) + 19.4 * std::log(10.0);
    EXPECT_NEAR(log_hazard(10.0, s.spec, s.sp, tr, w), lh0 + 0.6 - 0.5 + 1.74, 1e-10);
    const Trajectory pre(s.spec.trajectory, 12.0, w, s.beta, s.b);
    EXPECT_NEAR(log_hazard(10.0, s.spec, s.sp, pre, w), lh0 + 0.6 + 3.67, 1e-10);
}

TEST(CumulativeHazard, ExponentialBaselineClosedForm)
{
    // ξ = 1: h(s) = exp(γw - log λ + R ζ + α η(s)) with η piecewise linear
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 200; ++k) {
        const double alpha = 0.2 * (u(rng) - 0.5), zeta = u(rng) - 0.5, lambda = 5 + 20 * u(rng);
        auto s = value_association(1.0, lambda, alpha, zeta, 0.4);
        const std::vector<double> w{u(rng)};
        const double rho = 40 * u(rng) + 0.5;
        const double T = 45 * u(rng) + 0.1;
        const Trajectory tr(s.spec.trajectory, rho, w, s.beta, s.b);
        const double c = 0.4 * w[0] - std::log(lambda);
        double expected = exp_linear_integral(c + alpha * 20.7, alpha * 1.6, 0.0, std::min(T, rho));
        if (T > rho) {
            // post: η = 20.7 + 1.6 s - 15.5 - 0.76 (s - ρ)
            const double c0 = c + zeta + alpha * (20.7 - 15.5 + 0.76 * rho);
            expected += exp_linear_integral(c0, alpha * (1.6 - 0.76), rho, T);
        }
        const double got = cumulative_hazard(0.0, T, s.spec, s.sp, tr, w);
        EXPECT_NEAR(got, expected, 1e-9 * expected);
    }
}

TEST(CumulativeHazard, WeibullWithoutAssociationClosedForm)
{
    for (double shape : {0.4, 0.8, 1.0, 2.5, 20.4}) {
        auto s = value_association(shape, 25.0, 0.0, -0.7, 0.5);
        const std::vector<double> w{1.3};
        const double rho = 12.0;
        const Trajectory tr(s.spec.trajectory, rho, w, s.beta, s.b);
        for (double T : {3.0, 12.0, 20.0, 30.0}) {
            const double H0 = std::pow(std::min(T, rho) / 25.0, shape) +
                              (T > rho ? std::exp(-0.7) * (std::pow(T / 25.0, shape) - std::pow(rho / 25.0, shape)) : 0.0);
            const double expected = std::exp(0.5 * 1.3) * H0;
            EXPECT_NEAR(cumulative_hazard(0.0, T, s.spec, s.sp, tr, w), expected, 1e-9 * expected)
                << "shape " << shape << " T " << T;
        }
    }
}

TEST(CumulativeHazard, Additive)
{
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 100; ++k) {
        auto s = value_association(0.5 + 3 * u(rng), 20.0, 0.05 * u(rng), -0.5, 0.0);
        s.b = Eigen::Vector4d(u(rng), 0.1 * u(rng), -u(rng), 0.1 * u(rng));
        const std::vector<double> w{0.0};
        const Trajectory tr(s.spec.trajectory, 30 * u(rng) + 1, w, s.beta, s.b);
        double a = 40 * u(rng), b = 40 * u(rng);
        if (a > b)
            std::swap(a, b);
        const double t = a + (b - a) * u(rng);
        const double whole = cumulative_hazard(a, b, s.spec, s.sp, tr, w);
        const double parts = cumulative_hazard(a, t, s.spec, s.sp, tr, w) + cumulative_hazard(t, b, s.spec, s.sp, tr, w);
        EXPECT_NEAR(whole, parts, 1e-10 * std::max(1.0, whole));
    }
}

TEST(CumulativeHazard, RejectsBadRange)
{
    auto s = value_association(2.0, 20.0, 0.0, 0.0, 0.0);
    const std::vector<double> w{0.0};
    const Trajectory tr(s.spec.trajectory, std::nullopt, w, s.beta, s.b);
    EXPECT_THROW(cumulative_hazard(5.0, 4.0, s.spec, s.sp, tr, w), Error);
    EXPECT_EQ(cumulative_hazard(5.0, 5.0, s.spec, s.sp, tr, w), 0.0);
}

TEST(SurvivalLoglik, EventAndCensored)
{
    auto s = value_association(1.5, 20.0, 0.02, -0.3, 0.0);
    LongitudinalParams lon{s.beta, 1.0, Eigen::MatrixXd::Identity(4, 4)};
    SubjectRecord subj;
    subj.event_time = 15.0;
    subj.event_indicator = 1;
    subj.intermediate_time = 6.0;
    subj.covariates = {0.0};
    const Trajectory tr(s.spec.trajectory, 6.0, subj.covariates, s.beta, s.b);
    const double H = cumulative_hazard(0.0, 15.0, s.spec, s.sp, tr, subj.covariates);
    const double lh = log_hazard(15.0, s.spec, s.sp, tr, subj.covariates);
    EXPECT_NEAR(survival_loglik(s.spec, subj, lon, {s.b}, s.sp), lh - H, 1e-12);
    subj.event_indicator = 0;
    EXPECT_NEAR(survival_loglik(s.spec, subj, lon, {s.b}, s.sp), -H, 1e-12);
}

TEST(BsplineBaseline, ConstantCoefficientsGiveExponential)
{
    auto s = value_association(1.0, 1.0, 0.0, 0.0, 0.0);
    s.spec.baseline.family = BaselineFamily::bspline;
    auto basis = std::make_shared<SplineBasis>(SplineKind::bspline, 3, std::vector<double>{5, 10, 20}, 0.0, 40.0);
    s.sp.baseline = BaselineHazard::bspline(basis, Eigen::VectorXd::Constant(basis->size(), std::log(0.05)));
    const std::vector<double> w{0.0};
    const Trajectory tr(s.spec.trajectory, std::nullopt, w, s.beta, s.b);
    EXPECT_NEAR(cumulative_hazard(0.0, 30.0, s.spec, s.sp, tr, w), 1.5, 1e-12);
    EXPECT_NEAR(cumulative_hazard(0.0, 45.0, s.spec, s.sp, tr, w), 2.25, 1e-12);
}
