#include <jmie/prediction.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace jmie;

namespace {

ThetaDraw weibull_draw(double shape, double scale, double zeta, double alpha)
{
    ThetaDraw th;
    th.beta = Eigen::Vector2d(5.0, 0.3);
    th.sigma = 1.0;
    th.D = Eigen::Vector2d(1.0, 0.04).asDiagonal();
    th.surv.gamma = Eigen::VectorXd(0);
    th.surv.zeta = zeta;
    th.surv.alpha = Eigen::VectorXd::Constant(1, alpha);
    th.surv.baseline = BaselineHazard::weibull(shape, scale);
    return th;
}

FittedJointModel model_with(std::vector<ThetaDraw> draws, ModelSpec spec = preset_linear())
{
    FittedJointModel m;
    m.spec = std::move(spec);
    m.draws = std::move(draws);
    return m;
}

SubjectRecord history()
{
    SubjectRecord h;
    h.id = "p";
    h.measurements = {{0.2, 5.3}, {0.6, 5.0}, {1.1, 5.9}};
    return h;
}

// posterior draws with genuine spread, for Monte-Carlo behaviour
FittedJointModel spread_model(int n)
{
    Rng rng = make_rng(99);
    std::normal_distribution<double> z;
    std::vector<ThetaDraw> draws;
    for (int k = 0; k < n; ++k) {
        auto th = weibull_draw(1.8 * std::exp(0.1 * z(rng)), 2.0 * std::exp(0.1 * z(rng)), -0.4 + 0.1 * z(rng),
                               0.2 + 0.05 * z(rng));
        th.beta(0) += 0.2 * z(rng);
        draws.push_back(th);
    }
    return model_with(draws);
}

} // namespace

TEST(ConditionalSurvival, EmptyIntervalIsOne)
{
    const auto th = weibull_draw(1.5, 1.0, -0.3, 0.2);
    EXPECT_EQ(conditional_survival(2.0, 2.0, preset_linear(), th, Eigen::Vector2d(0.1, 0.0), {},
                                   PredictionScenario::none()),
              1.0);
}

TEST(ConditionalSurvival, WeibullClosedFormWithoutAssociation)
{
    const auto th = weibull_draw(1.7, 1.0, 0.0, 0.0);
    const double t = 0.5, u = 1.2;
    const double expected = std::exp(-(std::pow(u, 1.7) - std::pow(t, 1.7)));
    for (const auto& sc : {PredictionScenario::none(), PredictionScenario::occurs_at(0.8),
                           PredictionScenario::already_occurred(0.3)})
        EXPECT_NEAR(conditional_survival(u, t, preset_linear(), th, Eigen::Vector2d(0.4, -0.1), {}, sc), expected,
                    1e-8);
}

TEST(ConditionalSurvival, BeneficialEventRaisesSurvival)
{
    const double xi = 2.2, t = 1.0, u = 3.0, tau = 1.7, zeta = -0.6;
    const auto th = weibull_draw(xi, 2.0, zeta, 0.0);
    const auto H0 = [&](double s) { return std::pow(s / 2.0, xi); };
    const Eigen::Vector2d b(0.3, 0.05);
    const double at = conditional_survival(u, t, preset_linear(), th, b, {}, PredictionScenario::occurs_at(tau));
    const double never = conditional_survival(u, t, preset_linear(), th, b, {}, PredictionScenario::none());
    EXPECT_NEAR(at, std::exp(-(H0(tau) - H0(t)) - std::exp(zeta) * (H0(u) - H0(tau))), 1e-9);
    EXPECT_NEAR(never, std::exp(-(H0(u) - H0(t))), 1e-9);
    EXPECT_GT(at, never);
}

TEST(DynamicPrediction, HorizonEqualToLandmarkGivesOne)
{
    const auto m = spread_model(50);
    PredictionOptions o;
    o.draws = 20;
    for (const auto& sc : {PredictionScenario::none(), PredictionScenario::occurs_at(1.2),
                           PredictionScenario::already_occurred(1.0)}) {
        const auto r = dynamic_prediction(m, history(), 1.2, 1.2, sc, o);
        EXPECT_EQ(r.median, 1.0);
        EXPECT_EQ(r.ci_low, 1.0);
        EXPECT_EQ(r.ci_high, 1.0);
    }
}

TEST(DynamicPrediction, SingleDrawWithoutAssociationMatchesClosedForm)
{
    const double xi = 1.6, t = 1.2, u = 2.5;
    const auto m = model_with({weibull_draw(xi, 1.0, 0.0, 0.0)});
    PredictionOptions o;
    o.draws = 1;
    const auto r = dynamic_prediction(m, history(), t, u, PredictionScenario::none(), o);
    const double expected = std::exp(-(std::pow(u, xi) - std::pow(t, xi)));
    EXPECT_NEAR(r.median, expected, 1e-6);
    EXPECT_NEAR(r.ci_low, expected, 1e-6);
    EXPECT_NEAR(r.ci_high, expected, 1e-6);
}

TEST(DynamicPrediction, TooManyDrawsNeedsResampling)
{
    const auto m = spread_model(10);
    PredictionOptions o;
    o.draws = 11;
    EXPECT_THROW(dynamic_prediction(m, history(), 1.2, 2.0, PredictionScenario::none(), o), Error);
    o.resample = true;
    const auto r = dynamic_prediction(m, history(), 1.2, 2.0, PredictionScenario::none(), o);
    EXPECT_LE(r.ci_low, r.median);
    EXPECT_LE(r.median, r.ci_high);
}

TEST(DynamicPrediction, RejectsBadArguments)
{
    const auto m = spread_model(10);
    PredictionOptions o;
    o.draws = 5;
    EXPECT_THROW(dynamic_prediction(m, history(), 1.2, 1.0, PredictionScenario::none(), o), Error);
    EXPECT_THROW(dynamic_prediction(m, history(), 1.2, 2.0, PredictionScenario::occurs_at(2.5), o), Error);
    EXPECT_THROW(dynamic_prediction(m, history(), 1.2, 2.0, PredictionScenario::already_occurred(1.5), o), Error);
    auto h = history();
    h.covariates = {1.0};
    EXPECT_THROW(dynamic_prediction(m, h, 1.2, 2.0, PredictionScenario::none(), o), Error);
}

TEST(PredictionCurve, PerDrawMonotoneAndOrderedSummaries)
{
    const auto m = spread_model(200);
    PredictionOptions o;
    o.draws = 100;
    o.keep_draws = true;
    const std::vector<double> grid{1.2, 1.5, 2.0, 2.5, 3.0, 4.0};
    const auto curve = prediction_curve(m, history(), 1.2, grid, PredictionScenario::occurs_at(2.2), o);
    ASSERT_EQ(curve.size(), grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        EXPECT_LE(0.0, curve[g].ci_low);
        EXPECT_LE(curve[g].ci_low, curve[g].median);
        EXPECT_LE(curve[g].median, curve[g].ci_high);
        EXPECT_LE(curve[g].ci_high, 1.0);
        if (g > 0) {
            EXPECT_LE(curve[g].median, curve[g - 1].median);
            for (std::size_t k = 0; k < curve[g].draws.size(); ++k)
                EXPECT_LE(curve[g].draws[k], curve[g - 1].draws[k]);
        }
    }
    EXPECT_EQ(curve.front().median, 1.0);
}

TEST(PredictionCurve, MatchesPointwiseCallsUnderFixedSeed)
{
    const auto m = spread_model(200);
    PredictionOptions o;
    o.draws = 80;
    o.seed = 5;
    const std::vector<double> grid{1.5, 2.0, 3.0};
    const auto curve = prediction_curve(m, history(), 1.2, grid, PredictionScenario::none(), o);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const auto r = dynamic_prediction(m, history(), 1.2, grid[g], PredictionScenario::none(), o);
        EXPECT_NEAR(r.median, curve[g].median, 1e-9);
        EXPECT_NEAR(r.ci_low, curve[g].ci_low, 1e-9);
        EXPECT_NEAR(r.ci_high, curve[g].ci_high, 1e-9);
    }
}

TEST(PredictionCurve, SingleLandmarkPoint)
{
    const auto m = spread_model(20);
    PredictionOptions o;
    o.draws = 10;
    const auto c = prediction_curve(m, history(), 1.2, {1.2}, PredictionScenario::none(), o);
    ASSERT_EQ(c.size(), 1u);
    EXPECT_EQ(c[0].median, 1.0);
}

TEST(DynamicPrediction, ScenariosCoincideWithoutEventEffects)
{
    auto m = spread_model(100);
    for (auto& d : m.draws)
        d.surv.zeta = 0.0;
    PredictionOptions o;
    o.draws = 60;
    const auto at = dynamic_prediction(m, history(), 1.2, 3.0, PredictionScenario::occurs_at(3.0), o);
    const auto never = dynamic_prediction(m, history(), 1.2, 3.0, PredictionScenario::none(), o);
    EXPECT_NEAR(at.median, never.median, 1e-9);
    EXPECT_NEAR(at.ci_low, never.ci_low, 1e-9);
}

TEST(DynamicPrediction, DoublingDrawsStaysInsideInterval)
{
    const auto m = spread_model(1000);
    PredictionOptions o;
    o.draws = 250;
    const auto a = dynamic_prediction(m, history(), 1.2, 2.5, PredictionScenario::none(), o);
    o.draws = 500;
    const auto b = dynamic_prediction(m, history(), 1.2, 2.5, PredictionScenario::none(), o);
    EXPECT_LE(std::abs(b.median - a.median), 0.5 * (a.ci_high - a.ci_low));
}

TEST(DynamicPrediction, ConditioningOnLaterSurvivalTime)
{
    const double xi = 1.6, t = 1.2, s = 1.8, u = 2.5;
    const auto m = model_with({weibull_draw(xi, 1.0, 0.0, 0.0)});
    PredictionOptions o;
    o.draws = 1;
    const auto r = dynamic_prediction(m, history(), t, u, PredictionScenario::none(), o, s);
    EXPECT_NEAR(r.median, std::exp(-(std::pow(u, xi) - std::pow(s, xi))), 1e-6);
}

TEST(Scenario, KeywordsAndValidation)
{
    EXPECT_EQ(parse_scenario("now", 3.0, std::nullopt), PredictionScenario::occurs_at(3.0));
    EXPECT_EQ(parse_scenario("at=4.5", 3.0, std::nullopt), PredictionScenario::occurs_at(4.5));
    EXPECT_EQ(parse_scenario("never", 3.0, 5.0), PredictionScenario::none());
    EXPECT_EQ(parse_scenario("observed", 3.0, 2.0), PredictionScenario::already_occurred(2.0));
    EXPECT_EQ(parse_scenario("observed", 3.0, 5.0), PredictionScenario::none());
    EXPECT_THROW(parse_scenario("never", 3.0, 2.0), Error);
    EXPECT_THROW(parse_scenario("sometime", 3.0, std::nullopt), Error);
    EXPECT_THROW(PredictionScenario::occurs_at(2.0).validate(3.0, 5.0), Error);
    EXPECT_THROW(PredictionScenario::already_occurred(4.0).validate(3.0, 5.0), Error);
}
