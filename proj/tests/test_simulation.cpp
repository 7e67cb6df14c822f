#include <jmie/simulation.hpp>

#include <gtest/gtest.h>

#include <fstream>
#include <set>

using namespace jmie;

namespace {

SimulationScenario weibull_only(double shape, double scale)
{
    auto sc = SimulationScenario::preset(1);
    sc.zeta = 0.0;
    sc.alpha = 0.0;
    sc.weibull_shape = shape;
    sc.weibull_scale = scale;
    sc.censoring_mean = 1e12;
    sc.horizon = 1e4;
    return sc;
}

// least squares of y on [1, t, R(t), R(t) t_+]
Eigen::VectorXd pattern_fit(const Dataset& d)
{
    std::vector<std::array<double, 5>> rows;
    for (const auto& s : d.subjects)
        for (const auto& m : s.measurements) {
            const double R = intermediate_indicator(m.time, s.intermediate_time);
            rows.push_back({1.0, m.time, R, R * time_since_intermediate(m.time, s.intermediate_time), m.value});
        }
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), 4);
    Eigen::VectorXd y(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (int k = 0; k < 4; ++k)
            X(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
        y(i) = rows[static_cast<std::size_t>(i)][4];
    }
    return X.colPivHouseholderQr().solve(y);
}

SimulationScenario noiseless(int label)
{
    auto sc = SimulationScenario::preset(label);
    sc.sigma = 1e-12;
    sc.re_sd = {0, 0, 0, 0};
    return sc;
}

} // namespace

TEST(SimScenario, PublishedFixedEffects)
{
    const auto s1 = SimulationScenario::preset(1);
    EXPECT_EQ(s1.intercept, 20.7);
    EXPECT_EQ(s1.slope, 1.6);
    EXPECT_EQ(s1.drop, -15.5);
    EXPECT_EQ(s1.slope_change, -0.76);
    EXPECT_EQ(SimulationScenario::preset(2).slope_change, 0.0);
    EXPECT_EQ(SimulationScenario::preset(2).drop, -15.5);
    EXPECT_EQ(SimulationScenario::preset(3).drop, 0.0);
    EXPECT_EQ(SimulationScenario::preset(3).slope_change, -0.76);
    EXPECT_EQ(s1.weibull_shape, 20.4);
    EXPECT_EQ(s1.censoring_mean, 22.6);
    EXPECT_EQ(s1.visit_lo, 0.0);
    EXPECT_EQ(s1.visit_hi, 50.0);
}

TEST(SimScenario, UnknownLabelNamesValidOnes)
{
    try {
        SimulationScenario::preset(9);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("1, 2, 3"), std::string::npos);
    }
}

TEST(SimScenario, JsonRoundTripAndShippedConfig)
{
    for (int label : SimulationScenario::labels) {
        const auto s = SimulationScenario::preset(label);
        EXPECT_EQ(to_json(scenario_from_json(to_json(s))), to_json(s));
    }
    std::ifstream in(std::string(JMIE_FIXTURE_DIR) + "/../../config/calibrated_scenarios.json");
    ASSERT_TRUE(in);
    const auto cfg = json::parse(in);
    ASSERT_EQ(cfg.at("scenarios").size(), 3u);
    for (const auto& j : cfg.at("scenarios"))
        EXPECT_EQ(to_json(scenario_from_json(j)), to_json(SimulationScenario::preset(j.at("label").get<int>())));
    EXPECT_THROW(scenario_from_json(json{{"label", 1}, {"trigger", "both"}}), Error);
}

TEST(EventTime, WeibullClosedFormInverse)
{
    const auto sc = weibull_only(2.5, 3.0);
    const auto spec = sc.truth_spec();
    const auto sp = sc.survival();
    const Eigen::VectorXd beta = sc.beta();
    const Eigen::VectorXd b = Eigen::Vector4d(1, 0.1, -2, 0.05);
    const Trajectory traj(spec.trajectory, 4.0, {}, beta, b);
    const SubjectHazard h(spec, sp, traj, {});
    double prev = std::numeric_limits<double>::infinity();
    for (double u : {0.01, 0.2, 0.5, 0.8, 0.99}) {
        const auto T = simulate_event_time(h, 100.0, u);
        ASSERT_TRUE(T);
        EXPECT_NEAR(*T, 3.0 * std::pow(-std::log(u), 1 / 2.5), 1e-8);
        EXPECT_NEAR(std::exp(-h.cumulative(0.0, *T)), u, 1e-8);
        EXPECT_LT(*T, prev);
        prev = *T;
    }
    EXPECT_FALSE(simulate_event_time(h, 0.5, 0.01));
}

TEST(EventTime, RootSolvesJointHazard)
{
    const auto sc = SimulationScenario::preset(1);
    const auto spec = sc.truth_spec();
    const auto sp = sc.survival();
    const Eigen::VectorXd beta = sc.beta();
    const Eigen::VectorXd b = Eigen::Vector4d(2, -0.1, 3, 0.2);
    const Trajectory traj(spec.trajectory, 15.0, {}, beta, b);
    const SubjectHazard h(spec, sp, traj, {});
    double prev = 0.0;
    for (double u : {0.9, 0.6, 0.3, 0.05}) {
        const auto T = simulate_event_time(h, sc.horizon, u);
        ASSERT_TRUE(T);
        EXPECT_NEAR(std::exp(-h.cumulative(0.0, *T)), u, 1e-8);
        EXPECT_GT(*T, prev);
        prev = *T;
    }
}

TEST(Simulation, EventTimesFollowWeibullWithoutAssociation)
{
    const double shape = 20.4, scale = 27.0;
    const auto d = simulate_dataset(weibull_only(shape, scale), 10000, 42);
    std::vector<double> T;
    for (const auto& s : d.subjects) {
        ASSERT_EQ(s.event_indicator, 1);
        T.push_back(s.event_time);
    }
    std::sort(T.begin(), T.end());
    double ks = 0.0;
    const double n = static_cast<double>(T.size());
    for (std::size_t i = 0; i < T.size(); ++i) {
        const double F = 1.0 - std::exp(-std::pow(T[i] / scale, shape));
        ks = std::max({ks, std::abs(F - static_cast<double>(i) / n), std::abs(F - static_cast<double>(i + 1) / n)});
    }
    EXPECT_LT(ks, 0.02);
}

TEST(Simulation, ZeroNoiseProbeRecoversPattern)
{
    for (int label : SimulationScenario::labels) {
        const auto sc = noiseless(label);
        const auto d = simulate_dataset(sc, 400, 3);
        int with_event = 0;
        for (const auto& s : d.subjects)
            with_event += s.intermediate_time.has_value();
        ASSERT_GT(with_event, 20);
        const auto coef = pattern_fit(d);
        EXPECT_NEAR(coef(0), sc.intercept, 1e-8);
        EXPECT_NEAR(coef(1), sc.slope, 1e-8);
        EXPECT_NEAR(coef(2), sc.drop, 1e-8);
        EXPECT_NEAR(coef(3), sc.slope_change, 1e-8);
    }
}

TEST(Simulation, DropOnlyKeepsPreEventSlope)
{
    const auto d = simulate_dataset(noiseless(2), 400, 8);
    const auto coef = pattern_fit(d);
    // post-event slope = slope + slope change
    EXPECT_NEAR(coef(1) + coef(3), coef(1), 1e-8);
    EXPECT_NEAR(coef(1), 1.6, 1e-8);
}

TEST(Simulation, DeterministicForSeed)
{
    const auto sc = SimulationScenario::preset(1);
    EXPECT_EQ(simulate_dataset(sc, 50, 7), simulate_dataset(sc, 50, 7));
    EXPECT_NE(simulate_dataset(sc, 50, 7), simulate_dataset(sc, 50, 8));
    EXPECT_NE(simulate_dataset(sc, 50, 7, 0), simulate_dataset(sc, 50, 7, 1));
}

TEST(Simulation, RecordsAreConsistent)
{
    for (int label : SimulationScenario::labels) {
        const auto sc = SimulationScenario::preset(label);
        const auto d = simulate_dataset(sc, 300, 17);
        EXPECT_NO_THROW(validate_dataset(d));
        for (const auto& s : d.subjects) {
            for (const auto& m : s.measurements)
                EXPECT_LE(m.time, s.event_time);
            if (!s.intermediate_time)
                continue;
            EXPECT_LE(*s.intermediate_time, s.event_time);
            // the event time is the visit after the first observed crossing
            std::size_t j = 0;
            while (j < s.measurements.size() && !(s.measurements[j].value > sc.threshold))
                ++j;
            ASSERT_LT(j + 1, s.measurements.size());
            EXPECT_EQ(s.measurements[j + 1].time, *s.intermediate_time);
        }
    }
}

TEST(Simulation, CalibratedEventFractions)
{
    for (int label : SimulationScenario::labels) {
        const auto d = simulate_dataset(SimulationScenario::preset(label), 4000, 101);
        double events = 0, inter = 0;
        for (const auto& s : d.subjects) {
            events += s.event_indicator;
            inter += s.intermediate_time.has_value();
        }
        const double n = static_cast<double>(d.size());
        EXPECT_GE(events / n, 0.30) << "scenario " << label;
        EXPECT_LE(events / n, 0.60) << "scenario " << label;
        EXPECT_GE(inter / n, 0.20) << "scenario " << label;
        EXPECT_LE(inter / n, 0.50) << "scenario " << label;
    }
}

TEST(Split, IsAPartitionOfEqualHalves)
{
    const auto d = simulate_dataset(SimulationScenario::preset(1), 60, 4);
    Rng rng = make_rng(9);
    const auto sp = train_test_split(d, rng);
    EXPECT_EQ(sp.train.size(), 30u);
    EXPECT_EQ(sp.test.size(), 30u);
    std::set<std::string> ids;
    for (const auto* part : {&sp.train, &sp.test})
        for (const auto& s : part->subjects)
            EXPECT_TRUE(ids.insert(s.id).second);
    EXPECT_EQ(ids.size(), d.size());
    auto odd = d;
    odd.subjects.pop_back();
    EXPECT_THROW(train_test_split(odd, rng), Error);
}
