#pragma once

#include <jmie/core_data.hpp>
#include <jmie/dataset_io.hpp>
#include <jmie/fitted_model.hpp>
#include <jmie/inference.hpp>
#include <jmie/random.hpp>
#include <jmie/spline.hpp>
#include <jmie/survival.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace jmie {

enum class ScenarioKind { already_occurred, occurs_at, none_within_window };

/// Timing of the intermediate event assumed for a prediction.
struct PredictionScenario {
    ScenarioKind kind = ScenarioKind::none_within_window;
    double time = 0.0; // ρ for already_occurred, τ for occurs_at

    static PredictionScenario already_occurred(double rho) { return {ScenarioKind::already_occurred, rho}; }
    static PredictionScenario occurs_at(double tau) { return {ScenarioKind::occurs_at, tau}; }
    static PredictionScenario none() { return {}; }

    /// ρ seen by the hazard over the prediction window.
    std::optional<double> rho() const
    {
        if (kind == ScenarioKind::none_within_window)
            return std::nullopt;
        return time;
    }

    void validate(double t, double u) const
    {
        if (kind == ScenarioKind::already_occurred && !(time <= t))
            throw Error("already-occurred scenario needs rho <= t");
        if (kind == ScenarioKind::occurs_at && !(time >= t && time <= u))
            throw Error("occurs-at time must lie in [t, u]");
    }

    friend bool operator==(const PredictionScenario&, const PredictionScenario&) = default;
};

inline std::string to_string(const PredictionScenario& s)
{
    switch (s.kind) {
    case ScenarioKind::already_occurred: return "occurred=" + format_double(s.time);
    case ScenarioKind::occurs_at: return "at=" + format_double(s.time);
    case ScenarioKind::none_within_window: return "never";
    }
    return "never";
}

/// Keywords: `now` (occurs at t), `at=<τ>`, `never`, `observed` (the
/// subject's own status at t: already occurred if ρ <= t, else never).
/// A subject whose event happened by t can only be predicted as occurred.
inline PredictionScenario parse_scenario(const std::string& keyword, double t, std::optional<double> observed_rho)
{
    const bool happened = observed_rho && *observed_rho <= t;
    PredictionScenario s;
    if (keyword == "observed")
        return happened ? PredictionScenario::already_occurred(*observed_rho) : PredictionScenario::none();
    if (keyword == "now")
        s = PredictionScenario::occurs_at(t);
    else if (keyword == "never")
        s = PredictionScenario::none();
    else if (keyword.starts_with("at="))
        s = PredictionScenario::occurs_at(parse_double(keyword.substr(3), "scenario"));
    else
        throw Error("unknown scenario '" + keyword + "' (expected now, at=<time>, never or observed)");
    if (happened)
        throw Error("the intermediate event already occurred at " + format_double(*observed_rho) +
                    "; only 'observed' applies");
    return s;
}

struct PredictionOptions {
    int draws = 500; // M
    std::uint64_t seed = 1;
    bool resample = false; // allow M above the number of posterior draws
    int mh_steps = 10;     // Metropolis steps for b_j per posterior draw
    int warmup = 300;      // adaptive steps under the first draw, discarded
    bool keep_draws = false;
    QuadratureConfig quad{};

    void validate() const
    {
        if (draws < 1)
            throw Error("M must be >= 1");
        if (mh_steps < 1 || warmup < 0)
            throw Error("invalid Metropolis settings");
    }
};

struct PredictionResult {
    double u = 0.0;
    double median = 1.0;
    double ci_low = 1.0;
    double ci_high = 1.0;
    std::vector<double> draws;
};

/// exp(-∫_t^u h(s) ds) for one (θ, b) under the scenario's ρ.
inline double conditional_survival(double u, double t, const ModelSpec& spec, const ThetaDraw& theta,
                                   const Eigen::VectorXd& b, std::span<const double> covariates,
                                   const PredictionScenario& scenario, const QuadratureConfig& quad = {})
{
    if (!(u >= t) || !(t >= 0.0))
        throw Error("conditional survival needs 0 <= t <= u");
    if (u == t)
        return 1.0;
    const Trajectory traj(spec.trajectory, scenario.rho(), covariates, theta.beta, b);
    const SubjectHazard h(spec, theta.surv, traj, covariates);
    return std::exp(-h.cumulative(t, u, quad));
}

namespace detail {

inline std::vector<std::size_t> pick_draws(std::size_t available, int m, bool resample, Rng& rng)
{
    const auto M = static_cast<std::size_t>(m);
    if (available == 0)
        throw Error("fitted model has no posterior draws");
    if (M > available && !resample)
        throw Error("M = " + std::to_string(M) + " exceeds the " + std::to_string(available) +
                    " posterior draws; enable resampling to draw with replacement");
    std::vector<std::size_t> idx;
    if (M > available) {
        std::uniform_int_distribution<std::size_t> pick(0, available - 1);
        for (std::size_t k = 0; k < M; ++k)
            idx.push_back(pick(rng));
        return idx;
    }
    // M of the draws without replacement, kept in posterior order
    std::vector<std::size_t> all(available);
    for (std::size_t k = 0; k < available; ++k)
        all[k] = k;
    for (std::size_t k = 0; k < M; ++k) {
        const auto j = std::uniform_int_distribution<std::size_t>(k, available - 1)(rng);
        std::swap(all[k], all[j]);
    }
    idx.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(M));
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline PredictionResult summarize(double u, std::vector<double> pis, bool keep)
{
    PredictionResult r;
    r.u = u;
    r.median = quantile(pis, 0.5);
    r.ci_low = quantile(pis, 0.025);
    r.ci_high = quantile(pis, 0.975);
    if (keep)
        r.draws = std::move(pis);
    return r;
}

} // namespace detail

/// π_j(u | t) over a grid of horizons, sharing the θ and b_j draws across
/// the grid. The history supplies covariates (in the fitted spec's order)
/// and measurements; those after t are ignored. b_j conditions on the
/// measurements and on survival to `survived_to` (default t), and the
/// survival probability runs from that time to each u.
inline std::vector<PredictionResult> prediction_curve(const FittedJointModel& fitted, const SubjectRecord& history,
                                                      double t, const std::vector<double>& u_grid,
                                                      const PredictionScenario& scenario,
                                                      const PredictionOptions& opts = {},
                                                      std::optional<double> survived_to = std::nullopt)
{
    opts.validate();
    const double from = survived_to.value_or(t);
    if (!(t >= 0.0) || !(from >= t))
        throw Error("prediction needs 0 <= t <= survival time");
    if (u_grid.empty())
        throw Error("empty prediction grid");
    if (!std::ranges::is_sorted(u_grid) || u_grid.front() < from)
        throw Error("prediction grid must be sorted and start at or after " + format_double(from));
    scenario.validate(t, u_grid.back());
    if (history.covariates.size() != fitted.spec.covariates.size())
        throw Error("history has " + std::to_string(history.covariates.size()) + " covariates, model expects " +
                    std::to_string(fitted.spec.covariates.size()));
    const auto& spec = fitted.spec;

    SubjectRecord cond = history;
    cond.measurements = history_until(history, t);
    const bool occurred = scenario.kind == ScenarioKind::already_occurred;
    if (occurred)
        cond.intermediate_time = scenario.time;
    else
        cond.intermediate_time.reset();

    Rng rng = make_rng(opts.seed, {0x70726564ULL});
    const auto idx = detail::pick_draws(fitted.size(), opts.draws, opts.resample, rng);
    NewSubjectSampler sampler(spec, cond, from, !occurred, opts.mh_steps, fitted.config.target_accept, opts.quad);
    // the proposal scale adapts during the warm-up only
    sampler.set_adaptation(opts.warmup);
    for (int k = 0; k < opts.warmup; k += opts.mh_steps)
        sampler.draw(fitted.draws[idx.front()], rng);

    const auto G = u_grid.size();
    std::vector<std::vector<double>> pis(G, std::vector<double>(idx.size()));
    for (std::size_t m = 0; m < idx.size(); ++m) {
        const auto& theta = fitted.draws[idx[m]];
        const Eigen::VectorXd b = sampler.draw(theta, rng);
        const Trajectory traj(spec.trajectory, scenario.rho(), cond.covariates, theta.beta, b);
        const SubjectHazard h(spec, theta.surv, traj, cond.covariates);
        double H = 0.0, prev = from;
        for (std::size_t g = 0; g < G; ++g) {
            if (u_grid[g] > prev)
                H += h.cumulative(prev, u_grid[g], opts.quad);
            prev = u_grid[g];
            pis[g][m] = std::exp(-H);
        }
    }
    std::vector<PredictionResult> out;
    for (std::size_t g = 0; g < G; ++g)
        out.push_back(detail::summarize(u_grid[g], std::move(pis[g]), opts.keep_draws));
    return out;
}

/// π_j(u | t): posterior median and 95% interval over M draws.
inline PredictionResult dynamic_prediction(const FittedJointModel& fitted, const SubjectRecord& history, double t,
                                           double u, const PredictionScenario& scenario,
                                           const PredictionOptions& opts = {},
                                           std::optional<double> survived_to = std::nullopt)
{
    return prediction_curve(fitted, history, t, {u}, scenario, opts, survived_to).front();
}

inline json to_json(const PredictionResult& r)
{
    json j{{"u", r.u}, {"median", r.median}, {"ci_low", r.ci_low}, {"ci_high", r.ci_high}};
    if (!r.draws.empty())
        j["draws"] = r.draws;
    return j;
}

} // namespace jmie
