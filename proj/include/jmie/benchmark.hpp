#pragma once

#include <jmie/evaluation.hpp>
#include <jmie/inference.hpp>
#include <jmie/prediction.hpp>
#include <jmie/simulation.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace jmie {

/// Intercept and slope fitted to the measurements before the intermediate
/// event and carried forward unchanged; the survival part matches the
/// full model.
inline ModelSpec extrapolation_spec(const ModelSpec& full)
{
    auto s = preset_linear(full.covariates, "value");
    s.association = full.association;
    s.survival_covariates = full.survival_covariates;
    s.intermediate_effect = full.intermediate_effect;
    s.baseline = full.baseline;
    s.window = LongitudinalWindow::pre_intermediate;
    s.label = "extrapolation";
    return s;
}

inline FittedJointModel fit_extrapolation_comparator(const Dataset& train, const ModelSpec& full,
                                                     const Priors& priors = {}, const McmcConfig& cfg = {})
{
    return fit(train, extrapolation_spec(full), priors, cfg);
}

struct BenchmarkConfig {
    std::vector<int> scenarios{1};
    int replications = 20;
    int n = 300;
    std::vector<double> anchors{20.0, 22.0, 24.0};
    double delta_t = 2.0;
    std::uint64_t seed = 1;
    int threads = 1;
    McmcConfig mcmc{.chains = 2, .iterations = 2000, .burn_in = 1000};
    PredictionOptions prediction{.draws = 200, .mh_steps = 5, .warmup = 200};
    std::vector<SimulationScenario> custom; // overrides presets by label when present

    void validate() const
    {
        if (replications < 1)
            throw Error("replications must be >= 1");
        if (n < 2 || n % 2 != 0)
            throw Error("n must be even and >= 2");
        if (anchors.empty() || !(delta_t > 0.0))
            throw Error("need anchors and a positive delta_t");
        for (double a : anchors)
            if (!(a > 0.0))
                throw Error("anchors must be positive");
        if (threads < 1)
            throw Error("threads must be >= 1");
        for (int s : scenarios)
            SimulationScenario::preset(s);
        mcmc.validate();
        prediction.validate();
    }

    SimulationScenario scenario(int label) const
    {
        for (const auto& s : custom)
            if (s.label == label)
                return s;
        return SimulationScenario::preset(label);
    }
};

struct BenchmarkRow {
    int replication = 0;
    int scenario = 0;
    std::string model; // WT or extrapolation
    double anchor_t = 0.0;
    double delta_t = 0.0;
    MetricReport metrics;
};

struct BenchmarkFailure {
    int replication = 0;
    int scenario = 0;
    std::string message;
};

struct BenchmarkReport {
    BenchmarkConfig config;
    std::vector<BenchmarkRow> rows;
    std::vector<BenchmarkFailure> failures;
};

namespace detail {

inline std::vector<BenchmarkRow> run_replication(const BenchmarkConfig& cfg, int scenario, int rep)
{
    const auto sc = cfg.scenario(scenario);
    const auto s = static_cast<std::uint64_t>(scenario);
    const auto r = static_cast<std::uint64_t>(rep);
    const auto data = simulate_dataset(sc, cfg.n, cfg.seed, derive_seed(cfg.seed, {s, r}));
    Rng split_rng = make_rng(cfg.seed, {s, r, 1});
    const auto split = train_test_split(data, split_rng);

    const auto full = sc.truth_spec();
    std::vector<std::pair<std::string, ModelSpec>> models{{"WT", full}, {"extrapolation", extrapolation_spec(full)}};
    std::vector<BenchmarkRow> rows;
    for (std::size_t k = 0; k < models.size(); ++k) {
        auto mc = cfg.mcmc;
        mc.seed = derive_seed(cfg.seed, {s, r, 2, k});
        mc.parallel_chains = false;
        const auto fitted = fit(split.train, models[k].second, {}, mc);
        auto po = cfg.prediction;
        po.seed = derive_seed(cfg.seed, {s, r, 3, k});
        for (double t : cfg.anchors) {
            const auto table = build_risk_table(split.test, t, t + cfg.delta_t, median_predictor(fitted, po));
            rows.push_back({rep, scenario, models[k].first, t, cfg.delta_t, evaluate(table)});
        }
    }
    return rows;
}

} // namespace detail

/// Simulate, split, fit both models on the training half and score test-set
/// predictions under each subject's own intermediate-event status. A
/// replication that throws is recorded as a failure and contributes no rows.
inline BenchmarkReport run_benchmark(const BenchmarkConfig& cfg)
{
    cfg.validate();
    struct Job {
        int scenario, rep;
    };
    std::vector<Job> jobs;
    for (int s : cfg.scenarios)
        for (int r = 1; r <= cfg.replications; ++r)
            jobs.push_back({s, r});
    std::vector<std::vector<BenchmarkRow>> out(jobs.size());
    std::vector<std::optional<std::string>> err(jobs.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t j; (j = next++) < jobs.size();) {
            try {
                out[j] = detail::run_replication(cfg, jobs[j].scenario, jobs[j].rep);
            } catch (const std::exception& e) {
                err[j] = e.what();
            }
        }
    };
    const int nt = std::min<int>(cfg.threads, static_cast<int>(jobs.size()));
    if (nt <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < nt; ++i)
            pool.emplace_back(worker);
        for (auto& th : pool)
            th.join();
    }
    BenchmarkReport rep{cfg, {}, {}};
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        if (err[j])
            rep.failures.push_back({jobs[j].rep, jobs[j].scenario, *err[j]});
        for (auto& row : out[j])
            rep.rows.push_back(std::move(row));
    }
    return rep;
}

inline void write_benchmark_csv(std::ostream& out, const BenchmarkReport& rep)
{
    out << "replication,scenario,model,anchor_t,delta_t,auc,pe\n";
    for (const auto& r : rep.rows)
        out << r.replication << ',' << r.scenario << ',' << r.model << ',' << format_double(r.anchor_t) << ','
            << format_double(r.delta_t) << ',' << format_optional(r.metrics.auc) << ','
            << format_optional(r.metrics.pe) << '\n';
}

/// Share of (replication, anchor) cells of one scenario where WT does
/// strictly better. Failed replications and undefined metrics count as
/// cells WT did not win.
struct WinRate {
    int scenario = 0;
    int cells = 0;
    int auc_wins = 0;
    int pe_wins = 0;

    double auc_rate() const { return cells ? static_cast<double>(auc_wins) / cells : 0.0; }
    double pe_rate() const { return cells ? static_cast<double>(pe_wins) / cells : 0.0; }
};

inline std::vector<WinRate> win_rates(const BenchmarkReport& rep)
{
    std::vector<WinRate> out;
    for (int s : rep.config.scenarios) {
        WinRate w;
        w.scenario = s;
        w.cells = rep.config.replications * static_cast<int>(rep.config.anchors.size());
        for (int r = 1; r <= rep.config.replications; ++r)
            for (double t : rep.config.anchors) {
                const BenchmarkRow *wt = nullptr, *ex = nullptr;
                for (const auto& row : rep.rows)
                    if (row.scenario == s && row.replication == r && row.anchor_t == t)
                        (row.model == "WT" ? wt : ex) = &row;
                if (!wt || !ex)
                    continue;
                const auto &a = wt->metrics, &b = ex->metrics;
                if (a.auc && b.auc && *a.auc > *b.auc)
                    ++w.auc_wins;
                if (a.pe && b.pe && *a.pe < *b.pe)
                    ++w.pe_wins;
            }
        out.push_back(w);
    }
    return out;
}

/// Distribution summaries per (scenario, model, anchor): the boxplot data.
inline json benchmark_summary(const BenchmarkReport& rep)
{
    json groups = json::array();
    for (int s : rep.config.scenarios)
        for (const char* model : {"WT", "extrapolation"})
            for (double t : rep.config.anchors) {
                std::vector<double> auc, pe;
                for (const auto& row : rep.rows)
                    if (row.scenario == s && row.model == model && row.anchor_t == t) {
                        if (row.metrics.auc)
                            auc.push_back(*row.metrics.auc);
                        if (row.metrics.pe)
                            pe.push_back(*row.metrics.pe);
                    }
                const auto five = [](const std::vector<double>& v) -> json {
                    if (v.empty())
                        return nullptr;
                    return {{"n", v.size()},
                            {"min", quantile(v, 0.0)},
                            {"q25", quantile(v, 0.25)},
                            {"median", quantile(v, 0.5)},
                            {"q75", quantile(v, 0.75)},
                            {"max", quantile(v, 1.0)}};
                };
                groups.push_back({{"scenario", s}, {"model", model}, {"anchor_t", t}, {"auc", five(auc)},
                                  {"pe", five(pe)}});
            }
    json wins = json::array();
    for (const auto& w : win_rates(rep))
        wins.push_back({{"scenario", w.scenario},
                        {"cells", w.cells},
                        {"wt_auc_wins", w.auc_wins},
                        {"wt_pe_wins", w.pe_wins},
                        {"wt_auc_rate", w.auc_rate()},
                        {"wt_pe_rate", w.pe_rate()}});
    json failures = json::array();
    for (const auto& f : rep.failures)
        failures.push_back({{"replication", f.replication}, {"scenario", f.scenario}, {"message", f.message}});
    return {{"replications", rep.config.replications},
            {"n", rep.config.n},
            {"delta_t", rep.config.delta_t},
            {"seed", rep.config.seed},
            {"groups", groups},
            {"wins", wins},
            {"failures", failures}};
}

} // namespace jmie
