#pragma once

#include <jmie/core_data.hpp>
#include <jmie/dataset_io.hpp>
#include <jmie/fitted_model.hpp>
#include <jmie/prediction.hpp>

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace jmie {

/// A: intermediate event not yet happened at t. B: happened at or before t.
enum class RiskGroup { A, B };

inline RiskGroup risk_group(double t, std::optional<double> rho) { return (rho && *rho <= t) ? RiskGroup::B : RiskGroup::A; }

struct RiskRow {
    std::string id;
    double time = 0.0; // observed T_i
    int event = 0;     // δ_i
    std::optional<double> rho;
    RiskGroup group = RiskGroup::A;
    double pi_t = 1.0;             // π̂_i(u | t) under the status at t
    std::optional<double> pi_T;    // π̂_i(u | T_i), censored in (t, u] only
};

/// Predictions at one landmark t for horizon u, one row per subject at risk.
struct RiskPredictionTable {
    double t = 0.0;
    double u = 0.0;
    std::vector<RiskRow> rows;

    void validate() const
    {
        if (!(u > t))
            throw Error("risk table needs u > t");
        for (const auto& r : rows) {
            const auto prob = [&](double p) {
                if (!(p >= 0.0 && p <= 1.0))
                    throw Error("subject '" + r.id + "': probability outside [0, 1]");
            };
            prob(r.pi_t);
            if (r.pi_T)
                prob(*r.pi_T);
            if (r.group != risk_group(t, r.rho))
                throw Error("subject '" + r.id + "': group tag does not match rho and t");
            if (r.time >= t && r.event == 0 && r.time < u && !r.pi_T)
                throw Error("subject '" + r.id + "': censored in (t, u) without a prediction from T_i");
        }
    }
};

struct MetricReport {
    double t = 0.0;
    double delta_t = 0.0;
    double u = 0.0;

    std::optional<double> auc; // empty when no pair is comparable
    std::array<double, 4> auc_terms{};
    std::array<long, 4> pairs{};         // |Ω^(m)|
    std::array<double, 4> pair_weight{}; // Σ ν̂ over Ω^(m)
    std::string diagnostic;

    std::optional<double> pe;
    std::optional<double> pe_a, pe_b;
    long n_a = 0, n_b = 0;
};

namespace detail {

inline double concordance(double pi_i, double pi_j)
{
    if (pi_i < pi_j)
        return 1.0;
    return pi_i == pi_j ? 0.5 : 0.0;
}

} // namespace detail

/// Time-dependent AUC over (t, t+Δt] with Δt = u - t. Pairs are formed
/// within group A and within group B only. Pairs that are ambiguous because
/// of censoring enter with the probability that they are comparable, and
/// all four terms share one denominator so that they sum to the AUC.
inline MetricReport auc(const RiskPredictionTable& table)
{
    table.validate();
    const double t = table.t, u = table.u;
    MetricReport rep;
    rep.t = t;
    rep.u = u;
    rep.delta_t = u - t;

    std::array<double, 4> num{};
    const auto& R = table.rows;
    for (std::size_t i = 0; i < R.size(); ++i) {
        const auto& a = R[i];
        if (!(a.time > t && a.time <= u))
            continue;
        const double nu_i = a.event ? 1.0 : 1.0 - a.pi_T.value_or(1.0);
        for (std::size_t j = 0; j < R.size(); ++j) {
            const auto& b = R[j];
            if (j == i || b.group != a.group)
                continue;
            int m = -1;
            double w = 1.0;
            if (b.time > u) {
                m = a.event ? 0 : 1;
                w = nu_i;
            } else if (b.event == 0 && b.time > a.time) {
                m = a.event ? 2 : 3;
                w = nu_i * b.pi_T.value_or(1.0);
            }
            if (m < 0)
                continue;
            ++rep.pairs[m];
            rep.pair_weight[m] += w;
            num[m] += w * detail::concordance(a.pi_t, b.pi_t);
        }
    }
    const double den = rep.pair_weight[0] + rep.pair_weight[1] + rep.pair_weight[2] + rep.pair_weight[3];
    if (!(den > 0.0)) {
        rep.diagnostic = "no comparable pairs at t = " + format_double(t);
        return rep;
    }
    for (int m = 0; m < 4; ++m)
        rep.auc_terms[m] = num[m] / den;
    // one division keeps the total inside [0, 1]
    rep.auc = (num[0] + num[1] + num[2] + num[3]) / den;
    return rep;
}

/// Expected squared prediction error of N_i(u) against π̂_i(u | t), group
/// by group; subjects censored before u count with their estimated chance
/// of surviving to u. Overall PE weights the groups by their risk sets.
inline void prediction_error(const RiskPredictionTable& table, MetricReport& rep)
{
    table.validate();
    const double t = table.t, u = table.u;
    double sum_a = 0.0, sum_b = 0.0;
    rep.n_a = rep.n_b = 0;
    for (const auto& r : table.rows) {
        if (r.time < t)
            continue;
        const double p = r.pi_t;
        double loss;
        if (r.time >= u)
            loss = (1.0 - p) * (1.0 - p);
        else if (r.event)
            loss = p * p;
        else
            loss = *r.pi_T * (1.0 - p) * (1.0 - p) + (1.0 - *r.pi_T) * p * p;
        if (r.group == RiskGroup::A) {
            sum_a += loss;
            ++rep.n_a;
        } else {
            sum_b += loss;
            ++rep.n_b;
        }
    }
    rep.pe_a = rep.n_a ? std::optional(sum_a / static_cast<double>(rep.n_a)) : std::nullopt;
    rep.pe_b = rep.n_b ? std::optional(sum_b / static_cast<double>(rep.n_b)) : std::nullopt;
    if (rep.n_a + rep.n_b == 0)
        throw Error("no subjects at risk at t = " + format_double(t));
    rep.pe = (sum_a + sum_b) / static_cast<double>(rep.n_a + rep.n_b);
}

inline double prediction_error(const RiskPredictionTable& table)
{
    MetricReport rep;
    prediction_error(table, rep);
    return *rep.pe;
}

/// AUC and PE together.
inline MetricReport evaluate(const RiskPredictionTable& table)
{
    auto rep = auc(table);
    prediction_error(table, rep);
    return rep;
}

/// π̂(u | from) for one subject; `from` is t or the censoring time T_i.
using RiskPredictor = std::function<double(const SubjectRecord&, double t, double u,
                                           const PredictionScenario&, double from)>;

/// Rows for every subject with T_i >= t, each predicted under its own
/// intermediate-event status at t from measurements up to t.
inline RiskPredictionTable build_risk_table(const Dataset& data, double t, double u, const RiskPredictor& predict)
{
    if (!(u > t))
        throw Error("risk table needs u > t");
    RiskPredictionTable table{t, u, {}};
    for (const auto& s : data.subjects) {
        if (s.event_time < t)
            continue;
        RiskRow r;
        r.id = s.id;
        r.time = s.event_time;
        r.event = s.event_indicator;
        r.rho = s.intermediate_time;
        r.group = risk_group(t, s.intermediate_time);
        const auto sc = r.group == RiskGroup::B ? PredictionScenario::already_occurred(*s.intermediate_time)
                                                : PredictionScenario::none();
        r.pi_t = predict(s, t, u, sc, t);
        if (!r.event && r.time < u)
            r.pi_T = predict(s, t, u, sc, std::max(r.time, t));
        table.rows.push_back(std::move(r));
    }
    return table;
}

/// Posterior-median predictor for a fitted model. Each subject gets its own
/// random stream derived from the seed and its position in the call sequence.
inline RiskPredictor median_predictor(const FittedJointModel& fitted, PredictionOptions opts)
{
    return [&fitted, opts, call = std::uint64_t{0}](const SubjectRecord& s, double t, double u,
                                                    const PredictionScenario& sc, double from) mutable {
        auto o = opts;
        o.seed = derive_seed(opts.seed, {++call});
        return dynamic_prediction(fitted, s, t, u, sc, o, from).median;
    };
}

inline json to_json(const MetricReport& r)
{
    const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json j{{"t", r.t},
           {"delta_t", r.delta_t},
           {"u", r.u},
           {"auc", opt(r.auc)},
           {"auc_terms", r.auc_terms},
           {"pairs", r.pairs},
           {"pair_weight", r.pair_weight},
           {"pe", opt(r.pe)},
           {"pe_a", opt(r.pe_a)},
           {"pe_b", opt(r.pe_b)},
           {"n_a", r.n_a},
           {"n_b", r.n_b}};
    if (!r.diagnostic.empty())
        j["diagnostic"] = r.diagnostic;
    return j;
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

inline void write_metrics_csv(std::ostream& out, const std::vector<MetricReport>& reports)
{
    out << "t,delta_t,auc,auc1,auc2,auc3,auc4,pairs1,pairs2,pairs3,pairs4,pe,pe_a,pe_b,n_a,n_b\n";
    for (const auto& r : reports) {
        out << format_double(r.t) << ',' << format_double(r.delta_t) << ',' << format_optional(r.auc);
        for (double a : r.auc_terms)
            out << ',' << format_double(a);
        for (long p : r.pairs)
            out << ',' << p;
        out << ',' << format_optional(r.pe) << ',' << format_optional(r.pe_a) << ',' << format_optional(r.pe_b)
            << ',' << r.n_a << ',' << r.n_b << '\n';
    }
}

inline json to_json(const RiskPredictionTable& tab)
{
    json rows = json::array();
    for (const auto& r : tab.rows) {
        json j{{"id", r.id},
               {"time", r.time},
               {"event", r.event},
               {"group", r.group == RiskGroup::A ? "A" : "B"},
               {"pi_t", r.pi_t}};
        j["rho"] = r.rho ? json(*r.rho) : json(nullptr);
        j["pi_T"] = r.pi_T ? json(*r.pi_T) : json(nullptr);
        rows.push_back(std::move(j));
    }
    return {{"t", tab.t}, {"u", tab.u}, {"rows", rows}};
}

inline RiskPredictionTable risk_table_from_json(const json& j)
{
    RiskPredictionTable tab;
    tab.t = j.at("t").get<double>();
    tab.u = j.at("u").get<double>();
    for (const auto& x : j.at("rows")) {
        RiskRow r;
        r.id = x.at("id").get<std::string>();
        r.time = x.at("time").get<double>();
        r.event = x.at("event").get<int>();
        if (!x.at("rho").is_null())
            r.rho = x.at("rho").get<double>();
        r.group = risk_group(tab.t, r.rho);
        r.pi_t = x.at("pi_t").get<double>();
        if (x.contains("pi_T") && !x.at("pi_T").is_null())
            r.pi_T = x.at("pi_T").get<double>();
        tab.rows.push_back(std::move(r));
    }
    tab.validate();
    return tab;
}

} // namespace jmie
