#pragma once

#include <jmie/core_data.hpp>
#include <jmie/spline.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

namespace jmie {

using json = nlohmann::json;

inline constexpr int model_spec_schema_version = 1;

enum class TermKind { intercept, time, spline, covariate };

/// One column of a design vector. Pre-event terms are evaluated at t;
/// post-event terms are evaluated at t_+ and multiplied by R(t), so a
/// post-event intercept is the drop at the intermediate event and a
/// post-event time term is the slope change.
struct Term {
    TermKind kind = TermKind::intercept;
    int basis = -1;      // index into TrajectorySpec::bases (spline terms)
    int component = 0;   // spline function index
    int covariate = -1;  // covariate kind: the covariate; other kinds: interaction multiplier

    friend bool operator==(const Term&, const Term&) = default;
};

enum class KnotSource { measurement_times, time_since_intermediate, event_times };

struct BasisDecl {
    std::string name;
    SplineKind kind = SplineKind::natural_cubic;
    int degree = 3;
    bool intercept = false;
    int n_interior = 3;
    KnotSource source = KnotSource::measurement_times;
    std::optional<std::vector<double>> knots;
    std::optional<std::pair<double, double>> boundary;
};

struct BasisSlot {
    BasisDecl decl;
    std::optional<SplineBasis> basis;

    const SplineBasis& get() const
    {
        if (!basis)
            throw Error("spline basis '" + decl.name + "' has unresolved knots");
        return *basis;
    }

    void build()
    {
        if (decl.knots && decl.boundary)
            basis.emplace(decl.kind, decl.degree, *decl.knots, decl.boundary->first, decl.boundary->second,
                          decl.intercept);
    }
};

struct TrajectorySpec {
    std::vector<Term> fixed;
    std::vector<Term> random;
    std::vector<Term> post_fixed;
    std::vector<Term> post_random;
    std::vector<BasisSlot> bases;

    int n_beta() const { return static_cast<int>(fixed.size() + post_fixed.size()); }
    int n_random() const { return static_cast<int>(random.size() + post_random.size()); }
    int n_pre_random() const { return static_cast<int>(random.size()); }
};

enum class Feature { value, slope, area, slope_interaction };

inline std::string to_string(Feature f)
{
    switch (f) {
    case Feature::value: return "value";
    case Feature::slope: return "slope";
    case Feature::area: return "area";
    case Feature::slope_interaction: return "slope-int";
    }
    return "?";
}

inline Feature feature_from_string(const std::string& s)
{
    if (s == "value")
        return Feature::value;
    if (s == "slope")
        return Feature::slope;
    if (s == "area")
        return Feature::area;
    if (s == "slope-int" || s == "slope-interaction")
        return Feature::slope_interaction;
    throw Error("unknown association feature '" + s + "'");
}

/// Association functional f, with separate feature lists before and after the
/// intermediate event. Coefficients are aligned to union().
struct AssociationForm {
    std::vector<Feature> pre;
    std::vector<Feature> post;

    std::vector<Feature> union_features() const
    {
        std::vector<Feature> out;
        for (auto f : {Feature::value, Feature::slope, Feature::area, Feature::slope_interaction})
            if (std::ranges::find(pre, f) != pre.end() || std::ranges::find(post, f) != post.end())
                out.push_back(f);
        return out;
    }

    int size() const { return static_cast<int>(union_features().size()); }

    bool uses(Feature f) const
    {
        return std::ranges::find(pre, f) != pre.end() || std::ranges::find(post, f) != post.end();
    }

    /// value | slope | value+slope | area | value+slope+area | value+slope-int | none
    static AssociationForm from_keyword(const std::string& kw)
    {
        AssociationForm a;
        if (kw == "none" || kw.empty())
            return a;
        if (kw == "value+slope-int") {
            a.pre = {Feature::value, Feature::slope};
            a.post = {Feature::value, Feature::slope, Feature::slope_interaction};
            return a;
        }
        std::size_t start = 0;
        while (start <= kw.size()) {
            auto end = kw.find('+', start);
            if (end == std::string::npos)
                end = kw.size();
            const auto f = feature_from_string(kw.substr(start, end - start));
            if (f == Feature::slope_interaction)
                throw Error("slope-int is only available as value+slope-int or in post overrides");
            a.pre.push_back(f);
            start = end + 1;
        }
        a.post = a.pre;
        return a;
    }
};

enum class BaselineFamily { weibull, bspline };

struct BaselineSpec {
    BaselineFamily family = BaselineFamily::weibull;
    BasisSlot basis; // bspline family: log-hazard basis, knots at event-time quantiles by default
};

enum class LongitudinalWindow { all, pre_intermediate };

struct ModelSpec {
    std::vector<std::string> covariates;
    TrajectorySpec trajectory;
    LongitudinalWindow window = LongitudinalWindow::all;
    bool survival_enabled = true;
    bool intermediate_effect = true;
    std::vector<int> survival_covariates;
    AssociationForm association;
    BaselineSpec baseline;
    std::string label;

    int n_gamma() const { return static_cast<int>(survival_covariates.size()); }

    int n_baseline() const
    {
        return baseline.family == BaselineFamily::weibull ? 2 : baseline.basis.get().size();
    }

    int covariate_index(const std::string& name) const
    {
        for (std::size_t i = 0; i < covariates.size(); ++i)
            if (covariates[i] == name)
                return static_cast<int>(i);
        throw Error("unknown covariate '" + name + "'");
    }

    int basis_index(const std::string& name) const
    {
        for (std::size_t i = 0; i < trajectory.bases.size(); ++i)
            if (trajectory.bases[i].decl.name == name)
                return static_cast<int>(i);
        throw Error("unknown spline basis '" + name + "'");
    }
};

inline std::string term_label(const ModelSpec& spec, const Term& t, bool post)
{
    std::string s;
    switch (t.kind) {
    case TermKind::intercept: s = post ? "R" : "(Intercept)"; break;
    case TermKind::time: s = post ? "t_plus" : "time"; break;
    case TermKind::spline:
        s = spec.trajectory.bases.at(t.basis).decl.name + "[" + std::to_string(t.component) + "](" +
            (post ? "t_plus" : "time") + ")";
        break;
    case TermKind::covariate:
        s = spec.covariates.at(t.covariate);
        if (post)
            s = "R:" + s;
        return s;
    }
    if (t.covariate >= 0)
        s += ":" + spec.covariates.at(t.covariate);
    return s;
}

inline std::vector<std::string> beta_labels(const ModelSpec& spec)
{
    std::vector<std::string> out;
    for (const auto& t : spec.trajectory.fixed)
        out.push_back(term_label(spec, t, false));
    for (const auto& t : spec.trajectory.post_fixed)
        out.push_back(term_label(spec, t, true));
    return out;
}

inline std::vector<std::string> random_labels(const ModelSpec& spec)
{
    std::vector<std::string> out;
    for (const auto& t : spec.trajectory.random)
        out.push_back(term_label(spec, t, false));
    for (const auto& t : spec.trajectory.post_random)
        out.push_back(term_label(spec, t, true));
    return out;
}

// ---------------------------------------------------------------------------
// presets

/// Linear trend with a drop at the intermediate event and a slope change
/// afterwards, in both fixed and random parts; covariates enter the fixed part.
inline ModelSpec preset_drop_slope_change(std::vector<std::string> covariates = {},
                                          const std::string& association = "value")
{
    ModelSpec s;
    s.label = "drop+slope-change";
    s.covariates = std::move(covariates);
    auto& tr = s.trajectory;
    tr.fixed = {{TermKind::intercept}, {TermKind::time}};
    for (int k = 0; k < static_cast<int>(s.covariates.size()); ++k)
        tr.fixed.push_back({TermKind::covariate, -1, 0, k});
    tr.random = {{TermKind::intercept}, {TermKind::time}};
    tr.post_fixed = {{TermKind::intercept}, {TermKind::time}};
    tr.post_random = {{TermKind::intercept}, {TermKind::time}};
    for (int k = 0; k < static_cast<int>(s.covariates.size()); ++k)
        s.survival_covariates.push_back(k);
    s.association = AssociationForm::from_keyword(association);
    return s;
}

/// Random intercept and slope, no post-event terms: the trajectory is
/// carried forward unchanged past the intermediate event.
inline ModelSpec preset_linear(std::vector<std::string> covariates = {}, const std::string& association = "value")
{
    auto s = preset_drop_slope_change(std::move(covariates), association);
    s.label = "linear";
    s.trajectory.post_fixed.clear();
    s.trajectory.post_random.clear();
    return s;
}

/// Natural cubic splines in t and in t_+ in both fixed and random parts.
inline ModelSpec preset_spline_tplus(std::vector<std::string> covariates = {}, const std::string& association = "value",
                                     int n_interior = 3)
{
    ModelSpec s;
    s.label = "spline-in-t_plus";
    s.covariates = std::move(covariates);
    auto& tr = s.trajectory;
    BasisDecl bt{"ns_t", SplineKind::natural_cubic, 3, false, n_interior, KnotSource::measurement_times, {}, {}};
    BasisDecl bp{"ns_tplus", SplineKind::natural_cubic, 3, false, n_interior, KnotSource::time_since_intermediate,
                 {}, {}};
    tr.bases = {{bt, {}}, {bp, {}}};
    const int k = n_interior + 1;
    tr.fixed = {{TermKind::intercept}};
    tr.random = {{TermKind::intercept}};
    for (int c = 0; c < k; ++c) {
        tr.fixed.push_back({TermKind::spline, 0, c, -1});
        tr.random.push_back({TermKind::spline, 0, c, -1});
        tr.post_fixed.push_back({TermKind::spline, 1, c, -1});
        tr.post_random.push_back({TermKind::spline, 1, c, -1});
    }
    for (int j = 0; j < static_cast<int>(s.covariates.size()); ++j) {
        tr.fixed.push_back({TermKind::covariate, -1, 0, j});
        for (int c = 0; c < k; ++c)
            tr.fixed.push_back({TermKind::spline, 0, c, j});
        for (int c = 0; c < k; ++c)
            tr.post_fixed.push_back({TermKind::spline, 1, c, j});
        s.survival_covariates.push_back(j);
    }
    s.association = AssociationForm::from_keyword(association);
    return s;
}

inline BasisDecl default_baseline_basis()
{
    return {"log_baseline", SplineKind::bspline, 3, true, 5, KnotSource::event_times, {}, {}};
}

// ---------------------------------------------------------------------------
// knot resolution

inline void resolve_basis(BasisSlot& slot, const Dataset& data)
{
    auto& d = slot.decl;
    if (d.knots && d.boundary) {
        slot.build();
        return;
    }
    std::vector<double> x;
    for (const auto& s : data.subjects) {
        switch (d.source) {
        case KnotSource::measurement_times:
            for (const auto& m : s.measurements)
                x.push_back(m.time);
            break;
        case KnotSource::time_since_intermediate:
            for (const auto& m : s.measurements)
                if (s.intermediate_time && m.time >= *s.intermediate_time)
                    x.push_back(m.time - *s.intermediate_time);
            break;
        case KnotSource::event_times:
            if (s.event_indicator == 1)
                x.push_back(s.event_time);
            break;
        }
    }
    if (d.source == KnotSource::event_times && x.size() < 2)
        for (const auto& s : data.subjects)
            x.push_back(s.event_time);
    if (x.size() < 2)
        throw Error("not enough data to place knots for basis '" + d.name + "'");
    if (!d.boundary) {
        double hi = *std::max_element(x.begin(), x.end());
        if (d.source == KnotSource::event_times)
            for (const auto& s : data.subjects)
                hi = std::max(hi, s.event_time);
        d.boundary = std::pair{0.0, hi};
    }
    if (!d.knots) {
        std::vector<double> inside;
        for (double v : x)
            if (v > d.boundary->first && v < d.boundary->second)
                inside.push_back(v);
        d.knots = quantile_knots(inside.empty() ? x : inside, d.n_interior);
    }
    slot.build();
}

/// Fills unresolved knots and boundaries from the data.
inline ModelSpec resolve_spec(ModelSpec spec, const Dataset& data)
{
    if (spec.covariates != data.covariate_names) {
        // covariates are matched by name; the dataset may carry extra columns
        for (const auto& name : spec.covariates)
            if (std::ranges::find(data.covariate_names, name) == data.covariate_names.end())
                throw Error("dataset lacks covariate '" + name + "' required by the model");
    }
    for (auto& slot : spec.trajectory.bases)
        resolve_basis(slot, data);
    if (spec.baseline.family == BaselineFamily::bspline)
        resolve_basis(spec.baseline.basis, data);
    return spec;
}

/// Index map from spec covariates to dataset covariate columns.
inline std::vector<int> covariate_map(const ModelSpec& spec, const Dataset& data)
{
    std::vector<int> out;
    for (const auto& name : spec.covariates) {
        auto it = std::ranges::find(data.covariate_names, name);
        if (it == data.covariate_names.end())
            throw Error("dataset lacks covariate '" + name + "'");
        out.push_back(static_cast<int>(it - data.covariate_names.begin()));
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline std::string knot_source_name(KnotSource s)
{
    switch (s) {
    case KnotSource::measurement_times: return "measurement-times";
    case KnotSource::time_since_intermediate: return "time-since-intermediate";
    case KnotSource::event_times: return "event-times";
    }
    return "?";
}

inline KnotSource knot_source_from(const std::string& s)
{
    if (s == "measurement-times")
        return KnotSource::measurement_times;
    if (s == "time-since-intermediate")
        return KnotSource::time_since_intermediate;
    if (s == "event-times")
        return KnotSource::event_times;
    throw Error("unknown knot source '" + s + "'");
}

inline json basis_to_json(const BasisDecl& d)
{
    json j{{"name", d.name},           {"kind", to_string(d.kind)}, {"degree", d.degree},
           {"intercept", d.intercept}, {"n_interior", d.n_interior}, {"source", knot_source_name(d.source)}};
    j["knots"] = d.knots ? json(*d.knots) : json("auto");
    j["boundary"] = d.boundary ? json::array({d.boundary->first, d.boundary->second}) : json("auto");
    return j;
}

inline BasisDecl basis_from_json(const json& j)
{
    BasisDecl d;
    d.name = j.value("name", std::string("basis"));
    d.kind = spline_kind_from_string(j.value("kind", std::string("natural-cubic")));
    d.degree = j.value("degree", 3);
    d.intercept = j.value("intercept", false);
    d.n_interior = j.value("n_interior", 3);
    d.source = knot_source_from(j.value("source", std::string("measurement-times")));
    if (j.contains("knots") && j["knots"].is_array())
        d.knots = j["knots"].get<std::vector<double>>();
    if (j.contains("boundary") && j["boundary"].is_array())
        d.boundary = std::pair{j["boundary"].at(0).get<double>(), j["boundary"].at(1).get<double>()};
    return d;
}

inline std::string term_kind_name(TermKind k)
{
    switch (k) {
    case TermKind::intercept: return "intercept";
    case TermKind::time: return "time";
    case TermKind::spline: return "spline";
    case TermKind::covariate: return "covariate";
    }
    return "?";
}

inline json term_to_json(const ModelSpec& spec, const Term& t)
{
    json j{{"kind", term_kind_name(t.kind)}};
    if (t.kind == TermKind::spline) {
        j["basis"] = spec.trajectory.bases.at(t.basis).decl.name;
        j["component"] = t.component;
    }
    if (t.covariate >= 0)
        j["covariate"] = spec.covariates.at(t.covariate);
    return j;
}

inline Term term_from_json(const ModelSpec& spec, const json& j)
{
    Term t;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "intercept")
        t.kind = TermKind::intercept;
    else if (kind == "time")
        t.kind = TermKind::time;
    else if (kind == "spline")
        t.kind = TermKind::spline;
    else if (kind == "covariate")
        t.kind = TermKind::covariate;
    else
        throw Error("unknown term kind '" + kind + "'");
    if (t.kind == TermKind::spline) {
        t.basis = spec.basis_index(j.at("basis").get<std::string>());
        t.component = j.value("component", 0);
    }
    if (j.contains("covariate"))
        t.covariate = spec.covariate_index(j["covariate"].get<std::string>());
    if (t.kind == TermKind::covariate && t.covariate < 0)
        throw Error("covariate term without covariate name");
    return t;
}

inline json features_to_json(const std::vector<Feature>& fs)
{
    json a = json::array();
    for (auto f : fs)
        a.push_back(to_string(f));
    return a;
}

inline std::vector<Feature> features_from_json(const json& j)
{
    std::vector<Feature> out;
    for (const auto& f : j)
        out.push_back(feature_from_string(f.get<std::string>()));
    return out;
}

} // namespace detail

inline json to_json(const ModelSpec& spec)
{
    json j;
    j["schema_version"] = model_spec_schema_version;
    j["label"] = spec.label;
    j["covariates"] = spec.covariates;
    json bases = json::array();
    for (const auto& b : spec.trajectory.bases)
        bases.push_back(detail::basis_to_json(b.decl));
    json lon;
    lon["bases"] = bases;
    for (auto [key, list] : {std::pair{"fixed", &spec.trajectory.fixed}, std::pair{"random", &spec.trajectory.random},
                             std::pair{"post_fixed", &spec.trajectory.post_fixed},
                             std::pair{"post_random", &spec.trajectory.post_random}}) {
        json terms = json::array();
        for (const auto& t : *list)
            terms.push_back(detail::term_to_json(spec, t));
        lon[key] = terms;
    }
    lon["window"] = spec.window == LongitudinalWindow::all ? "all" : "pre-intermediate";
    j["longitudinal"] = lon;

    json surv;
    surv["enabled"] = spec.survival_enabled;
    surv["intermediate_effect"] = spec.intermediate_effect;
    json covs = json::array();
    for (int k : spec.survival_covariates)
        covs.push_back(spec.covariates.at(k));
    surv["covariates"] = covs;
    surv["association"] = {{"pre", detail::features_to_json(spec.association.pre)},
                           {"post", detail::features_to_json(spec.association.post)}};
    json base;
    base["family"] = spec.baseline.family == BaselineFamily::weibull ? "weibull" : "bspline";
    if (spec.baseline.family == BaselineFamily::bspline)
        base["basis"] = detail::basis_to_json(spec.baseline.basis.decl);
    surv["baseline"] = base;
    j["survival"] = surv;
    return j;
}

/// Accepts either a full document or a preset shortcut:
/// {"preset": "drop+slope-change" | "linear" | "spline-in-t_plus", "covariates": [...],
///  "association": "value+slope", "baseline": "weibull" | "bspline"}.
inline ModelSpec model_spec_from_json(const json& j)
{
    if (j.contains("schema_version") && j["schema_version"].get<int>() != model_spec_schema_version)
        throw Error("model spec schema_version " + j["schema_version"].dump() + " is not supported (expected " +
                    std::to_string(model_spec_schema_version) + ")");
    ModelSpec spec;
    const auto covs = j.value("covariates", std::vector<std::string>{});
    if (j.contains("preset")) {
        const auto preset = j["preset"].get<std::string>();
        const auto assoc = j.contains("association") && j["association"].is_string()
                               ? j["association"].get<std::string>()
                               : std::string("value");
        if (preset == "drop+slope-change")
            spec = preset_drop_slope_change(covs, assoc);
        else if (preset == "linear")
            spec = preset_linear(covs, assoc);
        else if (preset == "spline-in-t_plus")
            spec = preset_spline_tplus(covs, assoc, j.value("n_interior", 3));
        else
            throw Error("unknown preset '" + preset + "'");
        if (j.value("window", std::string("all")) == "pre-intermediate")
            spec.window = LongitudinalWindow::pre_intermediate;
        spec.survival_enabled = j.value("survival", true);
        spec.intermediate_effect = j.value("intermediate_effect", true);
        const auto base = j.value("baseline", std::string("weibull"));
        if (base == "bspline") {
            spec.baseline.family = BaselineFamily::bspline;
            spec.baseline.basis.decl = default_baseline_basis();
        } else if (base != "weibull") {
            throw Error("unknown baseline family '" + base + "'");
        }
        return spec;
    }

    spec.label = j.value("label", std::string());
    spec.covariates = covs;
    const auto& lon = j.at("longitudinal");
    if (lon.contains("bases"))
        for (const auto& b : lon["bases"]) {
            BasisSlot slot{detail::basis_from_json(b), {}};
            slot.build();
            spec.trajectory.bases.push_back(std::move(slot));
        }
    for (auto [key, list] : {std::pair{"fixed", &spec.trajectory.fixed}, std::pair{"random", &spec.trajectory.random},
                             std::pair{"post_fixed", &spec.trajectory.post_fixed},
                             std::pair{"post_random", &spec.trajectory.post_random}})
        if (lon.contains(key))
            for (const auto& t : lon[key])
                list->push_back(detail::term_from_json(spec, t));
    spec.window = lon.value("window", std::string("all")) == "pre-intermediate" ? LongitudinalWindow::pre_intermediate
                                                                              : LongitudinalWindow::all;
    if (j.contains("survival")) {
        const auto& surv = j["survival"];
        spec.survival_enabled = surv.value("enabled", true);
        spec.intermediate_effect = surv.value("intermediate_effect", true);
        if (surv.contains("covariates"))
            for (const auto& c : surv["covariates"])
                spec.survival_covariates.push_back(spec.covariate_index(c.get<std::string>()));
        if (surv.contains("association")) {
            const auto& a = surv["association"];
            if (a.is_string()) {
                spec.association = AssociationForm::from_keyword(a.get<std::string>());
            } else {
                if (a.contains("keyword"))
                    spec.association = AssociationForm::from_keyword(a["keyword"].get<std::string>());
                if (a.contains("pre"))
                    spec.association.pre = detail::features_from_json(a["pre"]);
                if (a.contains("post"))
                    spec.association.post = detail::features_from_json(a["post"]);
            }
        }
        if (surv.contains("baseline")) {
            const auto& b = surv["baseline"];
            const auto fam = b.is_string() ? b.get<std::string>() : b.value("family", std::string("weibull"));
            if (fam == "bspline") {
                spec.baseline.family = BaselineFamily::bspline;
                spec.baseline.basis.decl =
                    b.is_object() && b.contains("basis") ? detail::basis_from_json(b["basis"]) : default_baseline_basis();
                spec.baseline.basis.build();
            } else if (fam != "weibull") {
                throw Error("unknown baseline family '" + fam + "'");
            }
        }
    } else {
        spec.survival_enabled = false;
    }
    if (std::ranges::find(spec.association.pre, Feature::slope_interaction) != spec.association.pre.end())
        throw Error("slope-int is zero before the intermediate event; use it in post features only");
    return spec;
}

} // namespace jmie
