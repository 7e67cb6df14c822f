#pragma once

#include <jmie/longitudinal.hpp>
#include <jmie/model_spec.hpp>
#include <jmie/survival.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace jmie {

inline constexpr int fitted_model_schema_version = 1;

/// Prior settings. Coefficient and scale priors are stated on the
/// standardized scale and converted with the data's spread at fit time.
struct Priors {
    double coefficient_scale = 10.0; // normal(0, s²) for β, γ, α on the standardized scale
    double sigma_df = 3.0;
    double sigma_scale = 5.0; // half-t on σ, in units of sd(y)
    double D_scale_df = 3.0;
    double D_scale = 5.0;     // half-t on the random-effect SDs, in units of sd(y)/sd(z)
    double lkj_eta = 1.0;     // 1 gives a uniform prior over correlation matrices
    double zeta_sd = 10.0;
    double log_shape_sd = 10.0; // Weibull log ξ
    double log_rate_sd = 10.0;  // Weibull log h0 at the reference time
    double smoothness_shape = 1.0; // second-order random-walk precision ~ Gamma(shape, rate)
    double smoothness_rate = 0.005;
    double spline_coef_sd = 10.0;

    void validate() const
    {
        for (double v : {coefficient_scale, sigma_df, sigma_scale, D_scale_df, D_scale, lkj_eta, zeta_sd, log_shape_sd,
                         log_rate_sd, smoothness_shape, smoothness_rate, spline_coef_sd})
            if (!(v > 0.0) || !std::isfinite(v))
                throw Error("prior scales must be positive and finite");
    }
};

struct McmcConfig {
    int chains = 2;
    int iterations = 3000;
    int burn_in = 1500;
    int thin = 1;
    int adapt_until = -1; // defaults to burn_in
    double target_accept = 0.35;
    std::uint64_t seed = 1;
    bool parallel_chains = true;
    bool use_likelihood = true;
    int survival_steps = 1;
    int covariance_steps = 5;
    int noncentred_steps = 3; // joint (D, b) moves per iteration

    int adaptation_end() const { return adapt_until < 0 ? burn_in : adapt_until; }

    void validate() const
    {
        if (chains < 1)
            throw Error("chains must be >= 1");
        if (burn_in < 0 || iterations <= burn_in)
            throw Error("iterations must exceed burn_in >= 0");
        if (thin < 1)
            throw Error("thin must be >= 1");
        if (!(target_accept > 0.0 && target_accept < 1.0))
            throw Error("target acceptance must lie in (0, 1)");
        if (survival_steps < 1 || covariance_steps < 1)
            throw Error("step counts must be >= 1");
        if (noncentred_steps < 0)
            throw Error("noncentred_steps must be >= 0");
    }
};

/// One posterior draw of θ.
struct ThetaDraw {
    Eigen::VectorXd beta;
    double sigma = 1.0;
    Eigen::MatrixXd D;
    SurvivalParams surv;
    double smoothness = 0.0; // RW2 precision of the B-spline baseline, if any
    int chain = 0;

    LongitudinalParams longitudinal() const { return {beta, sigma, D}; }
};

struct SubjectEffectSummary {
    std::string id;
    Eigen::VectorXd mean;
    Eigen::VectorXd sd;
};

struct ParameterSummary {
    std::string name;
    double mean = 0.0;
    double sd = 0.0;
    double rhat = std::numeric_limits<double>::quiet_NaN();
    double ess = 0.0;
    double mcse = 0.0;
};

struct FitDiagnostics {
    std::vector<ParameterSummary> parameters;
    std::map<std::string, std::vector<double>> acceptance; // block -> rate per chain
    std::vector<std::string> warnings;

    const ParameterSummary& get(const std::string& name) const
    {
        for (const auto& p : parameters)
            if (p.name == name)
                return p;
        throw Error("no parameter named '" + name + "'");
    }
};

struct FittedJointModel {
    ModelSpec spec; // knots resolved
    std::vector<ThetaDraw> draws;
    std::vector<SubjectEffectSummary> subject_effects;
    FitDiagnostics diagnostics;
    Priors priors;
    McmcConfig config;

    std::size_t size() const { return draws.size(); }
};

inline std::shared_ptr<const SplineBasis> baseline_basis(const ModelSpec& spec)
{
    if (spec.baseline.family != BaselineFamily::bspline)
        return nullptr;
    return std::make_shared<const SplineBasis>(spec.baseline.basis.get());
}

/// Flat parameter names matching flatten_draw().
inline std::vector<std::string> parameter_names(const ModelSpec& spec)
{
    auto names = beta_labels(spec);
    names.push_back("sigma");
    const auto re = random_labels(spec);
    for (std::size_t i = 0; i < re.size(); ++i)
        for (std::size_t j = 0; j <= i; ++j)
            names.push_back("D[" + re[i] + "," + re[j] + "]");
    if (!spec.survival_enabled)
        return names;
    for (int k : spec.survival_covariates)
        names.push_back("gamma[" + spec.covariates.at(k) + "]");
    if (spec.intermediate_effect)
        names.push_back("zeta");
    for (auto f : spec.association.union_features())
        names.push_back("alpha[" + to_string(f) + "]");
    if (spec.baseline.family == BaselineFamily::weibull) {
        names.push_back("weibull_shape");
        names.push_back("weibull_scale");
    } else {
        for (int k = 0; k < spec.n_baseline(); ++k)
            names.push_back("log_baseline[" + std::to_string(k) + "]");
    }
    return names;
}

inline std::vector<double> flatten_draw(const ModelSpec& spec, const ThetaDraw& d)
{
    std::vector<double> v(d.beta.data(), d.beta.data() + d.beta.size());
    v.push_back(d.sigma);
    for (Eigen::Index i = 0; i < d.D.rows(); ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
            v.push_back(d.D(i, j));
    if (!spec.survival_enabled)
        return v;
    v.insert(v.end(), d.surv.gamma.data(), d.surv.gamma.data() + d.surv.gamma.size());
    if (spec.intermediate_effect)
        v.push_back(d.surv.zeta);
    v.insert(v.end(), d.surv.alpha.data(), d.surv.alpha.data() + d.surv.alpha.size());
    if (spec.baseline.family == BaselineFamily::weibull) {
        v.push_back(d.surv.baseline.shape);
        v.push_back(d.surv.baseline.scale);
    } else {
        const auto& k = d.surv.baseline.coefficients;
        v.insert(v.end(), k.data(), k.data() + k.size());
    }
    return v;
}

// ---------------------------------------------------------------------------
// serialization

namespace detail {

inline json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd json_vec(const json& j)
{
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double null_or_number(const json& j)
{
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

} // namespace detail

inline json priors_to_json(const Priors& p)
{
    return {{"coefficient_scale", p.coefficient_scale}, {"sigma_df", p.sigma_df},
            {"sigma_scale", p.sigma_scale},             {"D_scale_df", p.D_scale_df},
            {"D_scale", p.D_scale},                     {"lkj_eta", p.lkj_eta},
            {"zeta_sd", p.zeta_sd},                     {"log_shape_sd", p.log_shape_sd},
            {"log_rate_sd", p.log_rate_sd},             {"smoothness_shape", p.smoothness_shape},
            {"smoothness_rate", p.smoothness_rate},     {"spline_coef_sd", p.spline_coef_sd}};
}

inline Priors priors_from_json(const json& j)
{
    Priors p;
    p.coefficient_scale = j.value("coefficient_scale", p.coefficient_scale);
    p.sigma_df = j.value("sigma_df", p.sigma_df);
    p.sigma_scale = j.value("sigma_scale", p.sigma_scale);
    p.D_scale_df = j.value("D_scale_df", p.D_scale_df);
    p.D_scale = j.value("D_scale", p.D_scale);
    p.lkj_eta = j.value("lkj_eta", p.lkj_eta);
    p.zeta_sd = j.value("zeta_sd", p.zeta_sd);
    p.log_shape_sd = j.value("log_shape_sd", p.log_shape_sd);
    p.log_rate_sd = j.value("log_rate_sd", p.log_rate_sd);
    p.smoothness_shape = j.value("smoothness_shape", p.smoothness_shape);
    p.smoothness_rate = j.value("smoothness_rate", p.smoothness_rate);
    p.spline_coef_sd = j.value("spline_coef_sd", p.spline_coef_sd);
    p.validate();
    return p;
}

inline json mcmc_to_json(const McmcConfig& c)
{
    return {{"chains", c.chains},
            {"iterations", c.iterations},
            {"burn_in", c.burn_in},
            {"thin", c.thin},
            {"adapt_until", c.adapt_until},
            {"target_accept", c.target_accept},
            {"seed", c.seed},
            {"use_likelihood", c.use_likelihood},
            {"survival_steps", c.survival_steps},
            {"covariance_steps", c.covariance_steps},
            {"noncentred_steps", c.noncentred_steps}};
}

inline McmcConfig mcmc_from_json(const json& j)
{
    McmcConfig c;
    c.chains = j.value("chains", c.chains);
    c.iterations = j.value("iterations", c.iterations);
    c.burn_in = j.value("burn_in", c.burn_in);
    c.thin = j.value("thin", c.thin);
    c.adapt_until = j.value("adapt_until", c.adapt_until);
    c.target_accept = j.value("target_accept", c.target_accept);
    c.seed = j.value("seed", c.seed);
    c.use_likelihood = j.value("use_likelihood", c.use_likelihood);
    c.survival_steps = j.value("survival_steps", c.survival_steps);
    c.covariance_steps = j.value("covariance_steps", c.covariance_steps);
    c.noncentred_steps = j.value("noncentred_steps", c.noncentred_steps);
    c.validate();
    return c;
}

inline json to_json(const FittedJointModel& m)
{
    json j;
    j["schema_version"] = fitted_model_schema_version;
    j["kind"] = "jmie-fitted-model";
    j["spec"] = to_json(m.spec);
    j["priors"] = priors_to_json(m.priors);
    j["mcmc"] = mcmc_to_json(m.config);

    json draws = json::array();
    for (const auto& d : m.draws) {
        json e{{"chain", d.chain}, {"beta", detail::vec_json(d.beta)}, {"sigma", d.sigma}};
        e["D"] = std::vector<double>(d.D.data(), d.D.data() + d.D.size());
        if (m.spec.survival_enabled) {
            e["gamma"] = detail::vec_json(d.surv.gamma);
            e["zeta"] = d.surv.zeta;
            e["alpha"] = detail::vec_json(d.surv.alpha);
            if (d.surv.baseline.family == BaselineFamily::weibull) {
                e["weibull"] = {d.surv.baseline.shape, d.surv.baseline.scale};
            } else {
                e["log_baseline"] = detail::vec_json(d.surv.baseline.coefficients);
                e["smoothness"] = d.smoothness;
            }
        }
        draws.push_back(std::move(e));
    }
    j["draws"] = std::move(draws);

    json subjects = json::array();
    for (const auto& s : m.subject_effects)
        subjects.push_back({{"id", s.id}, {"mean", detail::vec_json(s.mean)}, {"sd", detail::vec_json(s.sd)}});
    j["subject_effects"] = std::move(subjects);

    json params = json::array();
    for (const auto& p : m.diagnostics.parameters)
        params.push_back({{"name", p.name},
                          {"mean", detail::number_or_null(p.mean)},
                          {"sd", detail::number_or_null(p.sd)},
                          {"rhat", detail::number_or_null(p.rhat)},
                          {"ess", detail::number_or_null(p.ess)},
                          {"mcse", detail::number_or_null(p.mcse)}});
    j["diagnostics"] = {{"parameters", params},
                        {"acceptance", m.diagnostics.acceptance},
                        {"warnings", m.diagnostics.warnings}};
    return j;
}

inline FittedJointModel fitted_model_from_json(const json& j)
{
    if (!j.contains("schema_version"))
        throw Error("fitted model document has no schema_version");
    if (j["schema_version"].get<int>() != fitted_model_schema_version)
        throw Error("fitted model schema_version " + j["schema_version"].dump() + " is not supported (expected " +
                    std::to_string(fitted_model_schema_version) + ")");
    FittedJointModel m;
    m.spec = model_spec_from_json(j.at("spec"));
    m.priors = priors_from_json(j.at("priors"));
    m.config = mcmc_from_json(j.at("mcmc"));
    const auto basis = baseline_basis(m.spec);
    const auto q = m.spec.trajectory.n_random();
    for (const auto& e : j.at("draws")) {
        ThetaDraw d;
        d.chain = e.value("chain", 0);
        d.beta = detail::json_vec(e.at("beta"));
        d.sigma = e.at("sigma").get<double>();
        const auto D = e.at("D").get<std::vector<double>>();
        if (static_cast<int>(D.size()) != q * q)
            throw Error("fitted model draw has a D of the wrong size");
        d.D = Eigen::Map<const Eigen::MatrixXd>(D.data(), q, q);
        if (d.beta.size() != m.spec.trajectory.n_beta())
            throw Error("fitted model draw has a beta of the wrong size");
        if (m.spec.survival_enabled) {
            d.surv.gamma = detail::json_vec(e.at("gamma"));
            d.surv.zeta = e.at("zeta").get<double>();
            d.surv.alpha = detail::json_vec(e.at("alpha"));
            if (m.spec.baseline.family == BaselineFamily::weibull) {
                const auto& w = e.at("weibull");
                d.surv.baseline = BaselineHazard::weibull(w.at(0).get<double>(), w.at(1).get<double>());
            } else {
                d.surv.baseline = BaselineHazard::bspline(basis, detail::json_vec(e.at("log_baseline")));
                d.smoothness = e.value("smoothness", 0.0);
            }
        }
        m.draws.push_back(std::move(d));
    }
    if (m.draws.empty())
        throw Error("fitted model has no posterior draws");
    for (const auto& s : j.value("subject_effects", json::array()))
        m.subject_effects.push_back(
            {s.at("id").get<std::string>(), detail::json_vec(s.at("mean")), detail::json_vec(s.at("sd"))});
    if (j.contains("diagnostics")) {
        const auto& dj = j["diagnostics"];
        for (const auto& p : dj.value("parameters", json::array()))
            m.diagnostics.parameters.push_back({p.at("name").get<std::string>(), detail::null_or_number(p.at("mean")),
                                                detail::null_or_number(p.at("sd")),
                                                detail::null_or_number(p.at("rhat")),
                                                detail::null_or_number(p.at("ess")),
                                                detail::null_or_number(p.at("mcse"))});
        if (dj.contains("acceptance"))
            m.diagnostics.acceptance = dj["acceptance"].get<std::map<std::string, std::vector<double>>>();
        m.diagnostics.warnings = dj.value("warnings", std::vector<std::string>{});
    }
    return m;
}

inline void save_fitted_model(const FittedJointModel& m, std::ostream& out) { out << to_json(m).dump() << '\n'; }

inline FittedJointModel load_fitted_model(std::istream& in)
{
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(std::string("fitted model is not valid JSON: ") + e.what());
    }
    return fitted_model_from_json(j);
}

} // namespace jmie
