#pragma once

#include <jmie/longitudinal.hpp>
#include <jmie/model_spec.hpp>
#include <jmie/quadrature.hpp>
#include <jmie/spline.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <vector>

namespace jmie {

/// Weibull h0(t) = (ξ/λ)(t/λ)^(ξ-1), or log h0(t) = Σ κ_k B_k(t).
struct BaselineHazard {
    BaselineFamily family = BaselineFamily::weibull;
    double shape = 1.0;
    double scale = 1.0;
    std::shared_ptr<const SplineBasis> basis;
    Eigen::VectorXd coefficients;

    static BaselineHazard weibull(double shape, double scale = 1.0)
    {
        if (!(shape > 0.0) || !(scale > 0.0))
            throw Error("Weibull shape and scale must be positive");
        BaselineHazard h;
        h.shape = shape;
        h.scale = scale;
        return h;
    }

    static BaselineHazard bspline(std::shared_ptr<const SplineBasis> basis, Eigen::VectorXd coefficients)
    {
        if (!basis || coefficients.size() != basis->size())
            throw Error("B-spline baseline coefficients do not match the basis");
        if (!coefficients.allFinite())
            throw Error("B-spline baseline coefficients must be finite");
        BaselineHazard h;
        h.family = BaselineFamily::bspline;
        h.basis = std::move(basis);
        h.coefficients = std::move(coefficients);
        return h;
    }

    double log_hazard(double t) const
    {
        if (family == BaselineFamily::weibull)
            return std::log(shape / scale) + (shape - 1.0) * std::log(t / scale);
        return basis->eval(t).dot(coefficients);
    }

    /// Closed-form ∫_0^t h0 for the Weibull family.
    double weibull_cumulative(double t) const { return std::pow(t / scale, shape); }
};

struct SurvivalParams {
    Eigen::VectorXd gamma;
    double zeta = 0.0;
    Eigen::VectorXd alpha;
    BaselineHazard baseline;
};

inline double feature_value(Feature f, const Trajectory& traj, double t)
{
    switch (f) {
    case Feature::value: return traj.value(t);
    case Feature::slope: return traj.slope(t);
    case Feature::area: return traj.area(t);
    case Feature::slope_interaction: return intermediate_indicator(t, traj.rho()) * traj.slope(t);
    }
    return 0.0;
}

/// Association features at t aligned to form.union_features(); features not
/// active in the branch selected by t vs. ρ are zero.
inline Eigen::VectorXd association_features(double t, const AssociationForm& form, const Trajectory& traj)
{
    const auto all = form.union_features();
    const auto& active = intermediate_indicator(t, traj.rho()) ? form.post : form.pre;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(all.size()));
    for (std::size_t k = 0; k < all.size(); ++k)
        if (std::ranges::find(active, all[k]) != active.end())
            out(static_cast<Eigen::Index>(k)) = feature_value(all[k], traj, t);
    return out;
}

/// Hazard of one subject: baseline, covariates, intermediate-event effect and
/// the association with the trajectory, switching branch at ρ.
class SubjectHazard {
public:
    SubjectHazard(const ModelSpec& spec, const SurvivalParams& params, const Trajectory& traj,
                  std::span<const double> w)
        : spec_(&spec), params_(&params), traj_(&traj), features_(spec.association.union_features())
    {
        if (params.gamma.size() != spec.n_gamma())
            throw Error("gamma dimension mismatch");
        if (params.alpha.size() != static_cast<Eigen::Index>(features_.size()))
            throw Error("alpha dimension mismatch");
        for (std::size_t k = 0; k < spec.survival_covariates.size(); ++k)
            linear_ += params.gamma(static_cast<Eigen::Index>(k)) *
                       w[static_cast<std::size_t>(spec.survival_covariates[k])];
        for (std::size_t k = 0; k < features_.size(); ++k) {
            const auto f = features_[k];
            pre_mask_.push_back(std::ranges::find(spec.association.pre, f) != spec.association.pre.end());
            post_mask_.push_back(std::ranges::find(spec.association.post, f) != spec.association.post.end());
        }
        const auto& base = params.baseline;
        if (base.family == BaselineFamily::weibull)
            weibull_log_const_ = std::log(base.shape) - base.shape * std::log(base.scale);
    }

    /// log h0(t) + γᵀw + R(t)ζ + f(t)ᵀα without the baseline term.
    double log_relative_risk(double t) const
    {
        const int r = intermediate_indicator(t, traj_->rho());
        double lp = linear_ + (spec_->intermediate_effect ? r * params_->zeta : 0.0);
        const auto& mask = r ? post_mask_ : pre_mask_;
        for (std::size_t k = 0; k < features_.size(); ++k) {
            const double a = params_->alpha(static_cast<Eigen::Index>(k));
            if (mask[k] && a != 0.0)
                lp += a * feature_value(features_[k], *traj_, t);
        }
        return lp;
    }

    double log_hazard(double t) const
    {
        const auto& base = params_->baseline;
        const double log_h0 = base.family == BaselineFamily::weibull
                                  ? weibull_log_const_ + (base.shape == 1.0 ? 0.0 : (base.shape - 1.0) * std::log(t))
                                  : base.log_hazard(t);
        const double v = log_h0 + log_relative_risk(t);
        if (std::isnan(v) || v == std::numeric_limits<double>::infinity())
            throw Error("non-finite log hazard at t = " + std::to_string(t));
        return v;
    }

    double hazard(double t) const { return std::exp(log_hazard(t)); }

    /// ∫_{t0}^{t1} h(s) ds by adaptive Gauss-Kronrod, always cut at ρ.
    double cumulative(double t0, double t1, const QuadratureConfig& cfg = {}) const
    {
        if (!(t0 >= 0.0) || !(t1 >= t0))
            throw Error("cumulative hazard requires 0 <= t0 <= t1");
        if (t0 == t1)
            return 0.0;
        std::vector<double> cuts;
        if (traj_->rho())
            cuts.push_back(*traj_->rho());
        const auto& base = params_->baseline;
        if (base.family == BaselineFamily::weibull && base.shape < 1.0) {
            // integrate in v = H0(s): removes the singularity of h0 at zero
            for (double& c : cuts)
                c = base.weibull_cumulative(c);
            const double inv = 1.0 / base.shape;
            const auto g = [&](double v) { return std::exp(log_relative_risk(base.scale * std::pow(v, inv))); };
            return integrate(g, base.weibull_cumulative(t0), base.weibull_cumulative(t1), cuts, cfg).value;
        }
        if (base.family == BaselineFamily::bspline) {
            for (double k : base.basis->breakpoints())
                cuts.push_back(k);
        }
        for (const auto& slot : spec_->trajectory.bases)
            if (slot.basis)
                for (double k : slot.basis->breakpoints()) {
                    cuts.push_back(k);
                    if (traj_->rho())
                        cuts.push_back(*traj_->rho() + k);
                }
        return integrate([&](double s) { return hazard(s); }, t0, t1, cuts, cfg).value;
    }

private:
    const ModelSpec* spec_;
    const SurvivalParams* params_;
    const Trajectory* traj_;
    std::vector<Feature> features_;
    std::vector<char> pre_mask_, post_mask_;
    double linear_ = 0.0;
    double weibull_log_const_ = 0.0;
};

inline double log_hazard(double t, const ModelSpec& spec, const SurvivalParams& params, const Trajectory& traj,
                         std::span<const double> w)
{
    return SubjectHazard(spec, params, traj, w).log_hazard(t);
}

inline double cumulative_hazard(double t0, double t1, const ModelSpec& spec, const SurvivalParams& params,
                                const Trajectory& traj, std::span<const double> w, const QuadratureConfig& cfg = {})
{
    return SubjectHazard(spec, params, traj, w).cumulative(t0, t1, cfg);
}

/// δ log h(T) - ∫_0^T h(s) ds.
inline double survival_loglik(const ModelSpec& spec, const SubjectRecord& subject, const LongitudinalParams& lon,
                              const RandomEffects& b, const SurvivalParams& params, const QuadratureConfig& cfg = {})
{
    const Trajectory traj(spec.trajectory, subject.intermediate_time, subject.covariates, lon.beta, b.b);
    const SubjectHazard h(spec, params, traj, subject.covariates);
    double ll = -h.cumulative(0.0, subject.event_time, cfg);
    if (subject.event_indicator == 1)
        ll += h.log_hazard(subject.event_time);
    return ll;
}

} // namespace jmie
