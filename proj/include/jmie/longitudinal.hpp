#pragma once

#include <jmie/core_data.hpp>
#include <jmie/model_spec.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace jmie {

struct LongitudinalParams {
    Eigen::VectorXd beta;
    double sigma = 1.0;
    Eigen::MatrixXd D;
};

struct RandomEffects {
    Eigen::VectorXd b;
};

enum class DesignMode { value, slope, area };

namespace detail {

inline double term_scalar(TermKind kind, DesignMode mode, double s)
{
    switch (kind) {
    case TermKind::intercept:
    case TermKind::covariate:
        return mode == DesignMode::value ? 1.0 : mode == DesignMode::slope ? 0.0 : s;
    case TermKind::time:
        return mode == DesignMode::value ? s : mode == DesignMode::slope ? 1.0 : 0.5 * s * s;
    case TermKind::spline:
        break;
    }
    return 0.0;
}

class SplineCache {
public:
    explicit SplineCache(const TrajectorySpec& spec) : spec_(spec), cache_(spec.bases.size()) {}

    double get(int basis, int component, DesignMode mode, double s)
    {
        auto& c = cache_[static_cast<std::size_t>(basis)];
        if (!c) {
            const auto& b = spec_.bases[static_cast<std::size_t>(basis)].get();
            c = mode == DesignMode::value   ? b.eval(s)
                : mode == DesignMode::slope ? b.derivative(s)
                                            : b.integral(0.0, s);
        }
        return (*c)(component);
    }

private:
    const TrajectorySpec& spec_;
    std::vector<std::optional<Eigen::VectorXd>> cache_;
};

inline void fill_terms(const std::vector<Term>& terms, DesignMode mode, double s, double factor,
                       std::span<const double> w, SplineCache& cache, double* out)
{
    for (std::size_t k = 0; k < terms.size(); ++k) {
        const auto& t = terms[k];
        if (factor == 0.0) {
            out[k] = 0.0;
            continue;
        }
        double v = t.kind == TermKind::spline ? cache.get(t.basis, t.component, mode, s)
                                              : term_scalar(t.kind, mode, s);
        if (t.covariate >= 0)
            v *= w[static_cast<std::size_t>(t.covariate)];
        out[k] = factor * v;
    }
}

} // namespace detail

/// Fixed (x) and random (z) design vectors of the trajectory, its slope, or
/// its integral from 0, at time t.
inline void design_row(const TrajectorySpec& spec, DesignMode mode, double t, std::optional<double> rho,
                       std::span<const double> w, Eigen::Ref<Eigen::VectorXd> x, Eigen::Ref<Eigen::VectorXd> z)
{
    if (x.size() != spec.n_beta() || z.size() != spec.n_random())
        throw Error("design dimension mismatch");
    const double r = intermediate_indicator(t, rho);
    const double tp = time_since_intermediate(t, rho);
    detail::SplineCache pre_cache(spec), post_cache(spec);
    const auto nf = spec.fixed.size();
    const auto nr = spec.random.size();
    detail::fill_terms(spec.fixed, mode, t, 1.0, w, pre_cache, x.data());
    detail::fill_terms(spec.post_fixed, mode, tp, r, w, post_cache, x.data() + nf);
    detail::fill_terms(spec.random, mode, t, 1.0, w, pre_cache, z.data());
    detail::fill_terms(spec.post_random, mode, tp, r, w, post_cache, z.data() + nr);
}

inline void check_dimensions(const TrajectorySpec& spec, const LongitudinalParams& params, const RandomEffects& b)
{
    if (params.beta.size() != spec.n_beta())
        throw Error("beta has " + std::to_string(params.beta.size()) + " coefficients, model expects " +
                    std::to_string(spec.n_beta()));
    if (b.b.size() != spec.n_random())
        throw Error("random effects have length " + std::to_string(b.b.size()) + ", model expects " +
                    std::to_string(spec.n_random()));
}

/// Trajectory of one subject under fixed parameters and random effects.
/// Fixed and random coefficients of identical terms are merged at
/// construction, so evaluation costs one pass per branch.
class Trajectory {
public:
    Trajectory(const TrajectorySpec& spec, std::optional<double> rho, std::span<const double> w,
               const Eigen::VectorXd& beta, const Eigen::VectorXd& b)
        : spec_(&spec), rho_(rho)
    {
        if (beta.size() != spec.n_beta() || b.size() != spec.n_random())
            throw Error("trajectory coefficient dimension mismatch");
        const auto nf = static_cast<Eigen::Index>(spec.fixed.size());
        const auto nr = static_cast<Eigen::Index>(spec.random.size());
        add(pre_, spec.fixed, beta.data(), w);
        add(pre_, spec.random, b.data(), w);
        add(post_, spec.post_fixed, beta.data() + nf, w);
        add(post_, spec.post_random, b.data() + nr, w);
    }

    double eval(DesignMode mode, double t) const
    {
        double v = branch(pre_, mode, t);
        if (intermediate_indicator(t, rho_))
            v += branch(post_, mode, time_since_intermediate(t, rho_));
        return v;
    }

    double value(double t) const { return eval(DesignMode::value, t); }
    double slope(double t) const { return eval(DesignMode::slope, t); }
    double area(double t) const { return eval(DesignMode::area, t); }

    std::optional<double> rho() const { return rho_; }

private:
    // constant + linear time part and one coefficient vector per spline basis
    struct Branch {
        double c0 = 0.0, c1 = 0.0;
        std::vector<std::pair<int, Eigen::VectorXd>> spline;
    };

    void add(Branch& br, const std::vector<Term>& terms, const double* coef, std::span<const double> w)
    {
        for (std::size_t k = 0; k < terms.size(); ++k) {
            const auto& t = terms[k];
            double c = coef[k];
            if (t.covariate >= 0)
                c *= w[static_cast<std::size_t>(t.covariate)];
            switch (t.kind) {
            case TermKind::intercept:
            case TermKind::covariate: br.c0 += c; break;
            case TermKind::time: br.c1 += c; break;
            case TermKind::spline: {
                auto it = std::ranges::find_if(br.spline, [&](const auto& e) { return e.first == t.basis; });
                if (it == br.spline.end()) {
                    const auto n = spec_->bases[static_cast<std::size_t>(t.basis)].get().size();
                    br.spline.emplace_back(t.basis, Eigen::VectorXd::Zero(n));
                    it = br.spline.end() - 1;
                }
                it->second(t.component) += c;
                break;
            }
            }
        }
    }

    double branch(const Branch& br, DesignMode mode, double s) const
    {
        double v = mode == DesignMode::value   ? br.c0 + br.c1 * s
                   : mode == DesignMode::slope ? br.c1
                                               : br.c0 * s + 0.5 * br.c1 * s * s;
        for (const auto& [basis, c] : br.spline) {
            const auto& b = spec_->bases[static_cast<std::size_t>(basis)].get();
            v += c.dot(mode == DesignMode::value   ? b.eval(s)
                       : mode == DesignMode::slope ? b.derivative(s)
                                                   : b.integral(0.0, s));
        }
        return v;
    }

    const TrajectorySpec* spec_;
    std::optional<double> rho_;
    Branch pre_, post_;
};

inline double eta(const TrajectorySpec& spec, double t, std::optional<double> rho, std::span<const double> w,
                  const LongitudinalParams& params, const RandomEffects& b)
{
    check_dimensions(spec, params, b);
    return Trajectory(spec, rho, w, params.beta, b.b).value(t);
}

/// dη/dt; at t = ρ the right limit (post-event slope).
inline double eta_slope(const TrajectorySpec& spec, double t, std::optional<double> rho, std::span<const double> w,
                        const LongitudinalParams& params, const RandomEffects& b)
{
    check_dimensions(spec, params, b);
    return Trajectory(spec, rho, w, params.beta, b.b).slope(t);
}

/// ∫_0^t η(s) ds.
inline double eta_area(const TrajectorySpec& spec, double t, std::optional<double> rho, std::span<const double> w,
                       const LongitudinalParams& params, const RandomEffects& b)
{
    check_dimensions(spec, params, b);
    return Trajectory(spec, rho, w, params.beta, b.b).area(t);
}

/// Σ_j log N(y_j | η(t_j), σ²) over the subject's measurements.
inline double longitudinal_loglik(const TrajectorySpec& spec, const SubjectRecord& subject,
                                  const LongitudinalParams& params, const RandomEffects& b)
{
    if (!(params.sigma > 0.0))
        throw Error("residual standard deviation must be positive");
    check_dimensions(spec, params, b);
    const Trajectory traj(spec, subject.intermediate_time, subject.covariates, params.beta, b.b);
    const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi) - std::log(params.sigma);
    double ll = 0.0;
    for (const auto& m : subject.measurements) {
        const double r = (m.value - traj.value(m.time)) / params.sigma;
        ll += log_norm - 0.5 * r * r;
    }
    return ll;
}

/// Stacked design matrices of a subject's measurements.
struct SubjectDesign {
    Eigen::MatrixXd X;
    Eigen::MatrixXd Z;
    Eigen::VectorXd y;
};

inline SubjectDesign subject_design(const TrajectorySpec& spec, const SubjectRecord& s)
{
    const auto n = static_cast<Eigen::Index>(s.measurements.size());
    SubjectDesign d{Eigen::MatrixXd(n, spec.n_beta()), Eigen::MatrixXd(n, spec.n_random()), Eigen::VectorXd(n)};
    Eigen::VectorXd x(spec.n_beta()), z(spec.n_random());
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& m = s.measurements[static_cast<std::size_t>(j)];
        design_row(spec, DesignMode::value, m.time, s.intermediate_time, s.covariates, x, z);
        d.X.row(j) = x.transpose();
        d.Z.row(j) = z.transpose();
        d.y(j) = m.value;
    }
    return d;
}

} // namespace jmie
