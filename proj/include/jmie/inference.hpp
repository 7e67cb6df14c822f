#pragma once

#include <jmie/core_data.hpp>
#include <jmie/diagnostics.hpp>
#include <jmie/fitted_model.hpp>
#include <jmie/longitudinal.hpp>
#include <jmie/model_spec.hpp>
#include <jmie/random.hpp>
#include <jmie/survival.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace jmie {

/// Copy of `data` with covariate columns reordered to `names`.
inline Dataset align_covariates(const Dataset& data, const std::vector<std::string>& names)
{
    std::vector<int> idx;
    for (const auto& n : names) {
        auto it = std::ranges::find(data.covariate_names, n);
        if (it == data.covariate_names.end())
            throw DataError("dataset lacks covariate '" + n + "'");
        idx.push_back(static_cast<int>(it - data.covariate_names.begin()));
    }
    Dataset out;
    out.covariate_names = names;
    out.subjects.reserve(data.size());
    for (const auto& s : data.subjects) {
        auto c = s;
        c.covariates.clear();
        for (int k : idx)
            c.covariates.push_back(s.covariates.at(static_cast<std::size_t>(k)));
        out.subjects.push_back(std::move(c));
    }
    return out;
}

/// Adaptive random-walk proposal: Robbins-Monro scaling toward a target
/// acceptance rate and, once enough samples are seen, the empirical
/// covariance of the chain (Haario et al.).
class AdaptiveProposal {
public:
    AdaptiveProposal() = default;

    explicit AdaptiveProposal(const Eigen::MatrixXd& cov)
        : dim_(cov.rows()), mean_(Eigen::VectorXd::Zero(dim_)), m2_(Eigen::MatrixXd::Zero(dim_, dim_))
    {
        set_covariance(cov);
    }

    Eigen::VectorXd propose(const Eigen::VectorXd& x, Rng& rng) const
    {
        return x + std::exp(log_scale_) * (chol_ * std_normal(rng, dim_));
    }

    /// Record the outcome of one step; adaptation stops when `adapting` is false.
    void update(const Eigen::VectorXd& x, bool accepted, bool adapting, double target)
    {
        ++steps_;
        accepted_ += accepted ? 1 : 0;
        if (!adapting)
            return;
        ++adapt_steps_;
        log_scale_ += ((accepted ? 1.0 : 0.0) - target) / std::pow(static_cast<double>(adapt_steps_) + 1.0, 0.6);
        log_scale_ = std::clamp(log_scale_, -12.0, 6.0);
        ++n_;
        const Eigen::VectorXd delta = x - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += delta * (x - mean_).transpose();
        if (n_ >= 20 * dim_ + 50 && n_ % 50 == 0) {
            const Eigen::MatrixXd emp = m2_ / static_cast<double>(n_ - 1);
            Eigen::MatrixXd cov = (2.38 * 2.38 / static_cast<double>(dim_)) * emp;
            cov.diagonal().array() += 1e-10 * (1.0 + emp.diagonal().array().abs());
            Eigen::LLT<Eigen::MatrixXd> llt(cov);
            if (llt.info() == Eigen::Success) {
                chol_ = llt.matrixL();
                if (!learned_) {
                    learned_ = true;
                    log_scale_ = 0.0;
                }
            }
        }
    }

    void restart_counts()
    {
        steps_ = 0;
        accepted_ = 0;
    }

    double acceptance_rate() const
    {
        return steps_ == 0 ? std::numeric_limits<double>::quiet_NaN()
                           : static_cast<double>(accepted_) / static_cast<double>(steps_);
    }

    Eigen::Index dim() const { return dim_; }

private:
    void set_covariance(const Eigen::MatrixXd& cov)
    {
        Eigen::LLT<Eigen::MatrixXd> llt((2.38 * 2.38 / static_cast<double>(std::max<Eigen::Index>(dim_, 1))) * cov);
        if (llt.info() != Eigen::Success)
            throw Error("proposal covariance is not positive definite");
        chol_ = llt.matrixL();
    }

    Eigen::Index dim_ = 0;
    Eigen::MatrixXd chol_;
    double log_scale_ = 0.0;
    long steps_ = 0, accepted_ = 0, adapt_steps_ = 0, n_ = 0;
    Eigen::VectorXd mean_;
    Eigen::MatrixXd m2_;
    bool learned_ = false;
};

/// Correlation Cholesky factor from unconstrained values via canonical
/// partial correlations z = tanh(u). Adds log|Jacobian| to *log_jac.
inline Eigen::MatrixXd corr_cholesky(const Eigen::VectorXd& u, int q, double* log_jac = nullptr)
{
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(q, q);
    if (q == 0)
        return L;
    L(0, 0) = 1.0;
    double lj = 0.0;
    int k = 0;
    for (int i = 1; i < q; ++i) {
        double sum = 0.0;
        for (int j = 0; j < i; ++j) {
            const double z = std::tanh(u(k++));
            lj += std::log1p(-z * z);
            lj += 0.5 * std::log1p(-sum);
            L(i, j) = z * std::sqrt(1.0 - sum);
            sum += L(i, j) * L(i, j);
        }
        L(i, i) = std::sqrt(std::max(0.0, 1.0 - sum));
    }
    if (log_jac)
        *log_jac += lj;
    return L;
}

/// Inverse of corr_cholesky.
inline Eigen::VectorXd corr_cholesky_unconstrain(const Eigen::MatrixXd& L)
{
    const auto q = static_cast<int>(L.rows());
    Eigen::VectorXd u(q * (q - 1) / 2);
    int k = 0;
    for (int i = 1; i < q; ++i) {
        double sum = 0.0;
        for (int j = 0; j < i; ++j) {
            const double z = std::clamp(L(i, j) / std::sqrt(std::max(1e-300, 1.0 - sum)), -0.999999, 0.999999);
            u(k++) = std::atanh(z);
            sum += L(i, j) * L(i, j);
        }
    }
    return u;
}

/// log LKJ(η) density of a correlation matrix, in terms of its Cholesky factor.
inline double lkj_log_density(const Eigen::MatrixXd& L, double eta)
{
    const auto K = L.rows();
    double lp = 0.0;
    for (Eigen::Index i = 1; i < K; ++i)
        lp += (static_cast<double>(K - i) + 2.0 * eta - 3.0) * std::log(L(i, i));
    return lp;
}

namespace detail {

struct SubjectData {
    SubjectRecord rec; // covariates aligned to the spec; survival uses every field
    Eigen::MatrixXd X, Z;
    Eigen::VectorXd y;
    Eigen::MatrixXd XtX, ZtZ, XtZ;
    Eigen::VectorXd Xty, Zty;
    // leading random-effect components that enter the likelihood; post-event
    // components of a subject without the intermediate event are integrated out
    int k_active = 0;
};

/// Priors on their absolute scale.
struct ResolvedPriors {
    Eigen::VectorXd beta_sd;
    double sigma_scale = 1.0;
    Eigen::VectorXd D_scale;
    Eigen::VectorXd gamma_sd;
    Eigen::VectorXd alpha_sd;
};

/// Positions of the survival block inside the flat vector φ.
struct SurvivalLayout {
    int n_gamma = 0, zeta = -1, alpha = 0, n_alpha = 0, baseline = 0, n_baseline = 0, size = 0;
};

struct FitContext {
    ModelSpec spec;
    Priors priors;
    McmcConfig cfg;
    QuadratureConfig quad;
    ResolvedPriors prior;
    std::vector<SubjectData> subjects;
    SurvivalLayout layout;
    std::shared_ptr<const SplineBasis> basis;
    double t_ref = 1.0;
    int p = 0, q = 0, n_obs = 0;
    std::vector<std::pair<int, int>> shared; // (beta index, random-effect index) with identical terms

    SurvivalParams survival_params(const Eigen::VectorXd& phi) const
    {
        SurvivalParams sp;
        const auto& L = layout;
        if (L.size == 0)
            return sp;
        sp.gamma = phi.segment(0, L.n_gamma);
        sp.zeta = L.zeta >= 0 ? phi(L.zeta) : 0.0;
        sp.alpha = phi.segment(L.alpha, L.n_alpha);
        if (spec.baseline.family == BaselineFamily::weibull) {
            const double log_xi = phi(L.baseline);
            const double c = phi(L.baseline + 1);
            const double xi = std::exp(std::clamp(log_xi, -20.0, 20.0));
            const double log_lambda = ((xi - 1.0) * std::log(t_ref) - c) / xi;
            sp.baseline.family = BaselineFamily::weibull;
            sp.baseline.shape = xi;
            sp.baseline.scale = std::exp(std::clamp(log_lambda, -700.0, 700.0));
        } else {
            sp.baseline.family = BaselineFamily::bspline;
            sp.baseline.basis = basis;
            sp.baseline.coefficients = phi.segment(L.baseline, L.n_baseline);
        }
        return sp;
    }

    double rw2_penalty(const Eigen::VectorXd& phi) const
    {
        const auto k = phi.segment(layout.baseline, layout.n_baseline);
        double s = 0.0;
        for (Eigen::Index i = 2; i < k.size(); ++i) {
            const double d = k(i) - 2.0 * k(i - 1) + k(i - 2);
            s += d * d;
        }
        return s;
    }

    double log_prior_phi(const Eigen::VectorXd& phi, double smoothness) const
    {
        const auto& L = layout;
        double lp = 0.0;
        for (int k = 0; k < L.n_gamma; ++k)
            lp += log_normal_kernel(phi(k), 0.0, prior.gamma_sd(k));
        if (L.zeta >= 0)
            lp += log_normal_kernel(phi(L.zeta), 0.0, priors.zeta_sd);
        for (int k = 0; k < L.n_alpha; ++k)
            lp += log_normal_kernel(phi(L.alpha + k), 0.0, prior.alpha_sd(k));
        if (spec.baseline.family == BaselineFamily::weibull) {
            lp += log_normal_kernel(phi(L.baseline), 0.0, priors.log_shape_sd);
            lp += log_normal_kernel(phi(L.baseline + 1), 0.0, priors.log_rate_sd);
        } else {
            for (int k = 0; k < L.n_baseline; ++k)
                lp += log_normal_kernel(phi(L.baseline + k), 0.0, priors.spline_coef_sd);
            lp -= 0.5 * smoothness * rw2_penalty(phi);
        }
        return lp;
    }

    /// Survival log-likelihood of one subject; -inf when the hazard or the
    /// quadrature is not finite.
    double subject_survival(const SubjectData& s, const Eigen::VectorXd& beta, const Eigen::VectorXd& b,
                            const SurvivalParams& sp) const
    {
        if (!spec.survival_enabled || !cfg.use_likelihood)
            return 0.0;
        try {
            const Trajectory traj(spec.trajectory, s.rec.intermediate_time, s.rec.covariates, beta, b);
            const SubjectHazard h(spec, sp, traj, s.rec.covariates);
            double ll = -h.cumulative(0.0, s.rec.event_time, quad);
            if (s.rec.event_indicator == 1)
                ll += h.log_hazard(s.rec.event_time);
            return std::isnan(ll) ? -std::numeric_limits<double>::infinity() : ll;
        } catch (const Error&) {
            return -std::numeric_limits<double>::infinity();
        }
    }
};

inline double column_sd(const std::vector<double>& v)
{
    if (v.size() < 2)
        return 0.0;
    double m = 0.0;
    for (double x : v)
        m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v)
        s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Marginal log-likelihood pieces for the EM warm start.
struct LmmEstimate {
    Eigen::VectorXd beta;
    double sigma = 1.0;
    Eigen::MatrixXd D;
    std::vector<Eigen::VectorXd> b;
    Eigen::MatrixXd beta_cov;
};

/// Linear mixed model by EM; used only to initialize the chains.
inline LmmEstimate lmm_em(const FitContext& ctx, int iterations = 60)
{
    const int p = ctx.p, q = ctx.q;
    const auto n = ctx.subjects.size();
    LmmEstimate est;
    Eigen::MatrixXd XtX = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd Xty = Eigen::VectorXd::Zero(p);
    double yty = 0.0;
    for (const auto& s : ctx.subjects) {
        XtX += s.XtX;
        Xty += s.Xty;
        yty += s.y.squaredNorm();
    }
    const Eigen::MatrixXd ridge = XtX + 1e-8 * Eigen::MatrixXd::Identity(p, p) * (1.0 + XtX.diagonal().maxCoeff());
    est.beta = ridge.ldlt().solve(Xty);
    double rss = 0.0;
    for (const auto& s : ctx.subjects)
        rss += (s.y - s.X * est.beta).squaredNorm();
    est.sigma = ctx.n_obs > 0 ? std::max(1e-3, std::sqrt(rss / std::max(1, ctx.n_obs))) : 1.0;
    est.D = Eigen::MatrixXd::Identity(q, q) * std::max(1e-2, est.sigma * est.sigma);
    est.b.assign(n, Eigen::VectorXd::Zero(q));
    if (ctx.n_obs == 0) {
        est.beta_cov = Eigen::MatrixXd::Identity(p, p);
        return est;
    }
    std::vector<Eigen::MatrixXd> V(n);
    for (int it = 0; it < iterations; ++it) {
        const Eigen::MatrixXd Dinv = est.D.inverse();
        const double s2 = est.sigma * est.sigma;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& s = ctx.subjects[i];
            const Eigen::MatrixXd Q = s.ZtZ / s2 + Dinv;
            const Eigen::LLT<Eigen::MatrixXd> llt(Q);
            V[i] = llt.solve(Eigen::MatrixXd::Identity(q, q));
            est.b[i] = llt.solve((s.Zty - s.XtZ.transpose() * est.beta) / s2);
        }
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
        for (std::size_t i = 0; i < n; ++i)
            rhs += ctx.subjects[i].Xty - ctx.subjects[i].XtZ * est.b[i];
        est.beta = ridge.ldlt().solve(rhs);
        double ss = 0.0;
        Eigen::MatrixXd Dn = Eigen::MatrixXd::Zero(q, q);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& s = ctx.subjects[i];
            ss += (s.y - s.X * est.beta - s.Z * est.b[i]).squaredNorm() + (s.ZtZ * V[i]).trace();
            Dn += est.b[i] * est.b[i].transpose() + V[i];
        }
        est.sigma = std::max(1e-3, std::sqrt(ss / ctx.n_obs));
        est.D = Dn / static_cast<double>(n);
        // components with no data in any subject keep a usable prior-sized variance
        for (int k = 0; k < q; ++k)
            if (!(est.D(k, k) > 1e-8))
                est.D(k, k) = 1e-2;
        est.D = 0.5 * (est.D + est.D.transpose());
        Eigen::LLT<Eigen::MatrixXd> check(est.D);
        if (check.info() != Eigen::Success)
            est.D.diagonal().array() += 1e-6;
    }
    // GLS covariance of beta at the final (sigma, D)
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
    for (const auto& s : ctx.subjects) {
        const auto m = s.y.size();
        if (m == 0)
            continue;
        const Eigen::MatrixXd Vy =
            s.Z * est.D * s.Z.transpose() + est.sigma * est.sigma * Eigen::MatrixXd::Identity(m, m);
        info += s.X.transpose() * Vy.ldlt().solve(s.X);
    }
    info += (ctx.prior.beta_sd.array().square().inverse()).matrix().asDiagonal();
    est.beta_cov = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    return est;
}

/// Finite-difference Newton ascent with backtracking; returns the mode and
/// the negative Hessian there (when it is positive definite).
struct NewtonResult {
    Eigen::VectorXd x;
    std::optional<Eigen::MatrixXd> neg_hessian;
};

inline NewtonResult newton_maximize(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                    int max_iter = 25)
{
    const auto d = x.size();
    const auto hessian = [&](const Eigen::VectorXd& at, double f0, Eigen::VectorXd& g) {
        Eigen::MatrixXd H(d, d);
        Eigen::VectorXd h(d);
        for (Eigen::Index i = 0; i < d; ++i)
            h(i) = 1e-4 * std::max(1.0, std::abs(at(i)));
        for (Eigen::Index i = 0; i < d; ++i) {
            Eigen::VectorXd xp = at, xm = at;
            xp(i) += h(i);
            xm(i) -= h(i);
            const double fp = f(xp), fm = f(xm);
            g(i) = (fp - fm) / (2 * h(i));
            H(i, i) = (fp - 2 * f0 + fm) / (h(i) * h(i));
        }
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = i + 1; j < d; ++j) {
                Eigen::VectorXd a = at, b = at, c = at, e = at;
                a(i) += h(i), a(j) += h(j);
                b(i) += h(i), b(j) -= h(j);
                c(i) -= h(i), c(j) += h(j);
                e(i) -= h(i), e(j) -= h(j);
                H(i, j) = H(j, i) = (f(a) - f(b) - f(c) + f(e)) / (4 * h(i) * h(j));
            }
        return H;
    };
    double fx = f(x);
    if (!std::isfinite(fx))
        return {x, std::nullopt};
    Eigen::VectorXd g(d);
    for (int it = 0; it < max_iter; ++it) {
        const Eigen::MatrixXd H = hessian(x, fx, g);
        Eigen::VectorXd step;
        const Eigen::LLT<Eigen::MatrixXd> llt(-H);
        if (llt.info() == Eigen::Success)
            step = llt.solve(g);
        else
            step = g / std::max(1.0, g.norm());
        double t = 1.0;
        bool improved = false;
        for (int k = 0; k < 40; ++k, t *= 0.5) {
            const Eigen::VectorXd xn = x + t * step;
            const double fn = f(xn);
            if (std::isfinite(fn) && fn >= fx) {
                improved = fn - fx > 1e-10;
                x = xn;
                fx = fn;
                break;
            }
        }
        if (!improved)
            break;
    }
    const Eigen::MatrixXd H = hessian(x, fx, g);
    const Eigen::LLT<Eigen::MatrixXd> llt(-H);
    if (llt.info() == Eigen::Success)
        return {x, Eigen::MatrixXd(-H)};
    return {x, std::nullopt};
}

struct ChainState {
    Eigen::VectorXd beta;
    double sigma = 1.0;
    Eigen::VectorXd log_scale; // D = diag(s) L Lᵀ diag(s)
    Eigen::VectorXd corr_u;
    Eigen::MatrixXd b; // subjects × q
    Eigen::VectorXd surv; // cached survival log-likelihood per subject
    Eigen::VectorXd phi;
    double smoothness = 1.0;
};

struct ChainOutput {
    std::vector<ThetaDraw> draws;
    Eigen::MatrixXd b_sum, b_sumsq;
    long saved = 0;
    std::map<std::string, double> acceptance;
};

class Chain {
public:
    Chain(const FitContext& ctx, ChainState init, Rng rng, const Eigen::MatrixXd& phi_cov, const Eigen::MatrixXd& d_cov)
        : ctx_(ctx), s_(std::move(init)), rng_(std::move(rng))
    {
        if (ctx.layout.size > 0)
            surv_prop_ = AdaptiveProposal(phi_cov);
        if (d_cov.rows() > 0) {
            d_prop_ = AdaptiveProposal(d_cov);
            nc_prop_ = AdaptiveProposal(d_cov);
        }
        q_pre_ = static_cast<int>(ctx_.spec.trajectory.random.size());
        refresh_D();
        const auto n = ctx_.subjects.size();
        b_rw_log_scale_ = 0.0;
        sp_ = ctx_.survival_params(s_.phi);
        s_.surv = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n && likelihood(); ++i) {
            s_.surv(static_cast<Eigen::Index>(i)) = ctx_.subject_survival(ctx_.subjects[i], s_.beta, row(i), sp_);
            if (!std::isfinite(s_.surv(static_cast<Eigen::Index>(i))))
                throw Error("non-finite posterior at initialization (subject '" + ctx_.subjects[i].rec.id + "')");
        }
    }

    ChainOutput run(int chain_index)
    {
        const auto& cfg = ctx_.cfg;
        ChainOutput out;
        const auto n = static_cast<Eigen::Index>(ctx_.subjects.size());
        out.b_sum = Eigen::MatrixXd::Zero(n, ctx_.q);
        out.b_sumsq = Eigen::MatrixXd::Zero(n, ctx_.q);
        for (int it = 0; it < cfg.iterations; ++it) {
            adapting_ = it < cfg.adaptation_end();
            if (it == cfg.burn_in)
                reset_counters();
            step_random_effects();
            step_beta();
            step_shift();
            step_sigma();
            step_D_conjugate();
            for (int k = 0; k < cfg.covariance_steps; ++k)
                step_D();
            for (int k = 0; k < cfg.noncentred_steps; ++k)
                step_D_noncentred();
            for (int k = 0; k < cfg.survival_steps; ++k)
                step_survival();
            step_smoothness();
            if (it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0) {
                ThetaDraw d;
                d.beta = s_.beta;
                d.sigma = s_.sigma;
                d.D = D_;
                d.surv = sp_;
                d.smoothness = s_.smoothness;
                d.chain = chain_index;
                out.draws.push_back(std::move(d));
                if (likelihood()) {
                    const Eigen::MatrixXd b = completed_effects();
                    out.b_sum += b;
                    out.b_sumsq += b.cwiseProduct(b);
                }
                ++out.saved;
            }
        }
        const auto rate = [](long a, long t) {
            return t == 0 ? std::numeric_limits<double>::quiet_NaN() : static_cast<double>(a) / static_cast<double>(t);
        };
        if (ctx_.q > 0 && n > 0 && ctx_.cfg.use_likelihood) {
            out.acceptance["random_effects_independence"] = rate(acc_b_ind_, n_b_ind_);
            out.acceptance["random_effects_walk"] = rate(acc_b_rw_, n_b_rw_);
        }
        out.acceptance["beta"] = rate(acc_beta_, n_beta_);
        out.acceptance["sigma"] = rate(acc_sigma_, n_sigma_);
        if (ctx_.q > 0)
            out.acceptance["D"] = d_prop_.acceptance_rate();
        if (ctx_.q > 0 && n > 0 && ctx_.cfg.use_likelihood) {
            out.acceptance["D_noncentred"] = nc_prop_.acceptance_rate();
            out.acceptance["D_conjugate"] = rate(acc_d_conj_, n_d_conj_);
        }
        if (ctx_.layout.size > 0)
            out.acceptance["survival"] = surv_prop_.acceptance_rate();
        return out;
    }

private:
    Eigen::VectorXd row(std::size_t i) const { return s_.b.row(static_cast<Eigen::Index>(i)).transpose(); }

    void reset_counters()
    {
        acc_d_conj_ = n_d_conj_ = 0;
        acc_b_ind_ = n_b_ind_ = acc_b_rw_ = n_b_rw_ = acc_beta_ = n_beta_ = acc_sigma_ = n_sigma_ = 0;
        surv_prop_.restart_counts();
        d_prop_.restart_counts();
        nc_prop_.restart_counts();
    }

    bool likelihood() const { return ctx_.cfg.use_likelihood; }

    bool survival_active() const { return ctx_.spec.survival_enabled && likelihood(); }

    void refresh_D()
    {
        const int q = ctx_.q;
        if (q == 0) {
            D_ = Eigen::MatrixXd(0, 0);
            Dinv_ = D_;
            return;
        }
        C_ = cholesky_factor(s_.log_scale, s_.corr_u);
        D_ = C_ * C_.transpose();
        Dinv_ = D_.llt().solve(Eigen::MatrixXd::Identity(q, q));
        const Eigen::MatrixXd Dpp = D_.topLeftCorner(q_pre_, q_pre_);
        Dinv_pre_ = Dpp.llt().solve(Eigen::MatrixXd::Identity(q_pre_, q_pre_));
    }

    Eigen::MatrixXd cholesky_factor(const Eigen::VectorXd& log_scale, const Eigen::VectorXd& corr_u) const
    {
        return log_scale.array().exp().matrix().asDiagonal() * corr_cholesky(corr_u, ctx_.q);
    }

    const Eigen::MatrixXd& dinv(int k) const { return k == ctx_.q ? Dinv_ : Dinv_pre_; }

    /// Random effects with the integrated-out components filled in by a draw
    /// from their conditional prior, for the per-subject summaries.
    Eigen::MatrixXd completed_effects()
    {
        Eigen::MatrixXd b = s_.b;
        const int q = ctx_.q, m = q - q_pre_;
        if (m == 0)
            return b;
        const Eigen::MatrixXd A = D_.bottomLeftCorner(m, q_pre_) * Dinv_pre_;
        const Eigen::MatrixXd V = D_.bottomRightCorner(m, m) - A * D_.topRightCorner(q_pre_, m);
        const Eigen::LLT<Eigen::MatrixXd> llt(V);
        const Eigen::MatrixXd L = llt.info() == Eigen::Success ? Eigen::MatrixXd(llt.matrixL())
                                                               : Eigen::MatrixXd::Zero(m, m);
        for (std::size_t i = 0; i < ctx_.subjects.size(); ++i)
            if (ctx_.subjects[i].k_active < q) {
                const auto ii = static_cast<Eigen::Index>(i);
                const Eigen::VectorXd mean = A * b.row(ii).head(q_pre_).transpose();
                b.row(ii).tail(m) = mvnormal(rng_, mean, L).transpose();
            }
        return b;
    }

    double sum_survival() const { return s_.surv.sum(); }

    /// b_i: an independence draw from the longitudinal-prior conditional,
    /// then a scaled random walk with the same shape; both corrected by the
    /// survival likelihood.
    void step_random_effects()
    {
        const int q = ctx_.q;
        if (q == 0 || !likelihood())
            return;
        const double s2 = s_.sigma * s_.sigma;
        for (std::size_t i = 0; i < ctx_.subjects.size(); ++i) {
            const auto& sd = ctx_.subjects[i];
            const auto ii = static_cast<Eigen::Index>(i);
            const int k = sd.k_active;
            if (k == 0)
                continue;
            const Eigen::MatrixXd Q = sd.ZtZ.topLeftCorner(k, k) / s2 + dinv(k);
            const Eigen::VectorXd r = (sd.Zty - sd.XtZ.transpose() * s_.beta).head(k) / s2;
            const Eigen::LLT<Eigen::MatrixXd> llt(Q);
            const Eigen::VectorXd mean = llt.solve(r);
            const auto draw_offset = [&](double scale) {
                Eigen::VectorXd z = std_normal(rng_, k);
                llt.matrixU().solveInPlace(z);
                return Eigen::VectorXd(scale * z);
            };
            if (!survival_active()) {
                s_.b.row(ii).head(k) = (mean + draw_offset(1.0)).transpose();
                continue;
            }
            {
                Eigen::VectorXd prop = row(i);
                prop.head(k) = mean + draw_offset(1.0);
                const double sv = ctx_.subject_survival(sd, s_.beta, prop, sp_);
                ++n_b_ind_;
                if (accept_log(rng_, sv - s_.surv(ii))) {
                    s_.b.row(ii) = prop.transpose();
                    s_.surv(ii) = sv;
                    ++acc_b_ind_;
                }
            }
            {
                const Eigen::VectorXd b0 = row(i);
                Eigen::VectorXd prop = b0;
                prop.head(k) += draw_offset(std::exp(b_rw_log_scale_));
                const auto lq = [&](const Eigen::VectorXd& b) {
                    return -0.5 * b.head(k).dot(Q * b.head(k)) + b.head(k).dot(r);
                };
                const double sv = ctx_.subject_survival(sd, s_.beta, prop, sp_);
                const bool ok = accept_log(rng_, lq(prop) - lq(b0) + sv - s_.surv(ii));
                ++n_b_rw_;
                if (ok) {
                    s_.b.row(ii) = prop.transpose();
                    s_.surv(ii) = sv;
                    ++acc_b_rw_;
                }
                if (adapting_)
                    b_rw_log_scale_ = std::clamp(
                        b_rw_log_scale_ + ((ok ? 1.0 : 0.0) - ctx_.cfg.target_accept) /
                                              std::pow(static_cast<double>(++b_rw_updates_) / 50.0 + 1.0, 0.6) /
                                              50.0,
                        -8.0, 3.0);
            }
        }
    }

    /// β: independence draw from its longitudinal Gaussian conditional,
    /// accepted by the survival likelihood ratio.
    void step_beta()
    {
        const int p = ctx_.p;
        const double s2 = s_.sigma * s_.sigma;
        Eigen::MatrixXd Q = ctx_.prior.beta_sd.array().square().inverse().matrix().asDiagonal();
        Eigen::VectorXd r = Eigen::VectorXd::Zero(p);
        if (likelihood())
            for (std::size_t i = 0; i < ctx_.subjects.size(); ++i) {
                const auto& sd = ctx_.subjects[i];
                Q += sd.XtX / s2;
                r += (sd.Xty - sd.XtZ * row(i)) / s2;
            }
        const Eigen::VectorXd prop = draw_from_precision(rng_, Q, r);
        ++n_beta_;
        if (!survival_active()) {
            s_.beta = prop;
            ++acc_beta_;
            return;
        }
        Eigen::VectorXd sv(s_.surv.size());
        for (std::size_t i = 0; i < ctx_.subjects.size(); ++i)
            sv(static_cast<Eigen::Index>(i)) = ctx_.subject_survival(ctx_.subjects[i], prop, row(i), sp_);
        if (accept_log(rng_, sv.sum() - sum_survival())) {
            s_.beta = prop;
            s_.surv = sv;
            ++acc_beta_;
        }
    }

    /// Exact Gibbs draw of δ for β_k + δ, b_ik - δ over columns shared by
    /// the fixed and random parts; the likelihood is unchanged by the move.
    void step_shift()
    {
        const auto m = static_cast<Eigen::Index>(ctx_.shared.size());
        const auto n = s_.b.rows();
        if (m == 0 || n == 0 || !likelihood())
            return;
        Eigen::MatrixXd P = Eigen::MatrixXd::Zero(ctx_.q, m);
        for (Eigen::Index k = 0; k < m; ++k)
            P(ctx_.shared[static_cast<std::size_t>(k)].second, k) = 1.0;
        Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(m, m);
        Eigen::VectorXd r = Eigen::VectorXd::Zero(m);
        for (const int k : {q_pre_, ctx_.q}) {
            Eigen::VectorXd sum = Eigen::VectorXd::Zero(k);
            double count = 0.0;
            for (std::size_t i = 0; i < ctx_.subjects.size(); ++i)
                if (ctx_.subjects[i].k_active == k) {
                    sum += s_.b.row(static_cast<Eigen::Index>(i)).head(k).transpose();
                    count += 1.0;
                }
            if (count > 0.0) {
                const Eigen::MatrixXd Pk = P.topRows(k);
                const Eigen::MatrixXd PtDinv = Pk.transpose() * dinv(k);
                Q += count * PtDinv * Pk;
                r += PtDinv * sum;
            }
            if (q_pre_ == ctx_.q)
                break;
        }
        for (Eigen::Index k = 0; k < m; ++k) {
            const int bk = ctx_.shared[static_cast<std::size_t>(k)].first;
            const double prec = 1.0 / std::pow(ctx_.prior.beta_sd(bk), 2);
            Q(k, k) += prec;
            r(k) -= prec * s_.beta(bk);
        }
        const Eigen::VectorXd delta = draw_from_precision(rng_, Q, r);
        for (Eigen::Index k = 0; k < m; ++k) {
            const auto [bk, rk] = ctx_.shared[static_cast<std::size_t>(k)];
            s_.beta(bk) += delta(k);
            for (std::size_t i = 0; i < ctx_.subjects.size(); ++i)
                if (rk < ctx_.subjects[i].k_active)
                    s_.b(static_cast<Eigen::Index>(i), rk) -= delta(k);
        }
    }

    double residual_ss() const
    {
        double ss = 0.0;
        for (std::size_t i = 0; i < ctx_.subjects.size(); ++i) {
            const auto& sd = ctx_.subjects[i];
            if (sd.y.size() == 0)
                continue;
            ss += (sd.y - sd.X * s_.beta - sd.Z * row(i)).squaredNorm();
        }
        return ss;
    }

    /// σ: inverse-gamma independence proposal (exact under p(σ) ∝ 1/σ)
    /// corrected to the half-t prior, followed by a log-scale random walk.
    void step_sigma()
    {
        const double scale = ctx_.prior.sigma_scale, df = ctx_.priors.sigma_df;
        const double N = likelihood() ? ctx_.n_obs : 0;
        const double ss = likelihood() ? residual_ss() : 0.0;
        const auto log_target = [&](double sig) {
            return -N * std::log(sig) - 0.5 * ss / (sig * sig) + log_half_t(sig, df, scale) + std::log(sig);
        };
        if (N > 0) {
            std::gamma_distribution<double> g(0.5 * N, 1.0);
            const double s2 = 0.5 * ss / g(rng_);
            const double prop = std::sqrt(s2);
            const double lr = log_half_t(prop, df, scale) + std::log(prop) - log_half_t(s_.sigma, df, scale) -
                              std::log(s_.sigma);
            ++n_sigma_;
            if (std::isfinite(prop) && prop > 0 && accept_log(rng_, lr)) {
                s_.sigma = prop;
                ++acc_sigma_;
            }
        }
        const double prop = s_.sigma * std::exp(sigma_rw_ * std::normal_distribution<double>()(rng_));
        const bool ok = accept_log(rng_, log_target(prop) - log_target(s_.sigma));
        if (ok)
            s_.sigma = prop;
        if (N == 0) {
            ++n_sigma_;
            acc_sigma_ += ok ? 1 : 0;
        }
        if (adapting_)
            sigma_rw_ = std::clamp(sigma_rw_ * std::exp(((ok ? 1.0 : 0.0) - ctx_.cfg.target_accept) * 0.05), 1e-4, 5.0);
    }

    /// Scatter of the active random effects, split by how many components
    /// each subject carries.
    struct EffectScatter {
        Eigen::MatrixXd full, pre;
        double n_full = 0.0, n_pre = 0.0;
    };

    EffectScatter scatter() const
    {
        const int q = ctx_.q;
        EffectScatter sc{Eigen::MatrixXd::Zero(q, q), Eigen::MatrixXd::Zero(q_pre_, q_pre_)};
        if (!likelihood())
            return sc;
        for (std::size_t i = 0; i < ctx_.subjects.size(); ++i) {
            const Eigen::VectorXd b = row(i);
            if (ctx_.subjects[i].k_active == q) {
                sc.full += b * b.transpose();
                sc.n_full += 1.0;
            } else {
                sc.pre += b.head(q_pre_) * b.head(q_pre_).transpose();
                sc.n_pre += 1.0;
            }
        }
        return sc;
    }

    /// log p(D) on the (log scales, partial correlations) scale plus the
    /// Gaussian density of the random effects.
    double log_target_D(const Eigen::VectorXd& x, const EffectScatter& sc) const
    {
        const int q = ctx_.q;
        const Eigen::VectorXd ls = x.head(q);
        const Eigen::VectorXd u = x.tail(x.size() - q);
        double lj = 0.0;
        const Eigen::MatrixXd L = corr_cholesky(u, q, &lj);
        double lp = lj + lkj_log_density(L, ctx_.priors.lkj_eta);
        for (int k = 0; k < q; ++k) {
            const double s = std::exp(ls(k));
            lp += log_half_t(s, ctx_.priors.D_scale_df, ctx_.prior.D_scale(k)) + ls(k);
        }
        const Eigen::MatrixXd C = ls.array().exp().matrix().asDiagonal() * L;
        const auto gaussian = [&](int k, const Eigen::MatrixXd& S, double n) {
            if (n == 0.0 || k == 0)
                return 0.0;
            double logdet = 0.0;
            for (int j = 0; j < k; ++j)
                logdet += 2.0 * std::log(C(j, j));
            const Eigen::MatrixXd Ck = C.topLeftCorner(k, k);
            const auto tri = Ck.triangularView<Eigen::Lower>();
            const Eigen::MatrixXd A = tri.solve(S);
            const Eigen::MatrixXd B = tri.solve(A.transpose());
            return -0.5 * n * logdet - 0.5 * B.trace();
        };
        lp += gaussian(q, sc.full, sc.n_full) + gaussian(q_pre_, sc.pre, sc.n_pre);
        return std::isfinite(lp) ? lp : -std::numeric_limits<double>::infinity();
    }

    Eigen::VectorXd d_coordinates() const
    {
        Eigen::VectorXd x(ctx_.q + s_.corr_u.size());
        x << s_.log_scale, s_.corr_u;
        return x;
    }

    void set_d_coordinates(const Eigen::VectorXd& x)
    {
        s_.log_scale = x.head(ctx_.q);
        s_.corr_u = x.tail(x.size() - ctx_.q);
        refresh_D();
    }

    /// Random walk on D with the random effects held fixed.
    void step_D()
    {
        if (ctx_.q == 0)
            return;
        const auto sc = scatter();
        const Eigen::VectorXd x = d_coordinates();
        const Eigen::VectorXd prop = d_prop_.propose(x, rng_);
        const bool ok = accept_log(rng_, log_target_D(prop, sc) - log_target_D(x, sc));
        if (ok)
            set_d_coordinates(prop);
        d_prop_.update(d_coordinates(), ok, adapting_, ctx_.cfg.target_accept);
    }

    /// log prior density of D with respect to Lebesgue measure on its
    /// lower triangle: half-t scales, LKJ correlation.
    double log_prior_D(const Eigen::MatrixXd& D) const
    {
        const int q = ctx_.q;
        const Eigen::VectorXd sd = D.diagonal().cwiseSqrt();
        if (!(sd.minCoeff() > 0.0))
            return -std::numeric_limits<double>::infinity();
        const Eigen::MatrixXd R = sd.cwiseInverse().asDiagonal() * D * sd.cwiseInverse().asDiagonal();
        const Eigen::LLT<Eigen::MatrixXd> llt(R);
        if (llt.info() != Eigen::Success)
            return -std::numeric_limits<double>::infinity();
        const double logdet_R = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
        double lp = (ctx_.priors.lkj_eta - 1.0) * logdet_R;
        for (int k = 0; k < q; ++k)
            lp += log_half_t(sd(k), ctx_.priors.D_scale_df, ctx_.prior.D_scale(k)) - q * std::log(sd(k));
        return lp;
    }

    /// D given b, via an independence proposal from the conjugate
    /// (inverse-Wishart) form: D_pp from the pre-event effects of every
    /// subject, then the regression of the post-event effects on them from
    /// subjects with the intermediate event. Corrected to the actual prior.
    void step_D_conjugate()
    {
        const int q = ctx_.q, qp = q_pre_, m = q - q_pre_;
        const auto n = ctx_.subjects.size();
        if (q == 0 || n == 0 || !likelihood())
            return;
        std::vector<Eigen::Index> full;
        for (std::size_t i = 0; i < n; ++i)
            if (ctx_.subjects[i].k_active == q)
                full.push_back(static_cast<Eigen::Index>(i));
        const auto n_all = static_cast<double>(n), n_f = static_cast<double>(full.size());
        if ((qp > 0 && n_all < qp + 2) || (m > 0 && n_f < q + 2))
            return;
        const Eigen::MatrixXd Bpre = s_.b.leftCols(qp);
        const Eigen::MatrixXd S1 = Bpre.transpose() * Bpre;
        Eigen::MatrixXd Xf(static_cast<Eigen::Index>(full.size()), qp), Y(static_cast<Eigen::Index>(full.size()), m);
        for (std::size_t j = 0; j < full.size(); ++j) {
            Xf.row(static_cast<Eigen::Index>(j)) = s_.b.row(full[j]).head(qp);
            Y.row(static_cast<Eigen::Index>(j)) = s_.b.row(full[j]).tail(m);
        }
        const Eigen::MatrixXd G = Xf.transpose() * Xf, XtY = Xf.transpose() * Y, YtY = Y.transpose() * Y;
        Eigen::MatrixXd Bhat = Eigen::MatrixXd::Zero(qp, m);
        Eigen::LLT<Eigen::MatrixXd> g_llt;
        if (qp > 0 && m > 0) {
            g_llt.compute(G);
            if (g_llt.info() != Eigen::Success)
                return;
            Bhat = g_llt.solve(XtY);
        }
        const Eigen::MatrixXd SSE = YtY - XtY.transpose() * Bhat;
        const double nu1 = n_all, nu2 = n_f - qp;
        if ((qp > 0 && S1.llt().info() != Eigen::Success) || (m > 0 && SSE.llt().info() != Eigen::Success))
            return;

        // log target minus log proposal in (D_pp, B, Ω) coordinates
        const auto log_weight = [&](const Eigen::MatrixXd& D) {
            double w = log_prior_D(D);
            if (!std::isfinite(w))
                return w;
            const Eigen::MatrixXd Dpp = D.topLeftCorner(qp, qp);
            if (qp > 0) {
                const Eigen::LLT<Eigen::MatrixXd> l(Dpp);
                const double logdet = 2.0 * Eigen::MatrixXd(l.matrixL()).diagonal().array().log().sum();
                w += m * logdet - 0.5 * n_all * logdet - 0.5 * l.solve(S1).trace();
                w -= log_inverse_wishart_kernel(Dpp, nu1, S1);
            }
            if (m > 0) {
                Eigen::MatrixXd Bt = Eigen::MatrixXd::Zero(qp, m); // Bᵀ
                if (qp > 0)
                    Bt = Dpp.llt().solve(D.topRightCorner(qp, m));
                const Eigen::MatrixXd Omega = D.bottomRightCorner(m, m) - D.bottomLeftCorner(m, qp) * Bt;
                const Eigen::LLT<Eigen::MatrixXd> lo(Omega);
                if (lo.info() != Eigen::Success)
                    return -std::numeric_limits<double>::infinity();
                const double logdet_o = 2.0 * Eigen::MatrixXd(lo.matrixL()).diagonal().array().log().sum();
                const Eigen::MatrixXd resid = YtY - XtY.transpose() * Bt - Bt.transpose() * XtY + Bt.transpose() * G * Bt;
                w += -0.5 * n_f * logdet_o - 0.5 * lo.solve(resid).trace();
                w -= log_inverse_wishart_kernel(Omega, nu2, SSE);
                const Eigen::MatrixXd dB = Bt - Bhat;
                w -= -0.5 * lo.solve(dB.transpose() * G * dB).trace() - 0.5 * qp * logdet_o;
            }
            return w;
        };

        Eigen::MatrixXd Dn(q, q);
        Eigen::MatrixXd Dpp(qp, qp);
        if (qp > 0) {
            Dpp = draw_inverse_wishart(rng_, nu1, S1);
            Dn.topLeftCorner(qp, qp) = Dpp;
        }
        if (m > 0) {
            const Eigen::MatrixXd Omega = draw_inverse_wishart(rng_, nu2, SSE);
            Eigen::MatrixXd Bt = Bhat;
            if (qp > 0) {
                Eigen::MatrixXd Z(qp, m);
                for (Eigen::Index i = 0; i < Z.size(); ++i)
                    Z(i) = std::normal_distribution<double>()(rng_);
                const Eigen::MatrixXd Lo = Omega.llt().matrixL();
                Bt += g_llt.matrixU().solve(Z) * Lo.transpose();
                Dn.topRightCorner(qp, m) = Dpp * Bt;
                Dn.bottomLeftCorner(m, qp) = Dn.topRightCorner(qp, m).transpose();
                Dn.bottomRightCorner(m, m) = Omega + Bt.transpose() * Dpp * Bt;
            } else {
                Dn = Omega;
            }
        }
        const double lr = log_weight(Dn) - log_weight(D_);
        ++n_d_conj_;
        if (!accept_log(rng_, lr))
            return;
        const Eigen::VectorXd sd = Dn.diagonal().cwiseSqrt();
        const Eigen::MatrixXd R = sd.cwiseInverse().asDiagonal() * Dn * sd.cwiseInverse().asDiagonal();
        const Eigen::LLT<Eigen::MatrixXd> lr_llt(R);
        if (lr_llt.info() != Eigen::Success)
            return;
        Eigen::VectorXd x(q + s_.corr_u.size());
        x << sd.array().log().matrix(), corr_cholesky_unconstrain(lr_llt.matrixL());
        set_d_coordinates(x);
        ++acc_d_conj_;
    }

    /// Random walk on D that carries each b_i along with it: the residual of
    /// b_i, standardized under its longitudinal conditional N(m_i(D), Q_i(D)⁻¹),
    /// is held fixed. Where the data pin b_i down this is the centred move;
    /// where they say little it becomes the non-centred one.
    void step_D_noncentred()
    {
        const int q = ctx_.q;
        const auto n = ctx_.subjects.size();
        if (q == 0 || n == 0 || !likelihood())
            return;
        const Eigen::VectorXd x = d_coordinates();
        const Eigen::VectorXd prop = nc_prop_.propose(x, rng_);
        const Eigen::MatrixXd C1 = cholesky_factor(prop.head(q), prop.tail(prop.size() - q));
        double lr = log_target_D(prop, {}) - log_target_D(x, {});
        if (!std::isfinite(lr)) {
            nc_prop_.update(x, false, adapting_, ctx_.cfg.target_accept);
            return;
        }
        const Eigen::MatrixXd D1 = C1 * C1.transpose();
        const double s2 = s_.sigma * s_.sigma;
        // per active dimension: D_k⁻¹ and log|D_k| before and after
        struct Block {
            Eigen::MatrixXd inv0, inv1;
            double logdet0 = 0.0, logdet1 = 0.0;
        };
        std::map<int, Block> blocks;
        const auto block = [&](int k) -> const Block& {
            auto it = blocks.find(k);
            if (it != blocks.end())
                return it->second;
            Block bl;
            bl.inv0 = dinv(k);
            const Eigen::LLT<Eigen::MatrixXd> l1(D1.topLeftCorner(k, k));
            bl.inv1 = l1.solve(Eigen::MatrixXd::Identity(k, k));
            for (int j = 0; j < k; ++j) {
                bl.logdet0 += 2.0 * std::log(C_(j, j));
                bl.logdet1 += 2.0 * std::log(C1(j, j));
            }
            return blocks.emplace(k, std::move(bl)).first->second;
        };
        Eigen::MatrixXd b1 = s_.b;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& sd = ctx_.subjects[i];
            const int k = sd.k_active;
            if (k == 0)
                continue;
            const auto& bl = block(k);
            const auto ii = static_cast<Eigen::Index>(i);
            const Eigen::MatrixXd ZtZ = sd.ZtZ.topLeftCorner(k, k) / s2;
            const Eigen::VectorXd r = (sd.Zty - sd.XtZ.transpose() * s_.beta).head(k) / s2;
            const Eigen::LLT<Eigen::MatrixXd> q0(ZtZ + bl.inv0), q1(ZtZ + bl.inv1);
            const Eigen::VectorXd b0 = row(i).head(k);
            // e = U0 (b0 - m0), b1 = m1 + U1⁻¹ e, with Q = UᵀU
            const Eigen::VectorXd e = q0.matrixU() * (b0 - q0.solve(r));
            const Eigen::VectorXd bn = q1.solve(r) + q1.matrixU().solve(e);
            b1.row(ii).head(k) = bn.transpose();
            double ld0 = 0.0, ld1 = 0.0;
            for (int j = 0; j < k; ++j) {
                ld0 += std::log(q0.matrixLLT()(j, j));
                ld1 += std::log(q1.matrixLLT()(j, j));
            }
            const auto joint = [&](const Eigen::VectorXd& b, const Eigen::MatrixXd& inv, double logdet) {
                return -0.5 * logdet - 0.5 * b.dot(inv * b) - 0.5 * b.dot(ZtZ * b) + b.dot(r);
            };
            lr += joint(bn, bl.inv1, bl.logdet1) - joint(b0, bl.inv0, bl.logdet0) + ld0 - ld1;
        }
        Eigen::VectorXd sv = s_.surv;
        if (survival_active())
            for (std::size_t i = 0; i < n && std::isfinite(lr); ++i) {
                const Eigen::VectorXd bi = b1.row(static_cast<Eigen::Index>(i)).transpose();
                sv(static_cast<Eigen::Index>(i)) = ctx_.subject_survival(ctx_.subjects[i], s_.beta, bi, sp_);
            }
        if (std::isfinite(lr))
            lr += sv.sum() - sum_survival();
        const bool ok = std::isfinite(lr) && accept_log(rng_, lr);
        if (ok) {
            s_.b = std::move(b1);
            s_.surv = sv;
            set_d_coordinates(prop);
        }
        nc_prop_.update(d_coordinates(), ok, adapting_, ctx_.cfg.target_accept);
    }

    void step_survival()
    {
        if (ctx_.layout.size == 0)
            return;
        const Eigen::VectorXd prop = surv_prop_.propose(s_.phi, rng_);
        const SurvivalParams psp = ctx_.survival_params(prop);
        Eigen::VectorXd sv(s_.surv.size());
        bool finite = true;
        if (survival_active())
            for (std::size_t i = 0; i < ctx_.subjects.size() && finite; ++i) {
                sv(static_cast<Eigen::Index>(i)) = ctx_.subject_survival(ctx_.subjects[i], s_.beta, row(i), psp);
                finite = std::isfinite(sv(static_cast<Eigen::Index>(i)));
            }
        else
            sv.setZero();
        bool ok = false;
        if (finite) {
            const double lr = sv.sum() - sum_survival() + ctx_.log_prior_phi(prop, s_.smoothness) -
                              ctx_.log_prior_phi(s_.phi, s_.smoothness);
            ok = accept_log(rng_, lr);
        }
        if (ok) {
            s_.phi = prop;
            s_.surv = sv;
            sp_ = psp;
        }
        surv_prop_.update(s_.phi, ok, adapting_, ctx_.cfg.target_accept);
    }

    /// Conjugate update of the second-order random-walk precision.
    void step_smoothness()
    {
        if (ctx_.layout.size == 0 || ctx_.spec.baseline.family != BaselineFamily::bspline)
            return;
        const double k = static_cast<double>(ctx_.layout.n_baseline);
        const double shape = ctx_.priors.smoothness_shape + 0.5 * (k - 2.0);
        const double rate = ctx_.priors.smoothness_rate + 0.5 * ctx_.rw2_penalty(s_.phi);
        s_.smoothness = std::gamma_distribution<double>(shape, 1.0 / rate)(rng_);
    }

    const FitContext& ctx_;
    ChainState s_;
    Rng rng_;
    SurvivalParams sp_;
    Eigen::MatrixXd D_, Dinv_, Dinv_pre_, C_;
    int q_pre_ = 0;
    AdaptiveProposal surv_prop_, d_prop_, nc_prop_;
    bool adapting_ = true;
    double b_rw_log_scale_ = 0.0;
    long b_rw_updates_ = 0;
    double sigma_rw_ = 0.1;
    long acc_d_conj_ = 0, n_d_conj_ = 0;
    long acc_b_ind_ = 0, n_b_ind_ = 0, acc_b_rw_ = 0, n_b_rw_ = 0, acc_beta_ = 0, n_beta_ = 0, acc_sigma_ = 0,
         n_sigma_ = 0;
};

inline FitContext make_context(const Dataset& raw, const ModelSpec& spec_in, const Priors& priors,
                               const McmcConfig& cfg)
{
    FitContext ctx;
    ctx.priors = priors;
    ctx.cfg = cfg;
    ctx.spec = resolve_spec(spec_in, raw);
    const auto& spec = ctx.spec;
    const Dataset data = align_covariates(raw, spec.covariates);
    ctx.p = spec.trajectory.n_beta();
    ctx.q = spec.trajectory.n_random();
    if (spec.baseline.family == BaselineFamily::bspline)
        ctx.basis = baseline_basis(spec);

    // shared columns: identical terms in the fixed and random parts of the same branch
    const auto& tr = spec.trajectory;
    for (std::size_t k = 0; k < tr.fixed.size(); ++k)
        for (std::size_t r = 0; r < tr.random.size(); ++r)
            if (tr.fixed[k] == tr.random[r])
                ctx.shared.emplace_back(static_cast<int>(k), static_cast<int>(r));
    for (std::size_t k = 0; k < tr.post_fixed.size(); ++k)
        for (std::size_t r = 0; r < tr.post_random.size(); ++r)
            if (tr.post_fixed[k] == tr.post_random[r])
                ctx.shared.emplace_back(static_cast<int>(tr.fixed.size() + k), static_cast<int>(tr.random.size() + r));

    std::vector<double> ys;
    std::vector<std::vector<double>> xcols(static_cast<std::size_t>(ctx.p)), zcols(static_cast<std::size_t>(ctx.q));
    for (const auto& s : data.subjects) {
        SubjectData sd;
        sd.rec = s;
        const auto lon = spec.window == LongitudinalWindow::pre_intermediate ? drop_post_intermediate(s) : s;
        const auto d = subject_design(tr, lon);
        sd.X = d.X;
        sd.Z = d.Z;
        sd.y = d.y;
        sd.XtX = d.X.transpose() * d.X;
        sd.ZtZ = d.Z.transpose() * d.Z;
        sd.XtZ = d.X.transpose() * d.Z;
        sd.Xty = d.X.transpose() * d.y;
        sd.Zty = d.Z.transpose() * d.y;
        sd.k_active = s.intermediate_time ? ctx.q : static_cast<int>(tr.random.size());
        for (Eigen::Index j = 0; j < d.y.size(); ++j) {
            ys.push_back(d.y(j));
            for (int k = 0; k < ctx.p; ++k)
                xcols[static_cast<std::size_t>(k)].push_back(d.X(j, k));
            for (int k = 0; k < ctx.q; ++k)
                zcols[static_cast<std::size_t>(k)].push_back(d.Z(j, k));
        }
        ctx.n_obs += static_cast<int>(d.y.size());
        ctx.subjects.push_back(std::move(sd));
    }

    double sd_y = column_sd(ys);
    double mean_y = 0.0;
    for (double y : ys)
        mean_y += y / static_cast<double>(ys.size());
    if (!(sd_y > 0.0))
        sd_y = 1.0;
    const double level = sd_y + std::abs(mean_y);
    auto& pr = ctx.prior;
    pr.beta_sd.resize(ctx.p);
    for (int k = 0; k < ctx.p; ++k) {
        const double sx = column_sd(xcols[static_cast<std::size_t>(k)]);
        pr.beta_sd(k) = priors.coefficient_scale * (sx > 1e-12 ? sd_y / sx : level);
    }
    pr.sigma_scale = priors.sigma_scale * sd_y;
    pr.D_scale.resize(ctx.q);
    for (int k = 0; k < ctx.q; ++k) {
        const double sz = column_sd(zcols[static_cast<std::size_t>(k)]);
        pr.D_scale(k) = priors.D_scale * (sz > 1e-12 ? sd_y / sz : level);
    }
    pr.gamma_sd.resize(spec.n_gamma());
    for (int k = 0; k < spec.n_gamma(); ++k) {
        std::vector<double> w;
        for (const auto& s : data.subjects)
            w.push_back(s.covariates.at(static_cast<std::size_t>(spec.survival_covariates[static_cast<std::size_t>(k)])));
        const double sw = column_sd(w);
        pr.gamma_sd(k) = priors.coefficient_scale / (sw > 1e-12 ? sw : 1.0);
    }

    auto& L = ctx.layout;
    if (spec.survival_enabled) {
        L.n_gamma = spec.n_gamma();
        int pos = L.n_gamma;
        if (spec.intermediate_effect)
            L.zeta = pos++;
        L.alpha = pos;
        L.n_alpha = spec.association.size();
        pos += L.n_alpha;
        L.baseline = pos;
        L.n_baseline = spec.n_baseline();
        L.size = pos + L.n_baseline;
    }
    std::vector<double> event_times;
    for (const auto& s : data.subjects)
        if (s.event_indicator == 1)
            event_times.push_back(s.event_time);
    if (event_times.empty())
        for (const auto& s : data.subjects)
            event_times.push_back(s.event_time);
    ctx.t_ref = event_times.empty() ? 1.0 : std::max(1e-8, quantile(event_times, 0.5));
    return ctx;
}

/// Standardized prior scales for α from the spread of the association
/// features at the observed times, evaluated at the warm start.
inline void resolve_alpha_priors(FitContext& ctx, const LmmEstimate& est)
{
    const auto feats = ctx.spec.association.union_features();
    ctx.prior.alpha_sd.resize(static_cast<Eigen::Index>(feats.size()));
    for (std::size_t k = 0; k < feats.size(); ++k) {
        std::vector<double> v;
        for (std::size_t i = 0; i < ctx.subjects.size(); ++i) {
            const auto& s = ctx.subjects[i].rec;
            const Trajectory traj(ctx.spec.trajectory, s.intermediate_time, s.covariates, est.beta, est.b[i]);
            v.push_back(feature_value(feats[k], traj, s.event_time));
        }
        const double sf = column_sd(v);
        ctx.prior.alpha_sd(static_cast<Eigen::Index>(k)) =
            ctx.priors.coefficient_scale / (std::isfinite(sf) && sf > 1e-12 ? sf : 1.0);
    }
}

} // namespace detail

/// Metropolis-within-Gibbs fit of the joint model.
inline FittedJointModel fit(const Dataset& data, const ModelSpec& spec, const Priors& priors = {},
                            const McmcConfig& cfg = {})
{
    priors.validate();
    cfg.validate();
    validate_dataset(data);
    if (data.subjects.empty())
        throw DataError("cannot fit a model to an empty dataset");
    auto ctx = detail::make_context(data, spec, priors, cfg);
    const auto est = detail::lmm_em(ctx);
    detail::resolve_alpha_priors(ctx, est);
    const auto n = ctx.subjects.size();
    const int q = ctx.q;

    // survival warm start: Weibull profile over the shape, then Newton on the full block
    Eigen::VectorXd phi0 = Eigen::VectorXd::Zero(ctx.layout.size);
    Eigen::MatrixXd phi_cov = Eigen::MatrixXd::Identity(ctx.layout.size, ctx.layout.size) * 0.01;
    if (ctx.layout.size > 0) {
        double events = 0.0;
        for (const auto& s : ctx.subjects)
            events += s.rec.event_indicator;
        events = std::max(events, 0.5);
        if (ctx.spec.baseline.family == BaselineFamily::weibull) {
            const auto profile = [&](double log_xi) {
                const double xi = std::exp(log_xi);
                double sum = 0.0, slog = 0.0;
                for (const auto& s : ctx.subjects) {
                    sum += ctx.t_ref * std::pow(s.rec.event_time / ctx.t_ref, xi);
                    if (s.rec.event_indicator)
                        slog += std::log(xi) + (xi - 1.0) * std::log(s.rec.event_time / ctx.t_ref);
                }
                const double c = std::log(events / sum);
                return std::pair{slog + events * c - events, c};
            };
            double a = -3.0, b = 4.0;
            const double g = (std::sqrt(5.0) - 1.0) / 2.0;
            for (int it = 0; it < 80; ++it) {
                const double x1 = b - g * (b - a), x2 = a + g * (b - a);
                if (profile(x1).first > profile(x2).first)
                    b = x2;
                else
                    a = x1;
            }
            phi0(ctx.layout.baseline) = 0.5 * (a + b);
            phi0(ctx.layout.baseline + 1) = profile(0.5 * (a + b)).second;
        } else {
            double exposure = 0.0;
            for (const auto& s : ctx.subjects)
                exposure += s.rec.event_time;
            phi0.segment(ctx.layout.baseline, ctx.layout.n_baseline).setConstant(std::log(events / exposure));
        }
        if (cfg.use_likelihood) {
            const double smooth0 = ctx.priors.smoothness_shape / ctx.priors.smoothness_rate;
            const auto objective = [&](const Eigen::VectorXd& phi) {
                const auto sp = ctx.survival_params(phi);
                double ll = ctx.log_prior_phi(phi, std::min(smooth0, 10.0));
                for (std::size_t i = 0; i < n; ++i) {
                    ll += ctx.subject_survival(ctx.subjects[i], est.beta, est.b[i], sp);
                    if (!std::isfinite(ll))
                        return ll;
                }
                return ll;
            };
            auto res = detail::newton_maximize(objective, phi0);
            phi0 = res.x;
            if (res.neg_hessian)
                phi_cov = res.neg_hessian->ldlt().solve(Eigen::MatrixXd::Identity(ctx.layout.size, ctx.layout.size));
            else
                phi_cov = Eigen::MatrixXd::Identity(ctx.layout.size, ctx.layout.size) * 1e-3;
        } else {
            phi_cov = Eigen::VectorXd::Constant(ctx.layout.size, 1.0).asDiagonal();
        }
    }

    // covariance block starts from the EM estimate
    Eigen::VectorXd log_scale0(q), corr0(q * (q - 1) / 2);
    if (q > 0) {
        const Eigen::VectorXd sd = est.D.diagonal().cwiseMax(1e-8).cwiseSqrt();
        log_scale0 = sd.array().log();
        Eigen::MatrixXd R = sd.cwiseInverse().asDiagonal() * est.D * sd.cwiseInverse().asDiagonal();
        R.diagonal().setOnes();
        Eigen::LLT<Eigen::MatrixXd> llt(0.95 * R + 0.05 * Eigen::MatrixXd::Identity(q, q));
        corr0 = corr_cholesky_unconstrain(llt.matrixL());
    }
    const Eigen::Index dd = q + corr0.size();
    const double n_eff = std::max<double>(static_cast<double>(n), 2.0);
    Eigen::MatrixXd d_cov = Eigen::MatrixXd::Identity(dd, dd) * (cfg.use_likelihood ? 0.5 / n_eff : 0.5);

    std::vector<detail::ChainOutput> outputs(static_cast<std::size_t>(cfg.chains));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.chains));
    const auto run_chain = [&](int c) {
        try {
            Rng rng = make_rng(cfg.seed, {static_cast<std::uint64_t>(c) + 1});
            detail::ChainState st;
            st.beta = est.beta;
            st.sigma = est.sigma;
            st.log_scale = log_scale0;
            st.corr_u = corr0;
            st.b = Eigen::MatrixXd::Zero(cfg.use_likelihood ? static_cast<Eigen::Index>(n) : 0, q);
            if (cfg.use_likelihood)
                for (std::size_t i = 0; i < n; ++i) {
                    const int k = ctx.subjects[i].k_active;
                    st.b.row(static_cast<Eigen::Index>(i)).head(k) = est.b[i].head(k).transpose();
                }
            st.phi = phi0;
            st.smoothness = ctx.priors.smoothness_shape / ctx.priors.smoothness_rate;
            if (c > 0) {
                // dispersed start: two approximate posterior SDs away from the warm start
                const Eigen::LLT<Eigen::MatrixXd> lb(est.beta_cov);
                if (lb.info() == Eigen::Success)
                    st.beta = mvnormal(rng, est.beta, 2.0 * Eigen::MatrixXd(lb.matrixL()));
                st.sigma *= std::exp(0.2 * std::normal_distribution<double>()(rng));
                if (ctx.layout.size > 0) {
                    const Eigen::LLT<Eigen::MatrixXd> lp(phi_cov);
                    if (lp.info() == Eigen::Success) {
                        const Eigen::VectorXd cand = mvnormal(rng, phi0, 2.0 * Eigen::MatrixXd(lp.matrixL()));
                        const auto sp = ctx.survival_params(cand);
                        bool ok = true;
                        for (std::size_t i = 0; i < n && ok && cfg.use_likelihood; ++i)
                            ok = std::isfinite(ctx.subject_survival(ctx.subjects[i], st.beta, est.b[i], sp));
                        if (ok)
                            st.phi = cand;
                    }
                }
            }
            detail::Chain chain(ctx, std::move(st), std::move(rng), phi_cov, d_cov);
            outputs[static_cast<std::size_t>(c)] = chain.run(c);
        } catch (...) {
            errors[static_cast<std::size_t>(c)] = std::current_exception();
        }
    };
    if (cfg.parallel_chains && cfg.chains > 1) {
        std::vector<std::thread> threads;
        for (int c = 0; c < cfg.chains; ++c)
            threads.emplace_back(run_chain, c);
        for (auto& t : threads)
            t.join();
    } else {
        for (int c = 0; c < cfg.chains; ++c)
            run_chain(c);
    }
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);

    FittedJointModel model;
    model.spec = ctx.spec;
    model.priors = priors;
    model.config = cfg;
    for (auto& o : outputs)
        for (auto& d : o.draws)
            model.draws.push_back(std::move(d));

    // per-subject random-effect summaries
    if (cfg.use_likelihood && q > 0) {
        Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), q), sq = sum;
        double total = 0.0;
        for (const auto& o : outputs) {
            sum += o.b_sum;
            sq += o.b_sumsq;
            total += static_cast<double>(o.saved);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            const Eigen::VectorXd m = sum.row(ii).transpose() / total;
            const Eigen::VectorXd v = (sq.row(ii).transpose() / total - m.cwiseProduct(m)).cwiseMax(0.0);
            model.subject_effects.push_back({ctx.subjects[i].rec.id, m, v.cwiseSqrt()});
        }
    }

    // diagnostics
    const auto names = parameter_names(model.spec);
    std::vector<std::vector<std::vector<double>>> traces(names.size(),
                                                         std::vector<std::vector<double>>(outputs.size()));
    {
        std::size_t offset = 0;
        for (std::size_t c = 0; c < outputs.size(); ++c) {
            const auto count = outputs[c].saved;
            for (long k = 0; k < count; ++k) {
                const auto flat = flatten_draw(model.spec, model.draws[offset + static_cast<std::size_t>(k)]);
                for (std::size_t j = 0; j < names.size(); ++j)
                    traces[j][c].push_back(flat[j]);
            }
            offset += static_cast<std::size_t>(count);
        }
    }
    for (std::size_t j = 0; j < names.size(); ++j) {
        ParameterSummary ps;
        ps.name = names[j];
        std::vector<double> all;
        for (const auto& c : traces[j])
            all.insert(all.end(), c.begin(), c.end());
        ps.mean = detail::mean_of(all);
        ps.sd = all.size() > 1 ? std::sqrt(detail::var_of(all)) : 0.0;
        ps.rhat = traces[j].size() > 1 || traces[j][0].size() >= 4 ? split_rhat(traces[j])
                                                                   : std::numeric_limits<double>::quiet_NaN();
        ps.ess = effective_sample_size(traces[j]);
        ps.mcse = ps.ess > 0 ? ps.sd / std::sqrt(ps.ess) : std::numeric_limits<double>::quiet_NaN();
        model.diagnostics.parameters.push_back(ps);
    }
    for (const auto& o : outputs)
        for (const auto& [block, rate] : o.acceptance)
            model.diagnostics.acceptance[block].push_back(rate);
    for (const auto& [block, rates] : model.diagnostics.acceptance)
        for (std::size_t c = 0; c < rates.size(); ++c)
            if (std::isfinite(rates[c]) && rates[c] < 0.01)
                model.diagnostics.warnings.push_back("acceptance collapse in block '" + block + "' of chain " +
                                                     std::to_string(c) + " (rate " + std::to_string(rates[c]) + ")");
    for (const auto& p : model.diagnostics.parameters)
        if (std::isfinite(p.rhat) && p.rhat > 1.1)
            model.diagnostics.warnings.push_back("split R-hat of " + p.name + " is " + std::to_string(p.rhat));
    return model;
}

// ---------------------------------------------------------------------------
// random effects of a new subject

/// Metropolis sampler for b_j given the history Y_j(t), survival to t and
/// one posterior draw of θ. The proposal follows the Cholesky factor of the
/// longitudinal conditional covariance, scaled by Robbins-Monro toward the
/// target acceptance rate.
class NewSubjectSampler {
public:
    /// `history` carries the covariates (in spec order), the measurements
    /// used for conditioning and the intermediate-event time if it occurred
    /// by `t`. With `pre_only` only the pre-event random effects are sampled
    /// and the post-event ones come from their conditional prior.
    NewSubjectSampler(const ModelSpec& spec, SubjectRecord history, double t, bool pre_only, int steps = 10,
                      double target = 0.35, QuadratureConfig quad = {})
        : spec_(spec), subj_(std::move(history)), t_(t), steps_(steps), target_(target), quad_(quad)
    {
        if (steps_ < 1)
            throw Error("new-subject sampler needs at least one step per draw");
        for (const auto& m : subj_.measurements)
            if (m.time > t_)
                throw Error("history contains a measurement after t");
        if (spec.window == LongitudinalWindow::pre_intermediate)
            subj_ = drop_post_intermediate(subj_);
        if (pre_only)
            subj_.intermediate_time.reset();
        q_ = spec.trajectory.n_random();
        k_ = pre_only ? spec.trajectory.n_pre_random() : q_;
        const auto d = subject_design(spec.trajectory, subj_);
        X_ = d.X;
        Z_ = d.Z.leftCols(k_);
        y_ = d.y;
        subj_.event_time = t_;
        subj_.event_indicator = 0;
    }

    /// One draw of the full random-effect vector under θ.
    Eigen::VectorXd draw(const ThetaDraw& theta, Rng& rng)
    {
        const Eigen::MatrixXd Dk = theta.D.topLeftCorner(k_, k_);
        Eigen::VectorXd bk;
        if (y_.size() == 0 && t_ == 0.0) {
            // posterior equals the prior
            const Eigen::LLT<Eigen::MatrixXd> llt(Dk);
            bk = mvnormal(rng, Eigen::VectorXd::Zero(k_), llt.matrixL());
        } else {
            const double s2 = theta.sigma * theta.sigma;
            const Eigen::MatrixXd Dinv = Dk.llt().solve(Eigen::MatrixXd::Identity(k_, k_));
            const Eigen::MatrixXd Q = Z_.transpose() * Z_ / s2 + Dinv;
            const Eigen::VectorXd r = Z_.transpose() * (y_ - X_ * theta.beta) / s2;
            const Eigen::LLT<Eigen::MatrixXd> llt(Q);
            if (!current_ || current_->size() != k_)
                current_ = llt.solve(r);
            const auto log_target = [&](const Eigen::VectorXd& b) {
                return -0.5 * b.dot(Q * b) + b.dot(r) + log_survival(theta, b);
            };
            double cur = log_target(*current_);
            for (int s = 0; s < steps_; ++s) {
                Eigen::VectorXd z = std_normal(rng, k_);
                llt.matrixU().solveInPlace(z);
                const Eigen::VectorXd prop = *current_ + std::exp(log_scale_) * z;
                const double lp = log_target(prop);
                const bool ok = accept_log(rng, lp - cur);
                if (ok) {
                    current_ = prop;
                    cur = lp;
                }
                ++n_;
                accepted_ += ok ? 1 : 0;
                if (n_ <= adapt_steps_)
                    log_scale_ = std::clamp(
                        log_scale_ + ((ok ? 1.0 : 0.0) - target_) / std::pow(static_cast<double>(n_) + 1.0, 0.6), -8.0,
                        4.0);
            }
            bk = *current_;
        }
        if (k_ == q_)
            return bk;
        // post-event effects from their conditional prior given the pre-event ones
        const Eigen::MatrixXd Dpp = Dk;
        const Eigen::MatrixXd Dqp = theta.D.bottomLeftCorner(q_ - k_, k_);
        const Eigen::MatrixXd Dqq = theta.D.bottomRightCorner(q_ - k_, q_ - k_);
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(Dpp);
        const Eigen::VectorXd mean = Dqp * ldlt.solve(bk);
        Eigen::MatrixXd cov = Dqq - Dqp * ldlt.solve(Dqp.transpose());
        cov = 0.5 * (cov + cov.transpose());
        Eigen::LLT<Eigen::MatrixXd> lc(cov);
        if (lc.info() != Eigen::Success) {
            cov.diagonal().array() += 1e-10 * (1.0 + cov.diagonal().array().abs());
            lc.compute(cov);
        }
        Eigen::VectorXd full(q_);
        full << bk, mvnormal(rng, mean, lc.matrixL());
        return full;
    }

    double acceptance_rate() const
    {
        return n_ == 0 ? std::numeric_limits<double>::quiet_NaN()
                       : static_cast<double>(accepted_) / static_cast<double>(n_);
    }

    /// Number of Metropolis steps during which the scale keeps adapting.
    void set_adaptation(long steps) { adapt_steps_ = steps; }

    const SubjectRecord& conditioning_record() const { return subj_; }

private:
    double log_survival(const ThetaDraw& theta, const Eigen::VectorXd& bk) const
    {
        if (!spec_.survival_enabled || t_ <= 0.0)
            return 0.0;
        Eigen::VectorXd full = Eigen::VectorXd::Zero(q_);
        full.head(k_) = bk;
        try {
            const Trajectory traj(spec_.trajectory, subj_.intermediate_time, subj_.covariates, theta.beta, full);
            const SubjectHazard h(spec_, theta.surv, traj, subj_.covariates);
            const double v = -h.cumulative(0.0, t_, quad_);
            return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
        } catch (const Error&) {
            return -std::numeric_limits<double>::infinity();
        }
    }

    ModelSpec spec_;
    SubjectRecord subj_;
    double t_;
    int steps_;
    double target_;
    QuadratureConfig quad_;
    int q_ = 0, k_ = 0;
    Eigen::MatrixXd X_, Z_;
    Eigen::VectorXd y_;
    std::optional<Eigen::VectorXd> current_;
    double log_scale_ = 0.0;
    long n_ = 0, accepted_ = 0, adapt_steps_ = 1000;
};

/// One draw of b_j given the history up to t, survival past t and θ.
inline Eigen::VectorXd sample_new_subject_effects(const FittedJointModel& fitted, const SubjectRecord& history,
                                                  double t, const ThetaDraw& theta, Rng& rng, int steps = 50)
{
    NewSubjectSampler s(fitted.spec, history, t, false, steps);
    return s.draw(theta, rng);
}

} // namespace jmie
