#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

namespace jmie {

using Rng = std::mt19937_64;

/// Independent stream for (seed, k1, k2, ...).
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {})
{
    std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    for (auto s : stream) {
        words.push_back(static_cast<std::uint32_t>(s));
        words.push_back(static_cast<std::uint32_t>(s >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

/// A seed for a child computation that will build its own streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> stream)
{
    return make_rng(seed, stream)();
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline Eigen::VectorXd std_normal(Rng& rng, Eigen::Index n)
{
    std::normal_distribution<double> z;
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v(i) = z(rng);
    return v;
}

/// mean + L z with L lower triangular (Cholesky factor of the covariance).
inline Eigen::VectorXd mvnormal(Rng& rng, const Eigen::VectorXd& mean, const Eigen::MatrixXd& L)
{
    return mean + L.triangularView<Eigen::Lower>() * std_normal(rng, mean.size());
}

/// Draw from N(Q⁻¹r, Q⁻¹) given the precision Q and linear term r.
inline Eigen::VectorXd draw_from_precision(Rng& rng, const Eigen::MatrixXd& Q, const Eigen::VectorXd& r)
{
    const Eigen::LLT<Eigen::MatrixXd> llt(Q);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("precision matrix is not positive definite");
    Eigen::VectorXd mean = llt.solve(r);
    Eigen::VectorXd z = std_normal(rng, r.size());
    llt.matrixU().solveInPlace(z);
    return mean + z;
}

/// X ~ inverse-Wishart(ν, S), E[X] = S/(ν - k - 1), by the Bartlett
/// decomposition of X⁻¹ ~ Wishart(ν, S⁻¹). Requires ν > k - 1.
inline Eigen::MatrixXd draw_inverse_wishart(Rng& rng, double nu, const Eigen::MatrixXd& S)
{
    const auto k = S.rows();
    const Eigen::MatrixXd Sinv = S.llt().solve(Eigen::MatrixXd::Identity(k, k));
    const Eigen::MatrixXd L = Sinv.llt().matrixL();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(k, k);
    std::normal_distribution<double> z;
    for (Eigen::Index i = 0; i < k; ++i) {
        A(i, i) = std::sqrt(std::chi_squared_distribution<double>(nu - static_cast<double>(i))(rng));
        for (Eigen::Index j = 0; j < i; ++j)
            A(i, j) = z(rng);
    }
    const Eigen::MatrixXd M = L * A; // X⁻¹ = M Mᵀ
    const Eigen::MatrixXd Minv = M.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(k, k));
    return Minv.transpose() * Minv;
}

/// log inverse-Wishart(ν, S) density at X, up to terms free of X.
inline double log_inverse_wishart_kernel(const Eigen::MatrixXd& X, double nu, const Eigen::MatrixXd& S)
{
    const auto k = static_cast<double>(X.rows());
    const Eigen::LLT<Eigen::MatrixXd> llt(X);
    if (llt.info() != Eigen::Success)
        return -std::numeric_limits<double>::infinity();
    const double logdet = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    return -0.5 * (nu + k + 1.0) * logdet - 0.5 * llt.solve(S).trace();
}

inline bool accept_log(Rng& rng, double log_ratio)
{
    if (std::isnan(log_ratio))
        return false;
    return log_ratio >= 0.0 || std::log(uniform01(rng)) < log_ratio;
}

/// log density of half-t(df, scale) at x > 0, without the normalizing constant.
inline double log_half_t(double x, double df, double scale)
{
    const double z = x / scale;
    return -0.5 * (df + 1.0) * std::log1p(z * z / df);
}

/// Normalized half-t density (for tests and reporting).
inline double half_t_density(double x, double df, double scale)
{
    if (x < 0.0)
        return 0.0;
    const double c = 2.0 * std::exp(std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df)) /
                     (std::sqrt(df * std::numbers::pi) * scale);
    return c * std::exp(log_half_t(x, df, scale));
}

inline double log_normal_kernel(double x, double mean, double sd)
{
    const double z = (x - mean) / sd;
    return -0.5 * z * z;
}

} // namespace jmie
