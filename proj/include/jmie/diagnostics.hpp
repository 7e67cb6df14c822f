#pragma once

#include <jmie/core_data.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace jmie {

namespace detail {

inline double mean_of(const std::vector<double>& x)
{
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double var_of(const std::vector<double>& x)
{
    const double m = mean_of(x);
    double s = 0.0;
    for (double v : x)
        s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

} // namespace detail

/// Split-R̂: every chain is cut in half and the halves are compared with
/// the usual between/within variance ratio.
inline double split_rhat(const std::vector<std::vector<double>>& chains)
{
    std::vector<std::vector<double>> halves;
    for (const auto& c : chains) {
        const std::size_t h = c.size() / 2;
        if (h < 2)
            return std::numeric_limits<double>::quiet_NaN();
        halves.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(h));
        halves.emplace_back(c.end() - static_cast<std::ptrdiff_t>(h), c.end());
    }
    const double n = static_cast<double>(halves[0].size());
    std::vector<double> means, vars;
    for (const auto& h : halves) {
        means.push_back(detail::mean_of(h));
        vars.push_back(detail::var_of(h));
    }
    const double W = detail::mean_of(vars);
    const double B = n * detail::var_of(means);
    if (W <= 0.0)
        return B <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    const double var_plus = (n - 1.0) / n * W + B / n;
    return std::sqrt(var_plus / W);
}

/// Autocorrelation of one chain at lags 0..max_lag.
inline std::vector<double> autocorrelation(const std::vector<double>& x, std::size_t max_lag)
{
    const std::size_t n = x.size();
    const double m = detail::mean_of(x);
    double c0 = 0.0;
    for (double v : x)
        c0 += (v - m) * (v - m);
    std::vector<double> rho(max_lag + 1, 0.0);
    if (c0 <= 0.0) {
        rho[0] = 1.0;
        return rho;
    }
    for (std::size_t k = 0; k <= max_lag && k < n; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i + k < n; ++i)
            s += (x[i] - m) * (x[i + k] - m);
        rho[k] = s / c0;
    }
    return rho;
}

/// Effective sample size summed over chains, each by Geyer's initial
/// monotone positive sequence.
inline double effective_sample_size(const std::vector<std::vector<double>>& chains)
{
    double total = 0.0;
    for (const auto& c : chains) {
        const std::size_t n = c.size();
        if (n < 4) {
            total += static_cast<double>(n);
            continue;
        }
        const auto rho = autocorrelation(c, n - 1);
        if (rho[1] == 0.0 && rho[0] == 1.0 && detail::var_of(c) == 0.0) {
            total += static_cast<double>(n);
            continue;
        }
        double tau = -1.0;
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k + 1 < n; k += 2) {
            double pair = rho[k] + rho[k + 1];
            if (pair <= 0.0)
                break;
            pair = std::min(pair, prev);
            prev = pair;
            tau += 2.0 * pair;
        }
        total += static_cast<double>(n) / std::max(tau, 1.0 / std::log10(static_cast<double>(n)));
    }
    return total;
}

} // namespace jmie
