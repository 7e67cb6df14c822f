#pragma once

#include <jmie/core_data.hpp>
#include <jmie/quadrature.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace jmie {

enum class SplineKind { bspline, natural_cubic };

inline std::string to_string(SplineKind k)
{
    return k == SplineKind::bspline ? "bspline" : "natural-cubic";
}

inline SplineKind spline_kind_from_string(const std::string& s)
{
    if (s == "bspline")
        return SplineKind::bspline;
    if (s == "natural-cubic" || s == "ns")
        return SplineKind::natural_cubic;
    throw Error("unknown spline kind '" + s + "'");
}

/// Type-7 sample quantile (linear interpolation between order statistics).
inline double quantile(std::vector<double> x, double p)
{
    if (x.empty())
        throw Error("quantile of empty sample");
    std::sort(x.begin(), x.end());
    const double h = (static_cast<double>(x.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

/// Interior knots at equally spaced quantiles of `x` (excluding 0 and 1).
inline std::vector<double> quantile_knots(const std::vector<double>& x, int n_interior)
{
    std::vector<double> knots;
    for (int k = 1; k <= n_interior; ++k)
        knots.push_back(quantile(x, static_cast<double>(k) / (n_interior + 1)));
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
    return knots;
}

/// B-spline or natural cubic spline basis on [lo, hi] with sorted interior knots.
///
/// B-splines use a clamped knot vector and continue the boundary polynomial
/// pieces outside [lo, hi]; with `intercept` the full basis (interior +
/// degree + 1 functions) is returned, so values sum to one. Natural cubic
/// splines are the cubic B-splines projected onto the null space of the
/// second-derivative constraints at lo and hi (interior + 2 functions with
/// intercept), and extend linearly outside the boundary. Without `intercept`
/// the first B-spline is dropped before projecting, so every function
/// vanishes at lo.
class SplineBasis {
public:
    SplineBasis() = default;

    SplineBasis(SplineKind kind, int degree, std::vector<double> interior_knots, double lo, double hi,
                bool intercept = true)
        : kind_(kind), degree_(kind == SplineKind::natural_cubic ? 3 : degree),
          interior_(std::move(interior_knots)), lo_(lo), hi_(hi), intercept_(intercept)
    {
        if (degree_ < 1)
            throw Error("spline degree must be >= 1");
        if (!(lo_ < hi_))
            throw Error("spline boundary must satisfy lo < hi");
        double prev = lo_;
        for (double k : interior_) {
            if (!(k > prev))
                throw Error("spline knots must be strictly increasing inside (lo, hi)");
            prev = k;
        }
        if (!(hi_ > prev))
            throw Error("spline knots must be strictly increasing inside (lo, hi)");

        knots_.assign(static_cast<std::size_t>(degree_) + 1, lo_);
        knots_.insert(knots_.end(), interior_.begin(), interior_.end());
        knots_.insert(knots_.end(), static_cast<std::size_t>(degree_) + 1, hi_);
        n_bspline_ = static_cast<int>(interior_.size()) + degree_ + 1;

        const int first = intercept_ ? 0 : 1;
        const int m = n_bspline_ - first;
        if (kind_ == SplineKind::natural_cubic) {
            Eigen::MatrixXd c(m, 2);
            c.col(0) = bspline_derivatives(lo_, 2).row(2).tail(m).transpose();
            c.col(1) = bspline_derivatives(hi_, 2).row(2).tail(m).transpose();
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(c);
            Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m, m);
            projection_ = q.rightCols(m - 2);
        } else {
            projection_ = Eigen::MatrixXd::Identity(m, m);
        }
        boundary_lo_ = projection_.transpose() * bspline_derivatives(lo_, 1).rightCols(m).transpose();
        boundary_hi_ = projection_.transpose() * bspline_derivatives(hi_, 1).rightCols(m).transpose();
    }

    SplineKind kind() const { return kind_; }
    int degree() const { return degree_; }
    const std::vector<double>& interior_knots() const { return interior_; }
    double lo() const { return lo_; }
    double hi() const { return hi_; }

    bool intercept() const { return intercept_; }

    int size() const { return static_cast<int>(projection_.cols()); }

    Eigen::VectorXd eval(double t) const
    {
        const auto m = projection_.rows();
        if (kind_ == SplineKind::natural_cubic) {
            if (t < lo_)
                return boundary_lo_.col(0) + (t - lo_) * boundary_lo_.col(1);
            if (t > hi_)
                return boundary_hi_.col(0) + (t - hi_) * boundary_hi_.col(1);
            return projection_.transpose() * bspline_derivatives(t, 0).row(0).tail(m).transpose();
        }
        return bspline_derivatives(t, 0).row(0).tail(m).transpose();
    }

    Eigen::VectorXd derivative(double t) const
    {
        const auto m = projection_.rows();
        if (kind_ == SplineKind::natural_cubic) {
            if (t < lo_)
                return boundary_lo_.col(1);
            if (t > hi_)
                return boundary_hi_.col(1);
            return projection_.transpose() * bspline_derivatives(t, 1).row(1).tail(m).transpose();
        }
        return bspline_derivatives(t, 1).row(1).tail(m).transpose();
    }

    /// Componentwise integral over [a, b]; exact for the piecewise polynomials.
    Eigen::VectorXd integral(double a, double b) const
    {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(size());
        if (a == b)
            return out;
        const double sign = a < b ? 1.0 : -1.0;
        if (a > b)
            std::swap(a, b);
        std::vector<double> cuts{a};
        for (double k : breakpoints())
            if (k > a && k < b)
                cuts.push_back(k);
        cuts.push_back(b);
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
            const double c = 0.5 * (cuts[i] + cuts[i + 1]);
            const double h = 0.5 * (cuts[i + 1] - cuts[i]);
            out += gk15::wgk[7] * h * eval(c);
            for (int j = 0; j < 7; ++j)
                out += gk15::wgk[j] * h * (eval(c - h * gk15::xgk[j]) + eval(c + h * gk15::xgk[j]));
        }
        return sign * out;
    }

    std::vector<double> breakpoints() const
    {
        std::vector<double> b{lo_};
        b.insert(b.end(), interior_.begin(), interior_.end());
        b.push_back(hi_);
        return b;
    }

    /// Rows: derivative order 0..nd; columns: all B-spline functions.
    Eigen::MatrixXd bspline_derivatives(double x, int nd) const
    {
        const int p = degree_;
        const auto& U = knots_;
        const int n = n_bspline_;
        // span index with U[i] <= x < U[i+1], clamped to the boundary pieces
        int i = p;
        if (x >= hi_)
            i = n - 1;
        else if (x > lo_)
            i = static_cast<int>(std::upper_bound(U.begin() + p, U.begin() + n, x) - U.begin()) - 1;

        std::vector<std::vector<double>> ndu(p + 1, std::vector<double>(p + 1, 0.0));
        std::vector<double> left(p + 1), right(p + 1);
        ndu[0][0] = 1.0;
        for (int j = 1; j <= p; ++j) {
            left[j] = x - U[i + 1 - j];
            right[j] = U[i + j] - x;
            double saved = 0.0;
            for (int r = 0; r < j; ++r) {
                ndu[j][r] = right[r + 1] + left[j - r];
                const double temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        Eigen::MatrixXd ders = Eigen::MatrixXd::Zero(nd + 1, n);
        std::vector<std::vector<double>> local(nd + 1, std::vector<double>(p + 1, 0.0));
        for (int j = 0; j <= p; ++j)
            local[0][j] = ndu[j][p];
        const int kmax = std::min(nd, p);
        std::vector<std::vector<double>> a(2, std::vector<double>(p + 1, 0.0));
        for (int r = 0; r <= p; ++r) {
            int s1 = 0, s2 = 1;
            a[0][0] = 1.0;
            for (int k = 1; k <= kmax; ++k) {
                double d = 0.0;
                const int rk = r - k, pk = p - k;
                if (r >= k) {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                    d = a[s2][0] * ndu[rk][pk];
                }
                const int j1 = rk >= -1 ? 1 : -rk;
                const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
                for (int j = j1; j <= j2; ++j) {
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
                    d += a[s2][j] * ndu[rk + j][pk];
                }
                if (r <= pk) {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                local[k][r] = d;
                std::swap(s1, s2);
            }
        }
        double fac = p;
        for (int k = 1; k <= kmax; ++k) {
            for (int j = 0; j <= p; ++j)
                local[k][j] *= fac;
            fac *= (p - k);
        }
        for (int k = 0; k <= nd; ++k)
            for (int j = 0; j <= p; ++j)
                ders(k, i - p + j) = local[k][j];
        return ders;
    }

private:
    SplineKind kind_ = SplineKind::bspline;
    int degree_ = 3;
    std::vector<double> interior_;
    double lo_ = 0.0, hi_ = 1.0;
    bool intercept_ = true;
    std::vector<double> knots_;
    int n_bspline_ = 0;
    Eigen::MatrixXd projection_;
    Eigen::MatrixXd boundary_lo_, boundary_hi_; // columns: value, first derivative
};

inline Eigen::VectorXd eval_basis(const SplineBasis& basis, double t) { return basis.eval(t); }

} // namespace jmie
