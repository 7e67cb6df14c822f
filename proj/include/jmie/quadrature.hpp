#pragma once

#include <jmie/core_data.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace jmie {

class QuadratureError : public Error {
public:
    using Error::Error;
};

struct QuadratureConfig {
    double rel_tol = 1e-8;
    double abs_tol = 0.0;
    int max_subdivisions = 50;
};

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
    int subdivisions = 0;
};

namespace gk15 {

// Kronrod abscissae (descending), Kronrod weights and the embedded 7-point Gauss weights.
inline constexpr std::array<double, 8> xgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> wgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> wg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

} // namespace gk15

/// One 15-point Gauss-Kronrod panel with the QUADPACK error heuristic.
template <class F>
QuadratureResult gauss_kronrod15(F&& f, double a, double b)
{
    using namespace gk15;
    constexpr double epmach = std::numeric_limits<double>::epsilon();
    constexpr double uflow = std::numeric_limits<double>::min();
    const double centr = 0.5 * (a + b);
    const double hlgth = 0.5 * (b - a);
    const double dhlgth = std::abs(hlgth);

    std::array<double, 7> fv1{}, fv2{};
    const double fc = f(centr);
    double resg = fc * wg[3];
    double resk = fc * wgk[7];
    double resabs = std::abs(resk);
    for (int j = 0; j < 3; ++j) {
        const int jtw = 2 * j + 1;
        const double absc = hlgth * xgk[jtw];
        const double f1 = f(centr - absc);
        const double f2 = f(centr + absc);
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        resg += wg[j] * (f1 + f2);
        resk += wgk[jtw] * (f1 + f2);
        resabs += wgk[jtw] * (std::abs(f1) + std::abs(f2));
    }
    for (int j = 0; j < 4; ++j) {
        const int jtwm1 = 2 * j;
        const double absc = hlgth * xgk[jtwm1];
        const double f1 = f(centr - absc);
        const double f2 = f(centr + absc);
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        resk += wgk[jtwm1] * (f1 + f2);
        resabs += wgk[jtwm1] * (std::abs(f1) + std::abs(f2));
    }
    const double reskh = resk * 0.5;
    double resasc = wgk[7] * std::abs(fc - reskh);
    for (int j = 0; j < 7; ++j)
        resasc += wgk[j] * (std::abs(fv1[j] - reskh) + std::abs(fv2[j] - reskh));

    QuadratureResult r;
    r.value = resk * hlgth;
    resabs *= dhlgth;
    resasc *= dhlgth;
    double abserr = std::abs((resk - resg) * hlgth);
    if (resasc != 0.0 && abserr != 0.0)
        abserr = resasc * std::min(1.0, std::pow(200.0 * abserr / resasc, 1.5));
    if (resabs > uflow / (50.0 * epmach))
        abserr = std::max(epmach * 50.0 * resabs, abserr);
    r.error = abserr;
    return r;
}

/// Globally adaptive Gauss-Kronrod integration of f over [a, b]. The range is
/// first cut at every breakpoint inside (a, b); panels are then bisected in
/// order of decreasing error estimate until the total estimate meets the
/// tolerance. Throws QuadratureError when max_subdivisions is exhausted.
template <class F>
QuadratureResult integrate(F&& f, double a, double b, std::span<const double> breakpoints = {},
                           const QuadratureConfig& cfg = {})
{
    QuadratureResult total;
    if (a == b)
        return total;
    if (a > b) {
        auto r = integrate(f, b, a, breakpoints, cfg);
        r.value = -r.value;
        return r;
    }

    struct Panel {
        double a, b;
        QuadratureResult r;
    };
    std::vector<double> cuts{a};
    for (double x : breakpoints)
        if (x > a && x < b)
            cuts.push_back(x);
    cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    std::vector<Panel> panels;
    panels.reserve(cuts.size() + static_cast<std::size_t>(cfg.max_subdivisions) + 1);
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        panels.push_back({cuts[i], cuts[i + 1], gauss_kronrod15(f, cuts[i], cuts[i + 1])});

    const auto sums = [&] {
        double v = 0.0, e = 0.0;
        for (const auto& p : panels) {
            v += p.r.value;
            e += p.r.error;
        }
        return std::pair{v, e};
    };

    int splits = 0;
    auto [value, error] = sums();
    while (error > std::max(cfg.abs_tol, cfg.rel_tol * std::abs(value))) {
        if (splits >= cfg.max_subdivisions)
            throw QuadratureError("quadrature tolerance not reached within " +
                                  std::to_string(cfg.max_subdivisions) + " subdivisions on [" +
                                  std::to_string(a) + ", " + std::to_string(b) + "]");
        auto worst = std::max_element(panels.begin(), panels.end(),
                                      [](const Panel& x, const Panel& y) { return x.r.error < y.r.error; });
        const double mid = 0.5 * (worst->a + worst->b);
        Panel right{mid, worst->b, gauss_kronrod15(f, mid, worst->b)};
        *worst = Panel{worst->a, mid, gauss_kronrod15(f, worst->a, mid)};
        panels.push_back(right);
        ++splits;
        std::tie(value, error) = sums();
        if (!std::isfinite(value))
            throw QuadratureError("non-finite integrand");
    }
    if (!std::isfinite(value))
        throw QuadratureError("non-finite integrand");
    total.value = value;
    total.error = error;
    total.subdivisions = splits;
    return total;
}

} // namespace jmie
