#include <jmie/quadrature.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace jmie;

TEST(GaussKronrod, ExactForLowDegreePolynomials)
{
    for (int d = 0; d <= 22; ++d) {
        const auto r = gauss_kronrod15([d](double x) { return std::pow(x, d); }, 0.0, 2.0);
        EXPECT_NEAR(r.value, std::pow(2.0, d + 1) / (d + 1), 1e-12 * std::pow(2.0, d + 1)) << d;
    }
}

TEST(Integrate, SmoothAndPeakedIntegrands)
{
    EXPECT_NEAR(integrate([](double x) { return std::sin(x); }, 0.0, std::numbers::pi).value, 2.0, 1e-12);
    EXPECT_NEAR(integrate([](double x) { return std::exp(-x); }, 0.0, 30.0).value, 1.0 - std::exp(-30.0), 1e-12);
    const auto peak = [](double x) { return 1.0 / (1e-4 + (x - 0.3) * (x - 0.3)); };
    const double exact = 100.0 * (std::atan(0.7 / 1e-2) + std::atan(0.3 / 1e-2));
    EXPECT_NEAR(integrate(peak, 0.0, 1.0).value, exact, 1e-7 * exact);
    EXPECT_NEAR(integrate(peak, 1.0, 0.0).value, -exact, 1e-7 * exact);
}

TEST(Integrate, KinkAtBreakpointIsExact)
{
    const auto f = [](double x) { return std::abs(x - 1.7); };
    const double bp[] = {1.7};
    const auto r = integrate(f, 0.0, 3.0, bp);
    EXPECT_NEAR(r.value, 0.5 * 1.7 * 1.7 + 0.5 * 1.3 * 1.3, 1e-14);
    EXPECT_EQ(r.subdivisions, 0);
}

TEST(Integrate, ThrowsWhenBudgetIsExhausted)
{
    QuadratureConfig cfg;
    cfg.max_subdivisions = 3;
    const auto spiky = [](double x) { return std::sin(1.0 / (x + 1e-3)); };
    EXPECT_THROW(integrate(spiky, 0.0, 1.0, {}, cfg), QuadratureError);
    EXPECT_THROW(integrate([](double) { return std::nan(""); }, 0.0, 1.0), QuadratureError);
}
