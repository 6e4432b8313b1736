#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "fracstep/recurrence.hpp"

using namespace fracstep;

namespace {

RecurrenceSpec make(double alpha, double r, int N, double gamma, double l1 = 0.0, double l2 = 0.0) {
    return {gamma, l1, l2, build_graded_mesh(1.0, N, r), SchemeParams::alikhanov(alpha)};
}

}  // namespace

TEST(Recurrence, ZeroForcingGivesZero) {
    auto spec = make(0.5, 2.0, 64, -0.5, 0.3, 0.2);
    spec.forcing = 0.0;
    const auto res = solve_scalar_recurrence(spec);
    for (double v : res.v) EXPECT_EQ(v, 0.0);
}

TEST(Recurrence, FirstStepByHand) {
    const auto spec = make(0.5, 2.0, 16, -0.5, 0.4, 0.0);
    const auto res = solve_scalar_recurrence(spec);
    const double g00 = assemble_weights(1, spec.mesh, spec.params).lead();
    EXPECT_NEAR(res.v[1], 1.0 / (g00 - 0.4), 1e-14 / (g00 - 0.4));  // (tau_1/t_1)^{gamma+1} = 1
}

TEST(Recurrence, MarchSatisfiesEquation) {
    const auto spec = make(0.3, 3.0, 40, 0.5, 0.5, 0.5);
    const auto res = solve_scalar_recurrence(spec);
    for (int j = 1; j <= 40; ++j) {
        const auto w = assemble_weights(j, spec.mesh, spec.params);
        const double d = apply_discrete_derivative(w, std::span(res.v.data(), j + 1));
        const double lhs = d - 0.5 * res.v[j] - 0.5 * res.v[j - 1];
        const double rhs = std::pow(spec.mesh.tau(1) / spec.mesh.t(j), 1.5);
        EXPECT_NEAR(lhs, rhs, 1e-11 * std::max(1.0, std::abs(rhs)));
    }
}

TEST(Recurrence, ComparisonPrincipleKeepsSign) {
    const auto res = solve_scalar_recurrence(make(0.5, 2.0, 256, -0.5, 0.5, 0.5));
    for (int j = 1; j <= 256; ++j) EXPECT_GE(res.v[j], 0.0) << "j=" << j;
}

TEST(Recurrence, BoundConstantStableUnderRefinement) {
    for (double alpha : {0.3, 0.5, 0.7}) {
        for (double r : {1.0, 2.0, 2.0 / alpha}) {
            std::vector<double> c;
            for (int N = 32; N <= 1024; N *= 2) c.push_back(solve_scalar_recurrence(make(alpha, r, N, alpha - 1.0)).fitted_constant);
            for (std::size_t k = 1; k < c.size(); ++k) {
                EXPECT_LT(c[k] / c[k - 1], 1.5) << "alpha=" << alpha << " r=" << r;
                EXPECT_GT(c[k] / c[k - 1], 1.0 / 1.5);
            }
        }
    }
}

TEST(Recurrence, RefusesGammaZero) {
    EXPECT_THROW(solve_scalar_recurrence(make(0.5, 2.0, 16, 0.0)), ValidationError);
}

TEST(Recurrence, RefusesNegativeLambda) {
    EXPECT_THROW(solve_scalar_recurrence(make(0.5, 2.0, 16, -0.5, -0.1)), ValidationError);
    EXPECT_THROW(solve_scalar_recurrence(make(0.5, 2.0, 16, -0.5, 0.0, -0.1)), ValidationError);
}

TEST(Recurrence, RefusesStepCondition) {
    // tau = 1/4, alpha = 0.5: lambda1 tau^alpha = 0.5 lambda1 vs 1/(2 Gamma(1.5)) ~ 0.564
    try {
        solve_scalar_recurrence(make(0.5, 1.0, 4, -0.5, 2.0));
        FAIL() << "expected refusal";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("step-size condition"), std::string::npos);
    }
    EXPECT_NO_THROW(solve_scalar_recurrence(make(0.5, 1.0, 4, -0.5, 1.0)));
}

TEST(Recurrence, Admissibility) {
    EXPECT_FALSE(recurrence_admissible(0.5, 2.0, 0.0));
    EXPECT_TRUE(recurrence_admissible(0.5, 2.0, 0.5));
    EXPECT_TRUE(recurrence_admissible(0.5, 5.0, 0.5));   // (3-alpha)/alpha = 5
    EXPECT_FALSE(recurrence_admissible(0.7, 2.0 / 0.7 + 2.0, 0.5));
    EXPECT_TRUE(recurrence_admissible(0.7, 6.0, 0.7 - 1.0));  // gamma <= alpha - 1
    EXPECT_TRUE(recurrence_admissible(0.7, 6.0, -0.5));
    EXPECT_FALSE(recurrence_admissible(0.7, 6.0, -0.2));
}

TEST(Recurrence, StabilityBoundShape) {
    const auto m = build_graded_mesh(1.0, 8, 2.0);
    const double tau1 = m.tau(1);
    EXPECT_DOUBLE_EQ(stability_bound(m, 0.5, 0.5, 4), tau1 * std::pow(m.t(4), -0.5));
    EXPECT_DOUBLE_EQ(stability_bound(m, 0.5, -0.5, 4), tau1 * std::pow(m.t(4), -0.5) * std::pow(tau1 / m.t(4), -0.5));
}

TEST(Recurrence, CsvColumns) {
    const auto spec = make(0.5, 1.0, 2, -0.5);
    std::ostringstream os;
    write_recurrence_csv(os, spec.mesh, solve_scalar_recurrence(spec));
    const std::string s = os.str();
    EXPECT_EQ(s.rfind("j,t_j,v_j,V,ratio\n1,0.5,", 0), 0u);
    EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 3);
}
