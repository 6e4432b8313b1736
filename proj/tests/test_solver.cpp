#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "fracstep/analysis.hpp"
#include "fracstep/solver.hpp"

using namespace fracstep;

namespace {

ProblemSpec small_spec(int M, int N, double r = 2.0) {
    ProblemSpec s;
    s.name = "small";
    s.alpha = 0.5;
    s.nu = 0.2;
    s.T = 0.5;
    s.N = N;
    s.r = r;
    s.M1 = s.M2 = M;
    return s;
}

std::vector<GridFunction2D> random_history(const SpatialGrid& g, int n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> d(-0.5, 0.5);
    std::vector<GridFunction2D> h;
    for (int k = 0; k < n; ++k) {
        GridFunction2D v(g);
        for (auto& x : v.values()) x = d(rng);
        h.push_back(v);
    }
    return h;
}

}  // namespace

TEST(AssembleStep, ZeroDataGivesZeroRhs) {
    auto spec = small_spec(5, 8);
    const auto ctx = StepContext::from(spec);
    std::vector<GridFunction2D> hist(3, GridFunction2D(ctx.grid));
    const auto w = assemble_weights(3, ctx.mesh, ctx.params);
    const auto sys = assemble_step(ctx, spec, 3, hist, w);
    for (double v : sys.rhs.values()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(solve_step(sys).vec().norm(), 0.0);
}

TEST(AssembleStep, ScalarSystemByHand) {
    auto spec = small_spec(2, 4);
    spec.reaction = Reaction::allen_cahn();
    spec.initial = [](double, double) { return 0.3; };
    spec.source = [](double x, double y, double t) { return x + y + t; };
    const auto ctx = StepContext::from(spec);
    ASSERT_EQ(ctx.grid.interior_count(), 1);
    std::vector<GridFunction2D> hist{GridFunction2D(ctx.grid, 0.3)};
    const auto w = assemble_weights(1, ctx.mesh, ctx.params);
    const auto sys = assemble_step(ctx, spec, 1, hist, w);

    const double alpha = 0.5, sigma = 0.75, tau = ctx.mesh.tau(1), h = 0.5, nu = 0.2, u = 0.3;
    const double g00 = std::pow(sigma, 1 - alpha) * std::pow(tau, 1 - alpha) / std::tgamma(2 - alpha) / tau;
    const double L = nu * 4.0 / (h * h);  // -nu Delta_h with zero neighbours, both directions
    const double f = u - u * u * u, df = 1 - 3 * u * u;
    const double ts = ctx.mesh.t(1) - (1 - sigma) * tau;
    const double A = g00 + sigma * L - sigma * df;
    const double rhs = g00 * u - (1 - sigma) * L * u + f - sigma * df * u + (0.5 + 0.5 + ts);
    EXPECT_NEAR(sys.lead, g00, 1e-13 * g00);
    EXPECT_NEAR(sys.matrix.coeff(0, 0), A, 1e-12 * A);
    EXPECT_NEAR(sys.rhs[0], rhs, 1e-12 * std::abs(rhs));
    EXPECT_NEAR(solve_step(sys)[0], rhs / A, 1e-12 * std::abs(rhs / A));
}

TEST(AssembleStep, ResidualIdentity) {
    // A_n U - rhs must equal the scheme residual written with U^{n,*}.
    auto spec = small_spec(6, 10);
    spec.reaction = Reaction::logistic();
    spec.source = [](double x, double y, double t) { return std::sin(x + 2 * y) * (1 + t); };
    const auto ctx = StepContext::from(spec);
    const int n = 6;
    const auto hist = random_history(ctx.grid, n + 1, 11);
    const auto w = assemble_weights(n, ctx.mesh, ctx.params);
    const auto sys = assemble_step(ctx, spec, n, std::span(hist).first(n), w);
    const auto& U = hist[n];
    const auto& P = hist[n - 1];
    const double s = ctx.params.sigma, ts = star_point(ctx.mesh, n, s);

    GridFunction2D star(ctx.grid);
    for (std::size_t k = 0; k < star.size(); ++k) star[k] = s * U[k] + (1 - s) * P[k];
    const auto Lstar = apply_laplacian(star, spec.nu);
    const auto AU = sys.apply(U);
    const Eigen::VectorXd AUs = sys.matrix * U.vec();
    for (int j = 1; j <= ctx.grid.ny(); ++j)
        for (int i = 1; i <= ctx.grid.nx(); ++i) {
            const std::size_t k = U.index(i, j);
            double delta = 0.0;
            for (int m = 1; m <= n; ++m) delta += w.g[m - 1] * (hist[m][k] - hist[m - 1][k]);
            const double lin = spec.reaction(P[k]) + s * spec.reaction.derivative(P[k]) * (U[k] - P[k]);
            const double scheme = delta + Lstar[k] - lin - spec.source(ctx.grid.x(i), ctx.grid.y(j), ts);
            EXPECT_NEAR(AU[k] - sys.rhs[k], scheme, 1e-11);
            EXPECT_NEAR(AUs[k], AU[k], 1e-11);
        }
}

TEST(AssembleStep, ReducesToShiftedLaplacianWithoutReaction) {
    auto spec = small_spec(5, 8);
    const auto ctx = StepContext::from(spec);
    const auto hist = random_history(ctx.grid, 2, 3);
    const auto sys = assemble_step(ctx, spec, 2, hist, assemble_weights(2, ctx.mesh, ctx.params));
    Eigen::SparseMatrix<double> I(ctx.grid.interior_count(), ctx.grid.interior_count());
    I.setIdentity();
    const Eigen::SparseMatrix<double> want = sys.lead * I + ctx.params.sigma * ctx.laplacian;
    EXPECT_LT((sys.matrix - want).norm(), 1e-12 * want.norm());
    const Eigen::SparseMatrix<double> At = sys.matrix.transpose();
    EXPECT_EQ((sys.matrix - At).norm(), 0.0);
}

TEST(AssembleStep, IndexMismatch) {
    auto spec = small_spec(4, 8);
    const auto ctx = StepContext::from(spec);
    const auto hist = random_history(ctx.grid, 3, 1);
    EXPECT_THROW(assemble_step(ctx, spec, 3, hist, assemble_weights(2, ctx.mesh, ctx.params)), ValidationError);
    EXPECT_THROW(assemble_step(ctx, spec, 5, hist, assemble_weights(5, ctx.mesh, ctx.params)), ValidationError);
}

TEST(SolveStep, DiagonalLimit) {
    auto spec = small_spec(6, 4);
    const auto ctx = StepContext::from(spec);
    StepSystem sys;
    sys.lead = 1e12;
    sys.sigma = 0.75;
    sys.nu = spec.nu;
    sys.reaction_diag = GridFunction2D(ctx.grid);
    sys.rhs = random_history(ctx.grid, 1, 5)[0];
    sys.guess = GridFunction2D(ctx.grid);
    sys.matrix = detail::shifted_matrix(ctx, sys.lead, sys.sigma, sys.reaction_diag);
    const auto x = solve_step(sys);
    for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(x[k], sys.rhs[k] / 1e12, 1e-9 * std::abs(sys.rhs[k]) / 1e12);
}

TEST(SolveStep, MatchesDenseOracle) {
    auto spec = small_spec(4, 8);
    const auto ctx = StepContext::from(spec);
    const auto hist = random_history(ctx.grid, 4, 9);
    const auto sys = assemble_step(ctx, spec, 4, hist, assemble_weights(4, ctx.mesh, ctx.params));
    // Dense matrix rebuilt from the stencil, independent of the sparse assembly.
    const int n = ctx.grid.interior_count();
    Eigen::MatrixXd D(n, n);
    for (int c = 0; c < n; ++c) {
        GridFunction2D e(ctx.grid);
        e[c] = 1.0;
        D.col(c) = sys.apply(e).vec();
    }
    const Eigen::VectorXd want = D.fullPivLu().solve(sys.rhs.vec());
    LinearSolveStats st;
    const auto x = solve_step(sys, {}, &st);
    EXPECT_FALSE(st.used_fallback);
    EXPECT_LE(st.residual, 1e-12);
    EXPECT_LE((x.vec() - want).norm(), 1e-12 * want.norm());
}

TEST(SolveStep, IndefiniteUsesFallback) {
    auto spec = small_spec(8, 4);
    const double c = 57.3;  // sigma c sits inside the spectrum of lead + sigma L_h
    spec.reaction = Reaction::linear(c);
    const auto ctx = StepContext::from(spec);
    const auto hist = random_history(ctx.grid, 1, 4);
    const auto sys = assemble_step(ctx, spec, 1, hist, assemble_weights(1, ctx.mesh, ctx.params));
    const Eigen::MatrixXd D(sys.matrix);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(D);
    ASSERT_LT(eig.eigenvalues().minCoeff(), 0.0);
    ASSERT_GT(eig.eigenvalues().maxCoeff(), 0.0);
    LinearSolveStats st;
    const auto x = solve_step(sys, {}, &st);
    EXPECT_LE(st.residual, 1e-12);
    EXPECT_LE(relative_residual(sys, x), 1e-12);
    SolverOptions direct;
    direct.direct_only = true;
    const auto y = solve_step(sys, direct, &st);
    EXPECT_TRUE(st.used_fallback);
    EXPECT_LE(relative_residual(sys, y), 1e-12);
}

TEST(SolveStep, SingularMatrixAbortsWithStep) {
    auto spec = small_spec(2, 4);
    const auto ctx = StepContext::from(spec);
    StepSystem sys;
    sys.step = 7;
    sys.lead = 0.0;
    sys.sigma = 0.75;
    sys.nu = spec.nu;
    sys.reaction_diag = GridFunction2D(ctx.grid, 0.75 * ctx.laplacian.coeff(0, 0));
    sys.rhs = GridFunction2D(ctx.grid, 1.0);
    sys.guess = GridFunction2D(ctx.grid);
    sys.matrix = detail::shifted_matrix(ctx, 0.0, 0.75, sys.reaction_diag);
    try {
        solve_step(sys);
        FAIL() << "expected a numerical error";
    } catch (const NumericalError& e) {
        EXPECT_EQ(e.step(), 7);
    }
}

TEST(SolveStep, DirectOnlyPath) {
    auto spec = small_spec(6, 4);
    const auto ctx = StepContext::from(spec);
    const auto hist = random_history(ctx.grid, 2, 8);
    const auto sys = assemble_step(ctx, spec, 2, hist, assemble_weights(2, ctx.mesh, ctx.params));
    SolverOptions opt;
    opt.direct_only = true;
    LinearSolveStats st;
    const auto x = solve_step(sys, opt, &st);
    EXPECT_TRUE(st.used_fallback);
    EXPECT_LE(st.residual, 1e-12);
    EXPECT_LE((x.vec() - solve_step(sys).vec()).norm(), 1e-11 * x.vec().norm());
}

TEST(March, ZeroDataStaysZero) {
    auto spec = small_spec(8, 32);
    spec.reaction = Reaction::allen_cahn();
    const auto sol = march(spec);
    ASSERT_EQ(sol.trajectory.size(), 33u);
    for (const auto& u : sol.trajectory)
        for (double v : u.values()) EXPECT_EQ(v, 0.0);
}

TEST(March, InitialValueSampled) {
    const auto spec = example2(0.5, 2.0, 8, 6);
    const auto sol = march(spec);
    EXPECT_EQ(sol.trajectory.front(), GridFunction2D::sample(sol.grid, spec.initial));
    EXPECT_EQ(sol.solves.size(), 8u);
    EXPECT_EQ(sol.step_seconds.size(), 8u);
    for (const auto& st : sol.solves) EXPECT_LE(st.residual, 1e-12);
}

TEST(March, Deterministic) {
    const auto spec = example1(0.4, 2.0, 32, 10);
    const auto a = march(spec), b = march(spec);
    for (std::size_t n = 0; n < a.trajectory.size(); ++n) EXPECT_EQ(a.trajectory[n], b.trajectory[n]);
}

TEST(March, ExampleOneFinalError) {
    const auto spec = example1(0.5, 2.0, 64, 25);
    const auto es = error_series(march(spec), spec);
    EXPECT_NEAR(es.local, 1.8993e-07, 0.05 * 1.8993e-07);
}

TEST(March, ExampleTwoBounded) {
    for (double alpha : {0.3, 0.7}) {
        const auto spec = example2(alpha, 2.0, 64, 16);
        const auto sol = march(spec);
        const double bound = max_norm(sol.trajectory.front()) + 1.0;
        for (const auto& u : sol.trajectory) EXPECT_LE(max_norm(u), bound);
    }
}

TEST(March, LinearOracle) {
    auto spec = small_spec(8, 32);
    const double c = -0.7;
    spec.reaction = Reaction::linear(c);
    spec.initial = [](double x, double y) { return std::sin(std::numbers::pi * x) * x * y * (1 - y); };
    spec.source = [](double x, double y, double t) { return x * y * std::cos(t); };
    const auto a = march(spec), b = march_linear(spec, c);
    for (std::size_t n = 0; n < a.trajectory.size(); ++n) {
        const double scale = std::max(1e-300, b.trajectory[n].vec().norm());
        EXPECT_LE((a.trajectory[n].vec() - b.trajectory[n].vec()).norm(), 1e-13 * scale) << "n=" << n;
    }
}

TEST(March, WarnsBeyondAnalysedGrading) {
    auto spec = small_spec(4, 8);
    EXPECT_TRUE(march(spec).warnings.empty());
    spec.r = 9.0;  // r >= 4/alpha
    const auto sol = march(spec);
    ASSERT_FALSE(sol.warnings.empty());
    EXPECT_NE(sol.warnings.front().find("4/alpha"), std::string::npos);
}

TEST(March, LambdaConditionWarnsOnce) {
    auto spec = small_spec(4, 4, 1.0);
    spec.reaction = Reaction::linear(50.0);
    const auto sol = march(spec);
    ASSERT_EQ(sol.warnings.size(), 1u);
    EXPECT_NE(sol.warnings[0].find("comparison-principle"), std::string::npos);
}

TEST(March, InvalidProblemRejected) {
    auto spec = small_spec(4, 8);
    spec.nu = 0.0;
    EXPECT_THROW(march(spec), ValidationError);
    auto e = example1(0.5, 2.0, 8, 4);
    e.initial = [](double, double) { return 1.0; };
    EXPECT_THROW(march(e), ValidationError);
}

TEST(Checkpoint, RoundTrip) {
    const auto spec = example1(0.5, 2.0, 8, 5);
    const auto sol = march(spec);
    std::stringstream ss;
    write_checkpoint(ss, spec, sol);
    EXPECT_EQ(ss.str().size(), 8 + 8 + 8 + 8 + 12 + 9 * 16 * 8u);
    const auto c = read_checkpoint(ss);
    EXPECT_EQ(c.header.spec_hash, spec.hash());
    EXPECT_EQ(c.header.alpha, 0.5);
    EXPECT_EQ(c.header.N, 8u);
    EXPECT_EQ(c.header.M1, 5u);
    ASSERT_EQ(c.steps.size(), 9u);
    for (std::size_t n = 0; n < 9; ++n) EXPECT_EQ(GridFunction2D(sol.grid, c.steps[n]), sol.trajectory[n]);
}

TEST(Checkpoint, LittleEndianHeader) {
    const auto spec = example1(0.5, 2.0, 2, 2);
    std::stringstream ss;
    write_checkpoint(ss, spec, march(spec));
    const std::string s = ss.str();
    EXPECT_EQ(s.substr(0, 8), "FSTPCKP1");
    EXPECT_EQ(static_cast<unsigned char>(s[32]), 2u);  // N, little-endian
    EXPECT_EQ(s[33], 0);
}

TEST(Checkpoint, RejectsGarbage) {
    std::stringstream bad("NOTACKPT");
    EXPECT_THROW(read_checkpoint(bad), ValidationError);
    const auto spec = example1(0.5, 2.0, 4, 4);
    std::stringstream ss;
    write_checkpoint(ss, spec, march(spec));
    std::string s = ss.str();
    std::stringstream cut(s.substr(0, s.size() - 3));
    EXPECT_THROW(read_checkpoint(cut), ValidationError);
}

TEST(ProblemSpecTest, HashStable) {
    const auto a = example1(0.5, 2.0, 64, 25), b = example1(0.5, 2.0, 64, 25);
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_NE(a.hash(), example1(0.5, 2.0, 128, 25).hash());
    EXPECT_EQ(a.hash_hex().size(), 16u);
}

TEST(ProblemSpecTest, ReactionDerivativesConsistent) {
    for (const auto& f : {Reaction::allen_cahn(), Reaction::logistic(), Reaction::linear(3.0), Reaction::none()})
        EXPECT_LT(reaction_consistency_error(f, -2.0, 2.0), 1e-7) << f.name;
}

TEST(ProblemSpecTest, ManufacturedSourceResidual) {
    // The source must close the equation for the exact solution.
    const auto spec = example1(0.5, 2.0, 8, 8);
    const auto& ex = *spec.exact;
    for (double t : {0.01, 0.2, 0.5}) {
        const double x = 0.3, y = 0.6;
        const double res = ex.caputo(x, y, t) + ex.Lu(x, y, t) - spec.reaction(ex.u(x, y, t)) - spec.source(x, y, t);
        EXPECT_NEAR(res, 0.0, 1e-15);
        // -nu Delta u via finite differences of u.
        const double h = 1e-4;
        const double lap = (ex.u(x + h, y, t) + ex.u(x - h, y, t) + ex.u(x, y + h, t) + ex.u(x, y - h, t) -
                            4 * ex.u(x, y, t)) / (h * h);
        EXPECT_NEAR(ex.Lu(x, y, t), -0.1 * lap, 1e-7);
    }
}
