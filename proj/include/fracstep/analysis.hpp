#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fracstep/caputo_kernel.hpp"
#include "fracstep/errors.hpp"
#include "fracstep/problem.hpp"
#include "fracstep/solver.hpp"
#include "fracstep/spatial.hpp"

namespace fracstep {

/// L2 errors e^n = u(t_n) - U^n along a march.
struct ErrorSeries {
    std::vector<double> times;     // t_0..t_N
    std::vector<double> per_step;  // ||e^n||, n = 0..N
    double local = 0.0;            // E_L = ||e^N||
    double global = 0.0;           // E_G = max_{n>=1} ||e^n||
};

inline ErrorSeries error_series(const Solution& sol, const ExactSolution& exact) {
    ErrorSeries es;
    const int N = sol.mesh.N();
    es.times = sol.mesh.points();
    es.per_step.resize(static_cast<std::size_t>(N) + 1);
    for (int n = 0; n <= N; ++n) {
        const double t = sol.mesh.t(n);
        const auto ref = GridFunction2D::sample(sol.grid, [&](double x, double y) { return exact.u(x, y, t); });
        es.per_step[n] = l2_norm(difference(ref, sol.trajectory[n]));
        if (n >= 1) es.global = std::max(es.global, es.per_step[n]);
    }
    es.local = es.per_step[N];
    return es;
}

inline ErrorSeries error_series(const Solution& sol, const ProblemSpec& spec) {
    if (!spec.exact) throw ValidationError("error_series: problem '" + spec.name + "' has no exact solution");
    return error_series(sol, *spec.exact);
}

/// ||U^N - V^{2N}|| at the shared final time T, where V lives on the graded
/// mesh with twice the steps and the same spatial grid.
inline double two_mesh_error(ProblemSpec spec, int N, const SolverOptions& opt = {}) {
    spec.N = N;
    const Solution coarse = march(spec, opt);
    spec.N = 2 * N;
    const Solution fine = march(spec, opt);
    return l2_norm(difference(coarse.final(), fine.final()));
}

/// Final-time difference between two checkpoints written on the same grid.
inline double two_mesh_error(const Checkpoint& coarse, const Checkpoint& fine, const SpatialGrid& grid) {
    if (coarse.header.M1 != fine.header.M1 || coarse.header.M2 != fine.header.M2 ||
        static_cast<int>(coarse.header.M1) != grid.M1 || static_cast<int>(coarse.header.M2) != grid.M2) {
        throw ValidationError("two_mesh_error: checkpoints were written on different spatial grids");
    }
    return l2_norm(difference(GridFunction2D(grid, coarse.steps.back()), GridFunction2D(grid, fine.steps.back())));
}

// ---------------------------------------------------------------------------
// Convergence orders

/// Final-time order min{r, 2}. At r = 3 - alpha the rate carries an
/// epsilon loss, (1-eps) r, which still exceeds 2 for alpha in (0,1).
inline double expected_local_order(double /*alpha*/, double r) { return std::min(r, 2.0); }

/// Order of max_n ||e^n||: min{alpha r, 2}.
inline double expected_global_order(double alpha, double r) { return std::min(alpha * r, 2.0); }

struct OrderSeries {
    std::vector<double> errors;
    std::vector<std::optional<double>> orders;  // orders[k] pairs N_{k-1} and N_k; orders[0] empty
    double expected = 0.0;

    /// Smallest order - expected over the defined orders.
    double worst_margin() const {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& o : orders)
            if (o) m = std::min(m, *o - expected);
        return m;
    }
};

/// Pairwise log2(E(N_k)/E(N_{k+1})) over a doubling N list.
inline OrderSeries fit_orders(std::span<const int> Ns, std::span<const double> errors, double expected = 0.0) {
    if (Ns.size() != errors.size()) throw ValidationError("fit_orders: N list and error list differ in length");
    if (Ns.size() < 2) throw ValidationError("fit_orders: need at least two N values");
    for (std::size_t k = 1; k < Ns.size(); ++k) {
        if (Ns[k] != 2 * Ns[k - 1]) throw ValidationError("fit_orders: N values must double");
    }
    OrderSeries s;
    s.errors.assign(errors.begin(), errors.end());
    s.expected = expected;
    s.orders.resize(Ns.size());
    for (std::size_t k = 1; k < Ns.size(); ++k) {
        const double prev = errors[k - 1], cur = errors[k];
        if (cur > 0.0 && prev > 0.0 && std::isfinite(cur) && std::isfinite(prev)) {
            s.orders[k] = std::log2(prev / cur);
        }
    }
    return s;
}

struct ConvergenceReport {
    std::string example;
    double alpha = 0.0;
    double r = 0.0;
    std::string r_label;
    int M = 0;
    std::vector<int> Ns;
    OrderSeries local;
    std::optional<OrderSeries> global;  // only with an exact solution
    double h2_floor = 0.0;              // h1^2 + h2^2
    std::vector<std::string> hashes;    // provenance per N
    std::vector<bool> failed;           // march failure per N
};

// ---------------------------------------------------------------------------
// Truncation oracles

/// min{alpha+1, (3-alpha)/r}, the decay exponent of the Caputo truncation error.
inline double r1_exponent(double alpha, double r) { return std::min(alpha + 1.0, (3.0 - alpha) / r); }

struct TruncationFit {
    std::vector<double> residual;  // |r^n|, n = 1..N (index 0 unused)
    std::vector<double> bound;     // shape of the bound at step n
    double max_abs = 0.0;
    double fitted_constant = 0.0;  // max_n residual/bound
};

/**
 * r_1^n = delta u(t_n) - D_t^alpha u(t_n^*) for the scalar profile u = t^beta,
 * fitted against (tau_1/t_n)^{min{alpha+1,(3-alpha)/r}}.
 */
inline TruncationFit truncation_r1_oracle(double alpha, double r, int N, double beta, double T = 1.0) {
    const auto mesh = build_graded_mesh(T, N, r);
    const auto p = SchemeParams::alikhanov(alpha);
    const double exponent = r1_exponent(alpha, r);
    const double caputo_scale = std::tgamma(beta + 1.0) / std::tgamma(beta + 1.0 - alpha);
    std::vector<double> u(static_cast<std::size_t>(N) + 1);
    for (int n = 0; n <= N; ++n) u[n] = std::pow(mesh.t(n), beta);

    TruncationFit fit;
    fit.residual.assign(N + 1, 0.0);
    fit.bound.assign(N + 1, 0.0);
    for (int n = 1; n <= N; ++n) {
        const auto w = assemble_weights(n, mesh, p);
        const double discrete = apply_discrete_derivative(w, std::span<const double>(u.data(), n + 1));
        const double exact = caputo_scale * std::pow(star_point(mesh, n, p.sigma), beta - alpha);
        fit.residual[n] = std::abs(discrete - exact);
        fit.bound[n] = std::pow(mesh.tau(1) / mesh.t(n), exponent);
        fit.max_abs = std::max(fit.max_abs, fit.residual[n]);
        fit.fitted_constant = std::max(fit.fitted_constant, fit.residual[n] / fit.bound[n]);
    }
    return fit;
}

/// Nonlinear and spatial truncation at one step, maximised over nodes.
/// r2 is split as [L_h u^{n,*} - L u^{n,*}] + [L u^{n,*} - L u(t*)], the
/// spatial and temporal parts, each with its own bound shape.
struct StepTruncation {
    double r3 = 0.0;        // |N(u(t*)) - N(u^{n-1}) - sigma N'(u^{n-1})(u^n - u^{n-1})|
    double r2 = 0.0;        // |L_h u^{n,*} - L u(t*)|
    double r2_time = 0.0;   // |L u^{n,*} - L u(t*)|
    double r2_space = 0.0;  // |L_h u^{n,*} - L u^{n,*}|
    double bound3 = 0.0;    // tau_n^2 t_n^{alpha-2}
    double bound2 = 0.0;    // tau_n^2 t_n^{alpha-2} + h1^2 + h2^2
    double h_sq = 0.0;      // h1^2 + h2^2
};

inline StepTruncation truncation_r3_oracle(const ProblemSpec& spec, int n) {
    if (!spec.exact) throw ValidationError("truncation oracle: problem '" + spec.name + "' has no exact solution");
    const auto mesh = spec.mesh();
    const auto grid = spec.grid();
    const auto p = spec.scheme();
    if (n < 1 || n > mesh.N()) throw ValidationError("truncation oracle: step out of range");
    const auto& ex = *spec.exact;
    const double t_prev = mesh.t(n - 1), t_cur = mesh.t(n), t_star = star_point(mesh, n, p.sigma);
    const auto u_prev = GridFunction2D::sample(grid, [&](double x, double y) { return ex.u(x, y, t_prev); });
    const auto u_cur = GridFunction2D::sample(grid, [&](double x, double y) { return ex.u(x, y, t_cur); });
    GridFunction2D u_mix(grid);
    for (std::size_t k = 0; k < u_mix.size(); ++k) u_mix[k] = p.sigma * u_cur[k] + (1.0 - p.sigma) * u_prev[k];
    const auto lap_mix = apply_laplacian(u_mix, spec.nu);

    StepTruncation out;
    const auto& f = spec.reaction;
    for (int j = 1; j <= grid.ny(); ++j) {
        for (int i = 1; i <= grid.nx(); ++i) {
            const std::size_t k = u_mix.index(i, j);
            const double x = grid.x(i), y = grid.y(j);
            const double r3 = f(ex.u(x, y, t_star)) - f(u_prev[k]) - p.sigma * f.derivative(u_prev[k]) * (u_cur[k] - u_prev[k]);
            const double Lu_mix = p.sigma * ex.Lu(x, y, t_cur) + (1.0 - p.sigma) * ex.Lu(x, y, t_prev);
            const double Lu_star = ex.Lu(x, y, t_star);
            out.r3 = std::max(out.r3, std::abs(r3));
            out.r2 = std::max(out.r2, std::abs(lap_mix[k] - Lu_star));
            out.r2_time = std::max(out.r2_time, std::abs(Lu_mix - Lu_star));
            out.r2_space = std::max(out.r2_space, std::abs(lap_mix[k] - Lu_mix));
        }
    }
    out.bound3 = mesh.tau(n) * mesh.tau(n) * std::pow(t_cur, spec.alpha - 2.0);
    out.h_sq = grid.h1 * grid.h1 + grid.h2 * grid.h2;
    out.bound2 = out.bound3 + out.h_sq;
    return out;
}

struct NonlinearTruncationFit {
    TruncationFit r3;
    TruncationFit r2;        // against tau_n^2 t_n^{alpha-2} + h1^2 + h2^2
    TruncationFit r2_time;   // against tau_n^2 t_n^{alpha-2}
    TruncationFit r2_space;  // against h1^2 + h2^2
};

inline NonlinearTruncationFit truncation_r3_study(const ProblemSpec& spec) {
    const int N = spec.N;
    NonlinearTruncationFit fit;
    const auto all = {&fit.r3, &fit.r2, &fit.r2_time, &fit.r2_space};
    for (TruncationFit* f : all) {
        f->residual.assign(N + 1, 0.0);
        f->bound.assign(N + 1, 0.0);
    }
    for (int n = 1; n <= N; ++n) {
        const StepTruncation s = truncation_r3_oracle(spec, n);
        fit.r3.residual[n] = s.r3;
        fit.r3.bound[n] = s.bound3;
        fit.r2.residual[n] = s.r2;
        fit.r2.bound[n] = s.bound2;
        fit.r2_time.residual[n] = s.r2_time;
        fit.r2_time.bound[n] = s.bound3;
        fit.r2_space.residual[n] = s.r2_space;
        fit.r2_space.bound[n] = s.h_sq;
        for (TruncationFit* f : all) {
            f->max_abs = std::max(f->max_abs, f->residual[n]);
            f->fitted_constant = std::max(f->fitted_constant, f->residual[n] / f->bound[n]);
        }
    }
    return fit;
}

/// Largest ratio max(C_k/C_{k+1}, C_{k+1}/C_k) between consecutive fitted
/// constants; 1 means perfectly stable.
inline double constant_drift(std::span<const double> constants) {
    double worst = 1.0;
    for (std::size_t k = 1; k < constants.size(); ++k) {
        const double a = constants[k - 1], b = constants[k];
        if (!(a > 0.0) || !(b > 0.0)) return std::numeric_limits<double>::infinity();
        worst = std::max(worst, std::max(a / b, b / a));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Pointwise-in-time envelope for 2/(alpha+1) < r < 3-alpha

inline double error_envelope(const TemporalMesh& mesh, double alpha, double r, double h_sq, int n) {
    const double tau1 = mesh.tau(1);
    const double t = mesh.t(n);
    return tau1 * std::pow(t, alpha - 1.0) + std::pow(tau1, 2.0 / r) * std::pow(t, 2.0 * alpha - 2.0 / r) +
           h_sq * std::pow(t, alpha);
}

/// max_n ||e^n|| / envelope(n).
inline double fit_envelope(const ErrorSeries& es, const TemporalMesh& mesh, double alpha, double r, double h_sq) {
    double c = 0.0;
    for (int n = 1; n <= mesh.N(); ++n) c = std::max(c, es.per_step[n] / error_envelope(mesh, alpha, r, h_sq, n));
    return c;
}

}  // namespace fracstep
