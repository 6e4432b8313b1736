#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include "fracstep/caputo_kernel.hpp"
#include "fracstep/errors.hpp"
#include "fracstep/mesh.hpp"
#include "fracstep/problem.hpp"
#include "fracstep/spatial.hpp"

namespace fracstep {

struct SolverOptions {
    WeightMethod weights = WeightMethod::ClosedForm;
    /// Relative residual contract ||A U - rhs|| / ||rhs|| of every step.
    double tolerance = 1e-12;
    /// Run even if the mesh violates the ratio hypotheses (adds a warning).
    bool allow_unaudited_mesh = false;
    /// Skip the Krylov solve and go straight to the sparse LU.
    bool direct_only = false;
};

struct LinearSolveStats {
    int iterations = 0;
    double residual = 0.0;  // relative, recomputed with the stencil operator
    bool used_fallback = false;
};

/// Everything a step needs that does not change between steps.
struct StepContext {
    TemporalMesh mesh;
    SpatialGrid grid;
    SchemeParams params;
    double nu = 1.0;
    Eigen::SparseMatrix<double> laplacian;  // assembled L_h

    static StepContext from(const ProblemSpec& spec) {
        spec.validate();
        StepContext c{spec.mesh(), spec.grid(), spec.scheme(), spec.nu, {}};
        c.laplacian = laplacian_matrix(c.grid, spec.nu);
        return c;
    }
};

/// A_n U^n = rhs with A_n = g_{n-1,n-1} I + sigma L_h - diag(sigma N'(U^{n-1})).
struct StepSystem {
    int step = 0;
    double sigma = 1.0;
    double lead = 0.0;  // g_{n-1,n-1}
    double nu = 1.0;
    GridFunction2D reaction_diag;  // sigma N'(U^{n-1})
    GridFunction2D rhs;
    GridFunction2D guess;  // U^{n-1}
    Eigen::SparseMatrix<double> matrix;

    /// Matrix-free A_n x using the five-point stencil.
    GridFunction2D apply(const GridFunction2D& x) const {
        GridFunction2D out = apply_laplacian(x, nu);
        for (std::size_t k = 0; k < x.size(); ++k) {
            out[k] = lead * x[k] + sigma * out[k] - reaction_diag[k] * x[k];
        }
        return out;
    }
};

namespace detail {

/// sum_{j=1}^{n-1} g_{n-1,j-1} (U^j - U^{j-1}) nodewise.
inline GridFunction2D history_sum(const AlikhanovWeights& w, std::span<const GridFunction2D> history) {
    GridFunction2D sum(history.front().grid());
    const std::size_t m = sum.size();
    double* out = sum.data();
    for (int j = 1; j < w.n; ++j) {
        const double gj = w.g[j - 1];
        const double* cur = history[j].data();
        const double* prev = history[j - 1].data();
        for (std::size_t k = 0; k < m; ++k) out[k] += gj * (cur[k] - prev[k]);
    }
    return sum;
}

inline Eigen::SparseMatrix<double> shifted_matrix(const StepContext& ctx, double lead, double sigma,
                                                  const GridFunction2D& reaction_diag) {
    Eigen::SparseMatrix<double> a = sigma * ctx.laplacian;
    for (Eigen::Index k = 0; k < a.rows(); ++k) a.coeffRef(k, k) += lead - reaction_diag[k];
    return a;
}

inline void check_step_inputs(const StepContext& ctx, int n, std::span<const GridFunction2D> history,
                              const AlikhanovWeights& w) {
    if (w.n != n) {
        throw ValidationError("assemble_step: weights are for step " + std::to_string(w.n) + ", not " +
                              std::to_string(n));
    }
    if (n < 1 || n > ctx.mesh.N()) throw ValidationError("assemble_step: step index out of range");
    if (history.size() < static_cast<std::size_t>(n)) {
        throw ValidationError("assemble_step: history must hold U^0..U^{n-1}");
    }
}

}  // namespace detail

/// Newton-linearized step n: history holds U^0..U^{n-1}.
inline StepSystem assemble_step(const StepContext& ctx, const ProblemSpec& spec, int n,
                                std::span<const GridFunction2D> history, const AlikhanovWeights& w) {
    detail::check_step_inputs(ctx, n, history, w);
    const double sigma = ctx.params.sigma;
    const GridFunction2D& prev = history[n - 1];
    const double t_star = star_point(ctx.mesh, n, sigma);

    StepSystem sys;
    sys.step = n;
    sys.sigma = sigma;
    sys.lead = w.lead();
    sys.nu = ctx.nu;
    sys.guess = prev;
    sys.reaction_diag = GridFunction2D(ctx.grid);
    sys.rhs = detail::history_sum(w, history.first(n));
    const GridFunction2D lap_prev = apply_laplacian(prev, ctx.nu);
    const auto& g = ctx.grid;
    for (int j = 1; j <= g.ny(); ++j) {
        for (int i = 1; i <= g.nx(); ++i) {
            const std::size_t k = prev.index(i, j);
            const double u = prev[k];
            const double df = spec.reaction.derivative(u);
            sys.reaction_diag[k] = sigma * df;
            sys.rhs[k] = sys.lead * u - sys.rhs[k] - (1.0 - sigma) * lap_prev[k] + spec.reaction.value(u) -
                         sigma * df * u + spec.source(g.x(i), g.y(j), t_star);
        }
    }
    sys.matrix = detail::shifted_matrix(ctx, sys.lead, sigma, sys.reaction_diag);
    return sys;
}

/// Plain implicit step for the linear reaction N(u) = c u, written directly in
/// terms of U^{n,*}; algebraically identical to the Newton step for that case.
inline StepSystem assemble_linear_step(const StepContext& ctx, const ProblemSpec& spec, double c, int n,
                                       std::span<const GridFunction2D> history, const AlikhanovWeights& w) {
    detail::check_step_inputs(ctx, n, history, w);
    const double sigma = ctx.params.sigma;
    const GridFunction2D& prev = history[n - 1];
    const double t_star = star_point(ctx.mesh, n, sigma);

    StepSystem sys;
    sys.step = n;
    sys.sigma = sigma;
    sys.lead = w.lead();
    sys.nu = ctx.nu;
    sys.guess = prev;
    sys.reaction_diag = GridFunction2D(ctx.grid, sigma * c);
    sys.rhs = detail::history_sum(w, history.first(n));
    const GridFunction2D lap_prev = apply_laplacian(prev, ctx.nu);
    const auto& g = ctx.grid;
    for (int j = 1; j <= g.ny(); ++j) {
        for (int i = 1; i <= g.nx(); ++i) {
            const std::size_t k = prev.index(i, j);
            sys.rhs[k] = sys.lead * prev[k] - sys.rhs[k] + (1.0 - sigma) * (c * prev[k] - lap_prev[k]) +
                         spec.source(g.x(i), g.y(j), t_star);
        }
    }
    sys.matrix = detail::shifted_matrix(ctx, sys.lead, sigma, sys.reaction_diag);
    return sys;
}

inline double relative_residual(const StepSystem& sys, const GridFunction2D& x) {
    const GridFunction2D ax = sys.apply(x);
    double r2 = 0.0, b2 = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = ax[k] - sys.rhs[k];
        r2 += d * d;
        b2 += sys.rhs[k] * sys.rhs[k];
    }
    return b2 == 0.0 ? std::sqrt(r2) : std::sqrt(r2 / b2);
}

/**
 * Jacobi-preconditioned CG with a budget of 10x the unknown count; sparse LU
 * when CG misses the residual contract (e.g. indefinite A_n). Throws
 * NumericalError with the step index if both fail.
 */
inline GridFunction2D solve_step(const StepSystem& sys, const SolverOptions& opt = {},
                                 LinearSolveStats* stats = nullptr) {
    LinearSolveStats local;
    LinearSolveStats& st = stats ? *stats : local;
    st = {};
    const auto& grid = sys.rhs.grid();
    if (sys.rhs.vec().squaredNorm() == 0.0) return GridFunction2D(grid);

    GridFunction2D x(grid);
    if (!opt.direct_only) {
        Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                                 Eigen::DiagonalPreconditioner<double>>
            cg;
        // Tolerance applies to the recursive residual; the true one is checked below.
        cg.setTolerance(0.1 * opt.tolerance);
        cg.setMaxIterations(10 * static_cast<int>(sys.rhs.size()));
        cg.compute(sys.matrix);
        x.vec() = cg.solveWithGuess(sys.rhs.vec(), sys.guess.vec());
        st.iterations = static_cast<int>(cg.iterations());
        st.residual = relative_residual(sys, x);
        if (cg.info() == Eigen::Success && st.residual <= opt.tolerance) return x;
    }

    st.used_fallback = true;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(sys.matrix);
    if (lu.info() != Eigen::Success) {
        throw NumericalError("step " + std::to_string(sys.step) + ": system matrix is singular", sys.step);
    }
    x.vec() = lu.solve(sys.rhs.vec());
    st.residual = relative_residual(sys, x);
    if (lu.info() != Eigen::Success || !(st.residual <= opt.tolerance)) {
        throw NumericalError("step " + std::to_string(sys.step) + ": direct solve residual " +
                                 std::to_string(st.residual) + " misses the contract",
                             sys.step);
    }
    return x;
}

struct Solution {
    TemporalMesh mesh = TemporalMesh::graded(1.0, 1, 1.0);
    SpatialGrid grid;
    std::vector<GridFunction2D> trajectory;  // U^0..U^N
    std::vector<LinearSolveStats> solves;    // index n-1 for step n
    std::vector<double> step_seconds;
    std::vector<std::string> warnings;

    const GridFunction2D& final() const { return trajectory.back(); }
};

namespace detail {

template <class AssembleFn>
Solution march_with(const ProblemSpec& spec, const SolverOptions& opt, AssembleFn&& assemble) {
    StepContext ctx = StepContext::from(spec);
    Solution sol;
    sol.mesh = ctx.mesh;
    sol.grid = ctx.grid;

    const MeshReport report = validate_mesh(ctx.mesh, ctx.params.sigma);
    if (!report.all_ok()) {
        if (!opt.allow_unaudited_mesh) {
            throw ValidationError("march: temporal mesh violates the step-ratio hypotheses");
        }
        sol.warnings.push_back("temporal mesh violates the step-ratio hypotheses; continuing on request");
    }
    if (spec.r >= 4.0 / spec.alpha) {
        sol.warnings.push_back("grading r >= 4/alpha is outside the analysed range");
    }

    const int N = ctx.mesh.N();
    sol.trajectory.reserve(static_cast<std::size_t>(N) + 1);
    sol.trajectory.push_back(GridFunction2D::sample(ctx.grid, spec.initial));
    sol.solves.reserve(N);
    sol.step_seconds.reserve(N);

    const double comparison_limit = 1.0 / (2.0 * std::tgamma(2.0 - ctx.params.alpha));
    const double tau_alpha = std::pow(ctx.mesh.max_step(), ctx.params.alpha);
    bool warned_lambda = false;

    for (int n = 1; n <= N; ++n) {
        const auto start = std::chrono::steady_clock::now();
        const AlikhanovWeights w = assemble_weights(n, ctx.mesh, ctx.params, opt.weights);
        const StepSystem sys = assemble(ctx, n, std::span<const GridFunction2D>(sol.trajectory), w);
        if (!warned_lambda) {
            double lambda = 0.0;
            for (double d : sys.reaction_diag.values()) lambda = std::max(lambda, d);
            if (lambda * tau_alpha > comparison_limit) {
                sol.warnings.push_back("step " + std::to_string(n) +
                                       ": reaction slope exceeds the comparison-principle step condition");
                warned_lambda = true;
            }
        }
        LinearSolveStats st;
        sol.trajectory.push_back(solve_step(sys, opt, &st));
        sol.solves.push_back(st);
        sol.step_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    return sol;
}

}  // namespace detail

/// Full Newton-linearized march U^0..U^N.
inline Solution march(const ProblemSpec& spec, const SolverOptions& opt = {}) {
    return detail::march_with(spec, opt, [&spec](const StepContext& ctx, int n, std::span<const GridFunction2D> h,
                                                 const AlikhanovWeights& w) {
        return assemble_step(ctx, spec, n, h, w);
    });
}

/// March for N(u) = c u through the plain implicit linear step.
inline Solution march_linear(const ProblemSpec& spec, double c, const SolverOptions& opt = {}) {
    return detail::march_with(spec, opt, [&spec, c](const StepContext& ctx, int n, std::span<const GridFunction2D> h,
                                                    const AlikhanovWeights& w) {
        return assemble_linear_step(ctx, spec, c, n, h, w);
    });
}

// Trajectory checkpoint: little-endian binary.
//   magic "FSTPCKP1" | u64 spec hash | f64 alpha | f64 r | u32 N | u32 M1 | u32 M2
//   then N+1 blocks of (M1-1)(M2-1) f64 interior values, row-major, x fastest.
struct CheckpointHeader {
    std::uint64_t spec_hash = 0;
    double alpha = 0.0;
    double r = 0.0;
    std::uint32_t N = 0;
    std::uint32_t M1 = 0;
    std::uint32_t M2 = 0;
};

struct Checkpoint {
    CheckpointHeader header;
    std::vector<std::vector<double>> steps;
};

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(b, 8);
}
inline void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(b, 4);
}
inline void put_f64(std::ostream& os, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(os, v);
}
inline std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw ValidationError("checkpoint: truncated stream");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}
inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw ValidationError("checkpoint: truncated stream");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}
inline double get_f64(std::istream& is) {
    const std::uint64_t v = get_u64(is);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

inline constexpr char kCheckpointMagic[8] = {'F', 'S', 'T', 'P', 'C', 'K', 'P', '1'};

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const ProblemSpec& spec, const Solution& sol) {
    os.write(detail::kCheckpointMagic, 8);
    detail::put_u64(os, spec.hash());
    detail::put_f64(os, spec.alpha);
    detail::put_f64(os, spec.r);
    detail::put_u32(os, static_cast<std::uint32_t>(sol.mesh.N()));
    detail::put_u32(os, static_cast<std::uint32_t>(sol.grid.M1));
    detail::put_u32(os, static_cast<std::uint32_t>(sol.grid.M2));
    for (const auto& u : sol.trajectory)
        for (double v : u.values()) detail::put_f64(os, v);
}

inline Checkpoint read_checkpoint(std::istream& is) {
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0) {
        throw ValidationError("checkpoint: bad magic");
    }
    Checkpoint c;
    c.header.spec_hash = detail::get_u64(is);
    c.header.alpha = detail::get_f64(is);
    c.header.r = detail::get_f64(is);
    c.header.N = detail::get_u32(is);
    c.header.M1 = detail::get_u32(is);
    c.header.M2 = detail::get_u32(is);
    if (c.header.M1 < 2 || c.header.M2 < 2) throw ValidationError("checkpoint: invalid grid size");
    const std::size_t block = static_cast<std::size_t>(c.header.M1 - 1) * (c.header.M2 - 1);
    c.steps.resize(static_cast<std::size_t>(c.header.N) + 1);
    for (auto& s : c.steps) {
        s.resize(block);
        for (auto& v : s) v = detail::get_f64(is);
    }
    return c;
}

}  // namespace fracstep
