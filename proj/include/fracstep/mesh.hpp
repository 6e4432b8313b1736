#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "fracstep/errors.hpp"

namespace fracstep {

/**
 * Temporal mesh 0 = t_0 < t_1 < ... < t_N = T.
 *
 * Steps and ratios use the 1-based convention of the analysis:
 * tau(j) = t_j - t_{j-1} for j = 1..N and rho(j) = tau(j+1)/tau(j) for
 * j = 1..N-1. Immutable after construction.
 */
class TemporalMesh {
public:
    /// Standard graded mesh t_n = T (n/N)^r.
    static TemporalMesh graded(double T, int N, double r) {
        if (N < 1) throw ValidationError("graded mesh: N must be >= 1, got " + std::to_string(N));
        if (!(r >= 1.0)) throw ValidationError("graded mesh: grading exponent r must be >= 1, got " + std::to_string(r));
        if (!(T > 0.0)) throw ValidationError("graded mesh: final time T must be > 0, got " + std::to_string(T));
        std::vector<double> pts(static_cast<std::size_t>(N) + 1);
        for (int n = 0; n <= N; ++n) {
            pts[n] = T * std::pow(static_cast<double>(n) / N, r);
        }
        pts[N] = T;
        return TemporalMesh(std::move(pts), r);
    }

    /// Explicit point list (quasi-graded or adversarial meshes).
    static TemporalMesh from_points(std::vector<double> pts) {
        if (pts.size() < 2) throw ValidationError("mesh needs at least two points");
        if (pts.front() != 0.0) throw ValidationError("mesh must start at t_0 = 0");
        for (std::size_t n = 1; n < pts.size(); ++n) {
            if (!(pts[n] > pts[n - 1])) {
                throw ValidationError("mesh points must be strictly increasing (violated at n = " +
                                      std::to_string(n) + ")");
            }
        }
        return TemporalMesh(std::move(pts), std::numeric_limits<double>::quiet_NaN());
    }

    int N() const { return static_cast<int>(points_.size()) - 1; }
    double T() const { return points_.back(); }
    /// Grading exponent; NaN for meshes built from an explicit point list.
    double r() const { return r_; }
    bool is_standard_graded() const { return !std::isnan(r_); }

    double t(int n) const { return points_[n]; }
    double tau(int j) const { return steps_[j - 1]; }
    double rho(int j) const { return steps_[j] / steps_[j - 1]; }
    double max_step() const { return *std::max_element(steps_.begin(), steps_.end()); }

    const std::vector<double>& points() const { return points_; }
    const std::vector<double>& steps() const { return steps_; }

private:
    TemporalMesh(std::vector<double> pts, double r) : points_(std::move(pts)), r_(r) {
        steps_.resize(points_.size() - 1);
        for (std::size_t j = 1; j < points_.size(); ++j) steps_[j - 1] = points_[j] - points_[j - 1];
    }

    std::vector<double> points_;
    std::vector<double> steps_;
    double r_;
};

inline TemporalMesh build_graded_mesh(double T, int N, double r) { return TemporalMesh::graded(T, N, r); }

/// Step-ratio hypotheses under which the Alikhanov weights are known to be
/// positive, monotone and bounded below by the averaged kernel.
struct MeshReport {
    double sigma = 0.0;
    double rho_min = 1.0;
    double rho_max = 1.0;
    bool monotone = true;          // rho_{j-1} >= rho_j
    bool lower_ratio_ok = true;    // rho_j >= 0.618
    double max_inverse_ratio = 1.0;  // max tau_j / tau_{j+1}
    bool upper_ratio_ok = true;    // max_inverse_ratio <= 7/4

    static constexpr double kLowerRatio = 0.618;
    static constexpr double kUpperInverseRatio = 7.0 / 4.0;

    bool hypotheses_ok() const { return monotone && lower_ratio_ok; }
    bool all_ok() const { return monotone && lower_ratio_ok && upper_ratio_ok; }
};

/// Report-only; never throws on a valid mesh.
inline MeshReport validate_mesh(const TemporalMesh& mesh, double sigma) {
    // Uniform meshes produce ratios of 1 +- a few ulps; the monotonicity
    // comparison tolerates that much.
    constexpr double kRoundoff = 1e-12;
    MeshReport rep;
    rep.sigma = sigma;
    const int N = mesh.N();
    if (N < 2) return rep;
    rep.rho_min = std::numeric_limits<double>::infinity();
    rep.rho_max = 0.0;
    rep.max_inverse_ratio = 0.0;
    for (int j = 1; j <= N - 1; ++j) {
        const double rho = mesh.rho(j);
        rep.rho_min = std::min(rep.rho_min, rho);
        rep.rho_max = std::max(rep.rho_max, rho);
        rep.max_inverse_ratio = std::max(rep.max_inverse_ratio, 1.0 / rho);
        if (j >= 2 && mesh.rho(j - 1) < rho * (1.0 - kRoundoff)) rep.monotone = false;
    }
    rep.lower_ratio_ok = rep.rho_min >= MeshReport::kLowerRatio;
    rep.upper_ratio_ok = rep.max_inverse_ratio <= MeshReport::kUpperInverseRatio;
    return rep;
}

/// Uniform tensor grid on (0,L1) x (0,L2). Only interior nodes carry unknowns.
struct SpatialGrid {
    double L1 = 1.0;
    double L2 = 1.0;
    int M1 = 2;
    int M2 = 2;
    double h1 = 0.5;
    double h2 = 0.5;

    int nx() const { return M1 - 1; }
    int ny() const { return M2 - 1; }
    int interior_count() const { return nx() * ny(); }
    double x(int i) const { return i * h1; }
    double y(int j) const { return j * h2; }

    bool operator==(const SpatialGrid& o) const {
        return L1 == o.L1 && L2 == o.L2 && M1 == o.M1 && M2 == o.M2;
    }
};

inline SpatialGrid build_spatial_grid(double L1, double L2, int M1, int M2) {
    if (M1 < 2 || M2 < 2) {
        throw ValidationError("spatial grid needs M1, M2 >= 2 (got " + std::to_string(M1) + ", " +
                              std::to_string(M2) + ")");
    }
    if (!(L1 > 0.0) || !(L2 > 0.0)) throw ValidationError("spatial grid: domain lengths must be positive");
    SpatialGrid g;
    g.L1 = L1;
    g.L2 = L2;
    g.M1 = M1;
    g.M2 = M2;
    g.h1 = L1 / M1;
    g.h2 = L2 / M2;
    return g;
}

/// CSV columns: n, t_n, tau_n, rho_n (tau empty at n = 0, rho defined for 1..N-1).
inline void write_mesh_csv(std::ostream& os, const TemporalMesh& mesh) {
    char buf[128];
    os << "n,t_n,tau_n,rho_n\n";
    for (int n = 0; n <= mesh.N(); ++n) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,", n, mesh.t(n));
        os << buf;
        if (n >= 1) {
            std::snprintf(buf, sizeof buf, "%.17g", mesh.tau(n));
            os << buf;
        }
        os << ',';
        if (n >= 1 && n <= mesh.N() - 1) {
            std::snprintf(buf, sizeof buf, "%.17g", mesh.rho(n));
            os << buf;
        }
        os << '\n';
    }
}

}  // namespace fracstep
