#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fracstep/errors.hpp"
#include "fracstep/mesh.hpp"
#include "fracstep/quadrature.hpp"

namespace fracstep {

/// Fractional order and the offset parameter of the L2-1sigma stencil.
struct SchemeParams {
    double alpha = 0.5;
    double sigma = 0.75;

    /// sigma = 1 - alpha/2, the choice that makes the stencil second order.
    static SchemeParams alikhanov(double alpha) {
        SchemeParams p{alpha, 1.0 - alpha / 2.0};
        p.validate();
        return p;
    }

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0)) {
            throw ValidationError("fractional order alpha must lie in (0,1), got " + std::to_string(alpha));
        }
        if (!(sigma >= 0.5 && sigma <= 1.0)) {
            throw ValidationError("offset sigma must lie in [1/2, 1], got " + std::to_string(sigma));
        }
    }

    bool is_alikhanov() const { return sigma == 1.0 - alpha / 2.0; }
};

/// Offset point t_n^* = t_n - (1 - sigma) tau_n, n >= 1.
inline double star_point(const TemporalMesh& mesh, int n, double sigma) {
    return mesh.t(n) - (1.0 - sigma) * mesh.tau(n);
}

enum class WeightMethod { ClosedForm, Quadrature };

inline const char* to_string(WeightMethod m) {
    return m == WeightMethod::ClosedForm ? "closed-form" : "quadrature";
}

namespace detail {

/// (near + gap)^p - near^p without cancellation when gap << near.
inline double power_difference(double near, double gap, double p) {
    if (near == 0.0) return std::pow(gap, p);
    return std::pow(near, p) * std::expm1(p * std::log1p(gap / near));
}

/// -int_{-eps}^{eps} v (1+v)^{-alpha} dv for 0 <= eps < 1. The odd moment is
/// O(eps^3) while each antiderivative term is O(1), so small eps uses the
/// binomial series.
inline double odd_moment(double eps, double alpha) {
    if (eps <= 0.25) {
        double coeff = 1.0;  // binomial(-alpha, n)
        double power = eps * eps;  // eps^(n+1)
        double sum = 0.0;
        for (int n = 1; n < 200; ++n) {
            coeff *= (-alpha - n + 1.0) / n;
            power *= eps;
            if (n % 2 == 1) {
                const double term = -coeff * 2.0 * power / (n + 2.0);
                sum += term;
                if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
            }
        }
        return sum;
    }
    auto antiderivative = [alpha](double v) {
        return std::pow(1.0 + v, 2.0 - alpha) / (2.0 - alpha) - std::pow(1.0 + v, 1.0 - alpha) / (1.0 - alpha);
    };
    return -(antiderivative(eps) - antiderivative(-eps));
}

// Quadrature tolerances for the normalized coefficient integrals below.
inline constexpr double kQuadAbsTol = 1e-14;
inline constexpr double kQuadRelTol = 1e-12;

/// t*_{k+1} - t_{j+1}, the distance from the offset point to the near end of
/// history cell j (0-based cell [t_j, t_{j+1}]).
inline double near_gap(const TemporalMesh& mesh, const SchemeParams& p, int k, int j) {
    return (mesh.t(k + 1) - mesh.t(j + 1)) - (1.0 - p.sigma) * mesh.tau(k + 1);
}

inline void check_indices(const TemporalMesh& mesh, int k, int j, const char* what) {
    if (k < 0 || k + 1 > mesh.N() || j < 0 || j > k) {
        throw ValidationError(std::string(what) + ": index out of range (k=" + std::to_string(k) +
                              ", j=" + std::to_string(j) + ")");
    }
}

}  // namespace detail

/**
 * a_{k,j}: integral of the Caputo kernel (t*_{k+1} - eta)^{-alpha}/Gamma(1-alpha)
 * over [t_j, t_{j+1}]. For j = k the cell is cut at the offset point and the
 * closed form sigma^{1-alpha} tau_{k+1}^{1-alpha}/Gamma(2-alpha) is used by
 * both methods.
 */
inline double a_coeff(int k, int j, const TemporalMesh& mesh, const SchemeParams& p,
                      WeightMethod method = WeightMethod::ClosedForm) {
    detail::check_indices(mesh, k, j, "a_coeff");
    const double tau = mesh.tau(j + 1);
    if (j == k) {
        return std::pow(p.sigma, 1.0 - p.alpha) * std::pow(tau, 1.0 - p.alpha) / std::tgamma(2.0 - p.alpha);
    }
    const double near = detail::near_gap(mesh, p, k, j);
    if (!(near > 0.0)) throw std::domain_error("a_coeff: offset point does not lie beyond the history cell");
    if (method == WeightMethod::ClosedForm) {
        return detail::power_difference(near, tau, 1.0 - p.alpha) / std::tgamma(2.0 - p.alpha);
    }
    const double far = near + tau;
    const double q = tau / far;
    const double alpha = p.alpha;
    auto res = quadrature::integrate_adaptive(
        [q, alpha](double x) { return std::pow(1.0 - q * x, -alpha); }, 0.0, 1.0, detail::kQuadAbsTol,
        detail::kQuadRelTol);
    return tau * std::pow(far, -alpha) * res.value / std::tgamma(1.0 - alpha);
}

/**
 * b_{k,j}: first moment of the kernel about the cell midpoint, scaled by
 * 2/(t_{j+2} - t_j). Requires k >= 1 and 0 <= j <= k-1.
 */
inline double b_coeff(int k, int j, const TemporalMesh& mesh, const SchemeParams& p,
                      WeightMethod method = WeightMethod::ClosedForm) {
    detail::check_indices(mesh, k, j, "b_coeff");
    if (j == k) throw ValidationError("b_coeff: requires j <= k-1");
    const double tau = mesh.tau(j + 1);
    const double scale = 2.0 / (mesh.t(j + 2) - mesh.t(j));
    const double near = detail::near_gap(mesh, p, k, j);
    if (!(near > 0.0)) throw std::domain_error("b_coeff: offset point does not lie beyond the history cell");
    if (method == WeightMethod::ClosedForm) {
        const double half = 0.5 * tau;
        const double center = near + half;  // t* minus the cell midpoint
        return scale * std::pow(center, 2.0 - p.alpha) * detail::odd_moment(half / center, p.alpha) /
               std::tgamma(1.0 - p.alpha);
    }
    const double far = near + tau;
    const double q = tau / far;
    const double alpha = p.alpha;
    // Folded about the midpoint, x = 1/2 +- s, so the integrand is one-signed
    // and only the relative tolerance applies.
    const double mid = 1.0 - 0.5 * q;
    auto res = quadrature::integrate_adaptive(
        [q, alpha, mid](double s) {
            return s * std::pow(mid + q * s, -alpha) * std::expm1(2.0 * alpha * std::atanh(q * s / mid));
        },
        0.0, 0.5, 0.0, detail::kQuadRelTol);
    return scale * tau * tau * std::pow(far, -alpha) * res.value / std::tgamma(1.0 - alpha);
}

/**
 * Convolution weights of the discrete Caputo derivative at step n:
 * delta U^n = sum_{j=1}^{n} g[j-1] (U^j - U^{j-1}), where g[j-1] = g_{n-1,j-1}.
 */
struct AlikhanovWeights {
    int n = 0;
    WeightMethod method = WeightMethod::ClosedForm;
    std::vector<double> g;  // size n
    std::vector<double> a;  // a_{n-1,j}, j = 0..n-1
    std::vector<double> b;  // b_{n-1,j}, j = 0..n-2

    double lead() const { return g.back(); }

    /// Coefficients p_{n,k}, k = 0..n, of the nodal form sum_k p_{n,k} U^k.
    std::vector<double> representation() const {
        std::vector<double> p(static_cast<std::size_t>(n) + 1, 0.0);
        p[0] = -g[0];
        for (int k = 1; k < n; ++k) p[k] = g[k - 1] - g[k];
        p[n] = g[n - 1];
        return p;
    }
};

inline AlikhanovWeights assemble_weights(int n, const TemporalMesh& mesh, const SchemeParams& p,
                                         WeightMethod method = WeightMethod::ClosedForm) {
    if (n < 1 || n > mesh.N()) {
        throw ValidationError("assemble_weights: step " + std::to_string(n) + " outside 1.." +
                              std::to_string(mesh.N()));
    }
    AlikhanovWeights w;
    w.n = n;
    w.method = method;
    const int k = n - 1;
    w.a.resize(n);
    w.b.resize(k);
    w.g.resize(n);
    for (int j = 0; j <= k; ++j) w.a[j] = a_coeff(k, j, mesh, p, method);
    for (int j = 0; j < k; ++j) w.b[j] = b_coeff(k, j, mesh, p, method);
    if (k == 0) {
        w.g[0] = w.a[0] / mesh.tau(1);
        return w;
    }
    w.g[0] = (w.a[0] - w.b[0]) / mesh.tau(1);
    for (int j = 1; j < k; ++j) w.g[j] = (w.a[j] + w.b[j - 1] - w.b[j]) / mesh.tau(j + 1);
    w.g[k] = (w.a[k] + w.b[k - 1]) / mesh.tau(k + 1);
    return w;
}

/// sum_{j=1}^{n} g_{n-1,j-1} (U^j - U^{j-1}) for scalar samples U^0..U^n.
inline double apply_discrete_derivative(const AlikhanovWeights& w, std::span<const double> history) {
    if (history.size() != static_cast<std::size_t>(w.n) + 1) {
        throw ValidationError("apply_discrete_derivative: history has " + std::to_string(history.size()) +
                              " samples, expected " + std::to_string(w.n + 1));
    }
    double sum = 0.0;
    for (int j = 1; j <= w.n; ++j) sum += w.g[j - 1] * (history[j] - history[j - 1]);
    return sum;
}

/// One property check: pass flag plus the worst relative margin and where it
/// occurred (margin < 0 means violated).
struct PropertyCheck {
    bool evaluated = false;
    bool pass = true;
    double worst_margin = std::numeric_limits<double>::infinity();
    int worst_m = 0;
    int worst_j = 0;
    long checks = 0;
    long unresolved = 0;  // comparisons below the roundoff floor

    /// A non-positive margin within `roundoff` of zero cannot be distinguished
    /// from a tie in double precision; it is counted as unresolved, not failed.
    void record(double margin, int m, int j, double roundoff = 0.0) {
        evaluated = true;
        ++checks;
        if (margin < worst_margin) {
            worst_margin = margin;
            worst_m = m;
            worst_j = j;
        }
        if (!(margin > 0.0)) {
            if (margin > -roundoff) {
                ++unresolved;
            } else {
                pass = false;
            }
        }
    }
};

struct PropertyReport {
    MeshReport mesh;
    bool hypotheses_ok = false;
    int n_max = 0;
    PropertyCheck p1;  // g_{m-1,j} > g_{m-1,j-1} > 0
    PropertyCheck p2;  // (2 sigma - 1) g_{m-1,m-1} > sigma g_{m-1,m-2}
    PropertyCheck p3;  // pi_A tau_j g_{m-1,j-1} >= averaged kernel integral
    PropertyCheck p4;  // tau_j / tau_{j+1} <= 7/4

    static constexpr double kPiA = 11.0 / 4.0;
    /// Relative floor for P1: on strongly graded meshes the earliest weights of
    /// a late row differ by less than one ulp.
    static constexpr double kRoundoff = 1e-13;

    bool all_pass() const {
        return hypotheses_ok && p1.evaluated && p1.pass && p2.evaluated && p2.pass && p3.pass && p4.pass;
    }
};

/// int_{t_{j-1}}^{t_j} (t_m - s)^{-alpha} ds / Gamma(1-alpha), closed form.
inline double kernel_cell_integral(const TemporalMesh& mesh, double alpha, int m, int j) {
    const double near = mesh.t(m) - mesh.t(j);
    return detail::power_difference(near, mesh.tau(j), 1.0 - alpha) / std::tgamma(2.0 - alpha);
}

/**
 * Audits the weight properties for steps m = 1..n_max. The ratio hypotheses
 * are checked first; P1/P2 are only evaluated when they hold (and P2 only for
 * sigma = 1 - alpha/2). P3 and P4 are always reported.
 */
inline PropertyReport audit_properties(const TemporalMesh& mesh, const SchemeParams& p, int n_max) {
    PropertyReport rep;
    rep.n_max = std::clamp(n_max, 1, mesh.N());
    rep.mesh = validate_mesh(mesh, p.sigma);
    rep.hypotheses_ok = rep.mesh.hypotheses_ok();
    const bool check_p12 = rep.hypotheses_ok;
    const bool check_p2 = check_p12 && p.is_alikhanov();

    for (int j = 1; j <= mesh.N() - 1; ++j) {
        const double inv = mesh.tau(j) / mesh.tau(j + 1);
        rep.p4.record((MeshReport::kUpperInverseRatio - inv) / MeshReport::kUpperInverseRatio, j + 1, j);
    }
    if (mesh.N() == 1) rep.p4.evaluated = true;

    for (int m = 1; m <= rep.n_max; ++m) {
        const AlikhanovWeights w = assemble_weights(m, mesh, p);
        if (check_p12) {
            rep.p1.record(w.g[0] > 0.0 ? 1.0 : -1.0, m, 1);
            for (int j = 1; j <= m - 1; ++j) rep.p1.record((w.g[j] - w.g[j - 1]) / w.g[j], m, j, PropertyReport::kRoundoff);
        }
        if (check_p2 && m >= 2) {
            const double lhs = (2.0 * p.sigma - 1.0) * w.g[m - 1];
            rep.p2.record((lhs - p.sigma * w.g[m - 2]) / lhs, m, m - 1);
        }
        for (int j = 1; j <= m; ++j) {
            const double kernel = kernel_cell_integral(mesh, p.alpha, m, j);
            rep.p3.record(PropertyReport::kPiA * mesh.tau(j) * w.g[j - 1] / kernel - 1.0, m, j);
        }
    }
    return rep;
}

/// CSV columns: n, j, g, a, b, method (b empty at j = n).
inline void write_weights_csv(std::ostream& os, const AlikhanovWeights& w, bool header = true) {
    if (header) os << "n,j,g,a,b,method\n";
    char buf[160];
    for (int j = 1; j <= w.n; ++j) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,", w.n, j, w.g[j - 1], w.a[j - 1]);
        os << buf;
        if (j - 1 < static_cast<int>(w.b.size())) {
            std::snprintf(buf, sizeof buf, "%.17g", w.b[j - 1]);
            os << buf;
        }
        os << ',' << to_string(w.method) << '\n';
    }
}

}  // namespace fracstep
