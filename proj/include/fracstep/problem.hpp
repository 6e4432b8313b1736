#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numbers>
#include <optional>
#include <string>

#include "fracstep/caputo_kernel.hpp"
#include "fracstep/errors.hpp"
#include "fracstep/mesh.hpp"

namespace fracstep {

using SpaceFn = std::function<double(double x, double y)>;
using SpaceTimeFn = std::function<double(double x, double y, double t)>;

/// Reaction term N(u) together with N'(u).
struct Reaction {
    std::string name;
    std::function<double(double)> value;
    std::function<double(double)> derivative;

    double operator()(double u) const { return value(u); }

    static Reaction allen_cahn() {
        return {"u-u^3", [](double u) { return u - u * u * u; }, [](double u) { return 1.0 - 3.0 * u * u; }};
    }
    static Reaction logistic() {
        return {"u(1-u)", [](double u) { return u * (1.0 - u); }, [](double u) { return 1.0 - 2.0 * u; }};
    }
    static Reaction linear(double c) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "linear(%.17g)", c);
        return {buf, [c](double u) { return c * u; }, [c](double) { return c; }};
    }
    static Reaction none() {
        return {"0", [](double) { return 0.0; }, [](double) { return 0.0; }};
    }
};

/// Max over samples of |central difference - N'(u)| with step eps.
inline double reaction_consistency_error(const Reaction& f, double u_min, double u_max, int samples = 33,
                                         double eps = 1e-4) {
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
        const double u = u_min + (u_max - u_min) * s / (samples - 1);
        const double fd = (f(u + eps) - f(u - eps)) / (2.0 * eps);
        worst = std::max(worst, std::abs(fd - f.derivative(u)));
    }
    return worst;
}

/// Known solution used to manufacture a source and to measure errors.
/// Lu is -nu Delta u and caputo is D_t^alpha u, both analytic.
struct ExactSolution {
    std::string name;
    SpaceTimeFn u;
    SpaceTimeFn Lu;
    SpaceTimeFn caputo;
};

struct ProblemSpec {
    std::string name = "custom";
    double alpha = 0.5;
    double nu = 1.0;
    double T = 1.0;
    double L1 = 1.0;
    double L2 = 1.0;
    int N = 16;
    double r = 1.0;
    int M1 = 8;
    int M2 = 8;
    std::optional<double> sigma;  // defaults to 1 - alpha/2

    Reaction reaction = Reaction::none();
    SpaceTimeFn source = [](double, double, double) { return 0.0; };
    std::string source_label = "0";
    SpaceFn initial = [](double, double) { return 0.0; };
    std::string initial_label = "0";
    std::optional<ExactSolution> exact;

    SchemeParams scheme() const {
        SchemeParams p{alpha, sigma.value_or(1.0 - alpha / 2.0)};
        p.validate();
        return p;
    }
    TemporalMesh mesh() const { return build_graded_mesh(T, N, r); }
    SpatialGrid grid() const { return build_spatial_grid(L1, L2, M1, M2); }
    bool has_exact() const { return exact.has_value(); }

    void validate() const {
        scheme();
        if (!(nu > 0.0)) throw ValidationError("diffusivity nu must be positive");
        mesh();
        grid();
        if (!reaction.value || !reaction.derivative) throw ValidationError("reaction needs value and derivative");
        if (!source || !initial) throw ValidationError("source and initial data must be set");
        if (exact) {
            // Initial data must be compatible with the zero boundary condition.
            constexpr int kSamples = 17;
            for (int s = 0; s <= kSamples; ++s) {
                const double fx = L1 * s / kSamples, fy = L2 * s / kSamples;
                for (auto [x, y] : {std::pair{fx, 0.0}, {fx, L2}, {0.0, fy}, {L1, fy}}) {
                    if (std::abs(initial(x, y)) > 1e-12) {
                        throw ValidationError("initial data does not vanish on the boundary");
                    }
                }
            }
        }
    }

    /// Canonical text of everything that determines a march.
    std::string canonical() const {
        char buf[512];
        std::snprintf(buf, sizeof buf,
                      "%s|alpha=%.17g|sigma=%.17g|nu=%.17g|T=%.17g|L1=%.17g|L2=%.17g|N=%d|r=%.17g|M1=%d|M2=%d|", name.c_str(),
                      alpha, sigma.value_or(1.0 - alpha / 2.0), nu, T, L1, L2, N, r, M1, M2);
        return std::string(buf) + "reaction=" + reaction.name + "|source=" + source_label +
               "|initial=" + initial_label + "|exact=" + (exact ? exact->name : std::string("none"));
    }

    /// 64-bit FNV-1a of canonical(); stable across platforms.
    std::uint64_t hash() const {
        std::uint64_t h = 1469598103934665603ULL;
        for (unsigned char c : canonical()) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        return h;
    }

    std::string hash_hex() const {
        char buf[20];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
        return buf;
    }
};

/// Install an exact solution and the source s = D_t^alpha u + L u - N(u) it implies.
inline void manufacture(ProblemSpec& spec, ExactSolution exact) {
    auto f = spec.reaction.value;
    auto u = exact.u, Lu = exact.Lu, caputo = exact.caputo;
    spec.source = [f, u, Lu, caputo](double x, double y, double t) {
        return caputo(x, y, t) + Lu(x, y, t) - f(u(x, y, t));
    };
    spec.source_label = "manufactured(" + exact.name + ")";
    spec.initial = [u](double x, double y) { return u(x, y, 0.0); };
    spec.initial_label = exact.name + "@t=0";
    spec.exact = std::move(exact);
}

/// u = t^alpha x y (1-x)(1-y) on the unit square, N(u) = u - u^3, T = 0.5, nu = 0.1.
inline ProblemSpec example1(double alpha, double r, int N, int M, double T = 0.5, double nu = 0.1) {
    ProblemSpec s;
    s.name = "example1";
    s.alpha = alpha;
    s.nu = nu;
    s.T = T;
    s.N = N;
    s.r = r;
    s.M1 = s.M2 = M;
    s.reaction = Reaction::allen_cahn();
    const double gamma_term = std::tgamma(alpha + 1.0);
    ExactSolution ex;
    ex.name = "t^alpha*xy(1-x)(1-y)";
    ex.u = [alpha](double x, double y, double t) { return std::pow(t, alpha) * x * y * (1 - x) * (1 - y); };
    ex.Lu = [alpha, nu](double x, double y, double t) {
        return nu * std::pow(t, alpha) * 2.0 * (y * (1 - y) + x * (1 - x));
    };
    ex.caputo = [gamma_term](double x, double y, double) { return gamma_term * x * y * (1 - x) * (1 - y); };
    manufacture(s, std::move(ex));
    return s;
}

/// u0 = sin(pi x) sin(pi y), N(u) = u(1-u), no source, T = 0.5, nu = 0.3.
inline ProblemSpec example2(double alpha, double r, int N, int M, double T = 0.5, double nu = 0.3) {
    ProblemSpec s;
    s.name = "example2";
    s.alpha = alpha;
    s.nu = nu;
    s.T = T;
    s.N = N;
    s.r = r;
    s.M1 = s.M2 = M;
    s.reaction = Reaction::logistic();
    s.initial = [](double x, double y) { return std::sin(std::numbers::pi * x) * std::sin(std::numbers::pi * y); };
    s.initial_label = "sin(pi x)sin(pi y)";
    return s;
}

}  // namespace fracstep
