#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "fracstep/caputo_kernel.hpp"

namespace fracstep {

/// Scalar comparison problem
///   (delta - lambda1) v^j - lambda2 v^{j-1} = forcing * (tau_1/t_j)^{gamma+1},  v^0 = 0.
struct RecurrenceSpec {
    double gamma = -0.5;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    TemporalMesh mesh = TemporalMesh::graded(1.0, 1, 1.0);
    SchemeParams params = SchemeParams::alikhanov(0.5);
    double forcing = 1.0;
};

struct RecurrenceResult {
    std::vector<double> v;      // v^0..v^N
    std::vector<double> bound;  // V(j,gamma), j = 1..N (index 0 unused)
    std::vector<double> ratio;  // v^j / V(j,gamma)
    double fitted_constant = 0.0;  // max_j ratio
    int argmax = 0;
};

/// tau_1 t_j^{alpha-1} (tau_1/t_j)^{min(0,gamma)}
inline double stability_bound(const TemporalMesh& mesh, double alpha, double gamma, int j) {
    const double tau1 = mesh.tau(1);
    const double tj = mesh.t(j);
    return tau1 * std::pow(tj, alpha - 1.0) * std::pow(tau1 / tj, std::min(0.0, gamma));
}

/// Grading/exponent pairs covered by the uniform stability bound:
/// gamma != 0 and either 1 <= r <= (3-alpha)/alpha, or gamma <= alpha - 1.
inline bool recurrence_admissible(double alpha, double r, double gamma) {
    if (gamma == 0.0 || r < 1.0) return false;
    return r <= (3.0 - alpha) / alpha || gamma <= alpha - 1.0;
}

inline RecurrenceResult solve_scalar_recurrence(const RecurrenceSpec& spec) {
    const auto& mesh = spec.mesh;
    const auto& p = spec.params;
    p.validate();
    if (spec.lambda1 < 0.0 || spec.lambda2 < 0.0) {
        throw ValidationError("recurrence: lambda1 and lambda2 must be nonnegative");
    }
    if (spec.gamma == 0.0) {
        throw ValidationError("recurrence: gamma = 0 is outside the bound's range (no log correction is assumed)");
    }
    const double limit = 1.0 / (2.0 * std::tgamma(2.0 - p.alpha));
    const double lhs = spec.lambda1 * std::pow(mesh.max_step(), p.alpha);
    if (lhs > limit) {
        char buf[200];
        std::snprintf(buf, sizeof buf,
                      "recurrence: step-size condition lambda1*tau^alpha = %.6g exceeds 1/(2 Gamma(2-alpha)) = %.6g",
                      lhs, limit);
        throw ValidationError(buf);
    }

    const int N = mesh.N();
    RecurrenceResult res;
    res.v.assign(N + 1, 0.0);
    res.bound.assign(N + 1, 0.0);
    res.ratio.assign(N + 1, 0.0);
    const double tau1 = mesh.tau(1);
    for (int j = 1; j <= N; ++j) {
        const AlikhanovWeights w = assemble_weights(j, mesh, p);
        double history = 0.0;
        for (int i = 1; i < j; ++i) history += w.g[i - 1] * (res.v[i] - res.v[i - 1]);
        const double rhs = spec.forcing * std::pow(tau1 / mesh.t(j), spec.gamma + 1.0);
        const double lead = w.lead();
        res.v[j] = (rhs + spec.lambda2 * res.v[j - 1] + lead * res.v[j - 1] - history) / (lead - spec.lambda1);
        res.bound[j] = stability_bound(mesh, p.alpha, spec.gamma, j);
        res.ratio[j] = res.v[j] / res.bound[j];
        if (j == 1 || res.ratio[j] > res.fitted_constant) {
            res.fitted_constant = res.ratio[j];
            res.argmax = j;
        }
    }
    return res;
}

/// CSV columns: j, t_j, v_j, V, ratio.
inline void write_recurrence_csv(std::ostream& os, const TemporalMesh& mesh, const RecurrenceResult& res) {
    os << "j,t_j,v_j,V,ratio\n";
    char buf[200];
    for (int j = 1; j < static_cast<int>(res.v.size()); ++j) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", j, mesh.t(j), res.v[j], res.bound[j],
                      res.ratio[j]);
        os << buf;
    }
}

}  // namespace fracstep
