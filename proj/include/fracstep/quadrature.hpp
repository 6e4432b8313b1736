#pragma once

#include <array>
#include <cmath>
#include <queue>
#include <vector>

namespace fracstep::quadrature {

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
    int evaluations = 0;
    bool converged = false;
};

namespace detail {

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
    double a, b, value, error;
    bool operator<(const Segment& o) const { return error < o.error; }
};

template <class F>
Segment gk15(F& f, double a, double b) {
    const double center = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double fc = f(center);
    double kronrod = fc * kKronrodWeights[7];
    double gauss = fc * kGaussWeights[3];
    for (int i = 0; i < 7; ++i) {
        const double dx = half * kKronrodNodes[i];
        const double pair = f(center - dx) + f(center + dx);
        kronrod += kKronrodWeights[i] * pair;
        if (i % 2 == 1) gauss += kGaussWeights[i / 2] * pair;
    }
    kronrod *= half;
    gauss *= half;
    return {a, b, kronrod, std::abs(kronrod - gauss)};
}

}  // namespace detail

/**
 * Globally adaptive Gauss-Kronrod (7/15) integration of f over [a, b].
 *
 * The interval with the largest error estimate is bisected until the summed
 * estimate drops below max(abs_tol, rel_tol * |I|) or max_segments is hit.
 * The |K15 - G7| estimate is kept unscaled, so it is conservative for the
 * smooth integrands this library feeds it.
 */
template <class F>
QuadratureResult integrate_adaptive(F&& f, double a, double b, double abs_tol = 1e-14,
                                    double rel_tol = 1e-12, int max_segments = 500) {
    QuadratureResult res;
    if (a == b) {
        res.converged = true;
        return res;
    }
    std::priority_queue<detail::Segment> heap;
    heap.push(detail::gk15(f, a, b));
    res.evaluations = 15;
    double total = heap.top().value;
    double err = heap.top().error;
    int segments = 1;
    while (err > std::max(abs_tol, rel_tol * std::abs(total)) && segments < max_segments) {
        const detail::Segment worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        const detail::Segment left = detail::gk15(f, worst.a, mid);
        const detail::Segment right = detail::gk15(f, mid, worst.b);
        res.evaluations += 30;
        heap.push(left);
        heap.push(right);
        ++segments;
        // Re-summing avoids drift from repeated add/subtract of estimates.
        total = 0.0;
        err = 0.0;
        auto copy = heap;
        while (!copy.empty()) {
            total += copy.top().value;
            err += copy.top().error;
            copy.pop();
        }
    }
    res.value = total;
    res.error = err;
    res.converged = err <= std::max(abs_tol, rel_tol * std::abs(total));
    return res;
}

}  // namespace fracstep::quadrature
