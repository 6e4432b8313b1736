#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Sparse>

#include "fracstep/errors.hpp"
#include "fracstep/mesh.hpp"

namespace fracstep {

/**
 * Interior nodal values of a grid function vanishing on the boundary.
 * Storage is row-major over interior nodes with x fastest:
 * index(i, j) = (j-1)(M1-1) + (i-1) for 1 <= i <= M1-1, 1 <= j <= M2-1.
 */
class GridFunction2D {
public:
    GridFunction2D() = default;
    explicit GridFunction2D(const SpatialGrid& grid, double fill = 0.0)
        : grid_(grid), values_(static_cast<std::size_t>(grid.interior_count()), fill) {}
    GridFunction2D(const SpatialGrid& grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
        if (values_.size() != static_cast<std::size_t>(grid.interior_count())) {
            throw ValidationError("grid function size does not match the interior node count");
        }
    }

    template <class F>
    static GridFunction2D sample(const SpatialGrid& grid, F&& f) {
        GridFunction2D v(grid);
        for (int j = 1; j <= grid.ny(); ++j)
            for (int i = 1; i <= grid.nx(); ++i) v.at(i, j) = f(grid.x(i), grid.y(j));
        return v;
    }

    const SpatialGrid& grid() const { return grid_; }
    std::size_t size() const { return values_.size(); }

    double& at(int i, int j) { return values_[index(i, j)]; }
    double at(int i, int j) const { return values_[index(i, j)]; }
    double& operator[](std::size_t k) { return values_[k]; }
    double operator[](std::size_t k) const { return values_[k]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }

    Eigen::Map<Eigen::VectorXd> vec() { return {values_.data(), static_cast<Eigen::Index>(values_.size())}; }
    Eigen::Map<const Eigen::VectorXd> vec() const {
        return {values_.data(), static_cast<Eigen::Index>(values_.size())};
    }

    std::size_t index(int i, int j) const {
        return static_cast<std::size_t>(j - 1) * grid_.nx() + static_cast<std::size_t>(i - 1);
    }

    bool operator==(const GridFunction2D& o) const { return grid_ == o.grid_ && values_ == o.values_; }

private:
    SpatialGrid grid_;
    std::vector<double> values_;
};

/// Five-point discrete Laplacian Delta_h v with zero boundary values.
inline GridFunction2D laplacian(const GridFunction2D& v) {
    const auto& g = v.grid();
    const int nx = g.nx(), ny = g.ny();
    const double cx = 1.0 / (g.h1 * g.h1), cy = 1.0 / (g.h2 * g.h2);
    GridFunction2D out(g);
    for (int j = 1; j <= ny; ++j) {
        for (int i = 1; i <= nx; ++i) {
            const double c = v.at(i, j);
            const double w = i > 1 ? v.at(i - 1, j) : 0.0;
            const double e = i < nx ? v.at(i + 1, j) : 0.0;
            const double s = j > 1 ? v.at(i, j - 1) : 0.0;
            const double n = j < ny ? v.at(i, j + 1) : 0.0;
            out.at(i, j) = cx * (e - 2.0 * c + w) + cy * (n - 2.0 * c + s);
        }
    }
    return out;
}

/// L_h v = -nu Delta_h v.
inline GridFunction2D apply_laplacian(const GridFunction2D& v, double nu) {
    GridFunction2D out = laplacian(v);
    for (auto& x : out.values()) x *= -nu;
    return out;
}

/// Assembled sparse form of L_h = -nu Delta_h (symmetric, positive definite).
inline Eigen::SparseMatrix<double> laplacian_matrix(const SpatialGrid& g, double nu) {
    const int nx = g.nx(), ny = g.ny();
    const double cx = nu / (g.h1 * g.h1), cy = nu / (g.h2 * g.h2);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(5 * nx * ny));
    auto idx = [nx](int i, int j) { return (j - 1) * nx + (i - 1); };
    for (int j = 1; j <= ny; ++j) {
        for (int i = 1; i <= nx; ++i) {
            const int row = idx(i, j);
            trip.emplace_back(row, row, 2.0 * cx + 2.0 * cy);
            if (i > 1) trip.emplace_back(row, idx(i - 1, j), -cx);
            if (i < nx) trip.emplace_back(row, idx(i + 1, j), -cx);
            if (j > 1) trip.emplace_back(row, idx(i, j - 1), -cy);
            if (j < ny) trip.emplace_back(row, idx(i, j + 1), -cy);
        }
    }
    Eigen::SparseMatrix<double> m(nx * ny, nx * ny);
    m.setFromTriplets(trip.begin(), trip.end());
    return m;
}

/// Discrete inner product h1 h2 sum u v over interior nodes.
inline double inner(const GridFunction2D& u, const GridFunction2D& v) {
    const auto& g = u.grid();
    double s = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) s += u[k] * v[k];
    return g.h1 * g.h2 * s;
}

inline double l2_norm(const GridFunction2D& v) { return std::sqrt(inner(v, v)); }

inline double max_norm(const GridFunction2D& v) {
    double m = 0.0;
    for (double x : v.values()) m = std::max(m, std::abs(x));
    return m;
}

/// |v|_2 = ||L_h v|| / nu.
inline double seminorm2(const GridFunction2D& v, double nu) { return l2_norm(apply_laplacian(v, nu)) / nu; }

inline GridFunction2D difference(const GridFunction2D& a, const GridFunction2D& b) {
    if (!(a.grid() == b.grid())) throw ValidationError("grid functions live on different grids");
    GridFunction2D out(a.grid());
    for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] - b[k];
    return out;
}

/// CSV columns: i, j, x, y, value.
inline void write_grid_csv(std::ostream& os, const GridFunction2D& v) {
    const auto& g = v.grid();
    os << "i,j,x,y,value\n";
    char buf[160];
    for (int j = 1; j <= g.ny(); ++j) {
        for (int i = 1; i <= g.nx(); ++i) {
            std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g\n", i, j, g.x(i), g.y(j), v.at(i, j));
            os << buf;
        }
    }
}

}  // namespace fracstep
