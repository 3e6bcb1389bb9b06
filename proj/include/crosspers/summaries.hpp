#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "crosspers/persistence.hpp"

namespace crosspers {

enum class Weighting { constant, lifetime };

inline std::string to_string(Weighting w) {
    return w == Weighting::constant ? "constant" : "lifetime";
}
inline Weighting weighting_from_string(const std::string& s) {
    if (s == "constant") return Weighting::constant;
    if (s == "lifetime") return Weighting::lifetime;
    throw std::invalid_argument("unknown weighting: " + s);
}

struct GridSpec {
    double x_min = 0.0, x_max = 1.0;
    double y_min = 0.0, y_max = 1.0;
    int nx = 1, ny = 1;

    std::size_t cells() const { return static_cast<std::size_t>(nx) * ny; }
    double x_center(int ix) const { return x_min + (ix + 0.5) * (x_max - x_min) / nx; }
    double y_center(int iy) const { return y_min + (iy + 0.5) * (y_max - y_min) / ny; }

    bool operator==(const GridSpec&) const = default;
};

/// Discretized nonnegative function on a rectangle; 1-D curves use ny == 1.
struct DensityGrid {
    GridSpec spec;
    std::vector<double> values; // row-major: values[iy*nx + ix]
    bool normalized = false;

    double at(int ix, int iy) const { return values[static_cast<std::size_t>(iy) * spec.nx + ix]; }
    double& at(int ix, int iy) { return values[static_cast<std::size_t>(iy) * spec.nx + ix]; }
    double sum() const {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
};

inline DensityGrid make_grid(const GridSpec& spec) {
    if (spec.nx < 1 || spec.ny < 1) throw std::invalid_argument("grid resolution must be >= 1");
    if (!(spec.x_max > spec.x_min)) throw std::invalid_argument("grid needs x_max > x_min");
    if (spec.ny > 1 && !(spec.y_max > spec.y_min))
        throw std::invalid_argument("grid needs y_max > y_min");
    DensityGrid g;
    g.spec = spec;
    g.values.assign(spec.cells(), 0.0);
    return g;
}

inline void normalize_grid(DensityGrid& grid) {
    const double s = grid.sum();
    if (!(s > 0.0)) throw std::runtime_error("normalize_grid: total mass is zero");
    for (double& v : grid.values) v /= s;
    grid.normalized = true;
}

/// Sum of (death - birth) over finite positive-length pairs. Essential
/// classes are excluded so the sum stays finite; zero-length pairs carry no
/// weight either way.
inline double mtd(const PersistenceDiagram& diagram) {
    double s = 0.0;
    for (const auto& p : diagram.pairs)
        if (p.finite_positive()) s += p.death - p.birth;
    return s;
}

/// Shannon entropy (natural log) of the normalized lifetime distribution
/// over finite positive-length pairs; 0 when there is at most one such pair.
inline double persistence_entropy(const PersistenceDiagram& diagram) {
    std::vector<double> lifetimes;
    for (const auto& p : diagram.pairs)
        if (p.finite_positive()) lifetimes.push_back(p.death - p.birth);
    if (lifetimes.size() <= 1) return 0.0;
    double total = 0.0;
    for (double l : lifetimes) total += l;
    double h = 0.0;
    for (double l : lifetimes) {
        const double w = l / total;
        h -= w * std::log(w);
    }
    return h;
}

/// Silverman's rule of thumb: 0.9 min(sd, IQR/1.34) n^(-1/5), with a small
/// positive fallback when the sample is degenerate.
inline double silverman_bandwidth(std::span<const double> samples) {
    const std::size_t n = samples.size();
    if (n < 2) return 1e-3;
    double mean = 0.0;
    for (double x : samples) mean += x;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double x : samples) var += (x - mean) * (x - mean);
    var /= static_cast<double>(n - 1);
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    auto quantile = [&](double q) {
        const double pos = q * (n - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, n - 1);
        const double frac = pos - lo;
        return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
    };
    const double iqr = quantile(0.75) - quantile(0.25);
    double spread = std::sqrt(var);
    if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
    double h = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
    if (!(h > 0.0)) {
        const double scale = std::max(1.0, std::abs(sorted[0]));
        h = 1e-3 * scale;
    }
    return h;
}

/// Sum of isotropic Gaussian bumps centered at the finite positive-length
/// pairs, evaluated at cell centers. A grid with ny == 1 is treated as 1-D
/// along the death axis (the layout of cross H0 diagrams).
inline DensityGrid persistence_image(const PersistenceDiagram& diagram, const GridSpec& spec,
                                     double bandwidth, Weighting weighting) {
    if (!(bandwidth > 0.0)) throw std::invalid_argument("persistence_image: bandwidth must be > 0");
    DensityGrid grid = make_grid(spec);
    const double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
    const double norm1d = 1.0 / (bandwidth * std::sqrt(2.0 * M_PI));
    const double norm2d = norm1d * norm1d;

    for (const auto& p : diagram.pairs) {
        if (!p.finite_positive()) continue;
        const double w = weighting == Weighting::lifetime ? (p.death - p.birth) : 1.0;
        if (spec.ny == 1) {
            for (int ix = 0; ix < spec.nx; ++ix) {
                const double dx = spec.x_center(ix) - p.death;
                grid.values[ix] += w * norm1d * std::exp(-dx * dx * inv2h2);
            }
        } else {
            for (int iy = 0; iy < spec.ny; ++iy) {
                const double dy = spec.y_center(iy) - p.death;
                const double ey = std::exp(-dy * dy * inv2h2);
                for (int ix = 0; ix < spec.nx; ++ix) {
                    const double dx = spec.x_center(ix) - p.birth;
                    grid.at(ix, iy) += w * norm2d * std::exp(-dx * dx * inv2h2) * ey;
                }
            }
        }
    }
    return grid;
}

/// Arithmetic mean of per-diagram persistence images; the empirical estimate
/// of the expected diagram's density. Normalization to total mass 1 is what
/// the neural predictor trains against.
inline DensityGrid expected_density(std::span<const PersistenceDiagram> diagrams,
                                    const GridSpec& spec, double bandwidth, Weighting weighting,
                                    bool normalized = false) {
    if (diagrams.empty()) throw std::invalid_argument("expected_density: no diagrams");
    DensityGrid acc = make_grid(spec);
    for (const auto& d : diagrams) {
        DensityGrid img = persistence_image(d, spec, bandwidth, weighting);
        for (std::size_t i = 0; i < acc.values.size(); ++i) acc.values[i] += img.values[i];
    }
    for (double& v : acc.values) v /= static_cast<double>(diagrams.size());
    if (normalized) normalize_grid(acc);
    return acc;
}

/// Grid bounds for one experiment: bounding box of all pooled diagram
/// points padded by 3 bandwidths, frozen so all grids stay comparable.
/// With ny == 1 the x axis spans the pooled death values instead.
inline GridSpec frozen_grid_spec(std::span<const PersistenceDiagram> diagrams, int nx, int ny,
                                 double bandwidth) {
    std::vector<double> xs, ys;
    for (const auto& d : diagrams) {
        for (const auto& p : d.pairs) {
            if (!p.finite_positive()) continue;
            if (ny == 1) {
                xs.push_back(p.death);
            } else {
                xs.push_back(p.birth);
                ys.push_back(p.death);
            }
        }
    }
    if (xs.empty()) throw std::invalid_argument("frozen_grid_spec: no finite pairs in diagrams");
    GridSpec spec;
    spec.nx = nx;
    spec.ny = ny;
    const double pad = 3.0 * bandwidth;
    auto [xlo, xhi] = std::minmax_element(xs.begin(), xs.end());
    spec.x_min = *xlo - pad;
    spec.x_max = *xhi + pad;
    if (ny > 1) {
        auto [ylo, yhi] = std::minmax_element(ys.begin(), ys.end());
        spec.y_min = *ylo - pad;
        spec.y_max = *yhi + pad;
    } else {
        spec.y_min = 0.0;
        spec.y_max = 1.0;
    }
    return spec;
}

/// Pooled Silverman bandwidth over all coordinates of a diagram set.
inline double pooled_bandwidth(std::span<const PersistenceDiagram> diagrams) {
    std::vector<double> coords;
    for (const auto& d : diagrams) {
        for (const auto& p : d.pairs) {
            if (!p.finite_positive()) continue;
            coords.push_back(p.birth);
            coords.push_back(p.death);
        }
    }
    if (coords.size() < 2) return 1e-3;
    return silverman_bandwidth(coords);
}

} // namespace crosspers
