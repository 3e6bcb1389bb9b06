#pragma once

// Synthetic data generators for tests, demos, and the desk-scale surrogate
// experiments: planar shape clouds and chirp-vs-noise time series.

#include <cmath>
#include <cstdint>
#include <vector>

#include "crosspers/geometry.hpp"
#include "crosspers/rng.hpp"

namespace crosspers::synthetic {

inline PointCloud circle(std::size_t n, Rng& rng, double radius = 1.0, double cx = 0.0,
                         double cy = 0.0, double jitter = 0.02) {
    PointCloud c(2);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = 2.0 * M_PI * rng.uniform01();
        c.add_point({cx + radius * std::cos(a) + jitter * rng.normal(),
                     cy + radius * std::sin(a) + jitter * rng.normal()});
    }
    return c;
}

/// Union of k unit-spaced circles, points assigned round-robin.
inline PointCloud circles(std::size_t n, int k, Rng& rng, double radius = 0.45,
                          double jitter = 0.02) {
    PointCloud c(2);
    for (std::size_t i = 0; i < n; ++i) {
        const int which = static_cast<int>(i % k);
        const double cx = (k == 1) ? 0.0 : -1.0 + 2.0 * which / (k - 1);
        const double a = 2.0 * M_PI * rng.uniform01();
        c.add_point({cx + radius * std::cos(a) + jitter * rng.normal(),
                     radius * std::sin(a) + jitter * rng.normal()});
    }
    return c;
}

inline PointCloud blob(std::size_t n, Rng& rng, double sigma = 0.5, double cx = 0.0,
                       double cy = 0.0) {
    PointCloud c(2);
    for (std::size_t i = 0; i < n; ++i)
        c.add_point({cx + sigma * rng.normal(), cy + sigma * rng.normal()});
    return c;
}

inline PointCloud square_outline(std::size_t n, Rng& rng, double half = 1.0,
                                 double jitter = 0.02) {
    PointCloud c(2);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = 4.0 * rng.uniform01();
        const int side = static_cast<int>(t);
        const double u = -half + 2.0 * half * (t - side);
        double x = 0, y = 0;
        switch (side) {
            case 0: x = u, y = -half; break;
            case 1: x = half, y = u; break;
            case 2: x = -u, y = half; break;
            default: x = -half, y = -u; break;
        }
        c.add_point({x + jitter * rng.normal(), y + jitter * rng.normal()});
    }
    return c;
}

/// Damped chirp in Gaussian noise; the gravitational-wave stand-in.
inline TimeSeries damped_chirp(std::size_t length, Rng& rng, double amplitude = 1.0,
                               double f0 = 0.02, double f1 = 0.2, double damping = 1.5,
                               double noise_sigma = 0.4) {
    TimeSeries s;
    s.values.reserve(length);
    for (std::size_t k = 0; k < length; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(length);
        const double freq = f0 + (f1 - f0) * t;
        const double signal = amplitude * std::exp(-damping * t) *
                              std::sin(2.0 * M_PI * freq * static_cast<double>(k));
        s.values.push_back(signal + noise_sigma * rng.normal());
    }
    return s;
}

inline TimeSeries pure_noise(std::size_t length, Rng& rng, double sigma = 0.4) {
    TimeSeries s;
    s.values.reserve(length);
    for (std::size_t k = 0; k < length; ++k) s.values.push_back(sigma * rng.normal());
    return s;
}

} // namespace crosspers::synthetic
