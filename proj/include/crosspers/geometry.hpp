#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "crosspers/rng.hpp"

namespace crosspers {

/// Ordered list of d-dimensional points, stored flat row-major.
class PointCloud {
public:
    PointCloud() = default;
    explicit PointCloud(std::size_t dim) : dim_(dim) {
        if (dim == 0) throw std::invalid_argument("PointCloud: dimension must be >= 1");
    }
    PointCloud(std::size_t dim, std::vector<double> flat) : dim_(dim), data_(std::move(flat)) {
        if (dim == 0) throw std::invalid_argument("PointCloud: dimension must be >= 1");
        if (data_.size() % dim_ != 0)
            throw std::invalid_argument("PointCloud: flat data size not a multiple of dimension");
    }

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
    bool empty() const { return data_.empty(); }

    std::span<const double> operator[](std::size_t i) const {
        return {data_.data() + i * dim_, dim_};
    }
    std::span<double> mutable_point(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

    void add_point(std::span<const double> p) {
        if (dim_ == 0) dim_ = p.size();
        if (p.size() != dim_)
            throw std::invalid_argument("PointCloud: point dimension mismatch");
        data_.insert(data_.end(), p.begin(), p.end());
    }
    void add_point(std::initializer_list<double> p) {
        add_point(std::span<const double>(p.begin(), p.size()));
    }

    PointCloud subset(std::span<const std::uint32_t> indices) const {
        PointCloud out(dim_);
        out.data_.reserve(indices.size() * dim_);
        for (auto i : indices) {
            auto p = (*this)[i];
            out.data_.insert(out.data_.end(), p.begin(), p.end());
        }
        return out;
    }

    const std::vector<double>& flat() const { return data_; }

private:
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

inline double euclidean(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return std::sqrt(s);
}

inline double norm2(std::span<const double> a) {
    double s = 0.0;
    for (double x : a) s += x * x;
    return std::sqrt(s);
}

/// Symmetric matrix of pairwise distances, zero diagonal.
struct DistanceMatrix {
    std::size_t n = 0;
    std::vector<double> entries; // n*n row-major

    DistanceMatrix() = default;
    explicit DistanceMatrix(std::size_t n_) : n(n_), entries(n_ * n_, 0.0) {}

    double at(std::size_t i, std::size_t j) const { return entries[i * n + j]; }
    double& at(std::size_t i, std::size_t j) { return entries[i * n + j]; }
};

/// The matrix m_{(P u Q)/Q}: P points indexed first, then Q points, with the
/// within-Q block identically zero. Symmetric as stored.
struct CrossDistanceMatrix {
    std::size_t n_left = 0;
    std::size_t n_right = 0;
    std::vector<double> entries; // (n_left+n_right)^2 row-major

    CrossDistanceMatrix() = default;
    CrossDistanceMatrix(std::size_t nl, std::size_t nr)
        : n_left(nl), n_right(nr), entries((nl + nr) * (nl + nr), 0.0) {}

    std::size_t size() const { return n_left + n_right; }
    double at(std::size_t i, std::size_t j) const { return entries[i * size() + j]; }
    double& at(std::size_t i, std::size_t j) { return entries[i * size() + j]; }
};

struct TimeSeries {
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
};

inline DistanceMatrix pairwise_distances(const PointCloud& cloud) {
    if (cloud.empty()) throw std::invalid_argument("pairwise_distances: empty cloud");
    const std::size_t n = cloud.size();
    DistanceMatrix m(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = euclidean(cloud[i], cloud[j]);
            m.at(i, j) = d;
            m.at(j, i) = d;
        }
    }
    return m;
}

/// Block layout [PP | PQ; QP | 0]: Euclidean distances everywhere except the
/// within-right block, which is zeroed by construction.
inline CrossDistanceMatrix cross_distance_matrix(const PointCloud& left, const PointCloud& right) {
    if (left.empty() || right.empty())
        throw std::invalid_argument("cross_distance_matrix: clouds must be nonempty");
    if (left.dim() != right.dim())
        throw std::invalid_argument("cross_distance_matrix: dimension mismatch (" +
                                    std::to_string(left.dim()) + " vs " +
                                    std::to_string(right.dim()) + ")");
    const std::size_t nl = left.size(), nr = right.size();
    CrossDistanceMatrix m(nl, nr);
    for (std::size_t i = 0; i < nl; ++i) {
        for (std::size_t j = i + 1; j < nl; ++j) {
            const double d = euclidean(left[i], left[j]);
            m.at(i, j) = d;
            m.at(j, i) = d;
        }
        for (std::size_t j = 0; j < nr; ++j) {
            const double d = euclidean(left[i], right[j]);
            m.at(i, nl + j) = d;
            m.at(nl + j, i) = d;
        }
    }
    // within-right block stays exactly zero
    return m;
}

/// Adds Gaussian noise rescaled per point so that ||xi_i|| / ||x_i|| equals
/// relative_norm exactly. Zero-norm points fall back to an absolute scale of
/// relative_norm times the mean point norm.
inline PointCloud inject_noise(const PointCloud& cloud, double relative_norm, std::uint64_t seed) {
    if (relative_norm < 0.0)
        throw std::invalid_argument("inject_noise: relative_norm must be >= 0");
    if (cloud.empty()) throw std::invalid_argument("inject_noise: empty cloud");

    const std::size_t n = cloud.size(), d = cloud.dim();
    double mean_norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean_norm += norm2(cloud[i]);
    mean_norm /= static_cast<double>(n);

    Rng rng = Rng::derive(seed, 0x6e6f697365ULL); // "noise"
    PointCloud out(d, cloud.flat());
    std::vector<double> g(d);
    for (std::size_t i = 0; i < n; ++i) {
        double gn;
        do {
            for (std::size_t k = 0; k < d; ++k) g[k] = rng.normal();
            gn = norm2(std::span<const double>(g));
        } while (gn == 0.0);
        const double xn = norm2(cloud[i]);
        const double target = (xn > 0.0) ? relative_norm * xn : relative_norm * mean_norm;
        const double scale = target / gn;
        auto p = out.mutable_point(i);
        for (std::size_t k = 0; k < d; ++k) p[k] += scale * g[k];
    }
    return out;
}

/// Point k = (v_k, v_{k+delay}, ..., v_{k+(dim-1)*delay}).
inline PointCloud time_delay_embedding(const TimeSeries& series, std::size_t embedding_dim,
                                       std::size_t delay) {
    if (embedding_dim == 0) throw std::invalid_argument("time_delay_embedding: dim must be >= 1");
    if (delay == 0) throw std::invalid_argument("time_delay_embedding: delay must be >= 1");
    const std::size_t span = (embedding_dim - 1) * delay + 1;
    if (series.size() < span)
        throw std::invalid_argument("time_delay_embedding: series too short (length " +
                                    std::to_string(series.size()) + ", needs >= " +
                                    std::to_string(span) + ")");
    const std::size_t n = series.size() - (embedding_dim - 1) * delay;
    PointCloud out(embedding_dim);
    std::vector<double> p(embedding_dim);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t j = 0; j < embedding_dim; ++j) p[j] = series.values[k + j * delay];
        out.add_point(std::span<const double>(p));
    }
    return out;
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.
/// Returns eigenvalues in descending order with matching eigenvectors
/// (columns of `vectors`, row-major d x d); each eigenvector's
/// largest-magnitude coordinate is made positive.
struct SymmetricEigen {
    std::vector<double> values;  // descending
    std::vector<double> vectors; // vectors[r*d + c] = component r of eigenvector c
};

inline SymmetricEigen jacobi_eigendecomposition(std::vector<double> a, std::size_t d) {
    std::vector<double> v(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;

    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = a[p * d + q];
                if (apq == 0.0) continue;
                const double app = a[p * d + p], aqq = a[q * d + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < d; ++k) {
                    const double akp = a[k * d + p], akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double apk = a[p * d + k], aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double vkp = v[k * d + p], vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(d);
    for (std::size_t i = 0; i < d; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a[x * d + x] > a[y * d + y]; });

    SymmetricEigen out;
    out.values.resize(d);
    out.vectors.assign(d * d, 0.0);
    for (std::size_t c = 0; c < d; ++c) {
        const std::size_t src = order[c];
        out.values[c] = a[src * d + src];
        // sign convention: largest-magnitude coordinate positive
        std::size_t imax = 0;
        double amax = -1.0;
        for (std::size_t r = 0; r < d; ++r) {
            const double m = std::abs(v[r * d + src]);
            if (m > amax) {
                amax = m;
                imax = r;
            }
        }
        const double sgn = (v[imax * d + src] < 0.0) ? -1.0 : 1.0;
        for (std::size_t r = 0; r < d; ++r) out.vectors[r * d + c] = sgn * v[r * d + src];
    }
    return out;
}

/// Projects centered points onto the top-k eigenvectors of the sample
/// covariance (1/(n-1) normalization), eigenvalues descending.
inline PointCloud pca_reduce(const PointCloud& cloud, std::size_t k) {
    if (cloud.empty()) throw std::invalid_argument("pca_reduce: empty cloud");
    const std::size_t n = cloud.size(), d = cloud.dim();
    if (k < 1 || k > d)
        throw std::invalid_argument("pca_reduce: k must satisfy 1 <= k <= d (k=" +
                                    std::to_string(k) + ", d=" + std::to_string(d) + ")");

    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto p = cloud[i];
        for (std::size_t c = 0; c < d; ++c) mean[c] += p[c];
    }
    for (double& m : mean) m /= static_cast<double>(n);

    std::vector<double> cov(d * d, 0.0);
    if (n > 1) {
        for (std::size_t i = 0; i < n; ++i) {
            auto p = cloud[i];
            for (std::size_t r = 0; r < d; ++r) {
                const double xr = p[r] - mean[r];
                for (std::size_t c = r; c < d; ++c) cov[r * d + c] += xr * (p[c] - mean[c]);
            }
        }
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = r; c < d; ++c) {
                cov[r * d + c] /= static_cast<double>(n - 1);
                cov[c * d + r] = cov[r * d + c];
            }
    }

    const SymmetricEigen eig = jacobi_eigendecomposition(cov, d);

    PointCloud out(k);
    std::vector<double> proj(k);
    for (std::size_t i = 0; i < n; ++i) {
        auto p = cloud[i];
        for (std::size_t c = 0; c < k; ++c) {
            double s = 0.0;
            for (std::size_t r = 0; r < d; ++r) s += (p[r] - mean[r]) * eig.vectors[r * d + c];
            proj[c] = s;
        }
        out.add_point(std::span<const double>(proj));
    }
    return out;
}

} // namespace crosspers
