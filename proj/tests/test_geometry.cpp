#include <doctest.h>

#include <cmath>

#include "crosspers/geometry.hpp"
#include "crosspers/rng.hpp"
#include "support/oracles.hpp"

using namespace crosspers;

namespace {

PointCloud random_cloud(std::size_t n, std::size_t d, Rng& rng, double scale = 1.0) {
    PointCloud c(d);
    std::vector<double> p(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& x : p) x = scale * rng.normal();
        c.add_point(std::span<const double>(p));
    }
    return c;
}

} // namespace

TEST_CASE("pairwise_distances basics") {
    PointCloud single(2);
    single.add_point({1.5, -2.0});
    auto m1 = pairwise_distances(single);
    CHECK(m1.n == 1);
    CHECK(m1.at(0, 0) == 0.0);

    PointCloud two(2);
    two.add_point({0.0, 0.0});
    two.add_point({3.0, 4.0});
    auto m2 = pairwise_distances(two);
    CHECK(m2.at(0, 1) == doctest::Approx(5.0));
    CHECK(m2.at(1, 0) == doctest::Approx(5.0));
    CHECK(m2.at(0, 0) == 0.0);
    CHECK(m2.at(1, 1) == 0.0);
}

TEST_CASE("pairwise_distances satisfies metric axioms on random clouds") {
    Rng rng(11);
    for (int rep = 0; rep < 5; ++rep) {
        auto cloud = random_cloud(10, 3, rng);
        auto m = pairwise_distances(cloud);
        for (std::size_t i = 0; i < m.n; ++i) {
            CHECK(m.at(i, i) == 0.0);
            for (std::size_t j = 0; j < m.n; ++j) CHECK(m.at(i, j) == m.at(j, i));
        }
        CHECK(oracles::triangle_inequality_holds(m));
    }
}

TEST_CASE("cross_distance_matrix block structure") {
    PointCloud p(2), q(2);
    p.add_point({0.0, 0.0});
    q.add_point({0.0, 0.0});
    auto m = cross_distance_matrix(p, q);
    CHECK(m.size() == 2);
    for (double v : m.entries) CHECK(v == 0.0);

    PointCloud p2(2), q2(2);
    p2.add_point({0.0, 0.0});
    q2.add_point({1.0, 0.0});
    q2.add_point({2.0, 0.0});
    auto m2 = cross_distance_matrix(p2, q2);
    CHECK(m2.at(1, 2) == 0.0); // within-Q distance 1 stored as 0
    CHECK(m2.at(2, 1) == 0.0);
    CHECK(m2.at(0, 1) == doctest::Approx(1.0));
    CHECK(m2.at(0, 2) == doctest::Approx(2.0));
}

TEST_CASE("cross_distance_matrix matches brute-force reconstruction") {
    Rng rng(23);
    auto p = random_cloud(5, 3, rng);
    auto q = random_cloud(7, 3, rng);
    auto m = cross_distance_matrix(p, q);
    const std::size_t nl = p.size(), n = nl + q.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double expect;
            if (i >= nl && j >= nl) {
                expect = 0.0;
            } else {
                auto a = i < nl ? p[i] : q[i - nl];
                auto b = j < nl ? p[j] : q[j - nl];
                expect = euclidean(a, b);
            }
            CHECK(m.at(i, j) == expect);
        }
    }
}

TEST_CASE("cross_distance_matrix role swap is asymmetric") {
    Rng rng(5);
    auto p = random_cloud(3, 2, rng);
    auto q = random_cloud(3, 2, rng);
    auto pq = cross_distance_matrix(p, q);
    auto qp = cross_distance_matrix(q, p);
    CHECK(pq.entries != qp.entries);
}

TEST_CASE("cross_distance_matrix rejects dimension mismatch") {
    PointCloud p(2), q(3);
    p.add_point({0.0, 0.0});
    q.add_point({0.0, 0.0, 0.0});
    CHECK_THROWS_AS(cross_distance_matrix(p, q), std::invalid_argument);
}

TEST_CASE("inject_noise zero level returns the identical cloud") {
    Rng rng(7);
    auto cloud = random_cloud(12, 4, rng);
    auto noised = inject_noise(cloud, 0.0, 99);
    CHECK(noised.flat() == cloud.flat());
}

TEST_CASE("inject_noise hits the relative norm exactly per point") {
    Rng rng(13);
    auto cloud = random_cloud(30, 3, rng, 2.0);
    const double r = 0.37;
    auto noised = inject_noise(cloud, r, 5);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        std::vector<double> diff(3);
        for (int k = 0; k < 3; ++k) diff[k] = noised[i][k] - cloud[i][k];
        const double ratio = norm2(diff) / norm2(cloud[i]);
        CHECK(ratio == doctest::Approx(r).epsilon(1e-9));
    }
}

TEST_CASE("inject_noise unit-norm cloud at level 0.5 moves each point by 0.5") {
    PointCloud cloud(2);
    for (int k = 0; k < 8; ++k) {
        const double a = 2.0 * M_PI * k / 8.0;
        cloud.add_point({std::cos(a), std::sin(a)});
    }
    auto noised = inject_noise(cloud, 0.5, 3);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        std::vector<double> diff(2);
        for (int k = 0; k < 2; ++k) diff[k] = noised[i][k] - cloud[i][k];
        CHECK(norm2(diff) == doctest::Approx(0.5).epsilon(1e-9));
    }
}

TEST_CASE("inject_noise is bitwise reproducible and zero points use the mean-norm fallback") {
    PointCloud cloud(2);
    cloud.add_point({0.0, 0.0});
    cloud.add_point({2.0, 0.0});
    cloud.add_point({0.0, 4.0});
    auto a = inject_noise(cloud, 0.25, 77);
    auto b = inject_noise(cloud, 0.25, 77);
    CHECK(a.flat() == b.flat());
    auto c = inject_noise(cloud, 0.25, 78);
    CHECK(a.flat() != c.flat());

    // zero point: absolute scale = relative_norm * mean point norm = 0.25 * 2
    std::vector<double> diff = {a[0][0], a[0][1]};
    CHECK(norm2(diff) == doctest::Approx(0.25 * 2.0).epsilon(1e-9));
}

TEST_CASE("time_delay_embedding sliding window") {
    TimeSeries s{{1.0, 2.0, 3.0, 4.0}};
    auto cloud = time_delay_embedding(s, 2, 1);
    REQUIRE(cloud.size() == 3);
    CHECK(cloud[0][0] == 1.0);
    CHECK(cloud[0][1] == 2.0);
    CHECK(cloud[2][0] == 3.0);
    CHECK(cloud[2][1] == 4.0);

    auto ident = time_delay_embedding(s, 1, 1);
    CHECK(ident.size() == 4);
    CHECK(ident.dim() == 1);
    CHECK(ident[3][0] == 4.0);

    TimeSeries tiny{{1.0, 2.0}};
    CHECK_THROWS_AS(time_delay_embedding(tiny, 3, 1), std::invalid_argument);
}

TEST_CASE("time_delay_embedding of a sinusoid at quarter-period delay is planar") {
    const int period = 32;
    TimeSeries s;
    for (int k = 0; k < 8 * period; ++k) s.values.push_back(std::sin(2.0 * M_PI * k / period));
    auto cloud = time_delay_embedding(s, 3, period / 4);

    // least-squares plane fit: smallest covariance eigenvalue is the
    // out-of-plane variance
    std::vector<double> mean(3, 0.0);
    for (std::size_t i = 0; i < cloud.size(); ++i)
        for (int k = 0; k < 3; ++k) mean[k] += cloud[i][k];
    for (auto& m : mean) m /= static_cast<double>(cloud.size());
    std::vector<double> cov(9, 0.0);
    for (std::size_t i = 0; i < cloud.size(); ++i)
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                cov[r * 3 + c] += (cloud[i][r] - mean[r]) * (cloud[i][c] - mean[c]);
    auto ev = oracles::eigenvalues_jacobi(cov, 3);
    CHECK(ev[2] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(ev[1] > 1.0); // genuinely two-dimensional (an ellipse, not a segment)
}

TEST_CASE("pca_reduce with k = d preserves pairwise distances") {
    Rng rng(31);
    auto cloud = random_cloud(20, 4, rng);
    auto reduced = pca_reduce(cloud, 4);
    auto m0 = pairwise_distances(cloud);
    auto m1 = pairwise_distances(reduced);
    for (std::size_t i = 0; i < m0.entries.size(); ++i)
        CHECK(m1.entries[i] == doctest::Approx(m0.entries[i]).epsilon(1e-9));
}

TEST_CASE("pca_reduce on collinear points keeps distances with k = 1") {
    PointCloud cloud(3);
    for (int k = 0; k < 6; ++k) cloud.add_point({1.0 * k, 2.0 * k, -1.0 * k});
    auto reduced = pca_reduce(cloud, 1);
    auto m0 = pairwise_distances(cloud);
    auto m1 = pairwise_distances(reduced);
    for (std::size_t i = 0; i < m0.entries.size(); ++i)
        CHECK(m1.entries[i] == doctest::Approx(m0.entries[i]).epsilon(1e-12));
}

TEST_CASE("pca_reduce recovers rank-2 data embedded in 10 dimensions") {
    Rng rng(41);
    // random plane embedding of 2-D latent points
    std::vector<double> basis(20);
    for (auto& b : basis) b = rng.normal();
    PointCloud cloud(10);
    std::vector<double> p(10);
    std::vector<std::vector<double>> latents;
    for (int i = 0; i < 40; ++i) {
        const double u = rng.normal(), v = rng.normal();
        latents.push_back({u, v});
        for (int k = 0; k < 10; ++k) p[k] = u * basis[k] + v * basis[10 + k];
        cloud.add_point(std::span<const double>(p));
    }
    auto reduced = pca_reduce(cloud, 2);

    // reconstruction error: total variance minus projected variance
    double total = 0.0, projected = 0.0;
    std::vector<double> mean(10, 0.0);
    for (std::size_t i = 0; i < cloud.size(); ++i)
        for (int k = 0; k < 10; ++k) mean[k] += cloud[i][k] / cloud.size();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (int k = 0; k < 10; ++k) total += (cloud[i][k] - mean[k]) * (cloud[i][k] - mean[k]);
        projected += reduced[i][0] * reduced[i][0] + reduced[i][1] * reduced[i][1];
    }
    CHECK(projected == doctest::Approx(total).epsilon(1e-9));

    // projected variances match the top eigenvalues from the independent
    // Jacobi oracle
    std::vector<double> cov(100, 0.0);
    for (std::size_t i = 0; i < cloud.size(); ++i)
        for (int r = 0; r < 10; ++r)
            for (int c = 0; c < 10; ++c)
                cov[r * 10 + c] +=
                    (cloud[i][r] - mean[r]) * (cloud[i][c] - mean[c]) / (cloud.size() - 1);
    auto ev = oracles::eigenvalues_jacobi(cov, 10);
    double var0 = 0.0, var1 = 0.0;
    for (std::size_t i = 0; i < reduced.size(); ++i) {
        var0 += reduced[i][0] * reduced[i][0] / (reduced.size() - 1);
        var1 += reduced[i][1] * reduced[i][1] / (reduced.size() - 1);
    }
    CHECK(var0 == doctest::Approx(ev[0]).epsilon(1e-8));
    CHECK(var1 == doctest::Approx(ev[1]).epsilon(1e-8));
}

TEST_CASE("pca_reduce output covariance is diagonal with nonincreasing diagonal") {
    Rng rng(53);
    auto cloud = random_cloud(50, 5, rng);
    auto reduced = pca_reduce(cloud, 5);
    const std::size_t n = reduced.size();
    std::vector<double> mean(5, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (int k = 0; k < 5; ++k) mean[k] += reduced[i][k] / n;
    std::vector<double> cov(25, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (int r = 0; r < 5; ++r)
            for (int c = 0; c < 5; ++c)
                cov[r * 5 + c] += (reduced[i][r] - mean[r]) * (reduced[i][c] - mean[c]) / (n - 1);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 5; ++c)
            if (r != c) CHECK(std::abs(cov[r * 5 + c]) < 1e-8);
    for (int k = 1; k < 5; ++k) CHECK(cov[(k - 1) * 5 + (k - 1)] >= cov[k * 5 + k] - 1e-8);

    CHECK_THROWS_AS(pca_reduce(cloud, 6), std::invalid_argument);
}
