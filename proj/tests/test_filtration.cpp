#include <doctest.h>

#include <map>
#include <set>

#include "crosspers/filtration.hpp"
#include "crosspers/geometry.hpp"
#include "crosspers/rng.hpp"
#include "support/oracles.hpp"

using namespace crosspers;

namespace {

PointCloud random_cloud(std::size_t n, std::size_t d, Rng& rng) {
    PointCloud c(d);
    std::vector<double> p(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& x : p) x = rng.normal();
        c.add_point(std::span<const double>(p));
    }
    return c;
}

bool monotony_holds(const Filtration& f) {
    std::map<std::vector<std::uint32_t>, double> value_of;
    for (std::size_t i = 0; i < f.size(); ++i) {
        auto v = f.vertices(i);
        value_of[std::vector<std::uint32_t>(v.begin(), v.end())] = f.value(i);
    }
    for (std::size_t i = 0; i < f.size(); ++i) {
        auto v = f.vertices(i);
        if (v.size() == 1) continue;
        std::vector<std::uint32_t> face(v.begin(), v.end());
        for (std::size_t drop = 0; drop < v.size(); ++drop) {
            auto saved = face[drop];
            face.erase(face.begin() + drop);
            auto it = value_of.find(face);
            if (it == value_of.end()) return false; // face missing entirely
            if (it->second > f.value(i)) return false;
            face.insert(face.begin() + drop, saved);
        }
    }
    return true;
}

} // namespace

TEST_CASE("vr_filtration of two points") {
    PointCloud cloud(1);
    cloud.add_point({0.0});
    cloud.add_point({1.0});
    auto f = vr_filtration(pairwise_distances(cloud), 0, 2.0);
    REQUIRE(f.size() == 3);
    CHECK(f.value(0) == 0.0);
    CHECK(f.value(1) == 0.0);
    CHECK(f.dim(2) == 1);
    CHECK(f.value(2) == 1.0);
    CHECK(f.is_sorted());
}

TEST_CASE("vr_filtration of an equilateral triangle, max_dim 1") {
    PointCloud cloud(2);
    cloud.add_point({0.0, 0.0});
    cloud.add_point({1.0, 0.0});
    cloud.add_point({0.5, std::sqrt(3.0) / 2.0});
    auto f = vr_filtration(pairwise_distances(cloud), 1, 2.0);
    int n_vert = 0, n_edge = 0, n_tri = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (f.dim(i) == 0) ++n_vert;
        if (f.dim(i) == 1) {
            ++n_edge;
            CHECK(f.value(i) == doctest::Approx(1.0));
        }
        if (f.dim(i) == 2) {
            ++n_tri;
            CHECK(f.value(i) == doctest::Approx(1.0));
        }
    }
    CHECK(n_vert == 3);
    CHECK(n_edge == 3);
    CHECK(n_tri == 1);
}

TEST_CASE("vr_filtration matches exhaustive subset enumeration") {
    Rng rng(101);
    for (int rep = 0; rep < 10; ++rep) {
        auto cloud = random_cloud(6, 2, rng);
        auto dist = pairwise_distances(cloud);
        const double scale = 1.3;
        auto f = vr_filtration(dist, 2, scale); // simplices up to dim 3
        auto got = oracles::filtration_simplices(f);
        auto expected = oracles::enumerate_subsets(6, 3, scale, [&](const auto& subset) {
            double m = 0.0;
            for (std::size_t a = 0; a < subset.size(); ++a)
                for (std::size_t b = a + 1; b < subset.size(); ++b)
                    m = std::max(m, dist.at(subset[a], subset[b]));
            return m;
        });
        CHECK(got == expected);
    }
}

TEST_CASE("cross_vr_filtration of one left and one right point") {
    PointCloud p(2), q(2);
    p.add_point({0.0, 0.0});
    q.add_point({1.0, 0.0});
    auto f = cross_vr_filtration(cross_distance_matrix(p, q), 1);
    REQUIRE(f.size() >= 3);
    CHECK(f.value(0) == 0.0);
    CHECK(f.value(1) == 0.0);
    CHECK(f.dim(2) == 1);
    CHECK(f.value(2) == doctest::Approx(1.0));
}

TEST_CASE("cross_vr_filtration: simplices inside the right block enter at 0") {
    Rng rng(7);
    auto p = random_cloud(2, 2, rng);
    auto q = random_cloud(4, 2, rng);
    auto f = cross_vr_filtration(cross_distance_matrix(p, q), 2);
    for (std::size_t i = 0; i < f.size(); ++i) {
        auto v = f.vertices(i);
        const bool all_right = std::all_of(v.begin(), v.end(), [&](auto x) { return x >= 2; });
        if (all_right) CHECK(f.value(i) == 0.0);
        if (v.size() == 1) CHECK(f.value(i) == 0.0);
    }
}

TEST_CASE("cross_vr_filtration values equal the filtering function on all subsets") {
    Rng rng(303);
    for (int rep = 0; rep < 10; ++rep) {
        auto p = random_cloud(3, 3, rng);
        auto q = random_cloud(3, 3, rng);
        auto cross = cross_distance_matrix(p, q);
        const double scale = max_entry(cross);
        auto f = cross_vr_filtration(cross, 4, scale); // full subset range: dims to 5
        auto got = oracles::filtration_simplices(f);
        auto expected = oracles::enumerate_subsets(
            6, 5, scale, [&](const auto& subset) { return oracles::phi_value(p, q, subset); });
        CHECK(got == expected);
    }
}

TEST_CASE("monotony holds on every emitted filtration (<= 8 vertices)") {
    Rng rng(505);
    for (int rep = 0; rep < 8; ++rep) {
        auto cloud = random_cloud(8, 3, rng);
        auto f = vr_filtration(pairwise_distances(cloud), 2);
        CHECK(f.is_sorted());
        CHECK(monotony_holds(f));
    }
    for (int rep = 0; rep < 8; ++rep) {
        auto p = random_cloud(4, 2, rng);
        auto q = random_cloud(4, 2, rng);
        auto f = cross_vr_filtration(cross_distance_matrix(p, q), 2);
        CHECK(f.is_sorted());
        CHECK(monotony_holds(f));
    }
}

TEST_CASE("cross filtration with the right-block zeroing undone degenerates to plain VR") {
    Rng rng(99);
    auto cloud = random_cloud(7, 2, rng);
    auto dist = pairwise_distances(cloud);

    CrossDistanceMatrix fake(4, 3); // same entries, no zeroed block
    fake.entries = dist.entries;
    auto f_cross = cross_vr_filtration(fake, 1, 2.5);
    auto f_plain = vr_filtration(dist, 1, 2.5);
    CHECK(oracles::filtration_simplices(f_cross) == oracles::filtration_simplices(f_plain));
}

TEST_CASE("relabeling left-block vertices preserves the (dim, value) multiset") {
    Rng rng(42);
    auto p = random_cloud(4, 2, rng);
    auto q = random_cloud(3, 2, rng);

    std::vector<std::uint32_t> perm = {2, 0, 3, 1}; // relabel within P
    PointCloud p2 = p.subset(perm);
    auto f1 = cross_vr_filtration(cross_distance_matrix(p, q), 2);
    auto f2 = cross_vr_filtration(cross_distance_matrix(p2, q), 2);

    auto key = [](const Filtration& f) {
        std::multiset<std::pair<int, double>> s;
        for (std::size_t i = 0; i < f.size(); ++i) s.insert({f.dim(i), f.value(i)});
        return s;
    };
    CHECK(key(f1) == key(f2));
}

TEST_CASE("simplex values stay below the max matrix entry, vertices at zero") {
    Rng rng(77);
    auto p = random_cloud(5, 2, rng);
    auto q = random_cloud(5, 2, rng);
    auto cross = cross_distance_matrix(p, q);
    auto f = cross_vr_filtration(cross, 1);
    const double cap = max_entry(cross);
    for (std::size_t i = 0; i < f.size(); ++i) {
        CHECK(f.value(i) <= cap);
        if (f.dim(i) == 0) CHECK(f.value(i) == 0.0);
    }
}
