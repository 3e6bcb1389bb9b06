#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "crosspers/geometry.hpp"

namespace crosspers {

/// Sorted filtration: simplices ordered by (value, dim, lexicographic
/// vertices), all faces preceding cofaces. Stored as parallel flat arrays.
class Filtration {
public:
    std::size_t size() const { return values_.size(); }
    std::size_t n_vertices() const { return n_vertices_; }
    int max_dim() const { return max_dim_; }
    double max_scale() const { return max_scale_; }

    double value(std::size_t i) const { return values_[i]; }
    int dim(std::size_t i) const { return dims_[i]; }
    std::span<const std::uint32_t> vertices(std::size_t i) const {
        return {vertices_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
    }

    bool is_sorted() const {
        for (std::size_t i = 1; i < size(); ++i) {
            if (values_[i - 1] > values_[i]) return false;
            if (values_[i - 1] == values_[i]) {
                if (dims_[i - 1] > dims_[i]) return false;
                if (dims_[i - 1] == dims_[i]) {
                    auto a = vertices(i - 1), b = vertices(i);
                    if (!std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end()))
                        return false;
                }
            }
        }
        return true;
    }

    /// Assembles a filtration from parallel arrays as-is; order is not
    /// checked here (reduce validates it).
    static Filtration from_raw(std::vector<double> values, std::vector<std::int32_t> dims,
                               std::vector<std::uint32_t> offsets,
                               std::vector<std::uint32_t> vertices, std::size_t n_vertices,
                               int max_dim, double max_scale) {
        if (offsets.size() != values.size() + 1 || dims.size() != values.size())
            throw std::invalid_argument("Filtration::from_raw: array size mismatch");
        Filtration f;
        f.values_ = std::move(values);
        f.dims_ = std::move(dims);
        f.offsets_ = std::move(offsets);
        f.vertices_ = std::move(vertices);
        f.n_vertices_ = n_vertices;
        f.max_dim_ = max_dim;
        f.max_scale_ = max_scale;
        return f;
    }

private:
    friend struct FiltrationBuilder;
    std::vector<double> values_;
    std::vector<std::int32_t> dims_;
    std::vector<std::uint32_t> offsets_; // size()+1 entries into vertices_
    std::vector<std::uint32_t> vertices_;
    std::size_t n_vertices_ = 0;
    int max_dim_ = 0;
    double max_scale_ = 0.0;
};

struct FiltrationBuilder {
    // per-dim staging, each dim emitted in lexicographic vertex order
    std::vector<std::vector<double>> values;          // [dim][i]
    std::vector<std::vector<std::uint32_t>> vertices; // [dim] flat, (dim+1) per simplex
    std::size_t n_vertices = 0;
    int max_dim = 0;
    double max_scale = 0.0;

    void add(int dim, std::span<const std::uint32_t> verts, double value) {
        if (static_cast<std::size_t>(dim) >= values.size()) {
            values.resize(dim + 1);
            vertices.resize(dim + 1);
        }
        values[dim].push_back(value);
        vertices[dim].insert(vertices[dim].end(), verts.begin(), verts.end());
    }

    /// Sorts each dimension by value (stable, so lexicographic enumeration
    /// order breaks ties) and merges dims into the global (value, dim, lex)
    /// order. Values are nonnegative, so a stable LSD radix over the raw
    /// double bits sorts them numerically.
    Filtration finish() {
        struct Keyed {
            std::uint64_t key;
            std::uint32_t idx;
        };
        const int ndims = static_cast<int>(values.size());
        std::vector<std::vector<std::uint32_t>> order(ndims);
        for (int d = 0; d < ndims; ++d) {
            const auto& val = values[d];
            const std::size_t m = val.size();
            std::vector<Keyed> keys(m), tmp(m);
            for (std::size_t i = 0; i < m; ++i) {
                std::uint64_t bits;
                std::memcpy(&bits, &val[i], 8);
                keys[i] = {bits, static_cast<std::uint32_t>(i)};
            }
            std::vector<std::uint32_t> count(1 << 16);
            for (int pass = 0; pass < 4; ++pass) {
                const int shift = 16 * pass;
                std::fill(count.begin(), count.end(), 0u);
                for (std::size_t i = 0; i < m; ++i) ++count[(keys[i].key >> shift) & 0xffff];
                std::uint32_t sum = 0;
                for (auto& c : count) {
                    const std::uint32_t cur = c;
                    c = sum;
                    sum += cur;
                }
                for (std::size_t i = 0; i < m; ++i)
                    tmp[count[(keys[i].key >> shift) & 0xffff]++] = keys[i];
                std::swap(keys, tmp);
            }
            order[d].resize(m);
            for (std::size_t i = 0; i < m; ++i) order[d][i] = keys[i].idx;
        }

        std::size_t total = 0, total_verts = 0;
        for (int d = 0; d < ndims; ++d) {
            total += values[d].size();
            total_verts += vertices[d].size();
        }

        Filtration f;
        f.values_.reserve(total);
        f.dims_.reserve(total);
        f.offsets_.reserve(total + 1);
        f.vertices_.reserve(total_verts);
        f.offsets_.push_back(0);
        f.n_vertices_ = n_vertices;
        f.max_dim_ = max_dim;
        f.max_scale_ = max_scale;

        std::vector<std::size_t> cursor(ndims, 0);
        while (true) {
            int best = -1;
            double best_val = std::numeric_limits<double>::infinity();
            for (int d = 0; d < ndims; ++d) {
                if (cursor[d] >= order[d].size()) continue;
                const double v = values[d][order[d][cursor[d]]];
                if (v < best_val) { // ties go to the lowest dim
                    best_val = v;
                    best = d;
                }
            }
            if (best < 0) break;
            const std::uint32_t src = order[best][cursor[best]++];
            f.values_.push_back(best_val);
            f.dims_.push_back(best);
            const std::uint32_t* vp = vertices[best].data() + std::size_t(src) * (best + 1);
            f.vertices_.insert(f.vertices_.end(), vp, vp + best + 1);
            f.offsets_.push_back(static_cast<std::uint32_t>(f.vertices_.size()));
        }
        return f;
    }
};

namespace detail {

/// Vietoris-Rips enumeration over any symmetric entry matrix: simplex value
/// is the max entry among its vertex pairs, vertices enter at 0. Emits all
/// simplices up to max_dim with value <= max_scale by neighborhood
/// expansion, in lexicographic order within each dimension.
template <typename EntryFn>
Filtration build_vr(std::size_t n, EntryFn&& entry, int max_dim, double max_scale) {
    if (max_dim < 0) throw std::invalid_argument("vr: max_dim must be >= 0");
    if (!(max_scale > 0.0)) throw std::invalid_argument("vr: max_scale must be positive");

    FiltrationBuilder b;
    b.n_vertices = n;
    b.max_dim = max_dim;
    b.max_scale = max_scale;

    // ascending-index neighbor lists under the scale cutoff
    std::vector<std::vector<std::uint32_t>> nbr(n);
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = i + 1; j < n; ++j)
            if (entry(i, j) <= max_scale) nbr[i].push_back(j);

    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t vi[1] = {i};
        b.add(0, vi, 0.0);
    }
    if (max_dim >= 1) {
        for (std::uint32_t i = 0; i < n; ++i) {
            for (std::uint32_t j : nbr[i]) {
                const std::uint32_t vij[2] = {i, j};
                b.add(1, vij, entry(i, j));
            }
        }
    }
    if (max_dim == 2) {
        // triangles by two-pointer intersection of ascending neighbor lists
        for (std::uint32_t i = 0; i < n; ++i) {
            for (std::size_t a = 0; a < nbr[i].size(); ++a) {
                const std::uint32_t j = nbr[i][a];
                const double dij = entry(i, j);
                std::size_t x = a + 1, y = 0;
                const auto& ni = nbr[i];
                const auto& nj = nbr[j];
                while (x < ni.size() && y < nj.size()) {
                    if (ni[x] < nj[y]) {
                        ++x;
                    } else if (ni[x] > nj[y]) {
                        ++y;
                    } else {
                        const std::uint32_t k = ni[x];
                        const double v = std::max(dij, std::max(entry(i, k), entry(j, k)));
                        const std::uint32_t verts[3] = {i, j, k};
                        b.add(2, verts, v);
                        ++x;
                        ++y;
                    }
                }
            }
        }
    } else if (max_dim >= 3) {
        // general clique expansion: candidates are the intersection of the
        // neighbor lists of the current vertices, past the last vertex
        std::vector<std::uint32_t> simplex;
        for (std::uint32_t i = 0; i < n; ++i) {
            for (std::size_t a = 0; a < nbr[i].size(); ++a) {
                const std::uint32_t j = nbr[i][a];
                std::vector<std::uint32_t> cand;
                std::set_intersection(nbr[i].begin() + a + 1, nbr[i].end(), nbr[j].begin(),
                                      nbr[j].end(), std::back_inserter(cand));
                if (cand.empty()) continue;
                simplex.assign({i, j});
                struct Frame {
                    std::vector<std::uint32_t> cand;
                    std::size_t next;
                    double value;
                };
                std::vector<Frame> stack;
                stack.push_back({std::move(cand), 0, entry(i, j)});
                while (!stack.empty()) {
                    Frame& fr = stack.back();
                    if (fr.next >= fr.cand.size()) {
                        stack.pop_back();
                        simplex.pop_back();
                        continue;
                    }
                    const std::uint32_t u = fr.cand[fr.next++];
                    double v = fr.value;
                    for (std::uint32_t w : simplex) v = std::max(v, entry(w, u));
                    simplex.push_back(u);
                    b.add(static_cast<int>(simplex.size()) - 1,
                          std::span<const std::uint32_t>(simplex.data(), simplex.size()), v);
                    if (static_cast<int>(simplex.size()) - 1 < max_dim) {
                        std::vector<std::uint32_t> next_cand;
                        const auto& nu = nbr[u];
                        std::set_intersection(fr.cand.begin() + fr.next, fr.cand.end(), nu.begin(),
                                              nu.end(), std::back_inserter(next_cand));
                        if (!next_cand.empty()) {
                            stack.push_back({std::move(next_cand), 0, v});
                            continue;
                        }
                    }
                    simplex.pop_back();
                }
                simplex.clear();
            }
        }
    }
    return b.finish();
}

} // namespace detail

/// min over vertices of the max entry to the others. Once some vertex lies
/// within scale t of every other, the VR complex is a cone (every simplex
/// extends by that vertex) and stays contractible for all larger scales, so
/// truncating at this radius preserves every finite death in every
/// dimension.
inline double enclosing_radius(const DistanceMatrix& dist) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < dist.n; ++i) {
        double worst = 0.0;
        for (std::size_t j = 0; j < dist.n; ++j) worst = std::max(worst, dist.at(i, j));
        best = std::min(best, worst);
    }
    if (!(best > 0.0)) best = 1.0; // single point or all-duplicate cloud
    return best;
}

/// Enclosing radius of the modified matrix; the cone argument applies to the
/// cross filtration verbatim since it is VR on these entries.
inline double enclosing_radius(const CrossDistanceMatrix& cross) {
    const std::size_t n = cross.size();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        double worst = 0.0;
        for (std::size_t j = 0; j < n; ++j) worst = std::max(worst, cross.at(i, j));
        best = std::min(best, worst);
    }
    if (!(best > 0.0)) best = 1.0;
    return best;
}

inline double max_entry(const CrossDistanceMatrix& cross) {
    double m = 0.0;
    for (double v : cross.entries) m = std::max(m, v);
    if (!(m > 0.0)) m = 1.0;
    return m;
}

/// Simplices up to max_dim+1 (cofaces needed to kill max_dim classes), value
/// = max pairwise distance among vertices, cut at max_scale.
inline Filtration vr_filtration(const DistanceMatrix& dist, int max_dim, double max_scale) {
    return detail::build_vr(
        dist.n, [&](std::uint32_t i, std::uint32_t j) { return dist.at(i, j); }, max_dim + 1,
        max_scale);
}

inline Filtration vr_filtration(const DistanceMatrix& dist, int max_dim) {
    return vr_filtration(dist, max_dim, enclosing_radius(dist));
}

/// Cross filtration: simplex value is the max entry of the cross matrix
/// among its vertex pairs. Since the within-right block is zero, this equals
/// the filtering value that takes the max only over pairs touching the left
/// block, with simplices fully inside the right block entering at 0.
inline Filtration cross_vr_filtration(const CrossDistanceMatrix& cross, int max_dim,
                                      double max_scale) {
    return detail::build_vr(
        cross.size(), [&](std::uint32_t i, std::uint32_t j) { return cross.at(i, j); },
        max_dim + 1, max_scale);
}

inline Filtration cross_vr_filtration(const CrossDistanceMatrix& cross, int max_dim) {
    return cross_vr_filtration(cross, max_dim, enclosing_radius(cross));
}

} // namespace crosspers
