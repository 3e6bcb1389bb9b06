#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>

#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "crosspers/filtration.hpp"
#include "crosspers/geometry.hpp"

namespace crosspers {

constexpr double kInfiniteDeath = std::numeric_limits<double>::infinity();

struct PersistencePair {
    double birth = 0.0;
    double death = kInfiniteDeath;

    bool essential() const { return std::isinf(death); }
    bool zero_length() const { return death == birth; }
    bool finite_positive() const { return !essential() && death > birth; }
};

/// Per-dimension multiset of (birth, death) pairs. Zero-length pairs are
/// retained (flagged through PersistencePair::zero_length); summaries skip
/// them.
struct PersistenceDiagram {
    int dim = 0;
    std::vector<PersistencePair> pairs;

    std::vector<PersistencePair> finite_positive_pairs() const {
        std::vector<PersistencePair> out;
        for (const auto& p : pairs)
            if (p.finite_positive()) out.push_back(p);
        return out;
    }
    std::size_t essential_count() const {
        std::size_t c = 0;
        for (const auto& p : pairs) c += p.essential();
        return c;
    }
};

/// Column pairings from the reduction: sorted filtration index of each birth
/// simplex mapped to the index of its killing simplex (-1 if unpaired).
struct ReductionTrace {
    std::vector<std::int64_t> killer;
};

struct ReduceOptions {
    bool use_clearing = true;
    bool with_trace = false;
};

struct ReduceResult {
    std::vector<PersistenceDiagram> diagrams; // dims 0..max_hom_dim
    ReductionTrace trace;                     // empty unless requested
};

namespace detail {

/// Working column for the reduction: a bitset over row indices with a
/// two-level summary so the maximal set bit (the pivot) is found in a few
/// word scans. One instance is reused across all columns of a round.
class PivotColumn {
public:
    void resize(std::size_t rows) {
        words_.assign((rows + 63) / 64, 0);
        sum1_.assign((words_.size() + 63) / 64, 0);
    }

    void flip(std::uint32_t r) {
        const std::size_t w = r >> 6;
        const std::uint64_t bit = std::uint64_t(1) << (r & 63);
        words_[w] ^= bit;
        const std::size_t s = w >> 6;
        const std::uint64_t sbit = std::uint64_t(1) << (w & 63);
        if (words_[w])
            sum1_[s] |= sbit;
        else
            sum1_[s] &= ~sbit;
    }

    /// Highest set bit, or -1 when the column is zero.
    std::int64_t pivot() const {
        for (std::size_t s = sum1_.size(); s-- > 0;) {
            if (!sum1_[s]) continue;
            const std::size_t w = (s << 6) + 63 - std::countl_zero(sum1_[s]);
            return static_cast<std::int64_t>((w << 6) + 63 - std::countl_zero(words_[w]));
        }
        return -1;
    }

    bool empty() const {
        for (auto s : sum1_)
            if (s) return false;
        return true;
    }

    /// Extracts all set bits in descending order and clears the column.
    void extract_descending(std::vector<std::uint32_t>& out) {
        out.clear();
        for (std::size_t s = sum1_.size(); s-- > 0;) {
            std::uint64_t sw = sum1_[s];
            while (sw) {
                const unsigned sb = 63 - std::countl_zero(sw);
                sw &= ~(std::uint64_t(1) << sb);
                const std::size_t w = (s << 6) + sb;
                std::uint64_t word = words_[w];
                while (word) {
                    const unsigned b = 63 - std::countl_zero(word);
                    word &= ~(std::uint64_t(1) << b);
                    out.push_back(static_cast<std::uint32_t>((w << 6) + b));
                }
                words_[w] = 0;
            }
            sum1_[s] = 0;
        }
    }

private:
    std::vector<std::uint64_t> words_;
    std::vector<std::uint64_t> sum1_;
};

/// Maps a (dim-1)-face, given as sorted vertex ids, to its row index: the
/// position of that simplex among its dimension class in filtration order.
class RowIndex {
public:
    RowIndex(const Filtration& filt, std::span<const std::uint32_t> ids, int face_dim,
             std::size_t n_vertices)
        : face_dim_(face_dim), n_(n_vertices) {
        if (face_dim == 0) {
            vertex_local_.assign(n_vertices, 0);
            for (std::uint32_t local = 0; local < ids.size(); ++local)
                vertex_local_[filt.vertices(ids[local])[0]] = local;
            return;
        }
        if (face_dim == 1 && n_vertices * n_vertices <= (std::size_t(1) << 24)) {
            // flat pair table: the hot path for dim-1 rows
            flat_.assign(n_vertices * n_vertices, UINT32_MAX);
            for (std::uint32_t local = 0; local < ids.size(); ++local) {
                auto v = filt.vertices(ids[local]);
                flat_[std::size_t(v[0]) * n_ + v[1]] = local;
            }
            use_flat_ = true;
            return;
        }
        bits_ = std::bit_width(n_vertices == 0 ? std::size_t(1) : n_vertices);
        packable_ = static_cast<std::size_t>(face_dim + 1) * bits_ <= 64;
        if (packable_) {
            packed_.reserve(ids.size() * 2);
            for (std::uint32_t local = 0; local < ids.size(); ++local)
                packed_.emplace(pack(filt.vertices(ids[local])), local);
        } else {
            for (std::uint32_t local = 0; local < ids.size(); ++local) {
                auto v = filt.vertices(ids[local]);
                generic_[std::vector<std::uint32_t>(v.begin(), v.end())] = local;
            }
        }
    }

    std::uint32_t lookup(std::span<const std::uint32_t> verts) const {
        if (face_dim_ == 0) return vertex_local_[verts[0]];
        if (use_flat_) {
            const std::uint32_t r = flat_[std::size_t(verts[0]) * n_ + verts[1]];
            if (r == UINT32_MAX) throw std::runtime_error("reduce: face missing from filtration");
            return r;
        }
        if (packable_) {
            auto it = packed_.find(pack(verts));
            if (it == packed_.end()) throw std::runtime_error("reduce: face missing from filtration");
            return it->second;
        }
        auto it = generic_.find(std::vector<std::uint32_t>(verts.begin(), verts.end()));
        if (it == generic_.end()) throw std::runtime_error("reduce: face missing from filtration");
        return it->second;
    }

private:
    std::uint64_t pack(std::span<const std::uint32_t> verts) const {
        std::uint64_t key = 0;
        for (std::uint32_t v : verts) key = (key << bits_) | v;
        return key;
    }

    int face_dim_;
    std::size_t n_ = 0;
    unsigned bits_ = 0;
    bool packable_ = false;
    bool use_flat_ = false;
    std::vector<std::uint32_t> vertex_local_;
    std::vector<std::uint32_t> flat_;
    std::unordered_map<std::uint64_t, std::uint32_t> packed_;
    std::map<std::vector<std::uint32_t>, std::uint32_t> generic_;
};

} // namespace detail

/// Standard persistent-homology column reduction over Z/2 with the clearing
/// (twist) optimization: dimensions are processed top-down and pivot rows of
/// one round are skipped as columns in the next. Sparse columns, cached
/// pivots.
inline ReduceResult reduce(const Filtration& filt, int max_hom_dim, ReduceOptions opts = {}) {
    if (max_hom_dim < 0) throw std::invalid_argument("reduce: max_hom_dim must be >= 0");
    if (max_hom_dim > filt.max_dim())
        throw std::invalid_argument("reduce: max_hom_dim exceeds the filtration's max_dim");
    if (!filt.is_sorted()) throw std::invalid_argument("reduce: filtration is not sorted");

    const int top = std::min(filt.max_dim(), max_hom_dim + 1);

    // global ids per dimension, in filtration order
    std::vector<std::vector<std::uint32_t>> ids(top + 1);
    for (std::uint32_t g = 0; g < filt.size(); ++g) {
        const int d = filt.dim(g);
        if (d <= top) ids[d].push_back(g);
    }

    ReduceResult result;
    result.diagrams.resize(max_hom_dim + 1);
    for (int s = 0; s <= max_hom_dim; ++s) result.diagrams[s].dim = s;
    if (opts.with_trace) result.trace.killer.assign(filt.size(), -1);

    // paired_as_birth[d][local]: simplex is the birth of an already-found pair
    std::vector<std::vector<char>> paired_as_birth(top + 1);
    for (int d = 0; d <= top; ++d) paired_as_birth[d].assign(ids[d].size(), 0);
    std::vector<std::vector<char>> positive(top + 1);
    for (int d = 0; d <= top; ++d) positive[d].assign(ids[d].size(), 0);
    positive[0].assign(ids[0].size(), 1); // vertices have empty boundary

    std::vector<std::uint32_t> faces, scratch;
    for (int delta = top; delta >= 1; --delta) {
        const auto& cols = ids[delta];
        const auto& rows = ids[delta - 1];
        detail::RowIndex row_index(filt, rows, delta - 1, filt.n_vertices());

        // owner[r]: reduced column with pivot r, stored descending (pivot
        // first) and fully expanded over earlier owners, so later reductions
        // never re-walk shared chains
        std::vector<std::vector<std::uint32_t>> owner(rows.size());
        std::vector<char> owned(rows.size(), 0);
        detail::PivotColumn working, compressor;
        working.resize(rows.size());
        compressor.resize(rows.size());

        auto compress_into = [&](std::uint32_t pivot, std::vector<std::uint32_t>& out) {
            // `compressor` holds the tail below `pivot`; expand owned entries
            out.clear();
            out.push_back(pivot);
            std::int64_t e;
            while ((e = compressor.pivot()) >= 0) {
                if (owned[e]) {
                    const auto& add = owner[e];
                    for (std::size_t k = 0; k < add.size(); ++k) compressor.flip(add[k]);
                } else {
                    out.push_back(static_cast<std::uint32_t>(e));
                    compressor.flip(static_cast<std::uint32_t>(e));
                }
            }
        };

        for (std::uint32_t j = 0; j < cols.size(); ++j) {
            if (opts.use_clearing && paired_as_birth[delta][j]) continue;

            const auto verts = filt.vertices(cols[j]);
            faces.clear();
            if (delta == 2) {
                const std::uint32_t ab[2] = {verts[0], verts[1]};
                const std::uint32_t ac[2] = {verts[0], verts[2]};
                const std::uint32_t bc[2] = {verts[1], verts[2]};
                faces = {row_index.lookup(ab), row_index.lookup(ac), row_index.lookup(bc)};
            } else {
                scratch.assign(verts.begin(), verts.end());
                for (std::size_t drop = 0; drop < scratch.size(); ++drop) {
                    std::uint32_t saved = scratch[drop];
                    scratch.erase(scratch.begin() + drop);
                    faces.push_back(row_index.lookup(scratch));
                    scratch.insert(scratch.begin() + drop, saved);
                }
            }
            std::sort(faces.begin(), faces.end());

            const std::uint32_t raw_pivot = faces.back();
            std::uint32_t pivot;
            if (!owned[raw_pivot]) {
                pivot = raw_pivot;
                for (std::size_t k = 0; k + 1 < faces.size(); ++k) compressor.flip(faces[k]);
                compress_into(pivot, owner[pivot]);
                owned[pivot] = 1;
            } else {
                for (auto f : faces) working.flip(f);
                std::int64_t p;
                while ((p = working.pivot()) >= 0 && owned[p]) {
                    for (auto e : owner[p]) working.flip(e);
                }
                if (p < 0) {
                    positive[delta][j] = 1;
                    continue;
                }
                pivot = static_cast<std::uint32_t>(p);
                working.flip(pivot); // move the tail into the compressor
                std::vector<std::uint32_t> tail;
                working.extract_descending(tail);
                for (auto e : tail) compressor.flip(e);
                compress_into(pivot, owner[pivot]);
                owned[pivot] = 1;
            }

            paired_as_birth[delta - 1][pivot] = 1;
            if (delta - 1 <= max_hom_dim) {
                result.diagrams[delta - 1].pairs.push_back(
                    {filt.value(rows[pivot]), filt.value(cols[j])});
            }
            if (opts.with_trace) result.trace.killer[rows[pivot]] = cols[j];
        }
    }

    // unpaired creators are essential
    for (int s = 0; s <= max_hom_dim; ++s) {
        for (std::uint32_t i = 0; i < ids[s].size(); ++i) {
            if (positive[s][i] && !paired_as_birth[s][i])
                result.diagrams[s].pairs.push_back({filt.value(ids[s][i]), kInfiniteDeath});
        }
    }
    return result;
}

inline std::vector<PersistenceDiagram> reduce_diagrams(const Filtration& filt, int max_hom_dim,
                                                       ReduceOptions opts = {}) {
    return reduce(filt, max_hom_dim, opts).diagrams;
}

/// Composes cross_distance_matrix -> cross_vr_filtration -> reduce and
/// returns the diagram in homology dimension `dim`. Default max_scale is the
/// enclosing radius of the cross matrix, which captures every finite death.
inline PersistenceDiagram cross_barcode(const PointCloud& left, const PointCloud& right, int dim,
                                        std::optional<double> max_scale = std::nullopt) {
    const CrossDistanceMatrix cross = cross_distance_matrix(left, right);
    const double scale = max_scale.value_or(enclosing_radius(cross));
    const Filtration filt = cross_vr_filtration(cross, dim, scale);
    auto diagrams = reduce_diagrams(filt, dim);
    return std::move(diagrams[dim]);
}

} // namespace crosspers
