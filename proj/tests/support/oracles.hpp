#pragma once

// Independent reference computations used to cross-check the library:
// brute-force enumerations, rank-based persistent Betti numbers, closed
// forms. Nothing here shares code with the implementation paths under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "crosspers/filtration.hpp"
#include "crosspers/geometry.hpp"
#include "crosspers/persistence.hpp"

namespace oracles {

// ---------------------------------------------------------------- geometry

inline double dist(const crosspers::PointCloud& c, std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < c.dim(); ++k) {
        const double d = c[i][k] - c[j][k];
        s += d * d;
    }
    return std::sqrt(s);
}

inline bool triangle_inequality_holds(const crosspers::DistanceMatrix& m, double slack = 1e-12) {
    for (std::size_t i = 0; i < m.n; ++i)
        for (std::size_t j = 0; j < m.n; ++j)
            for (std::size_t k = 0; k < m.n; ++k)
                if (m.at(i, j) > m.at(i, k) + m.at(k, j) + slack) return false;
    return true;
}

// ------------------------------------------------- filtering function phi[J]

/// Filtering value for a vertex subset J of the union cloud (left indices
/// < n_left, right indices >= n_left), evaluated from raw coordinates:
/// max ||x_i - x_j|| over i in J, j in J_left; 0 if J_left is empty.
inline double phi_value(const crosspers::PointCloud& left, const crosspers::PointCloud& right,
                        const std::vector<std::uint32_t>& subset) {
    const std::size_t nl = left.size();
    auto point = [&](std::uint32_t v) {
        return v < nl ? left[v] : right[v - nl];
    };
    bool has_left = false;
    for (auto v : subset) has_left |= (v < nl);
    if (!has_left) return 0.0;
    double m = 0.0;
    for (auto vj : subset) {
        if (vj >= nl) continue;
        for (auto vi : subset) m = std::max(m, crosspers::euclidean(point(vi), point(vj)));
    }
    return m;
}

struct SimplexValue {
    std::vector<std::uint32_t> vertices;
    double value;

    bool operator<(const SimplexValue& o) const {
        if (vertices.size() != o.vertices.size()) return vertices.size() < o.vertices.size();
        if (vertices != o.vertices) return vertices < o.vertices;
        return value < o.value;
    }
    bool operator==(const SimplexValue& o) const {
        return vertices == o.vertices && value == o.value;
    }
};

/// All subsets of {0..n-1} up to max_dim whose value (per `value_of`) is
/// <= max_scale; singletons always at value 0.
template <typename ValueFn>
std::vector<SimplexValue> enumerate_subsets(std::size_t n, int max_dim, double max_scale,
                                            ValueFn&& value_of) {
    std::vector<SimplexValue> out;
    const std::uint32_t full = 1u << n;
    for (std::uint32_t mask = 1; mask < full; ++mask) {
        std::vector<std::uint32_t> subset;
        for (std::uint32_t v = 0; v < n; ++v)
            if (mask & (1u << v)) subset.push_back(v);
        if (static_cast<int>(subset.size()) - 1 > max_dim) continue;
        const double val = subset.size() == 1 ? 0.0 : value_of(subset);
        if (val <= max_scale) out.push_back({subset, val});
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<SimplexValue> filtration_simplices(const crosspers::Filtration& f) {
    std::vector<SimplexValue> out;
    for (std::size_t i = 0; i < f.size(); ++i) {
        auto v = f.vertices(i);
        out.push_back({std::vector<std::uint32_t>(v.begin(), v.end()), f.value(i)});
    }
    std::sort(out.begin(), out.end());
    return out;
}

// -------------------------------------------- rank-based persistence oracle

/// GF(2) column rank; columns are bitsets of `words` 64-bit words.
inline int gf2_rank(std::vector<std::vector<std::uint64_t>> cols) {
    auto leading = [](const std::vector<std::uint64_t>& c) -> int {
        for (int w = static_cast<int>(c.size()) - 1; w >= 0; --w)
            if (c[w]) return w * 64 + 63 - std::countl_zero(c[w]);
        return -1;
    };
    std::vector<std::pair<int, std::vector<std::uint64_t>>> basis;
    int rank = 0;
    for (auto& col : cols) {
        int lead = leading(col);
        while (lead >= 0) {
            bool reduced = false;
            for (auto& [bl, bc] : basis) {
                if (bl == lead) {
                    for (std::size_t w = 0; w < col.size(); ++w) col[w] ^= bc[w];
                    lead = leading(col);
                    reduced = true;
                    break;
                }
            }
            if (!reduced) break;
        }
        if (lead >= 0) {
            basis.emplace_back(lead, col);
            ++rank;
        }
    }
    return rank;
}

/// Persistence diagrams (positive-length and essential pairs only) derived
/// from persistent Betti numbers beta_s^{i,j}, each computed from boundary
/// matrix ranks at value sublevels. Fully independent of any pairing
/// algorithm.
inline std::vector<crosspers::PersistenceDiagram> rank_oracle_diagrams(
    const crosspers::Filtration& filt, int max_hom_dim) {
    using crosspers::kInfiniteDeath;

    // distinct filtration values
    std::vector<double> levels;
    for (std::size_t i = 0; i < filt.size(); ++i) levels.push_back(filt.value(i));
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    const int L = static_cast<int>(levels.size());
    auto level_count = [&](const std::vector<double>& vals, int i) {
        // number of entries <= levels[i-1]; i = 0 means the empty complex
        if (i == 0) return std::size_t(0);
        return static_cast<std::size_t>(
            std::upper_bound(vals.begin(), vals.end(), levels[i - 1]) - vals.begin());
    };

    // per dimension: value-sorted simplices and their boundary columns
    const int need = std::min(filt.max_dim(), max_hom_dim + 1);
    std::vector<std::vector<double>> vals(need + 1);
    std::vector<std::vector<std::vector<std::uint32_t>>> simp(need + 1);
    for (std::size_t i = 0; i < filt.size(); ++i) {
        const int d = filt.dim(i);
        if (d > need) continue;
        auto v = filt.vertices(i);
        vals[d].push_back(filt.value(i));
        simp[d].push_back(std::vector<std::uint32_t>(v.begin(), v.end()));
    }
    for (int d = 0; d <= need; ++d) {
        std::vector<std::size_t> order(vals[d].size());
        for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return vals[d][a] < vals[d][b]; });
        std::vector<double> v2;
        std::vector<std::vector<std::uint32_t>> s2;
        for (auto k : order) {
            v2.push_back(vals[d][k]);
            s2.push_back(simp[d][k]);
        }
        vals[d] = std::move(v2);
        simp[d] = std::move(s2);
    }

    // boundary columns as bitsets over value-sorted rows
    std::vector<std::vector<std::vector<std::uint64_t>>> boundary(need + 1);
    for (int d = 1; d <= need; ++d) {
        std::map<std::vector<std::uint32_t>, std::size_t> row_of;
        for (std::size_t r = 0; r < simp[d - 1].size(); ++r) row_of[simp[d - 1][r]] = r;
        const std::size_t words = (simp[d - 1].size() + 63) / 64;
        boundary[d].resize(simp[d].size());
        for (std::size_t c = 0; c < simp[d].size(); ++c) {
            boundary[d][c].assign(words, 0);
            auto face = simp[d][c];
            for (std::size_t drop = 0; drop + 1 <= face.size(); ++drop) {
                std::vector<std::uint32_t> f = face;
                f.erase(f.begin() + drop);
                const std::size_t r = row_of.at(f);
                boundary[d][c][r / 64] |= std::uint64_t(1) << (r % 64);
            }
        }
    }

    auto rank_sublevel = [&](int d, std::size_t ncols, std::size_t mask_rows_leq) {
        // rank of boundary_d restricted to the first ncols columns, with the
        // first mask_rows_leq rows zeroed (rows kept are those > that level)
        if (d < 1 || d > need) return 0;
        std::vector<std::vector<std::uint64_t>> cols;
        cols.reserve(ncols);
        for (std::size_t c = 0; c < ncols; ++c) {
            auto col = boundary[d][c];
            for (std::size_t r = 0; r < mask_rows_leq && r < simp[d - 1].size(); ++r)
                col[r / 64] &= ~(std::uint64_t(1) << (r % 64));
            cols.push_back(std::move(col));
        }
        return gf2_rank(std::move(cols));
    };

    std::vector<crosspers::PersistenceDiagram> out(max_hom_dim + 1);
    for (int s = 0; s <= max_hom_dim; ++s) {
        out[s].dim = s;
        // Z_s(K_i) = #columns - rank(boundary_s at K_i)
        std::vector<long> z(L + 1, 0);
        for (int i = 1; i <= L; ++i) {
            const std::size_t ns = level_count(vals[s], i);
            const long rk = (s >= 1) ? rank_sublevel(s, ns, 0) : 0;
            z[i] = static_cast<long>(ns) - rk;
        }
        // beta[i][j] = Z_s(K_i) - (rank d_{s+1}(K_j) - rank of rows outside K_i)
        std::vector<std::vector<long>> beta(L + 1, std::vector<long>(L + 1, 0));
        for (int j = 1; j <= L; ++j) {
            const std::size_t ncols =
                (s + 1 <= need) ? level_count(vals[s + 1], j) : std::size_t(0);
            const long full = rank_sublevel(s + 1, ncols, 0);
            for (int i = 1; i <= j; ++i) {
                const std::size_t rows_leq = level_count(vals[s], i);
                const long outside = rank_sublevel(s + 1, ncols, rows_leq);
                beta[i][j] = z[i] - (full - outside);
            }
        }
        for (int i = 1; i <= L; ++i) {
            for (int j = i + 1; j <= L; ++j) {
                const long mult = (beta[i][j - 1] - beta[i][j]) - (beta[i - 1][j - 1] - beta[i - 1][j]);
                for (long m = 0; m < mult; ++m)
                    out[s].pairs.push_back({levels[i - 1], levels[j - 1]});
            }
            const long ess = beta[i][L] - beta[i - 1][L];
            for (long m = 0; m < ess; ++m) out[s].pairs.push_back({levels[i - 1], kInfiniteDeath});
        }
    }
    return out;
}

/// Betti number of the value sublevel complex at threshold t (via the rank
/// oracle's machinery would be overkill; kept simple through beta^{t,t}).
inline long pairs_alive_at(const crosspers::PersistenceDiagram& d, double t) {
    long c = 0;
    for (const auto& p : d.pairs) c += (p.birth <= t && t < p.death) ? 1 : 0;
    return c;
}

/// Multiset comparison of positive-length + essential pairs.
inline bool diagrams_match(const crosspers::PersistenceDiagram& got,
                           const crosspers::PersistenceDiagram& expected) {
    auto key = [](const crosspers::PersistenceDiagram& d) {
        std::vector<std::pair<double, double>> k;
        for (const auto& p : d.pairs)
            if (!p.zero_length()) k.emplace_back(p.birth, p.death);
        std::sort(k.begin(), k.end());
        return k;
    };
    return key(got) == key(expected);
}

// ------------------------------------------------------------- scalar math

inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
    return s;
}

inline double normal_pdf(double x, double mu, double sigma) {
    const double z = (x - mu) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI));
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// O(n^2) pairwise AUC with ties counted half.
inline double auc_bruteforce(const std::vector<double>& scores, const std::vector<int>& labels) {
    double u = 0.0;
    long n_pos = 0, n_neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        ++n_pos;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] == 1) continue;
            if (scores[i] > scores[j])
                u += 1.0;
            else if (scores[i] == scores[j])
                u += 0.5;
        }
    }
    for (int l : labels) n_neg += (l != 1);
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auc: single-class labels");
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// Classical Jacobi with largest-off-diagonal pivoting; independent of the
/// cyclic-sweep implementation in the library.
inline std::vector<double> eigenvalues_jacobi(std::vector<double> a, std::size_t d) {
    for (int iter = 0; iter < 10000; ++iter) {
        std::size_t p = 0, q = 1;
        double best = -1.0;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i + 1; j < d; ++j)
                if (std::abs(a[i * d + j]) > best) {
                    best = std::abs(a[i * d + j]);
                    p = i;
                    q = j;
                }
        if (d < 2 || best < 1e-14) break;
        const double app = a[p * d + p], aqq = a[q * d + q], apq = a[p * d + q];
        const double phi = 0.5 * std::atan2(2.0 * apq, aqq - app);
        const double c = std::cos(phi), s = std::sin(phi);
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
    }
    std::vector<double> ev(d);
    for (std::size_t i = 0; i < d; ++i) ev[i] = a[i * d + i];
    std::sort(ev.rbegin(), ev.rend());
    return ev;
}

} // namespace oracles
