#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "crosspers/geometry.hpp"
#include "crosspers/rng.hpp"
#include "crosspers/summaries.hpp"

namespace crosspers {

// ------------------------------------------------------------------- MLPs

/// Dense layers with relu between them; the final layer stays linear.
struct MlpLayer {
    std::size_t in = 0, out = 0;
    std::vector<double> w; // out x in, row-major
    std::vector<double> b; // out
};

struct Mlp {
    std::vector<MlpLayer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out; }
    bool empty() const { return layers.empty(); }
};

inline Mlp make_mlp(std::span<const std::size_t> sizes, Rng& rng) {
    if (sizes.size() < 2) throw std::invalid_argument("make_mlp: needs at least two layer sizes");
    Mlp m;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        MlpLayer layer;
        layer.in = sizes[l];
        layer.out = sizes[l + 1];
        layer.w.resize(layer.out * layer.in);
        layer.b.assign(layer.out, 0.0);
        const double scale = 1.0 / std::sqrt(static_cast<double>(layer.in));
        for (double& x : layer.w) x = rng.uniform(-scale, scale);
        m.layers.push_back(std::move(layer));
    }
    return m;
}

inline Mlp zero_like(const Mlp& src) {
    Mlp m = src;
    for (auto& l : m.layers) {
        std::fill(l.w.begin(), l.w.end(), 0.0);
        std::fill(l.b.begin(), l.b.end(), 0.0);
    }
    return m;
}

/// Per-layer preactivations and outputs, kept for backprop.
struct MlpCache {
    std::vector<double> input;
    std::vector<std::vector<double>> pre;  // y_l
    std::vector<std::vector<double>> post; // h_l (relu applied except last)
};

inline std::vector<double> mlp_forward(const Mlp& m, std::span<const double> x,
                                       MlpCache* cache = nullptr) {
    if (x.size() != m.input_dim()) throw std::invalid_argument("mlp_forward: input dim mismatch");
    std::vector<double> h(x.begin(), x.end());
    if (cache) {
        cache->input.assign(x.begin(), x.end());
        cache->pre.clear();
        cache->post.clear();
    }
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto& layer = m.layers[l];
        std::vector<double> y(layer.out);
        for (std::size_t o = 0; o < layer.out; ++o) {
            double s = layer.b[o];
            const double* wrow = layer.w.data() + o * layer.in;
            for (std::size_t i = 0; i < layer.in; ++i) s += wrow[i] * h[i];
            y[o] = s;
        }
        if (cache) cache->pre.push_back(y);
        if (l + 1 < m.layers.size())
            for (double& v : y) v = v > 0.0 ? v : 0.0;
        if (cache) cache->post.push_back(y);
        h = std::move(y);
    }
    return h;
}

/// Backpropagates grad_out, accumulating parameter grads into `grad` (same
/// shape as `m`); returns the gradient w.r.t. the input.
inline std::vector<double> mlp_backward(const Mlp& m, const MlpCache& cache,
                                        std::span<const double> grad_out, Mlp& grad) {
    std::vector<double> g(grad_out.begin(), grad_out.end());
    for (std::size_t l = m.layers.size(); l-- > 0;) {
        const auto& layer = m.layers[l];
        auto& glayer = grad.layers[l];
        if (l + 1 < m.layers.size()) {
            const auto& pre = cache.pre[l];
            for (std::size_t o = 0; o < layer.out; ++o)
                if (pre[o] <= 0.0) g[o] = 0.0;
        }
        const std::vector<double>& h_prev = (l == 0) ? cache.input : cache.post[l - 1];
        std::vector<double> g_prev(layer.in, 0.0);
        for (std::size_t o = 0; o < layer.out; ++o) {
            glayer.b[o] += g[o];
            const double go = g[o];
            double* gwrow = glayer.w.data() + o * layer.in;
            const double* wrow = layer.w.data() + o * layer.in;
            for (std::size_t i = 0; i < layer.in; ++i) {
                gwrow[i] += go * h_prev[i];
                g_prev[i] += wrow[i] * go;
            }
        }
        g = std::move(g_prev);
    }
    return g;
}

// ------------------------------------------------------ permutation layers

/// Splits at bit_ceil(n)/2, so duplicating every element in place scales the
/// float result by exactly two.
inline void pairwise_tree_sum(const std::vector<std::vector<double>>& rows, std::size_t lo,
                              std::size_t hi, std::vector<double>& out) {
    if (hi - lo == 1) {
        out = rows[lo];
        return;
    }
    const std::size_t split = lo + std::bit_ceil(hi - lo) / 2;
    std::vector<double> right;
    pairwise_tree_sum(rows, lo, split, out);
    pairwise_tree_sum(rows, split, hi, right);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += right[i];
}

/// Lexicographic order of the points: the canonical input ordering that
/// makes all pooled sums bitwise permutation-invariant.
inline std::vector<std::uint32_t> canonical_order(const PointCloud& cloud) {
    std::vector<std::uint32_t> order(cloud.size());
    for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        auto pa = cloud[a], pb = cloud[b];
        return std::lexicographical_compare(pa.begin(), pa.end(), pb.begin(), pb.end());
    });
    return order;
}

struct DeepSets {
    Mlp phi1, phi2;
};

struct DeepSetsCache {
    std::vector<MlpCache> per_row;
    std::vector<double> pooled;
    MlpCache phi2_cache;
    std::vector<double> out;
};

/// phi2(sum_x phi1(x)) over rows in the given order.
inline std::vector<double> deepsets_encode_rows(const DeepSets& ds,
                                                const std::vector<std::vector<double>>& rows,
                                                DeepSetsCache* cache = nullptr) {
    if (rows.empty()) throw std::invalid_argument("deepsets: empty input");
    std::vector<std::vector<double>> contribs(rows.size());
    if (cache) cache->per_row.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        contribs[i] = mlp_forward(ds.phi1, rows[i], cache ? &cache->per_row[i] : nullptr);
    std::vector<double> pooled;
    pairwise_tree_sum(contribs, 0, contribs.size(), pooled);
    auto out = mlp_forward(ds.phi2, pooled, cache ? &cache->phi2_cache : nullptr);
    if (cache) {
        cache->pooled = pooled;
        cache->out = out;
    }
    return out;
}

inline void deepsets_backward(const DeepSets& ds, const DeepSetsCache& cache,
                              std::span<const double> grad_out, DeepSets& grad) {
    auto g_pooled = mlp_backward(ds.phi2, cache.phi2_cache, grad_out, grad.phi2);
    for (const auto& row_cache : cache.per_row)
        mlp_backward(ds.phi1, row_cache, g_pooled, grad.phi1);
}

/// Sum_x phi1(x) in canonical order; exposed so the pooling identities are
/// directly testable.
inline std::vector<double> deepsets_pooled_sum(const PointCloud& cloud, const Mlp& phi1) {
    if (cloud.empty()) throw std::invalid_argument("deepsets: empty cloud");
    if (cloud.dim() != phi1.input_dim())
        throw std::invalid_argument("deepsets: cloud dimension does not match phi1 input");
    const auto order = canonical_order(cloud);
    std::vector<std::vector<double>> contribs(cloud.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        auto p = cloud[order[i]];
        contribs[i] = mlp_forward(phi1, p);
    }
    std::vector<double> pooled;
    pairwise_tree_sum(contribs, 0, contribs.size(), pooled);
    return pooled;
}

/// Point-order-invariant encoder phi2(sum_x phi1(x)).
inline std::vector<double> deepsets_encode(const PointCloud& cloud, const Mlp& phi1,
                                           const Mlp& phi2) {
    auto pooled = deepsets_pooled_sum(cloud, phi1);
    return mlp_forward(phi2, pooled);
}

// ---------------------------------------------------- distance-row features

enum class DistanceReducer { pca, topk_max, quantiles };

inline std::string to_string(DistanceReducer r) {
    switch (r) {
        case DistanceReducer::pca: return "pca";
        case DistanceReducer::topk_max: return "topk_max";
        default: return "quantiles";
    }
}
inline DistanceReducer reducer_from_string(const std::string& s) {
    if (s == "pca") return DistanceReducer::pca;
    if (s == "topk_max") return DistanceReducer::topk_max;
    if (s == "quantiles") return DistanceReducer::quantiles;
    throw std::invalid_argument("unknown distance reducer: " + s);
}

/// PCA projection for distance-matrix rows, fitted on training pairs only
/// and frozen afterwards. Requires a fixed row width, so all training and
/// inference pairs must share n_left + n_right.
struct FittedPca {
    std::size_t width = 0;
    int k = 0;
    std::vector<double> mean;       // width
    std::vector<double> components; // k x width, row-major

    std::vector<double> project(std::span<const double> row) const {
        if (row.size() != width) throw std::invalid_argument("distance pca: row width mismatch");
        std::vector<double> out(k, 0.0);
        for (int c = 0; c < k; ++c) {
            double s = 0.0;
            const double* comp = components.data() + static_cast<std::size_t>(c) * width;
            for (std::size_t i = 0; i < width; ++i) s += (row[i] - mean[i]) * comp[i];
            out[c] = s;
        }
        return out;
    }
};

inline FittedPca fit_distance_pca(std::span<const CrossDistanceMatrix> training, int k) {
    if (training.empty()) throw std::invalid_argument("fit_distance_pca: no training matrices");
    const std::size_t width = training.front().size();
    if (k < 1 || static_cast<std::size_t>(k) > width)
        throw std::invalid_argument("fit_distance_pca: k out of range");
    std::size_t n_rows = 0;
    for (const auto& m : training) {
        if (m.size() != width)
            throw std::invalid_argument("fit_distance_pca: all pairs must share the matrix width");
        n_rows += m.size();
    }
    FittedPca pca;
    pca.width = width;
    pca.k = k;
    pca.mean.assign(width, 0.0);
    for (const auto& m : training)
        for (std::size_t r = 0; r < m.size(); ++r)
            for (std::size_t c = 0; c < width; ++c) pca.mean[c] += m.entries[r * width + c];
    for (double& v : pca.mean) v /= static_cast<double>(n_rows);

    std::vector<double> cov(width * width, 0.0);
    for (const auto& m : training) {
        for (std::size_t r = 0; r < m.size(); ++r) {
            const double* row = m.entries.data() + r * width;
            for (std::size_t a = 0; a < width; ++a) {
                const double xa = row[a] - pca.mean[a];
                for (std::size_t b = a; b < width; ++b) cov[a * width + b] += xa * (row[b] - pca.mean[b]);
            }
        }
    }
    const double denom = n_rows > 1 ? static_cast<double>(n_rows - 1) : 1.0;
    for (std::size_t a = 0; a < width; ++a)
        for (std::size_t b = a; b < width; ++b) {
            cov[a * width + b] /= denom;
            cov[b * width + a] = cov[a * width + b];
        }
    const SymmetricEigen eig = jacobi_eigendecomposition(cov, width);
    pca.components.assign(static_cast<std::size_t>(k) * width, 0.0);
    for (int c = 0; c < k; ++c)
        for (std::size_t rcomp = 0; rcomp < width; ++rcomp)
            pca.components[static_cast<std::size_t>(c) * width + rcomp] =
                eig.vectors[rcomp * width + c];
    return pca;
}

/// Per-point feature rows from the cross matrix: topk_max keeps each row's K
/// largest entries in descending order; quantiles takes K evenly spaced
/// quantiles of the row (linear interpolation); pca projects rows through a
/// fitted projection.
inline std::vector<std::vector<double>> distance_features(const CrossDistanceMatrix& cross,
                                                          DistanceReducer method, int k,
                                                          const FittedPca* pca = nullptr) {
    const std::size_t w = cross.size();
    if (k < 1) throw std::invalid_argument("distance_features: K must be >= 1");
    if (method != DistanceReducer::pca && static_cast<std::size_t>(k) > w)
        throw std::invalid_argument("distance_features: K exceeds the row length");
    std::vector<std::vector<double>> rows(w);
    for (std::size_t r = 0; r < w; ++r) {
        const double* row = cross.entries.data() + r * w;
        switch (method) {
            case DistanceReducer::topk_max: {
                std::vector<double> sorted(row, row + w);
                std::sort(sorted.rbegin(), sorted.rend());
                sorted.resize(k);
                rows[r] = std::move(sorted);
                break;
            }
            case DistanceReducer::quantiles: {
                std::vector<double> sorted(row, row + w);
                std::sort(sorted.begin(), sorted.end());
                std::vector<double> q(k);
                for (int j = 0; j < k; ++j) {
                    const double u = k == 1 ? 0.5 : static_cast<double>(j) / (k - 1);
                    const double pos = u * (w - 1);
                    const std::size_t lo = static_cast<std::size_t>(pos);
                    const std::size_t hi = std::min(lo + 1, w - 1);
                    const double frac = pos - lo;
                    q[j] = sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
                }
                rows[r] = std::move(q);
                break;
            }
            case DistanceReducer::pca: {
                if (!pca) throw std::invalid_argument("distance_features: pca reducer needs a fit");
                rows[r] = pca->project(std::span<const double>(row, w));
                break;
            }
        }
    }
    return rows;
}

// -------------------------------------------------------------- the model

enum class CrnVariant { a_merged, b_dual, c_dual_with_distance };

inline std::string to_string(CrnVariant v) {
    switch (v) {
        case CrnVariant::a_merged: return "a_merged";
        case CrnVariant::b_dual: return "b_dual";
        default: return "c_dual_with_distance";
    }
}
inline CrnVariant variant_from_string(const std::string& s) {
    if (s == "a_merged") return CrnVariant::a_merged;
    if (s == "b_dual") return CrnVariant::b_dual;
    if (s == "c_dual_with_distance") return CrnVariant::c_dual_with_distance;
    throw std::invalid_argument("unknown variant: " + s);
}

struct CrnOptions {
    std::vector<std::size_t> phi1_hidden = {64, 128};
    std::vector<std::size_t> phi2_hidden = {64};
    std::vector<std::size_t> head_hidden = {256};
    DistanceReducer reducer = DistanceReducer::quantiles;
    int reducer_k = 60;
    bool right_encoder_enabled = true;
};

/// The permutation-invariant density predictor. Variant a encodes the merged
/// cloud; b adds per-cloud encoders; c adds a DeepSets block over reduced
/// distance-matrix rows. A softmax over grid cells normalizes the output.
struct CrnModel {
    CrnVariant variant = CrnVariant::c_dual_with_distance;
    std::size_t input_dim = 0;
    DeepSets combined, left, right, dist;
    Mlp head;
    GridSpec grid;
    DistanceReducer reducer = DistanceReducer::quantiles;
    int reducer_k = 60;
    FittedPca pca;
    bool right_encoder_enabled = true;
    CrnOptions options;

    bool uses_left_right() const { return variant != CrnVariant::a_merged; }
    bool uses_distance() const { return variant == CrnVariant::c_dual_with_distance; }
};

inline DeepSets make_deepsets(std::size_t in_dim, const CrnOptions& opt, Rng& rng) {
    std::vector<std::size_t> s1 = {in_dim};
    s1.insert(s1.end(), opt.phi1_hidden.begin(), opt.phi1_hidden.end());
    std::vector<std::size_t> s2 = {s1.back()};
    s2.insert(s2.end(), opt.phi2_hidden.begin(), opt.phi2_hidden.end());
    DeepSets ds;
    ds.phi1 = make_mlp(s1, rng);
    ds.phi2 = make_mlp(s2, rng);
    return ds;
}

inline CrnModel crn_init(CrnVariant variant, std::size_t input_dim, const GridSpec& grid,
                         const CrnOptions& opt, std::uint64_t seed) {
    CrnModel m;
    m.variant = variant;
    m.input_dim = input_dim;
    m.grid = grid;
    m.reducer = opt.reducer;
    m.reducer_k = opt.reducer_k;
    m.right_encoder_enabled = opt.right_encoder_enabled;
    m.options = opt;

    Rng rng = Rng::derive(seed, 0x63726eULL); // "crn"
    m.combined = make_deepsets(input_dim, opt, rng);
    std::size_t feat = m.combined.phi2.output_dim();
    if (m.uses_left_right()) {
        m.left = make_deepsets(input_dim, opt, rng);
        feat += m.left.phi2.output_dim();
        m.right = make_deepsets(input_dim, opt, rng); // built even when ablated, for symmetry
        if (m.right_encoder_enabled) feat += m.right.phi2.output_dim();
    }
    if (m.uses_distance()) {
        m.dist = make_deepsets(static_cast<std::size_t>(opt.reducer_k), opt, rng);
        feat += m.dist.phi2.output_dim();
    }
    std::vector<std::size_t> hs = {feat};
    hs.insert(hs.end(), opt.head_hidden.begin(), opt.head_hidden.end());
    hs.push_back(grid.cells());
    m.head = make_mlp(hs, rng);
    return m;
}

struct CrnCache {
    DeepSetsCache combined, left, right, dist;
    std::vector<double> features;
    MlpCache head_cache;
    std::vector<double> logits;
    std::vector<double> probs;
    std::size_t n_left_rows = 0, n_right_rows = 0, n_dist_rows = 0;
};

namespace detail {

inline std::vector<std::vector<double>> canonical_rows(const PointCloud& cloud) {
    const auto order = canonical_order(cloud);
    std::vector<std::vector<double>> rows(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        auto p = cloud[order[i]];
        rows[i].assign(p.begin(), p.end());
    }
    return rows;
}

inline void softmax(std::span<const double> logits, std::vector<double>& out) {
    out.resize(logits.size());
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
}

} // namespace detail

/// Forward pass. Both clouds are put into canonical order first, so the
/// output is bitwise invariant to any permutation of either input.
inline DensityGrid forward(const CrnModel& model, const PointCloud& left_cloud,
                           const PointCloud& right_cloud, CrnCache* cache = nullptr) {
    if (left_cloud.empty() || right_cloud.empty())
        throw std::invalid_argument("forward: clouds must be nonempty");
    if (left_cloud.dim() != model.input_dim || right_cloud.dim() != model.input_dim)
        throw std::invalid_argument("forward: cloud dimension does not match the model");

    auto left_rows = detail::canonical_rows(left_cloud);
    auto right_rows = detail::canonical_rows(right_cloud);

    std::vector<std::vector<double>> merged_rows = left_rows;
    merged_rows.insert(merged_rows.end(), right_rows.begin(), right_rows.end());

    CrnCache local;
    CrnCache& c = cache ? *cache : local;
    c.n_left_rows = left_rows.size();
    c.n_right_rows = right_rows.size();

    std::vector<double> features = deepsets_encode_rows(model.combined, merged_rows, &c.combined);
    if (model.uses_left_right()) {
        auto fl = deepsets_encode_rows(model.left, left_rows, &c.left);
        features.insert(features.end(), fl.begin(), fl.end());
        if (model.right_encoder_enabled) {
            auto fr = deepsets_encode_rows(model.right, right_rows, &c.right);
            features.insert(features.end(), fr.begin(), fr.end());
        }
    }
    if (model.uses_distance()) {
        // the cross matrix of the canonicalized clouds, reduced row-wise
        PointCloud lc(left_cloud.dim()), rc(right_cloud.dim());
        for (const auto& r : left_rows) lc.add_point(std::span<const double>(r));
        for (const auto& r : right_rows) rc.add_point(std::span<const double>(r));
        const CrossDistanceMatrix cross = cross_distance_matrix(lc, rc);
        auto rows = distance_features(cross, model.reducer, model.reducer_k,
                                      model.reducer == DistanceReducer::pca ? &model.pca : nullptr);
        c.n_dist_rows = rows.size();
        auto fd = deepsets_encode_rows(model.dist, rows, &c.dist);
        features.insert(features.end(), fd.begin(), fd.end());
    }

    c.features = features;
    c.logits = mlp_forward(model.head, features, &c.head_cache);
    detail::softmax(c.logits, c.probs);

    DensityGrid grid = make_grid(model.grid);
    grid.values = c.probs;
    grid.normalized = true;
    return grid;
}

// ------------------------------------------------------------------ losses

/// KL(target || pred) with eps smoothing of both grids (eps added, then
/// renormalized) so empty cells stay finite.
inline double kl_loss(const DensityGrid& pred, const DensityGrid& target, double eps = 1e-8) {
    if (pred.values.size() != target.values.size() || pred.spec.nx != target.spec.nx ||
        pred.spec.ny != target.spec.ny)
        throw std::invalid_argument("kl_loss: grid shape mismatch");
    const double n = static_cast<double>(pred.values.size());
    const double zp = pred.sum() + eps * n;
    const double zt = target.sum() + eps * n;
    double kl = 0.0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const double t = (target.values[i] + eps) / zt;
        const double p = (pred.values[i] + eps) / zp;
        kl += t * std::log(t / p);
    }
    return kl;
}

inline double sym_kl(const DensityGrid& a, const DensityGrid& b, double eps = 1e-8) {
    return kl_loss(a, b, eps) + kl_loss(b, a, eps);
}

namespace detail {

/// dL/dlogits for L = KL(target || softmax(logits)), including the eps
/// smoothing of the prediction.
inline std::vector<double> kl_logit_gradient(const std::vector<double>& probs,
                                             const DensityGrid& target, double eps = 1e-8) {
    const double n = static_cast<double>(probs.size());
    const double zt = target.sum() + eps * n;
    const double zp = 1.0 + eps * n; // probs sum to 1
    // dL/dp'_i = -t'_i / p'_i, dp'_i/dp_i = 1/zp, then the softmax Jacobian
    std::vector<double> gp(probs.size());
    double dot = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double t = (target.values[i] + eps) / zt;
        const double p = (probs[i] + eps) / zp;
        gp[i] = -t / p / zp;
        dot += gp[i] * probs[i];
    }
    std::vector<double> gz(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) gz[i] = probs[i] * (gp[i] - dot);
    return gz;
}

} // namespace detail

/// Gradient container: a structural copy of the model with zeroed weights.
inline CrnModel zero_gradients(const CrnModel& model) {
    CrnModel g = model;
    auto zero_ds = [](DeepSets& d) {
        d.phi1 = zero_like(d.phi1);
        d.phi2 = zero_like(d.phi2);
    };
    zero_ds(g.combined);
    zero_ds(g.left);
    zero_ds(g.right);
    zero_ds(g.dist);
    g.head = zero_like(g.head);
    return g;
}

/// Accumulates d kl_loss / d params into `grad`; returns the loss.
inline double backward(const CrnModel& model, const CrnCache& cache, const DensityGrid& target,
                       CrnModel& grad) {
    DensityGrid pred = make_grid(model.grid);
    pred.values = cache.probs;
    pred.normalized = true;
    const double loss = kl_loss(pred, target);

    const auto gz = detail::kl_logit_gradient(cache.probs, target);
    auto gfeat = mlp_backward(model.head, cache.head_cache, gz, grad.head);

    std::size_t off = 0;
    auto slice = [&](std::size_t len) {
        std::span<const double> s(gfeat.data() + off, len);
        off += len;
        return s;
    };
    deepsets_backward(model.combined, cache.combined,
                      slice(model.combined.phi2.output_dim()), grad.combined);
    if (model.uses_left_right()) {
        deepsets_backward(model.left, cache.left, slice(model.left.phi2.output_dim()), grad.left);
        if (model.right_encoder_enabled)
            deepsets_backward(model.right, cache.right, slice(model.right.phi2.output_dim()),
                              grad.right);
    }
    if (model.uses_distance())
        deepsets_backward(model.dist, cache.dist, slice(model.dist.phi2.output_dim()), grad.dist);
    return loss;
}

// ---------------------------------------------------------------- training

enum class Optimizer { sgd, adam };

struct TrainingConfig {
    double learning_rate = 1e-3;
    int epochs = 100;
    std::size_t batch_size = 8;
    std::uint64_t seed = 42;
    Optimizer optimizer = Optimizer::adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
};

struct CrnSample {
    PointCloud left, right;
    DensityGrid target;
};

/// MLPs of the model that carry trainable parameters, in a fixed order.
inline std::vector<Mlp*> active_mlps(CrnModel& m) {
    std::vector<Mlp*> out = {&m.combined.phi1, &m.combined.phi2};
    if (m.uses_left_right()) {
        out.push_back(&m.left.phi1);
        out.push_back(&m.left.phi2);
        if (m.right_encoder_enabled) {
            out.push_back(&m.right.phi1);
            out.push_back(&m.right.phi2);
        }
    }
    if (m.uses_distance()) {
        out.push_back(&m.dist.phi1);
        out.push_back(&m.dist.phi2);
    }
    out.push_back(&m.head);
    return out;
}

struct TrainResult {
    std::vector<double> epoch_losses; // mean minibatch KL per epoch
};

/// Minibatch gradient descent on kl_loss; deterministic for a fixed seed
/// (initialization, shuffling, and update order are all pinned).
inline TrainResult train(CrnModel& model, std::span<const CrnSample> dataset,
                         const TrainingConfig& cfg) {
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    for (const auto& s : dataset) {
        if (s.target.values.size() != model.grid.cells())
            throw std::invalid_argument("train: target grid does not match the model grid");
        if (std::abs(s.target.sum() - 1.0) > 1e-6)
            throw std::invalid_argument("train: targets must be normalized");
    }

    CrnModel m_state = zero_gradients(model);
    CrnModel v_state = zero_gradients(model);
    auto params = active_mlps(model);
    auto m_mlps = active_mlps(m_state);
    auto v_mlps = active_mlps(v_state);

    Rng shuffle_rng = Rng::derive(cfg.seed, 0x7368756646ULL); // "shufF"
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult result;
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            CrnModel grad = zero_gradients(model);
            auto grad_mlps = active_mlps(grad);
            double batch_loss = 0.0;
            for (std::size_t bi = start; bi < end; ++bi) {
                const auto& sample = dataset[order[bi]];
                CrnCache cache;
                forward(model, sample.left, sample.right, &cache);
                batch_loss += backward(model, cache, sample.target, grad);
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            batch_loss *= inv;
            ++step;

            for (std::size_t mi = 0; mi < params.size(); ++mi) {
                for (std::size_t li = 0; li < params[mi]->layers.size(); ++li) {
                    auto update = [&](std::vector<double>& p, std::vector<double>& g,
                                      std::vector<double>& mm, std::vector<double>& vv) {
                        for (std::size_t k = 0; k < p.size(); ++k) {
                            const double gk = g[k] * inv;
                            if (cfg.optimizer == Optimizer::sgd) {
                                p[k] -= cfg.learning_rate * gk;
                            } else {
                                mm[k] = cfg.adam_beta1 * mm[k] + (1.0 - cfg.adam_beta1) * gk;
                                vv[k] = cfg.adam_beta2 * vv[k] + (1.0 - cfg.adam_beta2) * gk * gk;
                                const double mhat =
                                    mm[k] / (1.0 - std::pow(cfg.adam_beta1, step));
                                const double vhat =
                                    vv[k] / (1.0 - std::pow(cfg.adam_beta2, step));
                                p[k] -= cfg.learning_rate * mhat /
                                        (std::sqrt(vhat) + cfg.adam_eps);
                            }
                        }
                    };
                    update(params[mi]->layers[li].w, grad_mlps[mi]->layers[li].w,
                           m_mlps[mi]->layers[li].w, v_mlps[mi]->layers[li].w);
                    update(params[mi]->layers[li].b, grad_mlps[mi]->layers[li].b,
                           m_mlps[mi]->layers[li].b, v_mlps[mi]->layers[li].b);
                }
            }
            epoch_loss += batch_loss;
            ++batches;
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(batches));
    }
    return result;
}

// -------------------------------------------------------------- grad check

namespace detail {

/// Loss together with a hash of every relu sign; used to reject finite
/// difference probes that cross an activation kink.
inline std::pair<double, std::uint64_t> loss_and_signs(const CrnModel& model,
                                                       const CrnSample& sample) {
    CrnCache cache;
    DensityGrid pred = forward(model, sample.left, sample.right, &cache);
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](const MlpCache& mc, std::size_t n_layers) {
        for (std::size_t l = 0; l + 1 < n_layers; ++l)
            for (double v : mc.pre[l]) {
                h ^= v > 0.0 ? 0x9e3779b9ULL : 0x85ebca6bULL;
                h *= 1099511628211ULL;
            }
    };
    auto mix_ds = [&](const DeepSetsCache& dc, const DeepSets& ds) {
        for (const auto& pc : dc.per_row) mix(pc, ds.phi1.layers.size());
        mix(dc.phi2_cache, ds.phi2.layers.size());
    };
    mix_ds(cache.combined, model.combined);
    if (model.uses_left_right()) {
        mix_ds(cache.left, model.left);
        if (model.right_encoder_enabled) mix_ds(cache.right, model.right);
    }
    if (model.uses_distance()) mix_ds(cache.dist, model.dist);
    mix(cache.head_cache, model.head.layers.size());
    return {kl_loss(pred, sample.target), h};
}

} // namespace detail

struct GradCheckReport {
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;
    double max_relative_error = 0.0;
};

/// Central finite differences (step 1e-5) against the analytic gradients on
/// a random parameter subset; probes whose relu sign pattern changes across
/// the step are skipped. Relative error uses max(1, |a|, |n|) as scale.
inline GradCheckReport grad_check(CrnModel model, const CrnSample& sample,
                                  std::size_t sample_params = 200, std::uint64_t seed = 7,
                                  double step = 1e-5) {
    CrnModel grad = zero_gradients(model);
    CrnCache cache;
    forward(model, sample.left, sample.right, &cache);
    backward(model, cache, sample.target, grad);

    auto mlps = active_mlps(model);
    auto gmlps = active_mlps(grad);
    struct Slot {
        std::vector<double>* p;
        const std::vector<double>* g;
        std::size_t idx;
    };
    std::vector<Slot> slots;
    for (std::size_t mi = 0; mi < mlps.size(); ++mi) {
        for (std::size_t li = 0; li < mlps[mi]->layers.size(); ++li) {
            auto& lw = mlps[mi]->layers[li].w;
            auto& lb = mlps[mi]->layers[li].b;
            for (std::size_t k = 0; k < lw.size(); ++k)
                slots.push_back({&lw, &gmlps[mi]->layers[li].w, k});
            for (std::size_t k = 0; k < lb.size(); ++k)
                slots.push_back({&lb, &gmlps[mi]->layers[li].b, k});
        }
    }

    Rng rng = Rng::derive(seed, 0x6763ULL); // "gc"
    GradCheckReport report;
    const std::size_t trials = std::min(sample_params, slots.size());
    for (std::size_t t = 0; t < trials; ++t) {
        const auto& slot = slots[rng.uniform_index(slots.size())];
        const double saved = (*slot.p)[slot.idx];

        (*slot.p)[slot.idx] = saved + step;
        const auto [lp, hp] = detail::loss_and_signs(model, sample);
        (*slot.p)[slot.idx] = saved - step;
        const auto [lm, hm] = detail::loss_and_signs(model, sample);
        (*slot.p)[slot.idx] = saved;

        if (hp != hm) {
            ++report.skipped_kinks;
            continue;
        }
        const double numeric = (lp - lm) / (2.0 * step);
        const double analytic = (*slot.g)[slot.idx];
        const double rel = std::abs(analytic - numeric) /
                           std::max({1.0, std::abs(analytic), std::abs(numeric)});
        report.max_relative_error = std::max(report.max_relative_error, rel);
        ++report.checked;
    }
    return report;
}

/// 1-D density mode: the same forward pass against a model whose grid
/// has ny == 1 (targets are rasterized MTD KDE curves).
inline DensityGrid predict_mtd_density(const CrnModel& model, const PointCloud& left,
                                       const PointCloud& right) {
    if (model.grid.ny != 1)
        throw std::invalid_argument("predict_mtd_density: model grid must be 1-D (ny == 1)");
    return forward(model, left, right);
}

} // namespace crosspers
