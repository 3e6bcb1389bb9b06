#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "crosspers/filtration.hpp"
#include "crosspers/geometry.hpp"
#include "crosspers/persistence.hpp"
#include "crosspers/rng.hpp"
#include "crosspers/summaries.hpp"

namespace crosspers {

struct TopGenConfig {
    std::size_t embedding_dim = 200;
    std::size_t delay = 1;
    std::size_t pca_dim = 3;
    std::set<int> hom_dims = {0, 1}; // features pool the diagrams of these dims
};

/// Topological feature generator: each series is compared against one
/// reference per class through cross-barcodes in both orientations, yielding
/// MTD and cross-persistence entropy per (reference, orientation) — four
/// values per reference. Schema blocks are ordered by reference, then
/// orientation (series-left first), then statistic (mtd, entropy).
class TopGenFeaturizer {
public:
    TopGenFeaturizer(std::span<const TimeSeries> references, TopGenConfig cfg)
        : cfg_(std::move(cfg)) {
        if (references.empty()) throw std::invalid_argument("topgen: needs references");
        if (cfg_.pca_dim > cfg_.embedding_dim)
            throw std::invalid_argument("topgen: pca_dim exceeds embedding_dim");
        if (cfg_.hom_dims.empty()) throw std::invalid_argument("topgen: hom_dims empty");
        for (const auto& r : references) ref_clouds_.push_back(embed(r));
        for (std::size_t i = 0; i < ref_clouds_.size(); ++i) {
            const std::string base = "ref" + std::to_string(i);
            schema_.push_back(base + "_left_mtd");
            schema_.push_back(base + "_left_entropy");
            schema_.push_back(base + "_right_mtd");
            schema_.push_back(base + "_right_entropy");
        }
    }

    const std::vector<std::string>& schema() const { return schema_; }
    std::size_t n_references() const { return ref_clouds_.size(); }
    const TopGenConfig& config() const { return cfg_; }

    PointCloud embed(const TimeSeries& series) const {
        PointCloud emb = time_delay_embedding(series, cfg_.embedding_dim, cfg_.delay);
        return pca_reduce(emb, cfg_.pca_dim);
    }

    /// 4 values per reference: series-left, then series-right orientation.
    std::vector<double> features(const TimeSeries& series) const {
        const PointCloud cloud = embed(series);
        std::vector<double> out;
        out.reserve(schema_.size());
        for (const auto& ref : ref_clouds_) {
            const auto left = stats_for(cloud, ref);
            const auto right = stats_for(ref, cloud);
            out.push_back(left.first);
            out.push_back(left.second);
            out.push_back(right.first);
            out.push_back(right.second);
        }
        return out;
    }

private:
    /// (mtd, entropy) of the cross-barcode pooled over the configured
    /// homology dimensions.
    std::pair<double, double> stats_for(const PointCloud& left, const PointCloud& right) const {
        const int max_dim = *cfg_.hom_dims.rbegin();
        const CrossDistanceMatrix cross = cross_distance_matrix(left, right);
        const Filtration filt = cross_vr_filtration(cross, max_dim);
        auto diagrams = reduce_diagrams(filt, max_dim);
        PersistenceDiagram pooled;
        for (int s : cfg_.hom_dims)
            pooled.pairs.insert(pooled.pairs.end(), diagrams[s].pairs.begin(),
                                diagrams[s].pairs.end());
        return {mtd(pooled), persistence_entropy(pooled)};
    }

    TopGenConfig cfg_;
    std::vector<PointCloud> ref_clouds_;
    std::vector<std::string> schema_;
};

inline std::vector<double> topgen_features(const TimeSeries& series,
                                           std::span<const TimeSeries> references,
                                           const TopGenConfig& cfg) {
    return TopGenFeaturizer(references, cfg).features(series);
}

// ------------------------------------------------------- logistic baseline

struct LogisticConfig {
    double learning_rate = 0.5;
    int epochs = 800;
    double l2 = 1e-3;
    std::uint64_t seed = 0; // kept for interface symmetry; the solver is deterministic
};

struct LogisticModel {
    std::vector<double> weights;
    double bias = 0.0;
    std::vector<double> mean, stdev; // train-set standardization
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Full-batch gradient descent on L2-regularized cross-entropy over
/// standardized features. Deterministic (zero init, fixed order).
inline LogisticModel logistic_fit(const std::vector<std::vector<double>>& features,
                                  const std::vector<int>& labels, const LogisticConfig& cfg = {}) {
    if (features.size() != labels.size() || features.empty())
        throw std::invalid_argument("logistic_fit: feature/label size mismatch");
    const std::size_t n = features.size(), d = features.front().size();
    bool has0 = false, has1 = false;
    for (int l : labels) (l == 1 ? has1 : has0) = true;
    if (!has0 || !has1) throw std::invalid_argument("logistic_fit: both classes must be present");

    LogisticModel m;
    m.mean.assign(d, 0.0);
    m.stdev.assign(d, 0.0);
    for (const auto& x : features)
        for (std::size_t j = 0; j < d; ++j) m.mean[j] += x[j] / static_cast<double>(n);
    for (const auto& x : features)
        for (std::size_t j = 0; j < d; ++j)
            m.stdev[j] += (x[j] - m.mean[j]) * (x[j] - m.mean[j]) / static_cast<double>(n);
    for (double& s : m.stdev) s = s > 0.0 ? std::sqrt(s) : 1.0;

    std::vector<std::vector<double>> z(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) z[i][j] = (features[i][j] - m.mean[j]) / m.stdev[j];

    m.weights.assign(d, 0.0);
    // step size kept inside the stability bound of the objective's curvature
    // (<= d/4 from the standardized logistic part plus l2 from the penalty)
    const double lr = std::min(cfg.learning_rate,
                               1.0 / (0.25 * static_cast<double>(d) + cfg.l2));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<double> gw(d, 0.0);
        double gb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double s = m.bias;
            for (std::size_t j = 0; j < d; ++j) s += m.weights[j] * z[i][j];
            const double err = sigmoid(s) - static_cast<double>(labels[i]);
            for (std::size_t j = 0; j < d; ++j) gw[j] += err * z[i][j];
            gb += err;
        }
        for (std::size_t j = 0; j < d; ++j) {
            gw[j] = gw[j] / static_cast<double>(n) + cfg.l2 * m.weights[j];
            m.weights[j] -= lr * gw[j];
        }
        m.bias -= lr * gb / static_cast<double>(n);
    }
    return m;
}

inline double logistic_predict(const LogisticModel& m, std::span<const double> x) {
    if (x.size() != m.weights.size())
        throw std::invalid_argument("logistic_predict: feature dimension mismatch");
    double s = m.bias;
    for (std::size_t j = 0; j < x.size(); ++j)
        s += m.weights[j] * (x[j] - m.mean[j]) / m.stdev[j];
    return sigmoid(s);
}

/// ROC-AUC by the rank statistic with tie-averaged ranks.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("roc_auc: score/label size mismatch");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double rank_sum = 0.0;
    long n_pos = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (labels[k] == 1) {
            rank_sum += rank[k];
            ++n_pos;
        }
    }
    const long n_neg = static_cast<long>(n) - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("roc_auc: single-class labels");
    const double u = rank_sum - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

struct EvalMetrics {
    double accuracy = 0.0;
    double roc_auc = 0.0;
};

/// Accuracy at the 0.5 threshold plus rank-statistic ROC-AUC.
inline EvalMetrics evaluate(const LogisticModel& model,
                            const std::vector<std::vector<double>>& features,
                            const std::vector<int>& labels) {
    std::vector<double> scores(features.size());
    long correct = 0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        scores[i] = logistic_predict(model, features[i]);
        const int pred = scores[i] >= 0.5 ? 1 : 0;
        correct += pred == labels[i];
    }
    EvalMetrics m;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(features.size());
    m.roc_auc = roc_auc(scores, labels);
    return m;
}

// ----------------------------------------------------- one-vs-rest wrapper

struct OneVsRestModel {
    std::vector<int> classes;
    std::vector<LogisticModel> models;
};

inline OneVsRestModel one_vs_rest_fit(const std::vector<std::vector<double>>& features,
                                      const std::vector<int>& labels,
                                      const LogisticConfig& cfg = {}) {
    OneVsRestModel ovr;
    std::set<int> classes(labels.begin(), labels.end());
    if (classes.size() < 2) throw std::invalid_argument("one_vs_rest_fit: needs >= 2 classes");
    for (int c : classes) {
        std::vector<int> binary(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) binary[i] = labels[i] == c ? 1 : 0;
        ovr.classes.push_back(c);
        ovr.models.push_back(logistic_fit(features, binary, cfg));
    }
    return ovr;
}

inline int one_vs_rest_predict(const OneVsRestModel& ovr, std::span<const double> x) {
    int best_class = ovr.classes.front();
    double best = -1.0;
    for (std::size_t c = 0; c < ovr.classes.size(); ++c) {
        const double p = logistic_predict(ovr.models[c], x);
        if (p > best) {
            best = p;
            best_class = ovr.classes[c];
        }
    }
    return best_class;
}

} // namespace crosspers
