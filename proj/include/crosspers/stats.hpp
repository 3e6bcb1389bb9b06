#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "crosspers/geometry.hpp"
#include "crosspers/parallel.hpp"
#include "crosspers/persistence.hpp"
#include "crosspers/rng.hpp"
#include "crosspers/summaries.hpp"

namespace crosspers {

/// 1-D kernel density estimate tabulated on a regular grid, renormalized to
/// unit trapezoid mass on that grid.
struct ScalarDensity {
    std::vector<double> samples;
    double bandwidth = 0.0;
    double z_min = 0.0, z_max = 1.0;
    std::vector<double> density;

    std::size_t nz() const { return density.size(); }
    double z_at(std::size_t i) const {
        return z_min + (z_max - z_min) * static_cast<double>(i) / (density.size() - 1);
    }
    double step() const { return (z_max - z_min) / (density.size() - 1); }

    /// Linear interpolation, zero outside the grid.
    double eval(double z) const {
        if (z < z_min || z > z_max) return 0.0;
        const double pos = (z - z_min) / step();
        const std::size_t lo = std::min(static_cast<std::size_t>(pos), density.size() - 2);
        const double frac = pos - lo;
        return density[lo] * (1.0 - frac) + density[lo + 1] * frac;
    }

    double trapezoid_mass() const {
        double s = 0.0;
        for (std::size_t i = 1; i < density.size(); ++i)
            s += 0.5 * (density[i] + density[i - 1]) * step();
        return s;
    }

    double sample_std() const {
        if (samples.size() < 2) return 0.0;
        double mean = 0.0;
        for (double x : samples) mean += x;
        mean /= static_cast<double>(samples.size());
        double var = 0.0;
        for (double x : samples) var += (x - mean) * (x - mean);
        return std::sqrt(var / static_cast<double>(samples.size() - 1));
    }
};

/// Gaussian KDE with Silverman bandwidth by default; the grid spans
/// [min - 3h, max + 3h].
inline ScalarDensity kde1d(std::vector<double> samples, std::optional<double> bandwidth = {},
                           std::size_t nz = 512) {
    if (samples.size() < 2) throw std::invalid_argument("kde1d: needs at least 2 samples");
    if (nz < 2) throw std::invalid_argument("kde1d: grid needs at least 2 points");
    if (bandwidth && !(*bandwidth > 0.0))
        throw std::invalid_argument("kde1d: bandwidth must be positive");

    ScalarDensity out;
    out.bandwidth = bandwidth ? *bandwidth : silverman_bandwidth(samples);
    auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
    out.z_min = *lo - 3.0 * out.bandwidth;
    out.z_max = *hi + 3.0 * out.bandwidth;
    out.density.assign(nz, 0.0);
    const double norm = 1.0 / (samples.size() * out.bandwidth * std::sqrt(2.0 * M_PI));
    for (std::size_t i = 0; i < nz; ++i) {
        const double z = out.z_min + (out.z_max - out.z_min) * static_cast<double>(i) / (nz - 1);
        double s = 0.0;
        for (double x : samples) {
            const double u = (z - x) / out.bandwidth;
            s += std::exp(-0.5 * u * u);
        }
        out.density[i] = norm * s;
    }
    // remove the mass truncated outside the +-3h window
    const double mass = out.trapezoid_mass();
    if (mass > 0.0)
        for (double& v : out.density) v /= mass;
    out.samples = std::move(samples);
    return out;
}

namespace detail {

constexpr std::size_t kOverlapGrid = 2048;

/// Resamples a density onto [lo, hi] with kOverlapGrid nodes and
/// renormalizes it to unit trapezoid mass there (removes truncation bias).
inline std::vector<double> resample_renormalized(const ScalarDensity& d, double lo, double hi) {
    std::vector<double> f(kOverlapGrid);
    const double step = (hi - lo) / (kOverlapGrid - 1);
    for (std::size_t i = 0; i < kOverlapGrid; ++i) f[i] = d.eval(lo + step * i);
    double mass = 0.0;
    for (std::size_t i = 1; i < f.size(); ++i) mass += 0.5 * (f[i] + f[i - 1]) * step;
    if (mass > 0.0)
        for (double& v : f) v /= mass;
    return f;
}

inline double trapezoid_min(const std::vector<double>& p, const std::vector<double>& q,
                            double step) {
    double s = 0.0;
    for (std::size_t i = 1; i < p.size(); ++i)
        s += 0.5 * (std::min(p[i], q[i]) + std::min(p[i - 1], q[i - 1])) * step;
    return s;
}

inline double trapezoid_absdiff(const std::vector<double>& p, const std::vector<double>& q,
                                double step) {
    double s = 0.0;
    for (std::size_t i = 1; i < p.size(); ++i)
        s += 0.5 * (std::abs(p[i] - q[i]) + std::abs(p[i - 1] - q[i - 1])) * step;
    return s;
}

} // namespace detail

/// Overlap functional: the trapezoid integral of min(p, q) over the union of
/// the two grids, with both densities renormalized there first; clipped to
/// [0, 1].
inline double overlap(const ScalarDensity& p, const ScalarDensity& q) {
    const double lo = std::min(p.z_min, q.z_min);
    const double hi = std::max(p.z_max, q.z_max);
    const double step = (hi - lo) / (detail::kOverlapGrid - 1);
    const auto fp = detail::resample_renormalized(p, lo, hi);
    const auto fq = detail::resample_renormalized(q, lo, hi);
    return std::clamp(detail::trapezoid_min(fp, fq, step), 0.0, 1.0);
}

struct MtdDensityConfig {
    std::size_t n_pairs = 100;
    std::size_t subsample_size = 128;
    int hom_dim = 1;
    std::uint64_t seed = 42;
    int jobs = 1;
};

/// Draws independent subsample pairs (without replacement within a draw),
/// computes MTD(cross_barcode(sub_core, sub_other)) for each pair with the
/// core on the left, and fits a KDE to the scores. The per-pair seeds derive
/// from (seed, pair index), so the result is identical for any job count.
inline std::vector<double> mtd_samples(const PointCloud& core, const PointCloud& other,
                                       const MtdDensityConfig& cfg) {
    if (cfg.n_pairs < 2) throw std::invalid_argument("mtd_samples: n_pairs must be >= 2");
    if (cfg.subsample_size > core.size() || cfg.subsample_size > other.size())
        throw std::invalid_argument("mtd_samples: subsample_size exceeds a cloud size");
    if (cfg.subsample_size < 1) throw std::invalid_argument("mtd_samples: empty subsample");

    std::vector<double> scores(cfg.n_pairs);
    parallel_for(cfg.n_pairs, cfg.jobs, [&](std::size_t k) {
        Rng rng = Rng::derive(cfg.seed, k);
        const auto core_idx = rng.sample_without_replacement(core.size(), cfg.subsample_size);
        const auto other_idx = rng.sample_without_replacement(other.size(), cfg.subsample_size);
        const PointCloud sub_core = core.subset(core_idx);
        const PointCloud sub_other = other.subset(other_idx);
        scores[k] = mtd(cross_barcode(sub_core, sub_other, cfg.hom_dim));
    });
    return scores;
}

inline ScalarDensity mtd_density(const PointCloud& core, const PointCloud& other,
                                 const MtdDensityConfig& cfg) {
    return kde1d(mtd_samples(core, other, cfg));
}

struct DistinctionConfig {
    std::size_t n_pairs = 100;
    std::size_t subsample_size = 128;
    int hom_dim = 1;
    std::uint64_t seed = 42;
    double threshold = 0.05;
    int jobs = 1;

    MtdDensityConfig density_config(std::uint64_t stream) const {
        MtdDensityConfig c;
        c.n_pairs = n_pairs;
        c.subsample_size = subsample_size;
        c.hom_dim = hom_dim;
        c.seed = splitmix_stream(seed, stream);
        c.jobs = jobs;
        return c;
    }

    static std::uint64_t splitmix_stream(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
        return splitmix64(s);
    }
};

enum class Decision { same, different };

inline std::string to_string(Decision d) { return d == Decision::same ? "same" : "different"; }

struct DistinctionReport {
    double overlap = 0.0;
    std::vector<double> core_samples;      // MTD(core, core)
    std::vector<double> candidate_samples; // MTD(core, candidate)
    Decision decision = Decision::same;
    double threshold = 0.05;
};

/// Overlap-based distinction: the self density MTD(core, core) against the
/// cross density MTD(core, candidate); "different" iff overlap < threshold.
inline DistinctionReport distinguish(const PointCloud& core, const PointCloud& candidate,
                                     const DistinctionConfig& cfg) {
    DistinctionReport rep;
    rep.threshold = cfg.threshold;
    rep.core_samples = mtd_samples(core, core, cfg.density_config(0));
    rep.candidate_samples = mtd_samples(core, candidate, cfg.density_config(1));
    const ScalarDensity self_density = kde1d(rep.core_samples);
    const ScalarDensity cross_density = kde1d(rep.candidate_samples);
    rep.overlap = overlap(self_density, cross_density);
    rep.decision = rep.overlap < cfg.threshold ? Decision::different : Decision::same;
    return rep;
}

enum class NoiseRegime { right_only, both };

inline std::string to_string(NoiseRegime r) {
    return r == NoiseRegime::right_only ? "right_only" : "both";
}
inline NoiseRegime noise_regime_from_string(const std::string& s) {
    if (s == "right_only") return NoiseRegime::right_only;
    if (s == "both") return NoiseRegime::both;
    throw std::invalid_argument("unknown noise regime: " + s);
}

struct SweepPairResult {
    std::size_t core_index = 0;
    std::size_t candidate_index = 0;
    double overlap = 0.0;
    double self_std = 0.0;  // descriptive dispersion, never a decision input
    double cross_std = 0.0;
};

struct SweepRow {
    double level = 0.0;
    NoiseRegime regime = NoiseRegime::right_only;
    double mean_overlap = 0.0;
    std::vector<SweepPairResult> pairs;
};

/// Deterministic seed for the (level, core, candidate) cell of a sweep; the
/// level-0 row of a right_only sweep then reproduces plain distinguish runs
/// seeded the same way.
inline std::uint64_t sweep_pair_seed(std::uint64_t seed, std::size_t level_index,
                                     std::size_t core_index, std::size_t candidate_index) {
    std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL * (level_index * 1000003 + core_index * 1009 +
                                                       candidate_index + 1));
    return splitmix64(s);
}

/// For each noise level and ordered class pair (a, b), a != b: overlap of
/// the self density against the cross density under the chosen regime.
/// right_only noises only the right argument; both noises the core side too.
inline std::vector<SweepRow> noise_sensitivity_sweep(std::span<const PointCloud> clouds,
                                                     std::span<const double> levels,
                                                     NoiseRegime regime,
                                                     const DistinctionConfig& cfg) {
    if (clouds.size() < 2) throw std::invalid_argument("sweep: needs at least 2 clouds");
    if (levels.empty()) throw std::invalid_argument("sweep: needs at least one level");

    std::vector<SweepRow> rows;
    for (std::size_t li = 0; li < levels.size(); ++li) {
        const double level = levels[li];
        SweepRow row;
        row.level = level;
        row.regime = regime;
        double total = 0.0;
        for (std::size_t a = 0; a < clouds.size(); ++a) {
            for (std::size_t b = 0; b < clouds.size(); ++b) {
                if (a == b) continue;
                const std::uint64_t pair_seed = sweep_pair_seed(cfg.seed, li, a, b);
                DistinctionConfig pair_cfg = cfg;
                pair_cfg.seed = pair_seed;

                const std::uint64_t noise_base = DistinctionConfig::splitmix_stream(pair_seed, 7);
                const PointCloud left = regime == NoiseRegime::both
                                            ? inject_noise(clouds[a], level, noise_base)
                                            : clouds[a];
                const PointCloud self_right = inject_noise(clouds[a], level, noise_base + 1);
                const PointCloud cross_right = inject_noise(clouds[b], level, noise_base + 2);

                DistinctionReport rep;
                rep.core_samples = mtd_samples(left, self_right, pair_cfg.density_config(0));
                rep.candidate_samples = mtd_samples(left, cross_right, pair_cfg.density_config(1));
                const ScalarDensity self_density = kde1d(rep.core_samples);
                const ScalarDensity cross_density = kde1d(rep.candidate_samples);

                SweepPairResult pr;
                pr.core_index = a;
                pr.candidate_index = b;
                pr.overlap = overlap(self_density, cross_density);
                pr.self_std = self_density.sample_std();
                pr.cross_std = cross_density.sample_std();
                row.pairs.push_back(pr);
                total += pr.overlap;
            }
        }
        row.mean_overlap = total / static_cast<double>(row.pairs.size());
        rows.push_back(std::move(row));
    }
    return rows;
}

struct LipschitzReport {
    int trials = 0;
    int violations = 0;
    double max_violation = 0.0; // max of |dO| - (|dp|_1 + |dq|_1), <= slack when passing
    bool passed = false;
};

/// Randomized check of |O(p,q) - O(p^,q^)| <= |p-p^|_1 + |q-q^|_1 on
/// Gaussian-mixture densities and perturbed copies. All four densities of a
/// quadruple are evaluated on one shared grid so the overlaps and the L1
/// deltas integrate against the same rule.
inline LipschitzReport overlap_lipschitz_check(int trials, std::uint64_t seed,
                                               double slack = 1e-6) {
    if (trials < 1) throw std::invalid_argument("overlap_lipschitz_check: trials must be >= 1");
    Rng rng = Rng::derive(seed, 0x4c697073ULL); // "Lips"
    LipschitzReport rep;
    rep.trials = trials;

    auto random_density = [&](double shift) {
        const int modes = 1 + static_cast<int>(rng.uniform_index(3));
        std::vector<double> samples;
        for (int m = 0; m < modes; ++m) {
            const double mu = rng.uniform(-2.0, 2.0) + shift;
            const double sigma = rng.uniform(0.2, 1.0);
            for (int i = 0; i < 60; ++i) samples.push_back(mu + sigma * rng.normal());
        }
        return kde1d(std::move(samples));
    };

    for (int t = 0; t < trials; ++t) {
        const ScalarDensity p = random_density(0.0);
        const ScalarDensity q = random_density(rng.uniform(0.0, 2.0));
        // perturbations: small shift and bandwidth change of the same samples
        auto perturb = [&](const ScalarDensity& d) {
            std::vector<double> shifted = d.samples;
            const double eps = rng.uniform(0.0, 0.05);
            for (double& x : shifted) x += eps;
            return kde1d(std::move(shifted), d.bandwidth * rng.uniform(0.95, 1.05));
        };
        const ScalarDensity ph = perturb(p);
        const ScalarDensity qh = perturb(q);

        double lo = std::min({p.z_min, q.z_min, ph.z_min, qh.z_min});
        double hi = std::max({p.z_max, q.z_max, ph.z_max, qh.z_max});
        const double step = (hi - lo) / (detail::kOverlapGrid - 1);
        const auto fp = detail::resample_renormalized(p, lo, hi);
        const auto fq = detail::resample_renormalized(q, lo, hi);
        const auto fph = detail::resample_renormalized(ph, lo, hi);
        const auto fqh = detail::resample_renormalized(qh, lo, hi);

        const double dp = detail::trapezoid_absdiff(fp, fph, step);
        const double dq = detail::trapezoid_absdiff(fq, fqh, step);
        const double diff = std::abs(detail::trapezoid_min(fp, fq, step) -
                                     detail::trapezoid_min(fph, fqh, step));
        const double excess = diff - (dp + dq);
        rep.max_violation = std::max(rep.max_violation, excess);
        if (excess > slack) ++rep.violations;
    }
    rep.passed = rep.violations == 0;
    return rep;
}

} // namespace crosspers
