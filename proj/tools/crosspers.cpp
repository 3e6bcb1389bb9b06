// Batch command-line surface for the cross-persistence toolkit. Subcommands:
// barcode, distinguish, sweep, train, predict, topgen, classify, selftest.
// Every stochastic command takes --seed (env CROSSPERS_SEED as fallback) and
// every JSON report embeds the effective configuration and version string.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "crosspers/crosspers.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace crosspers;

namespace {

std::uint64_t env_seed_default() {
    if (const char* env = std::getenv("CROSSPERS_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end != env && *end == '\0') return v;
    }
    return 42;
}

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    json j;
    in >> j;
    return j;
}

/// File value applies only when the flag was not passed: flags override the
/// config file.
template <typename T>
void from_config(const CLI::App* sub, const json& cfg, const char* flag, const char* key,
                 T& target) {
    if (cfg.contains(key) && sub->count(flag) == 0) target = cfg.at(key).get<T>();
}

std::vector<double> parse_levels(const std::string& csv) {
    std::vector<double> levels;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) levels.push_back(std::stod(item));
    return levels;
}

std::set<int> parse_int_set(const std::string& csv) {
    std::set<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) out.insert(std::stoi(item));
    return out;
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

json density_config_json(const DistinctionConfig& cfg) {
    return json{{"n_pairs", cfg.n_pairs},   {"subsample_size", cfg.subsample_size},
                {"hom_dim", cfg.hom_dim},   {"seed", cfg.seed},
                {"threshold", cfg.threshold}, {"jobs", cfg.jobs}};
}

/// Simple overlay plot of two density curves as a PGM raster.
void write_density_plot_pgm(const std::string& path, const ScalarDensity& self_d,
                            const ScalarDensity& cross_d) {
    const int w = 600, h = 200;
    const double lo = std::min(self_d.z_min, cross_d.z_min);
    const double hi = std::max(self_d.z_max, cross_d.z_max);
    double peak = 0.0;
    for (double v : self_d.density) peak = std::max(peak, v);
    for (double v : cross_d.density) peak = std::max(peak, v);
    std::vector<unsigned char> img(static_cast<std::size_t>(w) * h, 0);
    auto plot = [&](const ScalarDensity& d, unsigned char shade) {
        for (int x = 0; x < w; ++x) {
            const double z = lo + (hi - lo) * x / (w - 1);
            const double v = d.eval(z);
            const int top = h - 1 - static_cast<int>((h - 1) * (peak > 0 ? v / peak : 0.0));
            for (int y = h - 1; y >= top; --y)
                img[static_cast<std::size_t>(y) * w + x] =
                    std::max(img[static_cast<std::size_t>(y) * w + x], shade);
        }
    };
    plot(cross_d, 110);
    plot(self_d, 230);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "P5\n" << w << " " << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
}

// ----------------------------------------------------------------- barcode

int cmd_barcode(const std::vector<std::string>& clouds, bool cross, int dim,
                std::optional<double> max_scale, const std::string& out_path,
                const std::string& dump_path) {
    std::vector<PersistenceDiagram> diagrams;
    Filtration filt;
    if (cross) {
        if (clouds.size() != 2)
            throw std::invalid_argument("--cross needs exactly two cloud files (left right)");
        const PointCloud left = read_point_cloud_csv(clouds[0]);
        const PointCloud right = read_point_cloud_csv(clouds[1]);
        const CrossDistanceMatrix m = cross_distance_matrix(left, right);
        filt = cross_vr_filtration(m, dim, max_scale.value_or(enclosing_radius(m)));
    } else {
        if (clouds.size() != 1)
            throw std::invalid_argument("barcode needs one cloud file (or two with --cross)");
        const PointCloud cloud = read_point_cloud_csv(clouds[0]);
        const DistanceMatrix m = pairwise_distances(cloud);
        filt = vr_filtration(m, dim, max_scale.value_or(enclosing_radius(m)));
    }
    diagrams = reduce_diagrams(filt, dim);
    write_diagrams_csv(out_path, diagrams);
    if (!dump_path.empty()) write_filtration_csv(dump_path, filt);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

// -------------------------------------------------------------- distinguish

int cmd_distinguish(const std::string& core_path, const std::string& candidate_path,
                    DistinctionConfig cfg, const std::string& report_path,
                    const std::string& density_prefix, bool pgm) {
    const PointCloud core = read_point_cloud_csv(core_path);
    const PointCloud candidate = read_point_cloud_csv(candidate_path);
    const DistinctionReport rep = distinguish(core, candidate, cfg);

    const ScalarDensity self_d = kde1d(rep.core_samples);
    const ScalarDensity cross_d = kde1d(rep.candidate_samples);
    if (!density_prefix.empty()) {
        write_density_csv(density_prefix + "_self.csv", self_d);
        write_density_csv(density_prefix + "_cross.csv", cross_d);
        if (pgm) write_density_plot_pgm(density_prefix + ".pgm", self_d, cross_d);
    }

    json j;
    j["version"] = kVersion;
    j["config"] = density_config_json(cfg);
    j["config"]["core"] = core_path;
    j["config"]["candidate"] = candidate_path;
    j["overlap"] = rep.overlap;
    j["threshold"] = rep.threshold;
    j["decision"] = to_string(rep.decision);
    j["core_samples"] = rep.core_samples;
    j["candidate_samples"] = rep.candidate_samples;
    write_json(report_path, j);
    std::cout << "overlap " << rep.overlap << " -> " << to_string(rep.decision) << "\n";
    return 0;
}

// -------------------------------------------------------------------- sweep

int cmd_sweep(const std::string& dataset_dir, const std::string& levels_csv,
              const std::string& regime_str, DistinctionConfig cfg,
              const std::string& report_path, const std::string& table_path) {
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dataset_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".csv")
            paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    if (paths.size() < 2) throw std::invalid_argument("sweep: dataset dir needs >= 2 cloud CSVs");

    std::vector<PointCloud> clouds;
    for (const auto& p : paths) clouds.push_back(read_point_cloud_csv(p));
    const std::vector<double> levels = parse_levels(levels_csv);
    const NoiseRegime regime = noise_regime_from_string(regime_str);

    const auto rows = noise_sensitivity_sweep(clouds, levels, regime, cfg);

    std::ofstream table(table_path);
    if (!table) throw IoError("cannot open for writing: " + table_path);
    table << "level,regime,core,candidate,overlap,self_std,cross_std\n";
    json jrows = json::array();
    for (const auto& row : rows) {
        json jrow;
        jrow["level"] = row.level;
        jrow["regime"] = to_string(row.regime);
        jrow["mean_overlap"] = row.mean_overlap;
        json jpairs = json::array();
        for (const auto& pr : row.pairs) {
            table << row.level << "," << to_string(row.regime) << "," << pr.core_index << ","
                  << pr.candidate_index << "," << pr.overlap << "," << pr.self_std << ","
                  << pr.cross_std << "\n";
            jpairs.push_back({{"core", pr.core_index},
                              {"candidate", pr.candidate_index},
                              {"overlap", pr.overlap},
                              {"self_std", pr.self_std},
                              {"cross_std", pr.cross_std}});
        }
        jrow["pairs"] = std::move(jpairs);
        jrows.push_back(std::move(jrow));
    }
    json j;
    j["version"] = kVersion;
    j["config"] = density_config_json(cfg);
    j["config"]["dataset_dir"] = dataset_dir;
    j["config"]["levels"] = levels;
    j["config"]["regime"] = regime_str;
    j["config"]["clouds"] = paths;
    j["rows"] = std::move(jrows);
    write_json(report_path, j);
    std::cout << "wrote " << report_path << " and " << table_path << "\n";
    return 0;
}

// ----------------------------------------------------------- train / predict

struct ManifestPair {
    std::string left, right;
    std::string target_csv, target_json; // optional precomputed target grid
};

std::vector<ManifestPair> read_manifest(const std::string& path) {
    json j;
    {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open for reading: " + path);
        in >> j;
    }
    std::vector<ManifestPair> pairs;
    for (const auto& p : j.at("pairs")) {
        ManifestPair mp;
        mp.left = p.at("left").get<std::string>();
        mp.right = p.at("right").get<std::string>();
        if (p.contains("target_csv")) mp.target_csv = p.at("target_csv").get<std::string>();
        if (p.contains("target_json")) mp.target_json = p.at("target_json").get<std::string>();
        std::error_code ignored;
        const fs::path base = fs::path(path).parent_path();
        auto resolve = [&](std::string& s) {
            if (!s.empty() && fs::path(s).is_relative() && !base.empty())
                s = (base / s).string();
        };
        resolve(mp.left);
        resolve(mp.right);
        resolve(mp.target_csv);
        resolve(mp.target_json);
        pairs.push_back(std::move(mp));
    }
    if (pairs.empty()) throw std::invalid_argument("manifest has no pairs");
    return pairs;
}

struct TrainCliConfig {
    std::string variant = "c_dual_with_distance";
    std::string reducer = "quantiles";
    int reducer_k = 60;
    int hom_dim = 1;
    int grid_nx = 16, grid_ny = 16;
    double split = 0.8;
    int epochs = 150;
    double lr = 1e-3;
    std::size_t batch = 8;
    std::string optimizer = "adam";
    std::uint64_t seed = 42;
    std::string target = "diagram"; // or "mtd"
    std::size_t mtd_n_pairs = 40;
    std::size_t mtd_subsample = 48;
    bool right_encoder = true;
    int jobs = 1;
};

json train_config_json(const TrainCliConfig& c) {
    return json{{"variant", c.variant},     {"reducer", c.reducer},
                {"reducer_k", c.reducer_k}, {"hom_dim", c.hom_dim},
                {"grid_nx", c.grid_nx},     {"grid_ny", c.grid_ny},
                {"split", c.split},         {"epochs", c.epochs},
                {"lr", c.lr},               {"batch", c.batch},
                {"optimizer", c.optimizer}, {"seed", c.seed},
                {"target", c.target},       {"mtd_n_pairs", c.mtd_n_pairs},
                {"mtd_subsample", c.mtd_subsample},
                {"right_encoder", c.right_encoder}};
}

/// Builds the per-pair targets: normalized cross-persistence images on a
/// frozen dataset grid, or rasterized MTD-density curves in the 1-D mode.
struct PreparedDataset {
    std::vector<CrnSample> samples;
    GridSpec grid;
    double bandwidth = 0.0;
};

PreparedDataset prepare_dataset(const std::vector<ManifestPair>& pairs,
                                const TrainCliConfig& cfg) {
    PreparedDataset out;
    std::vector<PointCloud> lefts, rights;
    for (const auto& p : pairs) {
        lefts.push_back(read_point_cloud_csv(p.left));
        rights.push_back(read_point_cloud_csv(p.right));
    }

    if (!pairs.front().target_csv.empty()) {
        // precomputed targets: every grid must agree
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            if (pairs[i].target_csv.empty() || pairs[i].target_json.empty())
                throw std::invalid_argument("manifest mixes precomputed and missing targets");
            DensityGrid g = read_grid(pairs[i].target_csv, pairs[i].target_json);
            if (i == 0)
                out.grid = g.spec;
            else if (!(g.spec == out.grid))
                throw std::invalid_argument("precomputed target grids disagree");
            if (!g.normalized) normalize_grid(g);
            out.samples.push_back({lefts[i], rights[i], std::move(g)});
        }
        return out;
    }

    if (cfg.target == "mtd") {
        MtdDensityConfig mcfg;
        mcfg.n_pairs = cfg.mtd_n_pairs;
        mcfg.subsample_size = cfg.mtd_subsample;
        mcfg.hom_dim = cfg.hom_dim;
        mcfg.jobs = cfg.jobs;
        std::vector<ScalarDensity> densities(pairs.size());
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            mcfg.seed = DistinctionConfig::splitmix_stream(cfg.seed, i);
            mcfg.subsample_size =
                std::min({cfg.mtd_subsample, lefts[i].size(), rights[i].size()});
            densities[i] = mtd_density(lefts[i], rights[i], mcfg);
        }
        double lo = 1e300, hi = -1e300;
        for (const auto& d : densities) {
            lo = std::min(lo, d.z_min);
            hi = std::max(hi, d.z_max);
        }
        out.grid = GridSpec{lo, hi, 0.0, 1.0, cfg.grid_nx, 1};
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            DensityGrid g = make_grid(out.grid);
            for (int ix = 0; ix < out.grid.nx; ++ix)
                g.values[ix] = densities[i].eval(out.grid.x_center(ix));
            normalize_grid(g);
            out.samples.push_back({lefts[i], rights[i], std::move(g)});
        }
        return out;
    }

    // diagram-density targets
    std::vector<PersistenceDiagram> diagrams(pairs.size());
    parallel_for(pairs.size(), cfg.jobs, [&](std::size_t i) {
        diagrams[i] = cross_barcode(lefts[i], rights[i], cfg.hom_dim);
    });
    out.bandwidth = pooled_bandwidth(diagrams);
    const bool one_dim = cfg.hom_dim == 0 || cfg.grid_ny == 1;
    out.grid = frozen_grid_spec(diagrams, cfg.grid_nx, one_dim ? 1 : cfg.grid_ny, out.bandwidth);
    const Weighting weighting = one_dim ? Weighting::constant : Weighting::lifetime;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        std::vector<PersistenceDiagram> single = {diagrams[i]};
        DensityGrid g = expected_density(single, out.grid, out.bandwidth, weighting, true);
        out.samples.push_back({lefts[i], rights[i], std::move(g)});
    }
    return out;
}

int cmd_train(const std::string& manifest_path, const TrainCliConfig& cfg,
              const std::string& model_path, const std::string& loss_path,
              const std::string& report_path) {
    const auto pairs = read_manifest(manifest_path);
    PreparedDataset data = prepare_dataset(pairs, cfg);

    // seeded 80/20 split
    std::vector<std::size_t> order(data.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng split_rng = Rng::derive(cfg.seed, 0x73706c6974ULL); // "split"
    split_rng.shuffle(order);
    const std::size_t n_train =
        std::max<std::size_t>(1, static_cast<std::size_t>(cfg.split * order.size()));
    std::vector<CrnSample> train_set, test_set;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < n_train ? train_set : test_set).push_back(data.samples[order[i]]);

    CrnOptions opt;
    opt.reducer = reducer_from_string(cfg.reducer);
    opt.reducer_k = cfg.reducer_k;
    opt.right_encoder_enabled = cfg.right_encoder;
    CrnModel model = crn_init(variant_from_string(cfg.variant),
                              train_set.front().left.dim(), data.grid, opt, cfg.seed);
    if (model.uses_distance() && model.reducer == DistanceReducer::pca) {
        std::vector<CrossDistanceMatrix> train_crosses;
        for (const auto& s : train_set)
            train_crosses.push_back(cross_distance_matrix(s.left, s.right));
        model.pca = fit_distance_pca(train_crosses, cfg.reducer_k);
    }

    TrainingConfig tcfg;
    tcfg.learning_rate = cfg.lr;
    tcfg.epochs = cfg.epochs;
    tcfg.batch_size = cfg.batch;
    tcfg.seed = cfg.seed;
    tcfg.optimizer = cfg.optimizer == "sgd" ? Optimizer::sgd : Optimizer::adam;
    const TrainResult result = train(model, train_set, tcfg);

    save_model(model_path, model);
    {
        std::ofstream loss(loss_path);
        if (!loss) throw IoError("cannot open for writing: " + loss_path);
        loss << "epoch,train_kl\n";
        for (std::size_t e = 0; e < result.epoch_losses.size(); ++e)
            loss << e << "," << result.epoch_losses[e] << "\n";
    }

    auto mean_sym_kl = [&](const std::vector<CrnSample>& set) {
        if (set.empty()) return 0.0;
        double total = 0.0;
        for (const auto& s : set) total += sym_kl(forward(model, s.left, s.right), s.target);
        return total / static_cast<double>(set.size());
    };
    json j;
    j["version"] = kVersion;
    j["config"] = train_config_json(cfg);
    j["config"]["manifest"] = manifest_path;
    j["n_train"] = train_set.size();
    j["n_test"] = test_set.size();
    j["train_sym_kl"] = mean_sym_kl(train_set);
    j["test_sym_kl"] = mean_sym_kl(test_set);
    j["grid"] = {{"x_min", data.grid.x_min}, {"x_max", data.grid.x_max},
                 {"y_min", data.grid.y_min}, {"y_max", data.grid.y_max},
                 {"nx", data.grid.nx},       {"ny", data.grid.ny}};
    write_json(report_path, j);
    std::cout << "train sym-KL " << j["train_sym_kl"] << ", test sym-KL " << j["test_sym_kl"]
              << "\n";
    return 0;
}

int cmd_predict(const std::string& model_path, const std::string& left_path,
                const std::string& right_path, const std::string& out_prefix, bool with_target,
                int hom_dim, bool pgm) {
    const CrnModel model = load_model(model_path);
    const PointCloud left = read_point_cloud_csv(left_path);
    const PointCloud right = read_point_cloud_csv(right_path);
    const DensityGrid pred = forward(model, left, right);
    write_grid(out_prefix + "_grid.csv", out_prefix + "_grid.json", pred, 0.0,
               Weighting::constant);
    if (pgm) write_grid_pgm(out_prefix + ".pgm", pred);

    json j;
    j["version"] = kVersion;
    j["config"] = {{"model", model_path}, {"left", left_path},  {"right", right_path},
                   {"hom_dim", hom_dim},  {"with_target", with_target}};
    if (with_target) {
        auto diagram = cross_barcode(left, right, hom_dim);
        std::vector<PersistenceDiagram> single = {diagram};
        const double bw = pooled_bandwidth(single);
        const Weighting weighting =
            model.grid.ny == 1 ? Weighting::constant : Weighting::lifetime;
        DensityGrid target = expected_density(single, model.grid, bw, weighting, true);
        write_grid(out_prefix + "_target.csv", out_prefix + "_target.json", target, bw, weighting);
        j["sym_kl"] = sym_kl(pred, target);
    }
    write_json(out_prefix + "_report.json", j);
    std::cout << "wrote " << out_prefix << "_grid.csv\n";
    return 0;
}

// ---------------------------------------------------------- topgen/classify

int cmd_topgen(const std::string& dataset_path, const std::string& refs_csv, bool random_refs,
               TopGenConfig cfg, std::uint64_t seed, int jobs, const std::string& out_path) {
    const LabelledSeries data = read_labelled_series_csv(dataset_path);

    std::vector<std::size_t> ref_indices;
    if (random_refs) {
        // one random example per class
        std::map<int, std::vector<std::size_t>> by_class;
        for (std::size_t i = 0; i < data.labels.size(); ++i)
            by_class[data.labels[i]].push_back(i);
        Rng rng = Rng::derive(seed, 0x72656673ULL); // "refs"
        for (auto& [cls, members] : by_class)
            ref_indices.push_back(members[rng.uniform_index(members.size())]);
    } else {
        if (refs_csv.empty())
            throw std::invalid_argument("topgen: pass --refs indices or --random-refs");
        std::stringstream ss(refs_csv);
        std::string item;
        while (std::getline(ss, item, ',')) ref_indices.push_back(std::stoul(item));
        for (auto i : ref_indices)
            if (i >= data.series.size())
                throw std::invalid_argument("topgen: reference index out of range");
    }

    std::vector<TimeSeries> refs;
    for (auto i : ref_indices) refs.push_back(data.series[i]);
    const TopGenFeaturizer featurizer(refs, cfg);

    std::vector<std::vector<double>> features(data.series.size());
    parallel_for(data.series.size(), jobs,
                 [&](std::size_t i) { features[i] = featurizer.features(data.series[i]); });

    std::ofstream out(out_path);
    if (!out) throw IoError("cannot open for writing: " + out_path);
    out << "label";
    for (const auto& name : featurizer.schema()) out << "," << name;
    out << "\n";
    for (std::size_t i = 0; i < features.size(); ++i) {
        out << data.labels[i];
        for (double v : features[i]) out << "," << detail::format17(v);
        out << "\n";
    }
    std::cout << "wrote " << out_path << " (" << featurizer.schema().size() << " features, refs";
    for (auto i : ref_indices) std::cout << " " << i;
    std::cout << ")\n";
    return 0;
}

int cmd_classify(const std::string& features_path, double test_frac, std::uint64_t seed,
                 LogisticConfig lcfg, const std::string& out_path) {
    // features CSV: header, label first
    std::ifstream in(features_path);
    if (!in) throw IoError("cannot open for reading: " + features_path);
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::vector<double>> features;
    std::vector<int> labels;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        if (lineno == 1 && line.rfind("label", 0) == 0) continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() < 2) throw IoError(features_path, lineno, "row needs label + features");
        labels.push_back(static_cast<int>(detail::parse_double(fields[0], features_path, lineno)));
        std::vector<double> row;
        for (std::size_t i = 1; i < fields.size(); ++i)
            row.push_back(detail::parse_double(fields[i], features_path, lineno));
        features.push_back(std::move(row));
    }
    if (features.size() < 4) throw std::invalid_argument("classify: needs at least 4 rows");

    std::vector<std::size_t> order(features.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = Rng::derive(seed, 0x636c73ULL); // "cls"
    rng.shuffle(order);
    const std::size_t n_test =
        std::max<std::size_t>(1, static_cast<std::size_t>(test_frac * order.size()));
    std::vector<std::vector<double>> xtrain, xtest;
    std::vector<int> ytrain, ytest;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i < order.size() - n_test) {
            xtrain.push_back(features[order[i]]);
            ytrain.push_back(labels[order[i]]);
        } else {
            xtest.push_back(features[order[i]]);
            ytest.push_back(labels[order[i]]);
        }
    }

    const std::set<int> classes(labels.begin(), labels.end());
    json j;
    j["version"] = kVersion;
    j["config"] = {{"features", features_path}, {"test_frac", test_frac},
                   {"seed", seed},              {"l2", lcfg.l2},
                   {"epochs", lcfg.epochs},     {"lr", lcfg.learning_rate}};
    j["n_train"] = xtrain.size();
    j["n_test"] = xtest.size();
    j["n_classes"] = classes.size();
    if (classes.size() == 2) {
        auto model = logistic_fit(xtrain, ytrain, lcfg);
        const auto train_metrics = evaluate(model, xtrain, ytrain);
        const auto test_metrics = evaluate(model, xtest, ytest);
        j["train"] = {{"accuracy", train_metrics.accuracy}, {"roc_auc", train_metrics.roc_auc}};
        j["valid"] = {{"accuracy", test_metrics.accuracy}, {"roc_auc", test_metrics.roc_auc}};
    } else {
        auto ovr = one_vs_rest_fit(xtrain, ytrain, lcfg);
        auto accuracy = [&](const std::vector<std::vector<double>>& x,
                            const std::vector<int>& y) {
            long correct = 0;
            for (std::size_t i = 0; i < x.size(); ++i)
                correct += one_vs_rest_predict(ovr, x[i]) == y[i];
            return static_cast<double>(correct) / static_cast<double>(x.size());
        };
        j["train"] = {{"accuracy", accuracy(xtrain, ytrain)}};
        j["valid"] = {{"accuracy", accuracy(xtest, ytest)}};
    }
    write_json(out_path, j);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

// ----------------------------------------------------------------- selftest

int cmd_selftest(std::uint64_t seed) {
    int failures = 0;
    auto report = [&](const std::string& name, bool ok) {
        std::cout << (ok ? "[PASS] " : "[FAIL] ") << name << "\n";
        if (!ok) ++failures;
    };
    Rng rng(seed);

    { // metric axioms
        bool ok = true;
        for (int rep = 0; rep < 5 && ok; ++rep) {
            PointCloud c(3);
            for (int i = 0; i < 10; ++i) c.add_point({rng.normal(), rng.normal(), rng.normal()});
            ok = oracles::triangle_inequality_holds(pairwise_distances(c));
        }
        report("pairwise distances satisfy the triangle inequality", ok);
    }
    { // cross filtration against the filtering function
        bool ok = true;
        for (int rep = 0; rep < 5 && ok; ++rep) {
            PointCloud p(2), q(2);
            for (int i = 0; i < 3; ++i) {
                p.add_point({rng.normal(), rng.normal()});
                q.add_point({rng.normal(), rng.normal()});
            }
            auto cross = cross_distance_matrix(p, q);
            auto filt = cross_vr_filtration(cross, 4, max_entry(cross));
            auto got = oracles::filtration_simplices(filt);
            auto expected = oracles::enumerate_subsets(
                6, 5, max_entry(cross),
                [&](const auto& subset) { return oracles::phi_value(p, q, subset); });
            ok = got == expected;
        }
        report("cross filtration equals the filtering function on all subsets", ok);
    }
    { // reduction against the rank oracle
        bool ok = true;
        for (int rep = 0; rep < 20 && ok; ++rep) {
            PointCloud c(2);
            const std::size_t n = 4 + rng.uniform_index(3);
            for (std::size_t i = 0; i < n; ++i) c.add_point({rng.normal(), rng.normal()});
            auto filt = vr_filtration(pairwise_distances(c), 1);
            auto got = reduce_diagrams(filt, 1);
            auto expected = oracles::rank_oracle_diagrams(filt, 1);
            ok = oracles::diagrams_match(got[0], expected[0]) &&
                 oracles::diagrams_match(got[1], expected[1]);
        }
        report("reduction matches the persistent-Betti rank oracle", ok);
    }
    { // duplicate-cloud identity
        PointCloud c(2);
        for (int i = 0; i < 24; ++i) c.add_point({rng.normal(), rng.normal()});
        const bool ok =
            mtd(cross_barcode(c, c, 0)) == 0.0 && mtd(cross_barcode(c, c, 1)) == 0.0;
        report("cross barcode of a duplicated cloud has zero MTD", ok);
    }
    { // overlap analytics
        std::vector<double> a(4000), b(4000);
        for (auto& x : a) x = rng.normal();
        for (auto& x : b) x = 2.0 + rng.normal();
        const double o = overlap(kde1d(a), kde1d(b));
        report("overlap of N(0,1) vs N(2,1) is near 2*Phi(-1)", std::abs(o - 0.3173) < 0.05);
        const auto lip = overlap_lipschitz_check(100, seed);
        report("overlap lipschitz bound holds", lip.passed);
    }
    { // AUC oracle
        bool ok = true;
        for (int rep = 0; rep < 10 && ok; ++rep) {
            std::vector<double> scores(60);
            std::vector<int> labels(60);
            for (int i = 0; i < 60; ++i) {
                scores[i] = std::floor(rng.uniform01() * 6.0);
                labels[i] = static_cast<int>(rng.uniform_index(2));
            }
            labels[0] = 0;
            labels[1] = 1;
            ok = roc_auc(scores, labels) == oracles::auc_bruteforce(scores, labels);
        }
        report("rank-statistic AUC equals the pairwise brute force", ok);
    }
    { // permutation invariance of the neural forward pass
        GridSpec grid{0.0, 1.0, 0.0, 1.0, 4, 4};
        CrnOptions opt;
        opt.phi1_hidden = {8, 16};
        opt.phi2_hidden = {8};
        opt.head_hidden = {16};
        opt.reducer_k = 5;
        auto model = crn_init(CrnVariant::c_dual_with_distance, 2, grid, opt, seed);
        PointCloud l(2), r(2);
        for (int i = 0; i < 9; ++i) {
            l.add_point({rng.normal(), rng.normal()});
            r.add_point({rng.normal(), rng.normal()});
        }
        auto base = forward(model, l, r).values;
        std::vector<std::uint32_t> perm = {4, 2, 7, 0, 8, 1, 6, 3, 5};
        const bool ok = forward(model, l.subset(perm), r.subset(perm)).values == base;
        report("neural forward pass is bitwise permutation invariant", ok);
    }
    std::cout << (failures == 0 ? "selftest passed" : "selftest FAILED") << "\n";
    return failures == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(kVersion) + " - cross-persistence toolkit"};
    app.require_subcommand(1);
    const std::uint64_t default_seed = env_seed_default();

    // barcode
    auto* barcode = app.add_subcommand("barcode", "persistence diagrams of one cloud or a pair");
    std::vector<std::string> barcode_clouds;
    bool barcode_cross = false;
    int barcode_dim = 1;
    double barcode_scale = -1.0;
    std::string barcode_out = "diagram.csv", barcode_dump;
    barcode->add_option("clouds", barcode_clouds, "cloud CSV file(s)")->required();
    barcode->add_flag("--cross", barcode_cross, "cross barcode (left right)");
    barcode->add_option("--dim", barcode_dim, "max homology dimension");
    barcode->add_option("--max-scale", barcode_scale, "filtration cutoff (default: enclosing radius)");
    barcode->add_option("--out", barcode_out, "diagram CSV output");
    barcode->add_option("--dump-filtration", barcode_dump, "debug filtration CSV");

    // distinguish
    auto* dist = app.add_subcommand("distinguish", "overlap-based point-cloud distinction");
    std::string dist_core, dist_candidate, dist_report = "distinction.json", dist_prefix;
    std::string dist_config;
    DistinctionConfig dist_cfg;
    dist_cfg.seed = default_seed;
    bool dist_pgm = false;
    dist->add_option("core", dist_core, "core cloud CSV")->required();
    dist->add_option("candidate", dist_candidate, "candidate cloud CSV")->required();
    dist->add_option("--config", dist_config, "JSON config file (flags override it)");
    dist->add_option("--out", dist_report, "JSON report path");
    dist->add_option("--density-prefix", dist_prefix, "write density curves with this prefix");
    dist->add_flag("--pgm", dist_pgm, "also write a PGM plot of the curves");
    dist->add_option("--n-pairs", dist_cfg.n_pairs, "subsample pairs per density");
    dist->add_option("--subsample", dist_cfg.subsample_size, "subsample size");
    dist->add_option("--dim", dist_cfg.hom_dim, "homology dimension");
    dist->add_option("--seed", dist_cfg.seed, "random seed");
    dist->add_option("--threshold", dist_cfg.threshold, "significance threshold");
    dist->add_option("--jobs", dist_cfg.jobs, "parallel jobs");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "noise sensitivity sweep over a cloud directory");
    std::string sweep_dir, sweep_levels = "0,0.25,0.5,0.75", sweep_regime = "right_only";
    std::string sweep_report = "sweep.json", sweep_table = "sweep.csv", sweep_config;
    DistinctionConfig sweep_cfg;
    sweep_cfg.seed = default_seed;
    sweep->add_option("dataset", sweep_dir, "directory of cloud CSVs (one class each)")->required();
    sweep->add_option("--config", sweep_config, "JSON config file (flags override it)");
    sweep->add_option("--levels", sweep_levels, "comma-separated noise levels");
    sweep->add_option("--regime", sweep_regime, "right_only or both");
    sweep->add_option("--out", sweep_report, "JSON report path");
    sweep->add_option("--table", sweep_table, "CSV table path");
    sweep->add_option("--n-pairs", sweep_cfg.n_pairs, "subsample pairs per density");
    sweep->add_option("--subsample", sweep_cfg.subsample_size, "subsample size");
    sweep->add_option("--dim", sweep_cfg.hom_dim, "homology dimension");
    sweep->add_option("--seed", sweep_cfg.seed, "random seed");
    sweep->add_option("--threshold", sweep_cfg.threshold, "significance threshold");
    sweep->add_option("--jobs", sweep_cfg.jobs, "parallel jobs");

    // train
    auto* train_cmd = app.add_subcommand("train", "train the density predictor");
    std::string train_manifest, train_model = "model.json", train_loss = "loss.csv",
                train_report = "train_report.json";
    std::string train_config;
    TrainCliConfig tc;
    tc.seed = default_seed;
    train_cmd->add_option("manifest", train_manifest, "dataset manifest JSON")->required();
    train_cmd->add_option("--config", train_config, "JSON config file (flags override it)");
    train_cmd->add_option("--model-out", train_model, "model JSON output");
    train_cmd->add_option("--loss-out", train_loss, "loss history CSV");
    train_cmd->add_option("--report-out", train_report, "training report JSON");
    train_cmd->add_option("--variant", tc.variant, "a_merged | b_dual | c_dual_with_distance");
    train_cmd->add_option("--reducer", tc.reducer, "pca | topk_max | quantiles");
    train_cmd->add_option("--k", tc.reducer_k, "distance feature count");
    train_cmd->add_option("--dim", tc.hom_dim, "homology dimension of the targets");
    train_cmd->add_option("--grid-nx", tc.grid_nx, "target grid width");
    train_cmd->add_option("--grid-ny", tc.grid_ny, "target grid height");
    train_cmd->add_option("--split", tc.split, "train fraction");
    train_cmd->add_option("--epochs", tc.epochs, "training epochs");
    train_cmd->add_option("--lr", tc.lr, "learning rate");
    train_cmd->add_option("--batch", tc.batch, "batch size");
    train_cmd->add_option("--optimizer", tc.optimizer, "adam | sgd");
    train_cmd->add_option("--seed", tc.seed, "random seed");
    train_cmd->add_option("--target", tc.target, "diagram | mtd (1-D density mode)");
    train_cmd->add_option("--mtd-n-pairs", tc.mtd_n_pairs, "MTD samples per pair (mtd mode)");
    train_cmd->add_option("--mtd-subsample", tc.mtd_subsample, "MTD subsample size (mtd mode)");
    train_cmd->add_flag("--no-right-encoder{false}", tc.right_encoder,
                        "disable the right-cloud encoder (ablation)");
    train_cmd->add_option("--jobs", tc.jobs, "parallel jobs for target preparation");

    // predict
    auto* predict = app.add_subcommand("predict", "predict a density for a cloud pair");
    std::string pred_model, pred_left, pred_right, pred_prefix = "prediction";
    bool pred_with_target = false, pred_pgm = false;
    int pred_dim = 1;
    predict->add_option("model", pred_model, "model JSON")->required();
    predict->add_option("left", pred_left, "left cloud CSV")->required();
    predict->add_option("right", pred_right, "right cloud CSV")->required();
    predict->add_option("--out-prefix", pred_prefix, "output path prefix");
    predict->add_flag("--with-target", pred_with_target, "also compute the true density + sym-KL");
    predict->add_option("--dim", pred_dim, "homology dimension for --with-target");
    predict->add_flag("--pgm", pred_pgm, "write a PGM heatmap");

    // topgen
    auto* topgen = app.add_subcommand("topgen", "topological features for labelled series");
    std::string tg_dataset, tg_refs, tg_out = "features.csv", tg_hom = "0,1", tg_config;
    bool tg_random_refs = false;
    TopGenConfig tg_cfg;
    std::uint64_t tg_seed = default_seed;
    int tg_jobs = 1;
    topgen->add_option("dataset", tg_dataset, "labelled series CSV (label column first)")
        ->required();
    topgen->add_option("--config", tg_config, "JSON config file (flags override it)");
    topgen->add_option("--refs", tg_refs, "comma-separated reference row indices");
    topgen->add_flag("--random-refs", tg_random_refs, "pick one random reference per class");
    topgen->add_option("--out", tg_out, "features CSV output");
    topgen->add_option("--embedding-dim", tg_cfg.embedding_dim, "time-delay embedding dimension");
    topgen->add_option("--delay", tg_cfg.delay, "time-delay step");
    topgen->add_option("--pca-dim", tg_cfg.pca_dim, "PCA target dimension");
    topgen->add_option("--hom-dims", tg_hom, "homology dimensions to pool, e.g. 0,1");
    topgen->add_option("--seed", tg_seed, "random seed (reference choice)");
    topgen->add_option("--jobs", tg_jobs, "parallel jobs");

    // classify
    auto* classify = app.add_subcommand("classify", "logistic classification of a feature CSV");
    std::string cls_features, cls_out = "metrics.json", cls_config;
    double cls_test_frac = 0.2;
    std::uint64_t cls_seed = default_seed;
    LogisticConfig lcfg;
    classify->add_option("features", cls_features, "features CSV (label column first)")
        ->required();
    classify->add_option("--config", cls_config, "JSON config file (flags override it)");
    classify->add_option("--out", cls_out, "metrics JSON output");
    classify->add_option("--test-frac", cls_test_frac, "held-out fraction");
    classify->add_option("--seed", cls_seed, "split seed");
    classify->add_option("--l2", lcfg.l2, "L2 strength");
    classify->add_option("--epochs", lcfg.epochs, "solver epochs");
    classify->add_option("--lr", lcfg.learning_rate, "solver learning rate");

    // selftest
    auto* selftest = app.add_subcommand("selftest", "run the oracle and property suites");
    std::uint64_t st_seed = default_seed;
    selftest->add_option("--seed", st_seed, "random seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (barcode->parsed()) {
            std::optional<double> scale;
            if (barcode_scale > 0) scale = barcode_scale;
            return cmd_barcode(barcode_clouds, barcode_cross, barcode_dim, scale, barcode_out,
                               barcode_dump);
        }
        if (dist->parsed()) {
            const json cfg = load_config_file(dist_config);
            from_config(dist, cfg, "--n-pairs", "n_pairs", dist_cfg.n_pairs);
            from_config(dist, cfg, "--subsample", "subsample_size", dist_cfg.subsample_size);
            from_config(dist, cfg, "--dim", "hom_dim", dist_cfg.hom_dim);
            from_config(dist, cfg, "--seed", "seed", dist_cfg.seed);
            from_config(dist, cfg, "--threshold", "threshold", dist_cfg.threshold);
            from_config(dist, cfg, "--jobs", "jobs", dist_cfg.jobs);
            return cmd_distinguish(dist_core, dist_candidate, dist_cfg, dist_report, dist_prefix,
                                   dist_pgm);
        }
        if (sweep->parsed()) {
            const json cfg = load_config_file(sweep_config);
            from_config(sweep, cfg, "--levels", "levels", sweep_levels);
            from_config(sweep, cfg, "--regime", "regime", sweep_regime);
            from_config(sweep, cfg, "--n-pairs", "n_pairs", sweep_cfg.n_pairs);
            from_config(sweep, cfg, "--subsample", "subsample_size", sweep_cfg.subsample_size);
            from_config(sweep, cfg, "--dim", "hom_dim", sweep_cfg.hom_dim);
            from_config(sweep, cfg, "--seed", "seed", sweep_cfg.seed);
            from_config(sweep, cfg, "--threshold", "threshold", sweep_cfg.threshold);
            from_config(sweep, cfg, "--jobs", "jobs", sweep_cfg.jobs);
            return cmd_sweep(sweep_dir, sweep_levels, sweep_regime, sweep_cfg, sweep_report,
                             sweep_table);
        }
        if (train_cmd->parsed()) {
            const json cfg = load_config_file(train_config);
            from_config(train_cmd, cfg, "--variant", "variant", tc.variant);
            from_config(train_cmd, cfg, "--reducer", "reducer", tc.reducer);
            from_config(train_cmd, cfg, "--k", "reducer_k", tc.reducer_k);
            from_config(train_cmd, cfg, "--dim", "hom_dim", tc.hom_dim);
            from_config(train_cmd, cfg, "--grid-nx", "grid_nx", tc.grid_nx);
            from_config(train_cmd, cfg, "--grid-ny", "grid_ny", tc.grid_ny);
            from_config(train_cmd, cfg, "--split", "split", tc.split);
            from_config(train_cmd, cfg, "--epochs", "epochs", tc.epochs);
            from_config(train_cmd, cfg, "--lr", "lr", tc.lr);
            from_config(train_cmd, cfg, "--batch", "batch", tc.batch);
            from_config(train_cmd, cfg, "--optimizer", "optimizer", tc.optimizer);
            from_config(train_cmd, cfg, "--seed", "seed", tc.seed);
            from_config(train_cmd, cfg, "--target", "target", tc.target);
            from_config(train_cmd, cfg, "--mtd-n-pairs", "mtd_n_pairs", tc.mtd_n_pairs);
            from_config(train_cmd, cfg, "--mtd-subsample", "mtd_subsample", tc.mtd_subsample);
            from_config(train_cmd, cfg, "--jobs", "jobs", tc.jobs);
            return cmd_train(train_manifest, tc, train_model, train_loss, train_report);
        }
        if (predict->parsed())
            return cmd_predict(pred_model, pred_left, pred_right, pred_prefix, pred_with_target,
                               pred_dim, pred_pgm);
        if (topgen->parsed()) {
            const json cfg = load_config_file(tg_config);
            from_config(topgen, cfg, "--refs", "refs", tg_refs);
            from_config(topgen, cfg, "--embedding-dim", "embedding_dim", tg_cfg.embedding_dim);
            from_config(topgen, cfg, "--delay", "delay", tg_cfg.delay);
            from_config(topgen, cfg, "--pca-dim", "pca_dim", tg_cfg.pca_dim);
            from_config(topgen, cfg, "--hom-dims", "hom_dims", tg_hom);
            from_config(topgen, cfg, "--seed", "seed", tg_seed);
            from_config(topgen, cfg, "--jobs", "jobs", tg_jobs);
            if (cfg.contains("random_refs") && topgen->count("--random-refs") == 0)
                tg_random_refs = cfg.at("random_refs").get<bool>();
            tg_cfg.hom_dims = parse_int_set(tg_hom);
            return cmd_topgen(tg_dataset, tg_refs, tg_random_refs, tg_cfg, tg_seed, tg_jobs,
                              tg_out);
        }
        if (classify->parsed()) {
            const json cfg = load_config_file(cls_config);
            from_config(classify, cfg, "--test-frac", "test_frac", cls_test_frac);
            from_config(classify, cfg, "--seed", "seed", cls_seed);
            from_config(classify, cfg, "--l2", "l2", lcfg.l2);
            from_config(classify, cfg, "--epochs", "epochs", lcfg.epochs);
            from_config(classify, cfg, "--lr", "lr", lcfg.learning_rate);
            return cmd_classify(cls_features, cls_test_frac, cls_seed, lcfg, cls_out);
        }
        if (selftest->parsed()) return cmd_selftest(st_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
