#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "crosspers/crosspers.hpp"

using namespace crosspers;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static fs::path dir = [] {
        auto d = fs::temp_directory_path() / "crosspers_tests";
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(CROSSPERS_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
}

PointCloud random_cloud(std::size_t n, std::size_t d, Rng& rng) {
    PointCloud c(d);
    std::vector<double> p(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& x : p) x = rng.normal();
        c.add_point(std::span<const double>(p));
    }
    return c;
}

} // namespace

TEST_CASE("point cloud CSV roundtrip is lossless") {
    Rng rng(1);
    auto cloud = random_cloud(20, 3, rng);
    const auto path = (temp_dir() / "cloud.csv").string();
    write_point_cloud_csv(path, cloud);
    auto back = read_point_cloud_csv(path);
    CHECK(back.dim() == cloud.dim());
    CHECK(back.flat() == cloud.flat()); // 17 significant digits roundtrip doubles exactly
}

TEST_CASE("diagram CSV roundtrip keeps infinite deaths") {
    std::vector<PersistenceDiagram> diagrams(2);
    diagrams[0].dim = 0;
    diagrams[0].pairs = {{0.0, 1.25}, {0.0, kInfiniteDeath}};
    diagrams[1].dim = 1;
    diagrams[1].pairs = {{0.5, 0.7071067811865476}};
    const auto path = (temp_dir() / "diagram.csv").string();
    write_diagrams_csv(path, diagrams);
    auto back = read_diagrams_csv(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].pairs.size() == 2);
    CHECK(back[0].pairs[0].death == 1.25);
    CHECK(back[0].pairs[1].essential());
    CHECK(back[1].pairs[0].death == 0.7071067811865476);
}

TEST_CASE("grid CSV + sidecar roundtrip") {
    GridSpec spec{-1.0, 2.0, 0.0, 3.0, 5, 4};
    DensityGrid grid = make_grid(spec);
    Rng rng(3);
    for (auto& v : grid.values) v = rng.uniform01();
    normalize_grid(grid);
    const auto csv = (temp_dir() / "grid.csv").string();
    const auto side = (temp_dir() / "grid.json").string();
    write_grid(csv, side, grid, 0.25, Weighting::lifetime);
    auto back = read_grid(csv, side);
    CHECK(back.spec == spec);
    CHECK(back.normalized);
    CHECK(back.values == grid.values);
}

TEST_CASE("model JSON roundtrip reproduces the forward pass bitwise") {
    GridSpec grid{0.0, 1.0, 0.0, 1.0, 4, 4};
    CrnOptions opt;
    opt.phi1_hidden = {6, 8};
    opt.phi2_hidden = {6};
    opt.head_hidden = {8};
    opt.reducer_k = 5;
    auto model = crn_init(CrnVariant::c_dual_with_distance, 2, grid, opt, 17);

    Rng rng(4);
    auto left = random_cloud(9, 2, rng);
    auto right = random_cloud(8, 2, rng);
    auto expected = forward(model, left, right).values;

    const auto path = (temp_dir() / "model.json").string();
    save_model(path, model);
    auto loaded = load_model(path);
    CHECK(forward(loaded, left, right).values == expected);
}

TEST_CASE("malformed CSV errors carry the line number") {
    const auto path = (temp_dir() / "bad.csv").string();
    {
        std::ofstream out(path);
        out << "0,0\n1,oops\n";
    }
    try {
        read_point_cloud_csv(path);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
}

TEST_CASE("labelled series CSV reads labels and rows") {
    const auto path = (temp_dir() / "series.csv").string();
    {
        std::ofstream out(path);
        out << "0,0.5,0.25,0.125\n1,1,2,3\n";
    }
    auto data = read_labelled_series_csv(path);
    REQUIRE(data.labels.size() == 2);
    CHECK(data.labels[0] == 0);
    CHECK(data.labels[1] == 1);
    CHECK(data.series[0].values == std::vector<double>{0.5, 0.25, 0.125});
}

TEST_CASE("pgm heatmap has the right header and size") {
    GridSpec spec{0.0, 1.0, 0.0, 1.0, 8, 4};
    DensityGrid grid = make_grid(spec);
    grid.values[5] = 1.0;
    const auto path = (temp_dir() / "grid.pgm").string();
    write_grid_pgm(path, grid);
    const std::string bytes = file_bytes(path);
    CHECK(bytes.substr(0, 3) == "P5\n");
    CHECK(bytes.find("8 4") != std::string::npos);
    CHECK(bytes.size() > 8u * 4u);
}

TEST_CASE("cli: barcode on a two-point cloud") {
    const auto cloud = (temp_dir() / "cli_two.csv").string();
    {
        std::ofstream out(cloud);
        out << "0,0\n3,4\n";
    }
    const auto out = (temp_dir() / "cli_diagram.csv").string();
    REQUIRE(run_cli("barcode " + cloud + " --dim 0 --out " + out) == 0);
    auto diagrams = read_diagrams_csv(out);
    REQUIRE(!diagrams.empty());
    REQUIRE(diagrams[0].pairs.size() == 2);
    CHECK(diagrams[0].pairs[0].death == 5.0);
    CHECK(diagrams[0].pairs[1].essential());
}

TEST_CASE("cli: cross barcode of identical files is all zero-length") {
    Rng rng(5);
    auto cloud = random_cloud(12, 2, rng);
    const auto path = (temp_dir() / "cli_same.csv").string();
    write_point_cloud_csv(path, cloud);
    const auto out = (temp_dir() / "cli_cross.csv").string();
    REQUIRE(run_cli("barcode " + path + " " + path + " --cross --dim 1 --out " + out) == 0);
    auto diagrams = read_diagrams_csv(out);
    for (const auto& d : diagrams)
        for (const auto& p : d.pairs)
            if (!p.essential()) CHECK(p.zero_length());
}

TEST_CASE("cli: distinguish is bytewise reproducible under a fixed seed") {
    Rng rng(6);
    PointCloud core(2), cand(2);
    for (int i = 0; i < 40; ++i) {
        const double a = 2.0 * M_PI * rng.uniform01();
        core.add_point({std::cos(a), std::sin(a)});
        const double b = 2.0 * M_PI * rng.uniform01();
        cand.add_point({0.5 * std::cos(b), 0.5 * std::sin(b)});
    }
    const auto core_path = (temp_dir() / "cli_core.csv").string();
    const auto cand_path = (temp_dir() / "cli_cand.csv").string();
    write_point_cloud_csv(core_path, core);
    write_point_cloud_csv(cand_path, cand);

    const auto rep1 = (temp_dir() / "cli_rep1.json").string();
    const auto rep2 = (temp_dir() / "cli_rep2.json").string();
    const std::string flags = " --n-pairs 4 --subsample 12 --dim 0 --seed 9 --out ";
    REQUIRE(run_cli("distinguish " + core_path + " " + cand_path + flags + rep1) == 0);
    REQUIRE(run_cli("distinguish " + core_path + " " + cand_path + flags + rep2) == 0);
    CHECK(file_bytes(rep1) == file_bytes(rep2));

    // report embeds config and version
    const std::string body = file_bytes(rep1);
    CHECK(body.find("\"config\"") != std::string::npos);
    CHECK(body.find("crosspers") != std::string::npos);
    CHECK(body.find("\"seed\": 9") != std::string::npos);
}

TEST_CASE("cli: config file values apply and flags override them") {
    Rng rng(10);
    PointCloud core(2), cand(2);
    for (int i = 0; i < 24; ++i) {
        const double a = 2.0 * M_PI * rng.uniform01();
        core.add_point({std::cos(a), std::sin(a)});
        cand.add_point({0.4 * std::cos(a), 0.4 * std::sin(a)});
    }
    const auto core_path = (temp_dir() / "cfg_core.csv").string();
    const auto cand_path = (temp_dir() / "cfg_cand.csv").string();
    write_point_cloud_csv(core_path, core);
    write_point_cloud_csv(cand_path, cand);

    const auto config_path = (temp_dir() / "cfg.json").string();
    {
        std::ofstream out(config_path);
        out << R"({"n_pairs": 5, "subsample_size": 10, "hom_dim": 0, "seed": 123})";
    }
    const auto report = (temp_dir() / "cfg_report.json").string();
    // --seed on the command line overrides the file's 123; n_pairs comes from the file
    const auto prefix = (temp_dir() / "cfg_density").string();
    REQUIRE(run_cli("distinguish " + core_path + " " + cand_path + " --config " + config_path +
                    " --seed 777 --density-prefix " + prefix + " --pgm --out " + report) == 0);
    const std::string body = file_bytes(report);
    CHECK(body.find("\"seed\": 777") != std::string::npos);
    CHECK(body.find("\"n_pairs\": 5") != std::string::npos);
    CHECK(body.find("\"hom_dim\": 0") != std::string::npos);
    CHECK(fs::exists(prefix + "_self.csv"));
    CHECK(fs::exists(prefix + "_cross.csv"));
    CHECK(fs::exists(prefix + ".pgm"));
}

TEST_CASE("cli: CROSSPERS_SEED is the fallback seed") {
    const auto cloud = (temp_dir() / "env_cloud.csv").string();
    {
        Rng rng(11);
        PointCloud c(2);
        for (int i = 0; i < 16; ++i) c.add_point({rng.normal(), rng.normal()});
        write_point_cloud_csv(cloud, c);
    }
    const auto report = (temp_dir() / "env_report.json").string();
    const std::string cmd = std::string("CROSSPERS_SEED=4242 ") + CROSSPERS_CLI_PATH +
                            " distinguish " + cloud + " " + cloud +
                            " --n-pairs 3 --subsample 8 --dim 0 --out " + report +
                            " > /dev/null 2>&1";
    REQUIRE(std::system(cmd.c_str()) == 0);
    CHECK(file_bytes(report).find("\"seed\": 4242") != std::string::npos);
}

TEST_CASE("cli: missing model file fails cleanly") {
    const auto cloud = (temp_dir() / "cli_two.csv").string();
    CHECK(run_cli("predict /nonexistent/model.json " + cloud + " " + cloud) != 0);
}

TEST_CASE("cli: malformed cloud CSV exits nonzero") {
    const auto path = (temp_dir() / "cli_bad.csv").string();
    {
        std::ofstream out(path);
        out << "1,2\nbroken\n";
    }
    CHECK(run_cli("barcode " + path + " --dim 0 --out " + (temp_dir() / "x.csv").string()) != 0);
}

TEST_CASE("cli: topgen then classify on a tiny synthetic dataset") {
    Rng rng(7);
    const auto dataset = (temp_dir() / "cli_series.csv").string();
    {
        std::ofstream out(dataset);
        for (int i = 0; i < 16; ++i) {
            const int label = i % 2;
            TimeSeries s = label ? synthetic::damped_chirp(48, rng, 2.0)
                                 : synthetic::pure_noise(48, rng);
            out << label;
            for (double v : s.values) out << "," << v;
            out << "\n";
        }
    }
    const auto features = (temp_dir() / "cli_features.csv").string();
    REQUIRE(run_cli("topgen " + dataset +
                    " --random-refs --embedding-dim 6 --pca-dim 2 --hom-dims 0 --seed 3 --out " +
                    features) == 0);
    {
        std::ifstream in(features);
        std::string header;
        std::getline(in, header);
        CHECK(header.rfind("label,ref0_left_mtd", 0) == 0);
        // 2 classes -> 2 references -> 8 feature columns + label
        CHECK(std::count(header.begin(), header.end(), ',') == 8);
    }
    const auto metrics = (temp_dir() / "cli_metrics.json").string();
    REQUIRE(run_cli("classify " + features + " --test-frac 0.25 --seed 5 --out " + metrics) == 0);
    const std::string body = file_bytes(metrics);
    CHECK(body.find("\"valid\"") != std::string::npos);
    CHECK(body.find("roc_auc") != std::string::npos);
}

TEST_CASE("cli: train and predict a tiny model end to end") {
    Rng rng(8);
    const auto dir = temp_dir() / "cli_train";
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["pairs"] = nlohmann::json::array();
    for (int i = 0; i < 6; ++i) {
        auto left = synthetic::circle(20, rng);
        auto right = synthetic::circles(20, 2, rng);
        const auto lp = dir / ("left" + std::to_string(i) + ".csv");
        const auto rp = dir / ("right" + std::to_string(i) + ".csv");
        write_point_cloud_csv(lp.string(), left);
        write_point_cloud_csv(rp.string(), right);
        manifest["pairs"].push_back({{"left", lp.filename().string()},
                                     {"right", rp.filename().string()}});
    }
    const auto manifest_path = dir / "manifest.json";
    {
        std::ofstream out(manifest_path);
        out << manifest.dump(2);
    }
    const auto model_path = (dir / "model.json").string();
    const auto loss_path = (dir / "loss.csv").string();
    const auto report_path = (dir / "report.json").string();
    REQUIRE(run_cli("train " + manifest_path.string() + " --variant b_dual --dim 0 --grid-nx 8" +
                    " --grid-ny 1 --epochs 20 --batch 2 --seed 4 --model-out " + model_path +
                    " --loss-out " + loss_path + " --report-out " + report_path) == 0);
    CHECK(fs::exists(model_path));
    CHECK(fs::exists(loss_path));
    CHECK(file_bytes(report_path).find("test_sym_kl") != std::string::npos);

    const auto pred_prefix = (dir / "pred").string();
    REQUIRE(run_cli("predict " + model_path + " " + (dir / "left0.csv").string() + " " +
                    (dir / "right0.csv").string() + " --with-target --dim 0 --out-prefix " +
                    pred_prefix) == 0);
    auto grid = read_grid(pred_prefix + "_grid.csv", pred_prefix + "_grid.json");
    CHECK(grid.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(file_bytes(pred_prefix + "_report.json").find("sym_kl") != std::string::npos);
}

TEST_CASE("cli: sweep over a tiny dataset directory") {
    Rng rng(9);
    const auto dir = temp_dir() / "cli_sweep";
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_point_cloud_csv((dir / "class_a.csv").string(), synthetic::circle(24, rng));
    write_point_cloud_csv((dir / "class_b.csv").string(), synthetic::blob(24, rng));
    // outputs stay outside the dataset directory so reruns don't ingest them
    const auto report = (temp_dir() / "sweep.json").string();
    const auto table = (temp_dir() / "sweep.csv").string();
    REQUIRE(run_cli("sweep " + dir.string() + " --levels 0,0.5 --regime right_only" +
                    " --n-pairs 4 --subsample 10 --dim 0 --seed 2 --out " + report + " --table " +
                    table) == 0);
    const std::string body = file_bytes(report);
    CHECK(body.find("\"rows\"") != std::string::npos);
    CHECK(body.find("mean_overlap") != std::string::npos);
    std::ifstream tin(table);
    std::string header;
    std::getline(tin, header);
    CHECK(header == "level,regime,core,candidate,overlap,self_std,cross_std");
}
