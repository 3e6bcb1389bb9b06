#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "crosspers/crossripsnet.hpp"
#include "crosspers/filtration.hpp"
#include "crosspers/geometry.hpp"
#include "crosspers/persistence.hpp"
#include "crosspers/stats.hpp"
#include "crosspers/summaries.hpp"
#include "crosspers/version.hpp"

namespace crosspers {

/// Parse failure with the offending file and 1-based line number.
class IoError : public std::runtime_error {
public:
    IoError(const std::string& path, std::size_t line, const std::string& what)
        : std::runtime_error(path + ":" + std::to_string(line) + ": " + what) {}
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline std::string format17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline double parse_double(const std::string& s, const std::string& path, std::size_t line) {
    std::string t = s;
    // trim
    const auto a = t.find_first_not_of(" \t");
    const auto b = t.find_last_not_of(" \t");
    if (a == std::string::npos) throw IoError(path, line, "empty numeric field");
    t = t.substr(a, b - a + 1);
    if (t == "inf" || t == "+inf" || t == "Inf") return std::numeric_limits<double>::infinity();
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end == t.c_str() || *end != '\0')
        throw IoError(path, line, "malformed number '" + t + "'");
    return v;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    return out;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    return in;
}

} // namespace detail

// -------------------------------------------------------------- point clouds

/// Cloud CSV: one point per row, comma separated, no header.
inline PointCloud read_point_cloud_csv(const std::string& path) {
    auto in = detail::open_in(path);
    PointCloud cloud;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto fields = detail::split_csv_line(line);
        std::vector<double> p(fields.size());
        for (std::size_t i = 0; i < fields.size(); ++i)
            p[i] = detail::parse_double(fields[i], path, lineno);
        if (!cloud.empty() && p.size() != cloud.dim())
            throw IoError(path, lineno, "inconsistent point dimension");
        cloud.add_point(std::span<const double>(p));
    }
    if (cloud.empty()) throw IoError(path, lineno, "no points in file");
    return cloud;
}

inline void write_point_cloud_csv(const std::string& path, const PointCloud& cloud) {
    auto out = detail::open_out(path);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        auto p = cloud[i];
        for (std::size_t k = 0; k < p.size(); ++k)
            out << (k ? "," : "") << detail::format17(p[k]);
        out << "\n";
    }
}

/// Series CSV: a single column of values.
inline TimeSeries read_time_series_csv(const std::string& path) {
    auto in = detail::open_in(path);
    TimeSeries s;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        s.values.push_back(detail::parse_double(line, path, lineno));
    }
    if (s.values.size() < 2) throw IoError(path, lineno, "series needs at least 2 values");
    return s;
}

inline void write_time_series_csv(const std::string& path, const TimeSeries& s) {
    auto out = detail::open_out(path);
    for (double v : s.values) out << detail::format17(v) << "\n";
}

/// Labelled series dataset: CSV rows "label,v1,v2,..." (label column first).
struct LabelledSeries {
    std::vector<int> labels;
    std::vector<TimeSeries> series;
};

inline LabelledSeries read_labelled_series_csv(const std::string& path) {
    auto in = detail::open_in(path);
    LabelledSeries out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() < 3) throw IoError(path, lineno, "row needs label plus >= 2 values");
        const double lbl = detail::parse_double(fields[0], path, lineno);
        if (lbl != std::floor(lbl)) throw IoError(path, lineno, "label must be an integer");
        TimeSeries s;
        for (std::size_t i = 1; i < fields.size(); ++i)
            s.values.push_back(detail::parse_double(fields[i], path, lineno));
        out.labels.push_back(static_cast<int>(lbl));
        out.series.push_back(std::move(s));
    }
    if (out.series.empty()) throw IoError(path, lineno, "no rows in file");
    return out;
}

// ----------------------------------------------------------------- diagrams

/// Diagram CSV: header "dim,birth,death"; death may be "inf". This is the
/// interchange format for everything downstream.
inline void write_diagrams_csv(const std::string& path,
                               std::span<const PersistenceDiagram> diagrams) {
    auto out = detail::open_out(path);
    out << "dim,birth,death\n";
    for (const auto& d : diagrams) {
        for (const auto& p : d.pairs) {
            out << d.dim << "," << detail::format17(p.birth) << ",";
            if (p.essential())
                out << "inf";
            else
                out << detail::format17(p.death);
            out << "\n";
        }
    }
}

inline std::vector<PersistenceDiagram> read_diagrams_csv(const std::string& path) {
    auto in = detail::open_in(path);
    std::string line;
    std::size_t lineno = 0;
    std::vector<PersistenceDiagram> out;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        if (lineno == 1 && line.rfind("dim", 0) == 0) continue; // header
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != 3) throw IoError(path, lineno, "expected dim,birth,death");
        const double dimv = detail::parse_double(fields[0], path, lineno);
        const int dim = static_cast<int>(dimv);
        if (dim < 0) throw IoError(path, lineno, "negative dimension");
        if (static_cast<std::size_t>(dim) >= out.size()) {
            const std::size_t old = out.size();
            out.resize(dim + 1);
            for (std::size_t s = old; s < out.size(); ++s) out[s].dim = static_cast<int>(s);
        }
        out[dim].pairs.push_back({detail::parse_double(fields[1], path, lineno),
                                  detail::parse_double(fields[2], path, lineno)});
    }
    return out;
}

// ------------------------------------------------------------- density grids

/// Grid CSV (row-major values) plus a JSON sidecar carrying bounds,
/// resolution, bandwidth, weighting, and the normalized flag.
inline void write_grid(const std::string& csv_path, const std::string& sidecar_path,
                       const DensityGrid& grid, double bandwidth, Weighting weighting) {
    auto out = detail::open_out(csv_path);
    for (int iy = 0; iy < grid.spec.ny; ++iy) {
        for (int ix = 0; ix < grid.spec.nx; ++ix)
            out << (ix ? "," : "") << detail::format17(grid.at(ix, iy));
        out << "\n";
    }
    nlohmann::json side;
    side["x_min"] = grid.spec.x_min;
    side["x_max"] = grid.spec.x_max;
    side["y_min"] = grid.spec.y_min;
    side["y_max"] = grid.spec.y_max;
    side["nx"] = grid.spec.nx;
    side["ny"] = grid.spec.ny;
    side["bandwidth"] = bandwidth;
    side["weighting"] = to_string(weighting);
    side["normalized"] = grid.normalized;
    side["version"] = kVersion;
    auto sout = detail::open_out(sidecar_path);
    sout << side.dump(2) << "\n";
}

inline DensityGrid read_grid(const std::string& csv_path, const std::string& sidecar_path) {
    nlohmann::json side;
    {
        auto sin = detail::open_in(sidecar_path);
        sin >> side;
    }
    GridSpec spec;
    spec.x_min = side.at("x_min").get<double>();
    spec.x_max = side.at("x_max").get<double>();
    spec.y_min = side.at("y_min").get<double>();
    spec.y_max = side.at("y_max").get<double>();
    spec.nx = side.at("nx").get<int>();
    spec.ny = side.at("ny").get<int>();
    DensityGrid grid = make_grid(spec);
    grid.normalized = side.at("normalized").get<bool>();

    auto in = detail::open_in(csv_path);
    std::string line;
    std::size_t lineno = 0;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        if (row >= static_cast<std::size_t>(spec.ny))
            throw IoError(csv_path, lineno, "more rows than the sidecar resolution");
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != static_cast<std::size_t>(spec.nx))
            throw IoError(csv_path, lineno, "row width does not match the sidecar resolution");
        for (int ix = 0; ix < spec.nx; ++ix)
            grid.at(ix, static_cast<int>(row)) = detail::parse_double(fields[ix], csv_path, lineno);
        ++row;
    }
    if (row != static_cast<std::size_t>(spec.ny))
        throw IoError(csv_path, lineno, "fewer rows than the sidecar resolution");
    return grid;
}

/// 8-bit binary PGM heatmap, max value mapped to 255.
inline void write_grid_pgm(const std::string& path, const DensityGrid& grid) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    double mx = 0.0;
    for (double v : grid.values) mx = std::max(mx, v);
    out << "P5\n" << grid.spec.nx << " " << grid.spec.ny << "\n255\n";
    for (int iy = grid.spec.ny - 1; iy >= 0; --iy) { // top row = largest y
        for (int ix = 0; ix < grid.spec.nx; ++ix) {
            const double v = grid.at(ix, iy);
            const int byte = mx > 0.0 ? static_cast<int>(std::lround(255.0 * v / mx)) : 0;
            out.put(static_cast<char>(byte));
        }
    }
}

/// Two-column density curve CSV: z, density.
inline void write_density_csv(const std::string& path, const ScalarDensity& d) {
    auto out = detail::open_out(path);
    out << "z,density\n";
    for (std::size_t i = 0; i < d.nz(); ++i)
        out << detail::format17(d.z_at(i)) << "," << detail::format17(d.density[i]) << "\n";
}

// --------------------------------------------------------------- filtration

/// Debug dump: value, dim, semicolon-separated vertex list.
inline void write_filtration_csv(const std::string& path, const Filtration& filt) {
    auto out = detail::open_out(path);
    out << "value,dim,vertices\n";
    for (std::size_t i = 0; i < filt.size(); ++i) {
        out << detail::format17(filt.value(i)) << "," << filt.dim(i) << ",";
        auto v = filt.vertices(i);
        for (std::size_t k = 0; k < v.size(); ++k) out << (k ? ";" : "") << v[k];
        out << "\n";
    }
}

// ------------------------------------------------------------------- models

namespace detail {

inline nlohmann::json mlp_to_json(const Mlp& m) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : m.layers) {
        nlohmann::json jl;
        jl["in"] = l.in;
        jl["out"] = l.out;
        jl["w"] = l.w;
        jl["b"] = l.b;
        layers.push_back(std::move(jl));
    }
    return layers;
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
    Mlp m;
    for (const auto& jl : j) {
        MlpLayer l;
        l.in = jl.at("in").get<std::size_t>();
        l.out = jl.at("out").get<std::size_t>();
        l.w = jl.at("w").get<std::vector<double>>();
        l.b = jl.at("b").get<std::vector<double>>();
        if (l.w.size() != l.in * l.out || l.b.size() != l.out)
            throw IoError("model: layer shape mismatch");
        m.layers.push_back(std::move(l));
    }
    return m;
}

} // namespace detail

/// The whole model as one JSON document: variant, grid spec, reducer config,
/// and flattened weights.
inline void save_model(const std::string& path, const CrnModel& model) {
    nlohmann::json j;
    j["format"] = "crosspers-model";
    j["version"] = kVersion;
    j["variant"] = to_string(model.variant);
    j["input_dim"] = model.input_dim;
    j["grid"] = {{"x_min", model.grid.x_min}, {"x_max", model.grid.x_max},
                 {"y_min", model.grid.y_min}, {"y_max", model.grid.y_max},
                 {"nx", model.grid.nx},       {"ny", model.grid.ny}};
    j["reducer"] = {{"method", to_string(model.reducer)}, {"k", model.reducer_k}};
    if (model.reducer == DistanceReducer::pca && model.pca.width > 0) {
        j["reducer"]["pca"] = {{"width", model.pca.width},
                               {"k", model.pca.k},
                               {"mean", model.pca.mean},
                               {"components", model.pca.components}};
    }
    j["right_encoder_enabled"] = model.right_encoder_enabled;
    j["options"] = {{"phi1_hidden", model.options.phi1_hidden},
                    {"phi2_hidden", model.options.phi2_hidden},
                    {"head_hidden", model.options.head_hidden}};
    j["combined"] = {{"phi1", detail::mlp_to_json(model.combined.phi1)},
                     {"phi2", detail::mlp_to_json(model.combined.phi2)}};
    if (model.uses_left_right()) {
        j["left"] = {{"phi1", detail::mlp_to_json(model.left.phi1)},
                     {"phi2", detail::mlp_to_json(model.left.phi2)}};
        j["right"] = {{"phi1", detail::mlp_to_json(model.right.phi1)},
                      {"phi2", detail::mlp_to_json(model.right.phi2)}};
    }
    if (model.uses_distance()) {
        j["dist"] = {{"phi1", detail::mlp_to_json(model.dist.phi1)},
                     {"phi2", detail::mlp_to_json(model.dist.phi2)}};
    }
    j["head"] = detail::mlp_to_json(model.head);
    auto out = detail::open_out(path);
    out << j.dump(2) << "\n";
}

inline CrnModel load_model(const std::string& path) {
    nlohmann::json j;
    {
        auto in = detail::open_in(path);
        in >> j;
    }
    if (j.value("format", "") != "crosspers-model")
        throw IoError("not a crosspers model file: " + path);
    CrnModel m;
    m.variant = variant_from_string(j.at("variant").get<std::string>());
    m.input_dim = j.at("input_dim").get<std::size_t>();
    const auto& g = j.at("grid");
    m.grid = GridSpec{g.at("x_min").get<double>(), g.at("x_max").get<double>(),
                      g.at("y_min").get<double>(), g.at("y_max").get<double>(),
                      g.at("nx").get<int>(),       g.at("ny").get<int>()};
    m.reducer = reducer_from_string(j.at("reducer").at("method").get<std::string>());
    m.reducer_k = j.at("reducer").at("k").get<int>();
    if (j.at("reducer").contains("pca")) {
        const auto& p = j.at("reducer").at("pca");
        m.pca.width = p.at("width").get<std::size_t>();
        m.pca.k = p.at("k").get<int>();
        m.pca.mean = p.at("mean").get<std::vector<double>>();
        m.pca.components = p.at("components").get<std::vector<double>>();
    }
    m.right_encoder_enabled = j.at("right_encoder_enabled").get<bool>();
    m.options.phi1_hidden = j.at("options").at("phi1_hidden").get<std::vector<std::size_t>>();
    m.options.phi2_hidden = j.at("options").at("phi2_hidden").get<std::vector<std::size_t>>();
    m.options.head_hidden = j.at("options").at("head_hidden").get<std::vector<std::size_t>>();
    m.options.reducer = m.reducer;
    m.options.reducer_k = m.reducer_k;
    m.options.right_encoder_enabled = m.right_encoder_enabled;
    m.combined.phi1 = detail::mlp_from_json(j.at("combined").at("phi1"));
    m.combined.phi2 = detail::mlp_from_json(j.at("combined").at("phi2"));
    if (m.uses_left_right()) {
        m.left.phi1 = detail::mlp_from_json(j.at("left").at("phi1"));
        m.left.phi2 = detail::mlp_from_json(j.at("left").at("phi2"));
        m.right.phi1 = detail::mlp_from_json(j.at("right").at("phi1"));
        m.right.phi2 = detail::mlp_from_json(j.at("right").at("phi2"));
    }
    if (m.uses_distance()) {
        m.dist.phi1 = detail::mlp_from_json(j.at("dist").at("phi1"));
        m.dist.phi2 = detail::mlp_from_json(j.at("dist").at("phi2"));
    }
    m.head = detail::mlp_from_json(j.at("head"));
    return m;
}

} // namespace crosspers
