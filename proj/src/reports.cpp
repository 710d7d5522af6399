#include "countlab/reports.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "countlab/common.hpp"
#include "countlab/image.hpp"

namespace countlab {

json report_envelope(const std::string& kind, const json& config) {
    json j;
    j["report"] = kind;
    j["config"] = config;
    return j;
}

void write_curve_csv(const std::string& path, const std::vector<CurveRow>& rows) {
    std::filesystem::path fp(path);
    if (fp.has_parent_path()) ensure_dir(fp.parent_path().string());
    std::ofstream out(path);
    check_data(out.good(), "cannot write csv: " + path);
    out << "layer,group,value\n";
    char buf[64];
    for (const CurveRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.17g", r.value);
        out << r.layer << "," << r.group << "," << buf << "\n";
    }
    check_data(out.good(), "short write: " + path);
}

json matrix_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    check_data(j.is_array() && !j.empty() && j[0].is_array(),
               "expected an array of arrays");
    Eigen::MatrixXd m(j.size(), j[0].size());
    for (std::size_t r = 0; r < j.size(); ++r) {
        check_data(j[r].size() == j[0].size(), "ragged matrix rows");
        for (std::size_t c = 0; c < j[r].size(); ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                j[r][c].get<double>();
    }
    return m;
}

json metrics_json(const MetricsReport& r) {
    json j;
    j["acc"] = r.acc;
    j["mae"] = r.mae;
    j["rmse"] = r.rmse;
    j["obo"] = r.obo;
    j["n"] = r.n;
    j["parse_failure_rate"] = r.parse_failure_rate;
    json pc = json::array();
    for (const PerCountMetrics& c : r.per_count) {
        pc.push_back({{"count", c.count},
                      {"n", c.n},
                      {"acc", c.acc},
                      {"mae", c.mae},
                      {"rmse", c.rmse},
                      {"obo", c.obo}});
    }
    j["per_count"] = pc;
    return j;
}

void write_heatmap_pgm(const std::string& path, const Eigen::MatrixXd& m,
                       int cell_px) {
    check_config(cell_px >= 1, "cell size must be positive");
    check_data(m.size() > 0, "empty heatmap matrix");
    double lo = m.minCoeff(), hi = m.maxCoeff();
    double span = hi > lo ? hi - lo : 1.0;

    Image img(static_cast<int>(m.cols()) * cell_px,
              static_cast<int>(m.rows()) * cell_px, 1, 0);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            auto v = static_cast<std::uint8_t>(
                std::clamp(255.0 * (m(r, c) - lo) / span, 0.0, 255.0));
            for (int y = 0; y < cell_px; ++y)
                for (int x = 0; x < cell_px; ++x)
                    img.at(static_cast<int>(c) * cell_px + x,
                           static_cast<int>(r) * cell_px + y, 0) = v;
        }
    }
    write_netpbm(img, path);

    json side;
    side["rows"] = m.rows();
    side["cols"] = m.cols();
    side["cell_px"] = cell_px;
    side["min"] = lo;
    side["max"] = hi;
    side["colormap"] = "gray";  // black at min, white at max
    write_json_file(path + ".json", side);
}

void write_head_set(const std::string& path, const std::string& task,
                    const std::vector<std::pair<int, int>>& heads) {
    json j;
    j["task"] = task;
    json hs = json::array();
    for (const auto& [l, h] : heads) hs.push_back({l, h});
    j["heads"] = hs;
    write_json_file(path, j);
}

std::pair<std::string, std::vector<std::pair<int, int>>> read_head_set(
    const std::string& path) {
    json j = read_json_file(path);
    check_data(j.contains("heads") && j["heads"].is_array(),
               "head set file lacks a heads array: " + path);
    std::vector<std::pair<int, int>> heads;
    for (const auto& e : j["heads"]) {
        check_data(e.is_array() && e.size() == 2, "head entries are [layer, head]");
        heads.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
    return {j.value("task", ""), heads};
}

void write_head_values(const std::string& path,
                       const std::map<std::pair<int, int>, double>& values) {
    json vs = json::array();
    for (const auto& [key, v] : values)
        vs.push_back({{"layer", key.first}, {"head", key.second}, {"value", v}});
    json j;
    j["values"] = vs;
    write_json_file(path, j);
}

std::map<std::pair<int, int>, double> read_head_values(const std::string& path) {
    json j = read_json_file(path);
    check_data(j.contains("values") && j["values"].is_array(),
               "head value file lacks a values array: " + path);
    std::map<std::pair<int, int>, double> out;
    for (const auto& e : j["values"]) {
        out[{e.at("layer").get<int>(), e.at("head").get<int>()}] =
            e.at("value").get<double>();
    }
    return out;
}

}  // namespace countlab
