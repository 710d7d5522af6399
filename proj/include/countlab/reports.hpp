#pragma once

#include <Eigen/Core>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "countlab/io_util.hpp"
#include "countlab/metrics.hpp"

namespace countlab {

// Every report carries its kind and the resolved configuration that
// produced it, so a run is reconstructible from its outputs alone.
json report_envelope(const std::string& kind, const json& config);

struct CurveRow {
    int layer = 0;
    std::string group;
    double value = 0;
};
void write_curve_csv(const std::string& path, const std::vector<CurveRow>& rows);

json matrix_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const json& j);

json metrics_json(const MetricsReport& r);

// Grayscale rendering of a matrix, cell_px pixels per cell, black = minimum.
// The sidecar <path>.json records rows/cols/min/max so values round-trip up
// to the 8-bit quantization.
void write_heatmap_pgm(const std::string& path, const Eigen::MatrixXd& m,
                       int cell_px = 16);

// Ranked (layer, head) sets: {"task": ..., "heads": [[layer, head], ...]}.
void write_head_set(const std::string& path, const std::string& task,
                    const std::vector<std::pair<int, int>>& heads);
std::pair<std::string, std::vector<std::pair<int, int>>> read_head_set(
    const std::string& path);

// Per-head scalar maps, e.g. patching importances for temperature tuning:
// {"values": [{"layer": l, "head": h, "value": v}, ...]}.
void write_head_values(const std::string& path,
                       const std::map<std::pair<int, int>, double>& values);
std::map<std::pair<int, int>, double> read_head_values(const std::string& path);

}  // namespace countlab
