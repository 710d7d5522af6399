#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>

#include "countlab/reports.hpp"
#include "tool_common.hpp"

namespace countlab {

namespace {

struct ReportOpts {
    CommonOpts common;
    std::string in;
    std::string heatmap;  // top-level key holding a matrix
    std::string curve;    // top-level key holding a matrix, groups from "groups"
    bool grid = false;
    std::string name;
    int cell = 16;
};

void run_report(const CLI::App& cmd, ReportOpts& o) {
    Overlay cfg(&cmd, o.common.config);
    cfg.get("--in", o.in);
    cfg.get("--heatmap", o.heatmap);
    cfg.get("--curve", o.curve);
    cfg.get("--grid", o.grid);
    cfg.get("--name", o.name);
    cfg.get("--cell", o.cell);

    check_config(!o.in.empty(), "report needs --in");
    check_config(!o.heatmap.empty() || !o.curve.empty() || o.grid,
                 "report needs one of --heatmap, --curve, --grid");
    std::string out_root = resolve_out(o.common);
    json j = read_json_file(o.in);

    if (!o.heatmap.empty()) {
        check_data(j.contains(o.heatmap),
                   "no key '" + o.heatmap + "' in " + o.in);
        Eigen::MatrixXd m = matrix_from_json(j.at(o.heatmap));
        std::string name = o.name.empty() ? o.heatmap : o.name;
        std::string path = out_root + "/" + name + ".pgm";
        write_heatmap_pgm(path, m, o.cell);
        std::printf("%s\n", path.c_str());
    }
    if (!o.curve.empty()) {
        check_data(j.contains(o.curve), "no key '" + o.curve + "' in " + o.in);
        Eigen::MatrixXd m = matrix_from_json(j.at(o.curve));
        std::vector<std::string> groups;
        if (j.contains("groups"))
            groups = j.at("groups").get<std::vector<std::string>>();
        else if (j.contains("config") && j["config"].contains("groups"))
            groups = j["config"]["groups"].get<std::vector<std::string>>();
        check_data(groups.empty() ||
                       static_cast<Eigen::Index>(groups.size()) == m.rows(),
                   "group list does not match the matrix rows");
        std::vector<CurveRow> rows;
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            std::string group = groups.empty()
                                    ? "row" + std::to_string(r)
                                    : groups[static_cast<std::size_t>(r)];
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                rows.push_back({static_cast<int>(c + 1), group, m(r, c)});
        }
        std::string name = o.name.empty() ? o.curve : o.name;
        std::string path = out_root + "/" + name + ".csv";
        write_curve_csv(path, rows);
        std::printf("%s\n", path.c_str());
    }
    if (o.grid) {
        check_data(j.contains("rows") && j["rows"].is_array(),
                   "no rows array in " + o.in);
        std::string name = o.name.empty() ? "grid" : o.name;
        std::string path = out_root + "/" + name + ".csv";
        std::filesystem::path fp(path);
        if (fp.has_parent_path()) ensure_dir(fp.parent_path().string());
        std::ofstream outf(path);
        check_data(outf.good(), "cannot write csv: " + path);
        outf << "row,acc,mae,rmse,obo,n\n";
        for (const auto& row : j["rows"]) {
            const json& m = row.at("metrics");
            outf << row.at("row").get<std::string>() << ","
                 << m.at("acc").get<double>() << "," << m.at("mae").get<double>()
                 << "," << m.at("rmse").get<double>() << ","
                 << m.at("obo").get<double>() << "," << m.at("n").get<int>()
                 << "\n";
        }
        std::printf("%s\n", path.c_str());
    }
}

}  // namespace

void register_report(CLI::App& app) {
    auto o = std::make_shared<ReportOpts>();
    CLI::App* cmd = app.add_subcommand(
        "report", "render JSON reports into PGM heatmaps and CSV tables");
    cmd->add_option("--in", o->in, "report JSON file")->required();
    cmd->add_option("--heatmap", o->heatmap,
                    "render this matrix key as a grayscale heatmap");
    cmd->add_option("--curve", o->curve, "render this matrix key as a CSV curve");
    cmd->add_flag("--grid", o->grid, "render a metrics grid as a CSV table");
    cmd->add_option("--name", o->name, "output base name (default: the key)");
    cmd->add_option("--cell", o->cell, "heatmap cell size in pixels");
    add_common(cmd, o->common);
    cmd->callback([o, cmd]() { run_report(*cmd, *o); });
}

}  // namespace countlab
