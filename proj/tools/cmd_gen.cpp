#include <cstdio>
#include <memory>

#include "countlab/reports.hpp"
#include "tool_common.hpp"

namespace countlab {

namespace {

struct GenOpts {
    CommonOpts common;
    std::string kind = "syndot";
    std::string counts = "1-5";
    int per_count = 10;
    int canvas = 64;
    int patch = 8;
    int radius = 2;
    int spread = 1;
    std::uint64_t seed = 0;
    bool distinct_colors = false;
    int n = 100;  // colorshape corpus size
    double mix_verify = 0, mix_color = 0, mix_shape = 0;
    int pairs = 0;
    std::string name;
    bool verify = false;
};

void run_gen(const CLI::App& cmd, GenOpts& o) {
    Overlay cfg(&cmd, o.common.config);
    cfg.get("--kind", o.kind);
    cfg.get("--counts", o.counts);
    cfg.get("--per-count", o.per_count);
    cfg.get("--canvas", o.canvas);
    cfg.get("--patch", o.patch);
    cfg.get("--radius", o.radius);
    cfg.get("--spread", o.spread);
    cfg.get("--seed", o.seed);
    cfg.get("--distinct-colors", o.distinct_colors);
    cfg.get("--n", o.n);
    cfg.get("--mix-verify", o.mix_verify);
    cfg.get("--mix-color", o.mix_color);
    cfg.get("--mix-shape", o.mix_shape);
    cfg.get("--pairs", o.pairs);
    cfg.get("--name", o.name);

    CanvasSpec spec;
    spec.canvas_px = o.canvas;
    spec.patch_px = o.patch;
    auto [lo, hi] = parse_range(o.counts);
    check_config(lo >= 0 && lo <= hi, "bad count range: " + o.counts);
    spec.validate(hi);

    std::string out_root = resolve_out(o.common);
    std::string name = o.name;
    if (name.empty()) name = o.pairs > 0 ? o.kind + "_pairs" : o.kind;
    std::string dir = out_root + "/" + name;

    json echo{{"kind", o.kind},
              {"counts", o.counts},
              {"per_count", o.per_count},
              {"canvas", o.canvas},
              {"patch", o.patch},
              {"radius", o.radius},
              {"spread", o.spread},
              {"seed", o.seed},
              {"distinct_colors", o.distinct_colors},
              {"pairs", o.pairs},
              {"dir", dir}};

    SceneKind kind = scene_kind_from_string(o.kind);
    if (o.pairs > 0) {
        auto pairs = build_pairs(spec, kind, o.pairs, lo, hi, o.radius, o.seed,
                                 o.spread);
        write_pairs(pairs, spec, kind, o.radius, o.spread, dir);
        json rep = report_envelope("gen", echo);
        rep["n_pairs"] = o.pairs;
        write_json_file(out_root + "/" + name + "_gen.json", rep);
        std::printf("%s\n", dir.c_str());
        return;
    }

    Dataset ds;
    if (kind == SceneKind::ColorShape) {
        ds = build_colorshape_dataset(spec, o.n, o.seed);
    } else {
        GenConfig g;
        g.kind = kind;
        g.spec = spec;
        g.radius_px = o.radius;
        g.spread = o.spread;
        g.count_lo = lo;
        g.count_hi = hi;
        g.per_count = o.per_count;
        g.seed = o.seed;
        g.distinct_colors = o.distinct_colors;
        double text = o.mix_verify + o.mix_color + o.mix_shape;
        check_config(text <= 1.0 + 1e-12, "task mixture exceeds 1");
        g.mix_count = 1.0 - text;
        g.mix_verify = o.mix_verify;
        g.mix_color = o.mix_color;
        g.mix_shape = o.mix_shape;
        ds = build_count_dataset(g);
    }
    write_dataset(ds, dir);

    json rep = report_envelope("gen", echo);
    rep["n_scenes"] = ds.scenes.size();
    rep["n_records"] = ds.records.size();
    if (o.verify) {
        auto bad = verify_regeneration(dir);
        rep["regeneration_mismatches"] = bad;
        check_data(bad.empty(), "regeneration mismatch in " + dir);
    }
    write_json_file(out_root + "/" + name + "_gen.json", rep);
    std::printf("%s\n", dir.c_str());
}

}  // namespace

void register_gen(CLI::App& app) {
    auto o = std::make_shared<GenOpts>();
    CLI::App* cmd = app.add_subcommand("gen", "generate synthetic scene datasets");
    cmd->add_option("--kind", o->kind, "syndot, synpoly or colorshape");
    cmd->add_option("--counts", o->counts, "object count range, e.g. 1-5");
    cmd->add_option("--per-count", o->per_count, "scenes per count value");
    cmd->add_option("--canvas", o->canvas, "canvas side in pixels");
    cmd->add_option("--patch", o->patch, "patch side in pixels");
    cmd->add_option("--radius", o->radius, "object radius in pixels");
    cmd->add_option("--spread", o->spread, "placement stride in patches");
    cmd->add_option("--seed", o->seed, "master seed");
    cmd->add_flag("--distinct-colors", o->distinct_colors,
                  "draw per-scene colors without replacement");
    cmd->add_option("--n", o->n, "corpus size for colorshape");
    cmd->add_option("--mix-verify", o->mix_verify, "verify-question share");
    cmd->add_option("--mix-color", o->mix_color, "color-question share");
    cmd->add_option("--mix-shape", o->mix_shape, "shape-question share");
    cmd->add_option("--pairs", o->pairs,
                    "emit a clean/corrupted pair corpus of this size instead");
    cmd->add_option("--name", o->name, "dataset directory name under --out");
    cmd->add_flag("--verify", o->verify, "re-render from the manifest and compare");
    add_common(cmd, o->common);
    cmd->callback([o, cmd]() { run_gen(*cmd, *o); });
}

}  // namespace countlab
