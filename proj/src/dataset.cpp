#include "countlab/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "countlab/common.hpp"
#include "countlab/io_util.hpp"

namespace fs = std::filesystem;

namespace countlab {

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    check_data(!ec, "cannot create directory: " + dir);
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    check_data(in.good(), "cannot open: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("bad json in " + path + ": " + e.what());
    }
    return j;
}

void write_json_file(const std::string& path, const json& j, int indent) {
    fs::path p(path);
    if (p.has_parent_path()) ensure_dir(p.parent_path().string());
    std::ofstream out(path);
    check_data(out.good(), "cannot open for writing: " + path);
    out << j.dump(indent) << "\n";
}

std::string join_words(const std::vector<std::string>& words) {
    std::string s;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) s += ' ';
        s += words[i];
    }
    return s;
}

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

namespace {

std::string record_id(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "r%06zu", i);
    return buf;
}

json object_to_json(const ObjectAttr& a) {
    return json{{"shape", to_string(a.shape)}, {"sides", polygon_sides(a.shape)},
                {"color", a.color_name},       {"cx", a.cx},
                {"cy", a.cy},                  {"radius", a.radius},
                {"rotation", a.rotation}};
}

ObjectAttr object_from_json(const json& j) {
    ObjectAttr a;
    a.shape = shape_from_string(j.at("shape").get<std::string>());
    a.color_name = j.at("color").get<std::string>();
    a.rgb = {0, 0, 0};
    for (const auto& c : palette())
        if (c.name == a.color_name) a.rgb = c.rgb;
    a.cx = j.at("cx").get<double>();
    a.cy = j.at("cy").get<double>();
    a.radius = j.at("radius").get<double>();
    a.rotation = j.at("rotation").get<double>();
    return a;
}

int wrong_count(Rng& rng, int truth, int lo, int hi) {
    int k = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo)));
    if (k >= truth) ++k;  // skip the true value
    return k;
}

QARecord make_record(std::size_t idx, Task task, const RenderedScene& scene,
                     int probe_k) {
    QARecord r;
    r.id = record_id(idx);
    r.task = task;
    r.probe_k = task == Task::Verify ? probe_k : -1;
    r.prompt_words = prompt_words(task, r.probe_k);
    if (task == Task::Verify)
        r.answer_words = {probe_k == scene.count() ? "yes" : "no"};
    else
        r.answer_words = answer_words(task, scene);
    return r;
}

}  // namespace

Dataset build_count_dataset(const GenConfig& cfg) {
    check_config(cfg.count_lo >= 0 && cfg.count_hi >= cfg.count_lo,
                 "bad count range");
    check_config(cfg.per_count > 0, "per_count must be positive");
    check_config(cfg.kind != SceneKind::ColorShape,
                 "use build_colorshape_dataset for colorshape");
    double mix_sum = cfg.mix_count + cfg.mix_verify + cfg.mix_color + cfg.mix_shape;
    check_config(mix_sum > 0 && cfg.mix_count >= 0 && cfg.mix_verify >= 0 &&
                     cfg.mix_color >= 0 && cfg.mix_shape >= 0,
                 "bad task mixture");

    int n_counts = cfg.count_hi - cfg.count_lo + 1;
    std::size_t n = static_cast<std::size_t>(cfg.per_count) * n_counts;

    // Integer task quotas, remainders to the largest shares first.
    std::vector<std::pair<Task, double>> shares = {
        {Task::Count, cfg.mix_count / mix_sum},
        {Task::Verify, cfg.mix_verify / mix_sum},
        {Task::Color, cfg.mix_color / mix_sum},
        {Task::Shape, cfg.mix_shape / mix_sum}};
    std::vector<Task> tasks;
    for (auto& [task, share] : shares) {
        std::size_t q = static_cast<std::size_t>(share * n);
        for (std::size_t i = 0; i < q; ++i) tasks.push_back(task);
    }
    while (tasks.size() < n) tasks.push_back(Task::Count);

    Rng aux(derive_seed(cfg.seed, 0xA5A5A5A5ULL));
    aux.shuffle(tasks);

    Dataset ds;
    ds.meta.kind = to_string(cfg.kind);
    ds.meta.spec = cfg.spec;
    ds.meta.radius_px = cfg.radius_px;
    ds.meta.spread = cfg.spread;
    ds.meta.distinct_colors = cfg.distinct_colors;
    ds.meta.master_seed = cfg.seed;

    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t seed_i = derive_seed(cfg.seed, i);
        Task task = tasks[i];
        RenderedScene scene;
        if (task == Task::Color || task == Task::Shape) {
            scene = gen_colorshape(cfg.spec, seed_i);
        } else {
            int count = cfg.count_lo + static_cast<int>(i) / cfg.per_count;
            scene = cfg.kind == SceneKind::SynDot
                        ? gen_syndot(cfg.spec, count, cfg.radius_px, seed_i, cfg.spread)
                        : gen_synpoly(cfg.spec, count, cfg.radius_px, seed_i,
                                      cfg.spread, cfg.distinct_colors);
        }
        int probe_k = -1;
        if (task == Task::Verify) {
            bool truthful = aux.below(2) == 0;
            probe_k = truthful ? scene.count()
                               : wrong_count(aux, scene.count(), cfg.count_lo,
                                             cfg.count_hi);
        }
        QARecord rec = make_record(i, task, scene, probe_k);
        rec.scene_index = static_cast<int>(i);
        ds.scenes.push_back(std::move(scene));
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

Dataset build_colorshape_dataset(const CanvasSpec& spec, int n, std::uint64_t seed) {
    check_config(n > 0, "dataset size must be positive");
    std::size_t n_colors = palette().size();
    std::size_t n_shapes = colorshape_shapes().size();
    std::vector<std::pair<int, int>> combos;
    std::size_t reps = (static_cast<std::size_t>(n) + n_colors * n_shapes - 1) /
                       (n_colors * n_shapes);
    for (std::size_t r = 0; r < reps; ++r)
        for (std::size_t c = 0; c < n_colors; ++c)
            for (std::size_t s = 0; s < n_shapes; ++s)
                combos.emplace_back(static_cast<int>(c), static_cast<int>(s));
    Rng aux(derive_seed(seed, 0xC0105ULL));
    aux.shuffle(combos);
    combos.resize(static_cast<std::size_t>(n));

    std::vector<Task> tasks(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < tasks.size(); ++i)
        tasks[i] = i < tasks.size() / 2 ? Task::Color : Task::Shape;
    aux.shuffle(tasks);

    Dataset ds;
    ds.meta.kind = "colorshape";
    ds.meta.spec = spec;
    ds.meta.radius_px = 0;
    ds.meta.master_seed = seed;
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
        auto [c, s] = combos[i];
        RenderedScene scene = gen_colorshape(spec, derive_seed(seed, i), c, s);
        QARecord rec = make_record(i, tasks[i], scene, -1);
        rec.scene_index = static_cast<int>(i);
        ds.scenes.push_back(std::move(scene));
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

std::vector<CounterfactualPair> build_pairs(const CanvasSpec& spec, SceneKind kind,
                                            int n, int count_lo, int count_hi,
                                            int radius_px, std::uint64_t seed,
                                            int spread) {
    check_config(count_hi > count_lo, "pair counts need a range of at least two");
    std::vector<CounterfactualPair> pairs;
    Rng aux(derive_seed(seed, 0xBEEFULL));
    for (int i = 0; i < n; ++i) {
        int c_clean = aux.range(count_lo, count_hi);
        int c_corr = wrong_count(aux, c_clean, count_lo, count_hi);
        pairs.push_back(make_pair(spec, kind, c_clean, c_corr, radius_px,
                                  derive_seed(seed, static_cast<std::uint64_t>(i)),
                                  spread));
    }
    return pairs;
}

void write_dataset(const Dataset& ds, const std::string& dir) {
    check_contract(ds.records.size() == ds.scenes.size(),
                   "records and scenes must pair up");
    ensure_dir(dir);
    ensure_dir(dir + "/images");

    std::ofstream manifest(dir + "/manifest.jsonl");
    check_data(manifest.good(), "cannot write manifest in " + dir);
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const QARecord& rec = ds.records[i];
        const RenderedScene& scene = ds.scenes[static_cast<std::size_t>(rec.scene_index)];
        std::string file = "images/" + rec.id + "." + netpbm_extension(scene.image);
        auto bytes = encode_netpbm(scene.image);
        {
            std::ofstream img(dir + "/" + file, std::ios::binary);
            check_data(img.good(), "cannot write image: " + file);
            img.write(reinterpret_cast<const char*>(bytes.data()),
                      static_cast<std::streamsize>(bytes.size()));
        }
        json centers = json::array();
        json attrs = json::array();
        for (const auto& obj : scene.objects) {
            centers.push_back(json::array({obj.cx, obj.cy}));
            attrs.push_back(object_to_json(obj));
        }
        json line{{"id", rec.id},
                  {"kind", to_string(scene.kind)},
                  {"count", scene.count()},
                  {"centers", centers},
                  {"attributes", attrs},
                  {"task", to_string(rec.task)},
                  {"prompt", join_words(rec.prompt_words)},
                  {"answer", join_words(rec.answer_words)},
                  {"image_file", file},
                  {"sha256", sha256_hex(bytes)},
                  {"seed", scene.seed}};
        if (rec.task == Task::Verify) line["probe_k"] = rec.probe_k;
        manifest << line.dump() << "\n";
    }
    manifest.close();

    json meta{{"version", 1},
              {"kind", ds.meta.kind},
              {"canvas_px", ds.meta.spec.canvas_px},
              {"patch_px", ds.meta.spec.patch_px},
              {"radius_px", ds.meta.radius_px},
              {"spread", ds.meta.spread},
              {"distinct_colors", ds.meta.distinct_colors},
              {"master_seed", ds.meta.master_seed},
              {"rng", kRngAlgorithm},
              {"records", ds.records.size()}};
    write_json_file(dir + "/dataset.json", meta);
}

namespace {

DatasetMeta read_meta(const std::string& dir) {
    json meta = read_json_file(dir + "/dataset.json");
    DatasetMeta m;
    m.kind = meta.at("kind").get<std::string>();
    m.spec.canvas_px = meta.at("canvas_px").get<int>();
    m.spec.patch_px = meta.at("patch_px").get<int>();
    m.radius_px = meta.at("radius_px").get<int>();
    m.spread = meta.at("spread").get<int>();
    m.distinct_colors = meta.at("distinct_colors").get<bool>();
    m.master_seed = meta.at("master_seed").get<std::uint64_t>();
    m.rng_algorithm = meta.at("rng").get<std::string>();
    check_data(m.rng_algorithm == kRngAlgorithm,
               "dataset was generated with a different rng: " + m.rng_algorithm);
    return m;
}

std::vector<json> read_manifest_lines(const std::string& dir) {
    std::ifstream in(dir + "/manifest.jsonl");
    check_data(in.good(), "cannot open manifest in " + dir);
    std::vector<json> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            lines.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw DataError("bad manifest line in " + dir + ": " + e.what());
        }
    }
    return lines;
}

}  // namespace

Dataset read_dataset(const std::string& dir, bool verify_checksums) {
    Dataset ds;
    ds.meta = read_meta(dir);
    auto lines = read_manifest_lines(dir);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const json& j = lines[i];
        RenderedScene scene;
        scene.kind = scene_kind_from_string(j.at("kind").get<std::string>());
        scene.spec = ds.meta.spec;
        scene.seed = j.at("seed").get<std::uint64_t>();
        scene.radius_px = ds.meta.radius_px;
        scene.spread = ds.meta.spread;
        for (const auto& a : j.at("attributes")) scene.objects.push_back(object_from_json(a));
        check_data(scene.count() == j.at("count").get<int>(),
                   "count does not match attributes for " + j.at("id").get<std::string>());
        std::string file = dir + "/" + j.at("image_file").get<std::string>();
        if (verify_checksums) {
            std::string sha = sha256_file_hex(file);
            check_data(sha == j.at("sha256").get<std::string>(),
                       "checksum mismatch: " + file);
        }
        scene.image = read_netpbm(file);

        QARecord rec;
        rec.id = j.at("id").get<std::string>();
        rec.task = task_from_string(j.at("task").get<std::string>());
        rec.probe_k = j.value("probe_k", -1);
        rec.scene_index = static_cast<int>(i);
        rec.prompt_words = split_words(j.at("prompt").get<std::string>());
        rec.answer_words = split_words(j.at("answer").get<std::string>());
        ds.scenes.push_back(std::move(scene));
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

std::vector<std::string> verify_regeneration(const std::string& dir) {
    DatasetMeta meta = read_meta(dir);
    auto lines = read_manifest_lines(dir);
    std::vector<std::string> bad;
    for (const auto& j : lines) {
        SceneKind kind = scene_kind_from_string(j.at("kind").get<std::string>());
        std::string color, shape;
        if (kind == SceneKind::ColorShape) {
            const auto& a = j.at("attributes").at(0);
            color = a.at("color").get<std::string>();
            shape = a.at("shape").get<std::string>();
        }
        RenderedScene scene = regenerate_scene(
            kind, meta.spec, j.at("count").get<int>(), meta.radius_px, meta.spread,
            j.at("seed").get<std::uint64_t>(), meta.distinct_colors, color, shape);
        std::string sha = sha256_hex(encode_netpbm(scene.image));
        if (sha != j.at("sha256").get<std::string>())
            bad.push_back(j.at("id").get<std::string>());
    }
    return bad;
}

void write_pairs(const std::vector<CounterfactualPair>& pairs, const CanvasSpec& spec,
                 SceneKind kind, int radius_px, int spread, const std::string& dir) {
    ensure_dir(dir);
    std::ofstream out(dir + "/pairs.jsonl");
    check_data(out.good(), "cannot write pairs in " + dir);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        json line{{"id", record_id(i)},
                  {"seed", pairs[i].seed},
                  {"count_clean", pairs[i].clean.count()},
                  {"count_corrupted", pairs[i].corrupted.count()}};
        out << line.dump() << "\n";
    }
    json meta{{"version", 1},
              {"kind", to_string(kind)},
              {"canvas_px", spec.canvas_px},
              {"patch_px", spec.patch_px},
              {"radius_px", radius_px},
              {"spread", spread},
              {"rng", kRngAlgorithm},
              {"pairs", pairs.size()}};
    write_json_file(dir + "/pairs.json", meta);
}

std::vector<CounterfactualPair> read_pairs(const std::string& dir) {
    json meta = read_json_file(dir + "/pairs.json");
    check_data(meta.at("rng").get<std::string>() == kRngAlgorithm,
               "pairs were generated with a different rng");
    CanvasSpec spec;
    spec.canvas_px = meta.at("canvas_px").get<int>();
    spec.patch_px = meta.at("patch_px").get<int>();
    SceneKind kind = scene_kind_from_string(meta.at("kind").get<std::string>());
    int radius = meta.at("radius_px").get<int>();
    int spread = meta.at("spread").get<int>();

    std::ifstream in(dir + "/pairs.jsonl");
    check_data(in.good(), "cannot open pairs in " + dir);
    std::vector<CounterfactualPair> pairs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        pairs.push_back(make_pair(spec, kind, j.at("count_clean").get<int>(),
                                  j.at("count_corrupted").get<int>(), radius,
                                  j.at("seed").get<std::uint64_t>(), spread));
    }
    return pairs;
}

}  // namespace countlab
