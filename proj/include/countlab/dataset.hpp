#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "countlab/scene.hpp"
#include "countlab/vocab.hpp"

namespace countlab {

// One question/answer over one scene. Only the answer tokens bear loss.
struct QARecord {
    std::string id;
    Task task = Task::Count;
    int probe_k = -1;  // the K asked about in a verify question
    int scene_index = -1;
    std::vector<std::string> prompt_words;
    std::vector<std::string> answer_words;
};

struct DatasetMeta {
    std::string kind = "syndot";  // generation kind, "mixed" for mixtures
    CanvasSpec spec;
    int radius_px = 2;
    int spread = 1;
    bool distinct_colors = false;
    std::uint64_t master_seed = 0;
    std::string rng_algorithm;  // filled on write
};

struct Dataset {
    DatasetMeta meta;
    std::vector<RenderedScene> scenes;
    std::vector<QARecord> records;  // records[i].scene_index indexes scenes
};

struct GenConfig {
    SceneKind kind = SceneKind::SynDot;
    CanvasSpec spec;
    int radius_px = 2;
    int spread = 1;
    int count_lo = 1;
    int count_hi = 5;
    int per_count = 10;
    std::uint64_t seed = 0;
    bool distinct_colors = false;
    // record share per task; count-only unless overridden
    double mix_count = 1, mix_verify = 0, mix_color = 0, mix_shape = 0;
};

// per_count scenes for each count in [count_lo, count_hi], with tasks assigned
// by the mixture. Color/shape records draw dedicated one-object scenes.
Dataset build_count_dataset(const GenConfig& cfg);

// n one-object scenes covering the palette x shape grid as evenly as
// possible, half color questions and half shape questions.
Dataset build_colorshape_dataset(const CanvasSpec& spec, int n, std::uint64_t seed);

// Patching corpus: n pairs with clean/corrupted counts drawn (distinct) from
// [count_lo, count_hi].
std::vector<CounterfactualPair> build_pairs(const CanvasSpec& spec, SceneKind kind,
                                            int n, int count_lo, int count_hi,
                                            int radius_px, std::uint64_t seed,
                                            int spread = 1);

// Directory layout: manifest.jsonl (one record per line), dataset.json (meta),
// images/<id>.pgm|ppm. Manifest line count equals record count.
void write_dataset(const Dataset& ds, const std::string& dir);
Dataset read_dataset(const std::string& dir, bool verify_checksums = true);

// Regenerates every image from the manifest's seeds and compares SHA-256
// digests; returns the ids that mismatch (empty means reproducible).
std::vector<std::string> verify_regeneration(const std::string& dir);

void write_pairs(const std::vector<CounterfactualPair>& pairs, const CanvasSpec& spec,
                 SceneKind kind, int radius_px, int spread, const std::string& dir);
std::vector<CounterfactualPair> read_pairs(const std::string& dir);

}  // namespace countlab
