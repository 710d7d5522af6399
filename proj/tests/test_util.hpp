#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "countlab/dataset.hpp"
#include "countlab/model.hpp"
#include "countlab/scene.hpp"
#include "countlab/sequence.hpp"
#include "countlab/vocab.hpp"

// Empty scratch directory under the system temp root, wiped on entry so
// reruns start clean.
inline std::string fresh_dir(const std::string& name) {
    namespace fs = std::filesystem;
    fs::path p = fs::temp_directory_path() / ("countlab_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

// Two layers, two heads, d_model 16 on a 2x2 patch grid: big enough to
// exercise every code path, small enough to forward in microseconds.
struct MicroLab {
    countlab::Vocab vocab = countlab::Vocab::standard(9);
    countlab::CanvasSpec spec{16, 8};
    countlab::ModelConfig cfg;
    countlab::Params params;
};

inline MicroLab micro_lab(std::uint64_t seed = 1) {
    MicroLab lab;
    lab.cfg = countlab::ModelConfig::toy(lab.vocab, lab.spec);
    lab.cfg.n_layers = 2;
    lab.cfg.n_heads = 2;
    lab.cfg.d_model = 16;
    lab.cfg.mlp_mult = 2;
    lab.params = countlab::init_params(lab.cfg, seed);
    return lab;
}

// Prompt-only counting sequence for one scene.
inline countlab::TokenSequence count_prompt(const countlab::RenderedScene& scene,
                                            const countlab::Vocab& vocab,
                                            bool include_answer = false) {
    countlab::QARecord rec;
    rec.task = countlab::Task::Count;
    rec.scene_index = 0;
    rec.prompt_words = countlab::prompt_words(countlab::Task::Count);
    rec.answer_words = {std::to_string(scene.count())};
    return countlab::build_sequence(scene, rec, vocab, include_answer);
}
