#pragma once

#include <CLI11.hpp>
#include <cstdlib>
#include <string>
#include <utility>
#include <vector>

#include "countlab/common.hpp"
#include "countlab/dataset.hpp"
#include "countlab/heads.hpp"
#include "countlab/io_util.hpp"
#include "countlab/model.hpp"
#include "countlab/sequence.hpp"
#include "countlab/vocab.hpp"

namespace countlab {

void register_gen(CLI::App& app);
void register_train(CLI::App& app);
void register_eval(CLI::App& app);
void register_interp(CLI::App& app);
void register_intervene(CLI::App& app);
void register_report(CLI::App& app);

struct CommonOpts {
    std::string out;
    std::string config;
    int threads = 1;
};

inline void add_common(CLI::App* cmd, CommonOpts& c) {
    cmd->add_option("--out", c.out,
                    "output directory (default $COUNTLAB_OUT, then ./out)");
    cmd->add_option("--config", c.config,
                    "JSON run-config; command-line flags win over its values");
    cmd->add_option("--threads", c.threads, "worker threads for per-scene work");
}

inline std::string resolve_out(const CommonOpts& c) {
    if (!c.out.empty()) return c.out;
    const char* env = std::getenv("COUNTLAB_OUT");
    if (env != nullptr && *env != '\0') return env;
    return "out";
}

// Run-config values fill in flags the command line left unset; keys are the
// long flag names without the leading dashes.
class Overlay {
  public:
    Overlay(const CLI::App* cmd, const std::string& path) : cmd_(cmd) {
        if (!path.empty()) {
            j_ = read_json_file(path);
            check_config(j_.is_object(), "run-config must be a JSON object: " + path);
        }
    }

    template <typename T>
    void get(const std::string& flag, T& value) const {
        std::string key = flag.substr(2);
        if (j_.contains(key) && cmd_->count(flag) == 0) value = j_.at(key).get<T>();
    }

  private:
    const CLI::App* cmd_;
    json j_ = json::object();
};

// "lo-hi" or a single integer.
inline std::pair<int, int> parse_range(const std::string& s) {
    auto dash = s.find('-');
    std::pair<int, int> out;
    try {
        if (dash == std::string::npos) {
            out.first = out.second = std::stoi(s);
        } else {
            out.first = std::stoi(s.substr(0, dash));
            out.second = std::stoi(s.substr(dash + 1));
        }
    } catch (const std::exception&) {
        throw ConfigError("bad range: " + s);
    }
    return out;
}

inline std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::string cur;
    for (char c : s + ",") {
        if (c == ',') {
            if (!cur.empty()) {
                try {
                    out.push_back(std::stoi(cur));
                } catch (const std::exception&) {
                    throw ConfigError("bad integer list: " + s);
                }
            }
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    return out;
}

inline std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::string cur;
    for (char c : s + ",") {
        if (c == ',') {
            if (!cur.empty()) {
                try {
                    out.push_back(std::stod(cur));
                } catch (const std::exception&) {
                    throw ConfigError("bad number list: " + s);
                }
            }
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    return out;
}

// Kebab-case aliases for the token-group names.
inline std::string canonical_group(const std::string& name) {
    std::string s = name;
    for (char& c : s)
        if (c == '-') c = '_';
    if (s == "system_prompt") return "system";
    if (s == "image_tokens") return "image";
    if (s == "last_image_token") return "last_image";
    if (s == "user_instruction") return "instruction";
    if (s == "last_prompt_token") return "last_prompt";
    if (s == "generated_tokens") return "generated";
    return s;
}

// Checkpoint plus the vocabulary it was trained with (max_count from the
// sidecar; the token list itself is deterministic).
inline std::pair<Params, Vocab> load_model(const std::string& path) {
    std::string side;
    Params params = load_checkpoint(path, &side);
    int max_count = 9;
    if (!side.empty()) {
        json j = json::parse(side, nullptr, false);
        if (j.is_object()) max_count = j.value("max_count", 9);
    }
    Vocab vocab = Vocab::standard(max_count);
    check_contract(vocab.size() == params.cfg.vocab_size,
                   "checkpoint vocabulary size does not match: " + path);
    return {std::move(params), std::move(vocab)};
}

inline const RenderedScene& record_scene(const Dataset& ds, const QARecord& rec) {
    check_data(rec.scene_index >= 0 &&
                   rec.scene_index < static_cast<int>(ds.scenes.size()),
               "record points outside the scene table: " + rec.id);
    return ds.scenes[static_cast<std::size_t>(rec.scene_index)];
}

inline int answer_token(const QARecord& rec, const Vocab& vocab) {
    check_data(!rec.answer_words.empty(), "record has no answer: " + rec.id);
    return vocab.id(rec.answer_words.front());
}

struct EvalCorpus {
    std::vector<TokenSequence> prompts;
    std::vector<int> gts;  // ground-truth counts
};

inline EvalCorpus eval_corpus(const Dataset& ds, const Vocab& vocab,
                              Task task = Task::Count, int limit = 0) {
    EvalCorpus out;
    for (const QARecord& rec : ds.records) {
        if (rec.task != task) continue;
        if (limit > 0 && static_cast<int>(out.prompts.size()) >= limit) break;
        out.prompts.push_back(build_sequence(record_scene(ds, rec), rec, vocab, false));
        out.gts.push_back(record_scene(ds, rec).count());
    }
    check_data(!out.prompts.empty(),
               "dataset has no " + to_string(task) + " records");
    return out;
}

inline std::vector<ScoredScene> scored_corpus(const Dataset& ds, const Vocab& vocab,
                                              Task task = Task::Count,
                                              int limit = 0) {
    std::vector<ScoredScene> out;
    for (const QARecord& rec : ds.records) {
        if (rec.task != task) continue;
        if (limit > 0 && static_cast<int>(out.size()) >= limit) break;
        const RenderedScene& sc = record_scene(ds, rec);
        ScoredScene s;
        s.seq = build_sequence(sc, rec, vocab, false);
        s.gt_token = answer_token(rec, vocab);
        s.object_patches = scene_object_patches(sc);
        out.push_back(std::move(s));
    }
    check_data(!out.empty(), "dataset has no " + to_string(task) + " records");
    return out;
}

inline std::vector<VapPair> vap_corpus(const std::vector<CounterfactualPair>& pairs,
                                       const Vocab& vocab) {
    check_data(!pairs.empty(), "empty pair corpus");
    QARecord rec;
    rec.task = Task::Count;
    rec.prompt_words = prompt_words(Task::Count);
    std::vector<VapPair> out;
    for (const CounterfactualPair& p : pairs) {
        VapPair vp;
        vp.clean = build_sequence(p.clean, rec, vocab, false);
        vp.corr = build_sequence(p.corrupted, rec, vocab, false);
        vp.clean_answer = vocab.digit(p.clean.count());
        vp.corr_answer = vocab.digit(p.corrupted.count());
        out.push_back(std::move(vp));
    }
    return out;
}

}  // namespace countlab
