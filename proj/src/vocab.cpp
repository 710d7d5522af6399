#include "countlab/vocab.hpp"

#include "countlab/common.hpp"

namespace countlab {

std::string to_string(Task t) {
    switch (t) {
        case Task::Count: return "count";
        case Task::Verify: return "verify";
        case Task::Color: return "color";
        case Task::Shape: return "shape";
    }
    return "?";
}

Task task_from_string(const std::string& s) {
    if (s == "count") return Task::Count;
    if (s == "verify") return Task::Verify;
    if (s == "color") return Task::Color;
    if (s == "shape") return Task::Shape;
    throw ConfigError("unknown task: " + s);
}

Vocab Vocab::standard(int max_count) {
    check_config(max_count >= 9, "max_count must be at least 9");
    Vocab v;
    v.max_count_ = max_count;
    auto add = [&](const std::string& t) {
        v.index_.emplace(t, static_cast<int>(v.tokens_.size()));
        v.tokens_.push_back(t);
        return static_cast<int>(v.tokens_.size()) - 1;
    };
    v.sys_ = add("<sys>");
    v.img_start_ = add("<img_start>");
    v.img_ = add("<img>");
    v.img_end_ = add("<img_end>");
    v.assistant_ = add("<assistant>");
    for (int d = 0; d <= max_count; ++d) add(std::to_string(d));
    v.yes_ = add("yes");
    v.no_ = add("no");
    for (const auto& c : palette()) add(c.name);
    for (Shape s : {Shape::Circle, Shape::Triangle, Shape::Square, Shape::Pentagon,
                    Shape::Hexagon, Shape::Octagon, Shape::Star, Shape::Diamond})
        add(to_string(s));
    for (const char* w : {"how", "many", "objects", "object", "?", "answer", "with",
                          "number", "only", "there", "are", "or", "what", "color",
                          "shape", "is", "the"})
        add(w);
    return v;
}

const std::string& Vocab::token(int id) const {
    check_config(id >= 0 && id < size(), "token id out of range");
    return tokens_[static_cast<std::size_t>(id)];
}

int Vocab::id(const std::string& token) const {
    auto it = index_.find(token);
    check_config(it != index_.end(), "token not in vocabulary: " + token);
    return it->second;
}

bool Vocab::has(const std::string& token) const {
    return index_.find(token) != index_.end();
}

std::vector<int> Vocab::encode(const std::vector<std::string>& words) const {
    std::vector<int> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(id(w));
    return ids;
}

int Vocab::digit(int value) const {
    check_config(value >= 0 && value <= max_count_,
                 "count value outside the digit vocabulary");
    return id(std::to_string(value));
}

std::vector<std::string> prompt_words(Task task, int probe_k) {
    switch (task) {
        case Task::Count:
            return {"how", "many", "objects", "?", "answer", "with", "number", "only"};
        case Task::Verify:
            check_config(probe_k >= 0, "verify prompt needs a probe count");
            return {"there", "are", std::to_string(probe_k), "objects", "?",
                    "yes",   "or",  "no"};
        case Task::Color:
            return {"what", "color", "is",    "the",   "object",
                    "?",    "answer", "with", "color", "only"};
        case Task::Shape:
            return {"what", "shape", "is",    "the",   "object",
                    "?",    "answer", "with", "shape", "only"};
    }
    throw ConfigError("unknown task");
}

std::vector<std::string> answer_words(Task task, const RenderedScene& scene) {
    switch (task) {
        case Task::Count:
            return {std::to_string(scene.count())};
        case Task::Verify:
            throw ConfigError("verify answers depend on the probe count");
        case Task::Color:
            check_config(scene.count() == 1, "color question needs one object");
            return {scene.objects[0].color_name};
        case Task::Shape:
            check_config(scene.count() == 1, "shape question needs one object");
            return {to_string(scene.objects[0].shape)};
    }
    throw ConfigError("unknown task");
}

std::vector<char> token_mask(const std::vector<std::string>& words,
                             const Vocab& vocab) {
    std::vector<char> mask(static_cast<std::size_t>(vocab.size()), 0);
    for (const std::string& w : words) mask[static_cast<std::size_t>(vocab.id(w))] = 1;
    return mask;
}

Lexicons Lexicons::standard(const Vocab& vocab) {
    Lexicons lex;
    for (int d = 0; d <= vocab.max_count(); ++d)
        lex.counting.push_back(std::to_string(d));
    for (const auto& c : palette()) lex.visual.push_back(c.name);
    for (Shape s : {Shape::Circle, Shape::Triangle, Shape::Square, Shape::Pentagon,
                    Shape::Hexagon, Shape::Octagon, Shape::Star, Shape::Diamond})
        lex.visual.push_back(to_string(s));
    return lex;
}

}  // namespace countlab
