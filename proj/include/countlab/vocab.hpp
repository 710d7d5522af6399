#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "countlab/scene.hpp"

namespace countlab {

enum class Task { Count, Verify, Color, Shape };
std::string to_string(Task t);
Task task_from_string(const std::string& s);

// Hand-built word-level vocabulary: specials, digit tokens, yes/no, the color
// palette, shape names, and the template words. Digit tokens beyond 9 are
// appended when max_count > 9 (range-extrapolation runs).
class Vocab {
  public:
    static Vocab standard(int max_count = 9);

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::string& token(int id) const;
    int id(const std::string& token) const;  // ConfigError if absent
    bool has(const std::string& token) const;
    std::vector<int> encode(const std::vector<std::string>& words) const;

    int sys() const { return sys_; }
    int img_start() const { return img_start_; }
    int img() const { return img_; }
    int img_end() const { return img_end_; }
    int assistant() const { return assistant_; }
    int yes() const { return yes_; }
    int no() const { return no_; }
    int digit(int value) const;  // token id for a count value
    int max_count() const { return max_count_; }

    const std::vector<std::string>& tokens() const { return tokens_; }

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    int sys_ = 0, img_start_ = 0, img_ = 0, img_end_ = 0, assistant_ = 0;
    int yes_ = 0, no_ = 0;
    int max_count_ = 9;
};

// Question/answer templates, word-level.
std::vector<std::string> prompt_words(Task task, int probe_k = -1);
std::vector<std::string> answer_words(Task task, const RenderedScene& scene);

// Token lists backing CTER (counting) and VGS (visual) scores. These are
// explicit data, loadable from JSON config rather than inferred.
struct Lexicons {
    std::vector<std::string> counting;
    std::vector<std::string> visual;

    static Lexicons standard(const Vocab& vocab);
};

// Per-token-id membership flag for a word list.
std::vector<char> token_mask(const std::vector<std::string>& words,
                             const Vocab& vocab);

}  // namespace countlab
