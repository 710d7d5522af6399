#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "countlab/dataset.hpp"
#include "countlab/scene.hpp"
#include "countlab/vocab.hpp"

namespace countlab {

enum class SegmentTag {
    SystemPrompt,
    ImageToken,
    LastImageToken,
    UserInstruction,
    LastPromptToken,
    GeneratedToken,
};
std::string to_string(SegmentTag t);

// Layout: [sys][img_start][one token per patch][img_end][instruction][assistant]
// and, when the answer is included, the answer tokens after the assistant
// marker. The assistant marker is the unique LastPromptToken; the next
// position is where the answer is read out.
struct TokenSequence {
    std::vector<int> tokens;
    std::vector<SegmentTag> tags;
    // Patch pixel bytes, image-token order, row-major within a patch with
    // channels interleaved; grayscale is replicated to 3 channels.
    std::vector<std::uint8_t> patch_bytes;
    int patch_dim = 0;
    int first_image_pos = -1;
    int last_image_pos = -1;   // the img_end position
    int last_prompt_pos = -1;  // the assistant position
    // (position, target token): logits at position predict the target.
    std::vector<std::pair<int, int>> answer_targets;

    int length() const { return static_cast<int>(tokens.size()); }
    int n_image_tokens() const { return last_image_pos - first_image_pos; }
    int image_pos(int patch_index) const { return first_image_pos + patch_index; }
    // Patch pixels scaled to [0, 1], one row per image token.
    Eigen::MatrixXd patch_matrix() const;
};

TokenSequence build_sequence(const RenderedScene& scene, const QARecord& record,
                             const Vocab& vocab, bool include_answer);

// Positions carrying a given tag.
std::vector<int> positions_with_tag(const TokenSequence& seq, SegmentTag tag);

}  // namespace countlab
