#include "countlab/sequence.hpp"

#include "countlab/common.hpp"

namespace countlab {

std::string to_string(SegmentTag t) {
    switch (t) {
        case SegmentTag::SystemPrompt: return "system";
        case SegmentTag::ImageToken: return "image";
        case SegmentTag::LastImageToken: return "last_image";
        case SegmentTag::UserInstruction: return "instruction";
        case SegmentTag::LastPromptToken: return "last_prompt";
        case SegmentTag::GeneratedToken: return "generated";
    }
    return "?";
}

Eigen::MatrixXd TokenSequence::patch_matrix() const {
    int p = n_image_tokens();
    Eigen::MatrixXd m(p, patch_dim);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < patch_dim; ++j)
            m(i, j) =
                patch_bytes[static_cast<std::size_t>(i) * patch_dim + j] / 255.0;
    return m;
}

TokenSequence build_sequence(const RenderedScene& scene, const QARecord& record,
                             const Vocab& vocab, bool include_answer) {
    const CanvasSpec& spec = scene.spec;
    spec.validate();
    const Image& img = scene.image;
    check_contract(img.width == spec.canvas_px && img.height == spec.canvas_px,
                   "scene image does not match its canvas spec");

    TokenSequence seq;
    int g = spec.grid();
    int n_patches = g * g;
    seq.patch_dim = spec.patch_px * spec.patch_px * 3;
    seq.patch_bytes.resize(static_cast<std::size_t>(n_patches) * seq.patch_dim);

    std::size_t w = 0;
    for (int pr = 0; pr < g; ++pr)
        for (int pc = 0; pc < g; ++pc)
            for (int y = 0; y < spec.patch_px; ++y)
                for (int x = 0; x < spec.patch_px; ++x)
                    for (int c = 0; c < 3; ++c)
                        seq.patch_bytes[w++] =
                            img.at(pc * spec.patch_px + x, pr * spec.patch_px + y,
                                   img.channels == 1 ? 0 : c);

    auto push = [&](int token, SegmentTag tag) {
        seq.tokens.push_back(token);
        seq.tags.push_back(tag);
    };
    push(vocab.sys(), SegmentTag::SystemPrompt);
    push(vocab.img_start(), SegmentTag::SystemPrompt);
    seq.first_image_pos = seq.length();
    for (int p = 0; p < n_patches; ++p) push(vocab.img(), SegmentTag::ImageToken);
    seq.last_image_pos = seq.length();
    push(vocab.img_end(), SegmentTag::LastImageToken);
    for (int id : vocab.encode(record.prompt_words))
        push(id, SegmentTag::UserInstruction);
    seq.last_prompt_pos = seq.length();
    push(vocab.assistant(), SegmentTag::LastPromptToken);
    if (include_answer) {
        check_contract(!record.answer_words.empty(), "record has no answer");
        for (int id : vocab.encode(record.answer_words)) {
            seq.answer_targets.emplace_back(seq.length() - 1, id);
            push(id, SegmentTag::GeneratedToken);
        }
    }
    return seq;
}

std::vector<int> positions_with_tag(const TokenSequence& seq, SegmentTag tag) {
    std::vector<int> out;
    for (int i = 0; i < seq.length(); ++i)
        if (seq.tags[static_cast<std::size_t>(i)] == tag) out.push_back(i);
    return out;
}

}  // namespace countlab
