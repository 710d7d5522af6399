#include "countlab/model.hpp"

#include "countlab/common.hpp"

namespace countlab {

void ModelConfig::validate() const {
    check_config(n_layers >= 1 && n_heads >= 1 && d_model >= 1, "bad model dims");
    check_config(d_model % n_heads == 0, "d_model must be divisible by n_heads");
    check_config(mlp_mult >= 1, "mlp_mult must be positive");
    check_config(vocab_size >= 2, "vocab_size must be set");
    check_config(canvas_px % patch_px == 0, "patch size must divide canvas size");
    check_config(channels == 3, "model input is RGB");
    check_config(max_seq >= image_tokens() + 5,
                 "max_seq too small for the image plus template");
}

ModelConfig ModelConfig::toy(const Vocab& vocab, const CanvasSpec& spec) {
    ModelConfig cfg;
    cfg.patch_px = spec.patch_px;
    cfg.canvas_px = spec.canvas_px;
    cfg.vocab_size = vocab.size();
    cfg.max_seq = cfg.image_tokens() + 24;
    cfg.validate();
    return cfg;
}

Params init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    auto fill = [&](Eigen::MatrixXd& m, int rows, int cols, double scale) {
        m.resize(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    };
    double s = 0.02;
    // residual-writing projections get the usual 1/sqrt(2L) damping
    double s_out = s / std::sqrt(2.0 * cfg.n_layers);

    Params p;
    p.cfg = cfg;
    fill(p.tok_embed, cfg.vocab_size, cfg.d_model, s);
    fill(p.pos_embed, cfg.max_seq, cfg.d_model, s);
    fill(p.patch_embed, cfg.patch_dim(), cfg.d_model, s);
    p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (auto& l : p.layers) {
        fill(l.wq, cfg.d_model, cfg.d_model, s);
        fill(l.wk, cfg.d_model, cfg.d_model, s);
        fill(l.wv, cfg.d_model, cfg.d_model, s);
        fill(l.wo, cfg.d_model, cfg.d_model, s_out);
        fill(l.w1, cfg.d_model, cfg.d_mlp(), s);
        fill(l.w2, cfg.d_mlp(), cfg.d_model, s_out);
        l.ln1_g = Eigen::VectorXd::Ones(cfg.d_model);
        l.ln2_g = Eigen::VectorXd::Ones(cfg.d_model);
    }
    p.final_g = Eigen::VectorXd::Ones(cfg.d_model);
    fill(p.unembed, cfg.vocab_size, cfg.d_model, s);
    p.unembed_b = Eigen::VectorXd::Zero(cfg.vocab_size);
    return p;
}

Params zero_like(const Params& src) {
    Params p;
    p.cfg = src.cfg;
    p.tok_embed = Eigen::MatrixXd::Zero(src.tok_embed.rows(), src.tok_embed.cols());
    p.pos_embed = Eigen::MatrixXd::Zero(src.pos_embed.rows(), src.pos_embed.cols());
    p.patch_embed =
        Eigen::MatrixXd::Zero(src.patch_embed.rows(), src.patch_embed.cols());
    p.layers.resize(src.layers.size());
    for (std::size_t i = 0; i < src.layers.size(); ++i) {
        const auto& s = src.layers[i];
        auto& l = p.layers[i];
        l.wq = Eigen::MatrixXd::Zero(s.wq.rows(), s.wq.cols());
        l.wk = Eigen::MatrixXd::Zero(s.wk.rows(), s.wk.cols());
        l.wv = Eigen::MatrixXd::Zero(s.wv.rows(), s.wv.cols());
        l.wo = Eigen::MatrixXd::Zero(s.wo.rows(), s.wo.cols());
        l.w1 = Eigen::MatrixXd::Zero(s.w1.rows(), s.w1.cols());
        l.w2 = Eigen::MatrixXd::Zero(s.w2.rows(), s.w2.cols());
        l.ln1_g = Eigen::VectorXd::Zero(s.ln1_g.size());
        l.ln2_g = Eigen::VectorXd::Zero(s.ln2_g.size());
    }
    p.final_g = Eigen::VectorXd::Zero(src.final_g.size());
    p.unembed = Eigen::MatrixXd::Zero(src.unembed.rows(), src.unembed.cols());
    p.unembed_b = Eigen::VectorXd::Zero(src.unembed_b.size());
    return p;
}

std::vector<TensorRef> tensor_refs(Params& p) {
    std::vector<TensorRef> refs;
    auto mat = [&](const std::string& name, Eigen::MatrixXd& m) {
        refs.push_back({name, m.data(), static_cast<std::size_t>(m.size()),
                        {static_cast<std::uint32_t>(m.rows()),
                         static_cast<std::uint32_t>(m.cols())}});
    };
    auto vec = [&](const std::string& name, Eigen::VectorXd& v) {
        refs.push_back({name, v.data(), static_cast<std::size_t>(v.size()),
                        {static_cast<std::uint32_t>(v.size())}});
    };
    mat("tok_embed", p.tok_embed);
    mat("pos_embed", p.pos_embed);
    mat("patch_embed", p.patch_embed);
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        std::string pre = "layers." + std::to_string(i) + ".";
        mat(pre + "wq", p.layers[i].wq);
        mat(pre + "wk", p.layers[i].wk);
        mat(pre + "wv", p.layers[i].wv);
        mat(pre + "wo", p.layers[i].wo);
        mat(pre + "w1", p.layers[i].w1);
        mat(pre + "w2", p.layers[i].w2);
        vec(pre + "ln1_g", p.layers[i].ln1_g);
        vec(pre + "ln2_g", p.layers[i].ln2_g);
    }
    vec("final_g", p.final_g);
    mat("unembed", p.unembed);
    vec("unembed_b", p.unembed_b);
    return refs;
}

}  // namespace countlab
