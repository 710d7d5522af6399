#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "countlab/common.hpp"
#include "countlab/dataset.hpp"
#include "countlab/forward.hpp"
#include "countlab/heads.hpp"
#include "countlab/io_util.hpp"
#include "countlab/lens.hpp"
#include "countlab/metrics.hpp"
#include "countlab/model.hpp"
#include "countlab/scene.hpp"
#include "countlab/sequence.hpp"
#include "countlab/temperature.hpp"
#include "countlab/vocab.hpp"

namespace py = pybind11;
using namespace countlab;

namespace {

RenderedScene make_scene(const std::string& kind, int count, int canvas, int patch,
                         int radius, std::uint64_t seed, int spread) {
    CanvasSpec spec;
    spec.canvas_px = canvas;
    spec.patch_px = patch;
    spec.validate(count);
    SceneKind k = scene_kind_from_string(kind);
    if (k == SceneKind::ColorShape) return gen_colorshape(spec, seed);
    if (k == SceneKind::SynPoly)
        return gen_synpoly(spec, count, radius, seed, spread);
    return gen_syndot(spec, count, radius, seed, spread);
}

TokenSequence count_prompt(const RenderedScene& scene, const Vocab& vocab) {
    QARecord rec;
    rec.task = Task::Count;
    rec.prompt_words = prompt_words(Task::Count);
    return build_sequence(scene, rec, vocab, false);
}

// The model plus the vocabulary it decodes into.
struct Lab {
    Params params;
    Vocab vocab;

    Lab(std::uint64_t seed, int max_count, int canvas, int patch)
        : vocab(Vocab::standard(max_count)) {
        CanvasSpec spec;
        spec.canvas_px = canvas;
        spec.patch_px = patch;
        spec.validate();
        params = init_params(ModelConfig::toy(vocab, spec), seed);
    }
    explicit Lab(const std::string& ckpt) : vocab(Vocab::standard()) {
        std::string side;
        params = load_checkpoint(ckpt, &side);
        int max_count = 9;
        if (!side.empty()) {
            json j = json::parse(side, nullptr, false);
            if (j.is_object()) max_count = j.value("max_count", 9);
        }
        vocab = Vocab::standard(max_count);
        check_contract(vocab.size() == params.cfg.vocab_size,
                       "checkpoint vocabulary size mismatch");
    }

    std::string answer(const RenderedScene& scene) const {
        return vocab.token(generate_answer(params, count_prompt(scene, vocab)));
    }

    std::vector<double> answer_logits(const RenderedScene& scene) const {
        TokenSequence seq = count_prompt(scene, vocab);
        ActivationTrace tr = forward(params, seq);
        Eigen::VectorXd row = tr.logits.row(seq.last_prompt_pos).transpose();
        return {row.data(), row.data() + row.size()};
    }

    // Rank of the true count token at every residual level, answer position.
    std::vector<int> lens_ranks(const RenderedScene& scene) const {
        TokenSequence seq = count_prompt(scene, vocab);
        CaptureFlags flags;
        flags.residuals = true;
        ActivationTrace tr = forward(params, seq, {}, flags);
        LensCurve curve = logit_lens(params, tr, seq.last_prompt_pos,
                                     vocab.digit(scene.count()));
        return curve.rank;
    }

    // Top decoded tokens of one head through identity translators.
    std::vector<std::string> headlens_top(const RenderedScene& scene, int layer,
                                          int head, int k) const {
        check_config(layer >= 0 && layer < params.cfg.n_layers, "layer range");
        check_config(head >= 0 && head < params.cfg.n_heads, "head range");
        TokenSequence seq = count_prompt(scene, vocab);
        CaptureFlags flags;
        flags.head_outputs = true;
        ActivationTrace tr = forward(params, seq, {}, flags);
        TranslatorSet ts = identity_translators(params.cfg);
        Eigen::VectorXd z = headlens_logits(
            params, ts, layer, head,
            tr.head_out[static_cast<std::size_t>(layer)]
                       [static_cast<std::size_t>(head)]
                           .row(seq.last_prompt_pos)
                           .transpose());
        std::vector<std::string> out;
        for (int tok : top_k_indices(z, k)) out.push_back(vocab.token(tok));
        return out;
    }

    std::string answer_with_temperature(const RenderedScene& scene, double alpha,
                                        const std::map<std::pair<int, int>, double>&
                                            gammas) const {
        TemperatureConfig tc;
        tc.alpha = alpha;
        tc.head_gammas = gammas;
        OverrideSet ov = apply_temperature(tc);
        return vocab.token(
            generate_answer(params, count_prompt(scene, vocab), ov));
    }

    void save(const std::string& path) const {
        json side{{"max_count", vocab.max_count()}};
        save_checkpoint(params, path, side.dump());
    }
};

}  // namespace

PYBIND11_MODULE(_countlab, m) {
    m.doc() = "counting scenes, a small vision-language transformer, and lenses";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<DataError>(m, "DataError");
    py::register_exception<NumericError>(m, "NumericError");
    py::register_exception<ContractError>(m, "ContractError");

    py::class_<RenderedScene>(m, "Scene")
        .def_property_readonly("count", &RenderedScene::count)
        .def_property_readonly("width",
                               [](const RenderedScene& s) { return s.image.width; })
        .def_property_readonly(
            "height", [](const RenderedScene& s) { return s.image.height; })
        .def_property_readonly("image_bytes",
                               [](const RenderedScene& s) {
                                   return py::bytes(
                                       reinterpret_cast<const char*>(
                                           s.image.data.data()),
                                       s.image.data.size());
                               })
        .def_property_readonly("image_sha256",
                               [](const RenderedScene& s) {
                                   auto bytes = encode_netpbm(s.image);
                                   return sha256_hex(bytes);
                               })
        .def_property_readonly("object_patches", [](const RenderedScene& s) {
            return scene_object_patches(s);
        });

    m.def("gen_scene", &make_scene, py::arg("kind"), py::arg("count"),
          py::arg("canvas") = 64, py::arg("patch") = 8, py::arg("radius") = 2,
          py::arg("seed") = 0, py::arg("spread") = 1,
          "render a synthetic scene (syndot, synpoly or colorshape)");

    m.def(
        "focus_prior",
        [](const RenderedScene& scene, double sigma) {
            Eigen::VectorXd g = focus_prior(scene, sigma);
            return std::vector<double>(g.data(), g.data() + g.size());
        },
        py::arg("scene"), py::arg("sigma") = 1.0,
        "object-location prior over the patch grid, sums to one");

    m.def("parse_answer", &parse_answer, py::arg("raw"),
          "digit string to integer, -1 on anything else");

    m.def(
        "metrics",
        [](const std::vector<int>& preds, const std::vector<int>& gts) {
            check_data(preds.size() == gts.size(), "length mismatch");
            std::vector<PredictionRecord> recs(preds.size());
            for (std::size_t i = 0; i < preds.size(); ++i) {
                recs[i].gt = gts[i];
                recs[i].parsed = preds[i];
                recs[i].raw = std::to_string(preds[i]);
            }
            MetricsReport r = compute_metrics(recs);
            py::dict d;
            d["acc"] = r.acc;
            d["mae"] = r.mae;
            d["rmse"] = r.rmse;
            d["obo"] = r.obo;
            d["n"] = r.n;
            return d;
        },
        py::arg("preds"), py::arg("gts"),
        "counting metrics over parsed predictions (-1 is the parse sentinel)");

    m.def(
        "jaccard",
        [](const std::vector<std::pair<int, int>>& a,
           const std::vector<std::pair<int, int>>& b) {
            HeadSet ha, hb;
            ha.heads = a;
            hb.heads = b;
            return jaccard(ha, hb);
        },
        py::arg("a"), py::arg("b"), "overlap of two (layer, head) sets");

    py::class_<Lab>(m, "Model")
        .def(py::init<std::uint64_t, int, int, int>(), py::arg("seed") = 0,
             py::arg("max_count") = 9, py::arg("canvas") = 64,
             py::arg("patch") = 8)
        .def_static("load", [](const std::string& p) { return Lab(p); },
                    py::arg("path"))
        .def("save", &Lab::save, py::arg("path"))
        .def("answer", &Lab::answer, py::arg("scene"),
             "greedy one-token answer to the counting prompt")
        .def("answer_logits", &Lab::answer_logits, py::arg("scene"))
        .def("lens_ranks", &Lab::lens_ranks, py::arg("scene"),
             "rank of the true count token per residual level")
        .def("headlens_top", &Lab::headlens_top, py::arg("scene"),
             py::arg("layer"), py::arg("head"), py::arg("k") = 10)
        .def("answer_with_temperature", &Lab::answer_with_temperature,
             py::arg("scene"), py::arg("alpha"), py::arg("gammas"))
        .def_property_readonly(
            "tokens", [](const Lab& lab) { return lab.vocab.tokens(); })
        .def_property_readonly("n_layers",
                               [](const Lab& lab) { return lab.params.cfg.n_layers; })
        .def_property_readonly("n_heads",
                               [](const Lab& lab) { return lab.params.cfg.n_heads; });
}
