#include <cstdio>
#include <memory>

#include "countlab/focus.hpp"
#include "countlab/metrics.hpp"
#include "countlab/reports.hpp"
#include "countlab/train.hpp"
#include "tool_common.hpp"

namespace countlab {

namespace {

struct TrainOpts {
    CommonOpts common;
    std::string data;
    std::string ckpt;
    std::string init;
    int epochs = 2;
    int batch = 16;
    double lr = 3e-3;
    double wd = 0.01;
    double warmup = 0.03;
    double clip = 1.0;
    std::uint64_t seed = 0;
    int max_count = 9;
    int log_every = 0;
    int holdout_every = 10;
    bool focus = false;
    std::string focus_layers;  // csv of 1-based layers; empty = all
    double sigma = 1.0;
    double lambda = 1.0;
    bool focus_image_queries = false;
};

void run_train(const CLI::App& cmd, TrainOpts& o) {
    Overlay cfg(&cmd, o.common.config);
    cfg.get("--data", o.data);
    cfg.get("--ckpt", o.ckpt);
    cfg.get("--init", o.init);
    cfg.get("--epochs", o.epochs);
    cfg.get("--batch", o.batch);
    cfg.get("--lr", o.lr);
    cfg.get("--wd", o.wd);
    cfg.get("--warmup", o.warmup);
    cfg.get("--clip", o.clip);
    cfg.get("--seed", o.seed);
    cfg.get("--max-count", o.max_count);
    cfg.get("--log-every", o.log_every);
    cfg.get("--holdout-every", o.holdout_every);
    cfg.get("--focus", o.focus);
    cfg.get("--focus-layers", o.focus_layers);
    cfg.get("--sigma", o.sigma);
    cfg.get("--lambda", o.lambda);
    cfg.get("--focus-image-queries", o.focus_image_queries);

    check_config(!o.data.empty(), "train needs --data");
    std::string out_root = resolve_out(o.common);
    if (o.ckpt.empty()) o.ckpt = out_root + "/model.ckpt";

    Dataset ds = read_dataset(o.data);
    Vocab vocab = Vocab::standard(o.max_count);
    Params params = [&]() {
        if (!o.init.empty()) return load_model(o.init).first;
        return init_params(ModelConfig::toy(vocab, ds.meta.spec), o.seed);
    }();
    check_contract(params.cfg.vocab_size == vocab.size(),
                   "initial checkpoint vocabulary differs from --max-count");

    std::vector<TokenSequence> data;
    std::vector<Eigen::VectorXd> priors;
    EvalCorpus held;
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const QARecord& rec = ds.records[i];
        const RenderedScene& sc = record_scene(ds, rec);
        if (o.holdout_every > 0 && i % static_cast<std::size_t>(o.holdout_every) == 0) {
            if (rec.task == Task::Count) {
                held.prompts.push_back(build_sequence(sc, rec, vocab, false));
                held.gts.push_back(sc.count());
            }
            continue;
        }
        data.push_back(build_sequence(sc, rec, vocab, true));
        if (o.focus) priors.push_back(focus_prior(sc, o.sigma));
    }
    check_data(!data.empty(), "no training records after the holdout split");

    FocusConfig focus;
    focus.layers = parse_int_list(o.focus_layers);
    focus.sigma = o.sigma;
    focus.lambda = o.lambda;
    focus.image_queries = o.focus_image_queries;

    TrainConfig tc;
    tc.epochs = o.epochs;
    tc.batch_size = o.batch;
    tc.lr = o.lr;
    tc.weight_decay = o.wd;
    tc.warmup_frac = o.warmup;
    tc.clip_norm = o.clip;
    tc.seed = o.seed;
    tc.log_every = o.log_every;
    tc.on_epoch = [&](int epoch, const Params&) {
        std::fprintf(stderr, "epoch %d done\n", epoch + 1);
    };

    TrainStats stats = train(params, data, o.focus ? &priors : nullptr,
                             o.focus ? &focus : nullptr, tc);

    json side{{"max_count", o.max_count},
              {"seed", o.seed},
              {"epochs", o.epochs},
              {"focus", o.focus},
              {"rng", kRngAlgorithm}};
    save_checkpoint(params, o.ckpt, side.dump());

    json echo{{"data", o.data},        {"ckpt", o.ckpt},
              {"epochs", o.epochs},    {"batch", o.batch},
              {"lr", o.lr},            {"wd", o.wd},
              {"warmup", o.warmup},    {"clip", o.clip},
              {"seed", o.seed},        {"max_count", o.max_count},
              {"holdout_every", o.holdout_every},
              {"focus", o.focus},      {"focus_layers", o.focus_layers},
              {"sigma", o.sigma},      {"lambda", o.lambda},
              {"focus_image_queries", o.focus_image_queries}};
    json rep = report_envelope("train", echo);
    rep["steps"] = stats.steps;
    rep["epoch_loss"] = stats.epoch_loss;
    rep["epoch_sft"] = stats.epoch_sft;
    rep["epoch_focus"] = stats.epoch_focus;
    if (!held.prompts.empty()) {
        EvalResult ev = eval_model(params, vocab, held.prompts, held.gts, {},
                                   o.common.threads);
        rep["held_out"] = metrics_json(ev.metrics);
        std::printf("held-out acc %.4f obo %.4f (n=%d)\n", ev.metrics.acc,
                    ev.metrics.obo, ev.metrics.n);
    }
    write_json_file(out_root + "/train_report.json", rep);
    std::printf("%s\n", o.ckpt.c_str());
}

}  // namespace

void register_train(CLI::App& app) {
    auto o = std::make_shared<TrainOpts>();
    CLI::App* cmd = app.add_subcommand("train", "train the toy model on a dataset");
    cmd->add_option("--data", o->data, "dataset directory")->required();
    cmd->add_option("--ckpt", o->ckpt, "checkpoint output path");
    cmd->add_option("--init", o->init, "checkpoint to start from");
    cmd->add_option("--epochs", o->epochs, "training epochs");
    cmd->add_option("--batch", o->batch, "batch size");
    cmd->add_option("--lr", o->lr, "peak learning rate");
    cmd->add_option("--wd", o->wd, "decoupled weight decay (matrices only)");
    cmd->add_option("--warmup", o->warmup, "warmup fraction of total steps");
    cmd->add_option("--clip", o->clip, "global gradient-norm clip");
    cmd->add_option("--seed", o->seed, "init and shuffling seed");
    cmd->add_option("--max-count", o->max_count, "largest digit token");
    cmd->add_option("--log-every", o->log_every, "steps between progress lines");
    cmd->add_option("--holdout-every", o->holdout_every,
                    "hold out every n-th record (0 trains on everything)");
    cmd->add_flag("--focus", o->focus, "add the attention-focus objective");
    cmd->add_option("--focus-layers", o->focus_layers,
                    "focused layers, 1-based csv (default: all)");
    cmd->add_option("--sigma", o->sigma, "focus prior width in patches");
    cmd->add_option("--lambda", o->lambda, "focus weight");
    cmd->add_flag("--focus-image-queries", o->focus_image_queries,
                  "include image positions in the focus query set");
    add_common(cmd, o->common);
    cmd->callback([o, cmd]() { run_train(*cmd, *o); });
}

}  // namespace countlab
