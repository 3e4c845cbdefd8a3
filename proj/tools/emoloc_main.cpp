// Command-line front end: synthetic data generation, training, inference,
// evaluation, and the gradient-check harness.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "emoloc/ccl.hpp"
#include "emoloc/checkpoint.hpp"
#include "emoloc/dcin.hpp"
#include "emoloc/error.hpp"
#include "emoloc/gradcheck.hpp"
#include "emoloc/inference.hpp"
#include "emoloc/metrics.hpp"
#include "emoloc/synthdata.hpp"

namespace {

using namespace emoloc;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

int cmd_gen_data(const synth::SynthConfig& cfg, const std::string& out_prefix) {
    synth::GeneratedData data = synth::generate(cfg);
    synth::save(data.train, out_prefix + ".train.txt");
    synth::save(data.test, out_prefix + ".test.txt");
    std::cout << "wrote " << data.train.episodes.size() << " train episodes to " << out_prefix
              << ".train.txt\n";
    std::cout << "wrote " << data.test.episodes.size() << " test episodes to " << out_prefix
              << ".test.txt\n";
    return kExitOk;
}

struct TrainArgs {
    std::string data;
    std::string out_model;
    std::string log_path;
    int epochs = 200;
    uint64_t seed = 42;
    dcin::DcinConfig dcin;
    ccl::CclConfig ccl;
    std::string mode = "mask";
    std::string activation = "relu";
};

int cmd_train(TrainArgs& args) {
    args.ccl.mode = ccl::mode_from_string(args.mode);
    args.dcin.activation = dcin::activation_from_string(args.activation);

    Dataset dataset = synth::load(args.data);
    args.dcin.dim = dataset.dim;
    args.dcin.classes = dataset.classes;
    args.dcin.validate();
    args.ccl.validate();

    dcin::Model model = dcin::Model::init(args.dcin, args.seed);
    ccl::TrainLog log = ccl::train(model, dataset.episodes, args.ccl, args.epochs, args.seed);

    dcin::save_checkpoint(model, args.out_model);
    const std::string log_path =
        args.log_path.empty() ? args.out_model + ".log.csv" : args.log_path;
    ccl::write_train_log(log, log_path);

    if (!log.epochs.empty()) {
        const ccl::EpochStats& last = log.epochs.back();
        std::printf("epoch %d: total=%.6f cs=%.6f cmc=%.6f vc=%.6f sc=%.6f\n", last.epoch,
                    last.total, last.cs, last.cmc, last.vc, last.sc);
    }
    std::cout << "wrote checkpoint to " << args.out_model << "\n";
    return kExitOk;
}

int cmd_infer(const std::string& model_path, const std::string& data_path,
              const std::string& out_path, std::optional<double> gamma1,
              std::optional<double> gamma2) {
    dcin::Model model = dcin::load_checkpoint(model_path);
    Dataset dataset = synth::load(data_path);
    if (dataset.dim != model.config.dim || dataset.classes != model.config.classes) {
        throw ConfigError("dataset dimensions do not match the checkpoint");
    }
    const double n = static_cast<double>(model.config.classes);
    const double g1 = gamma1.value_or(2.0 / n);
    const double g2 = gamma2.value_or(1.2 / n);
    if (g2 < 0.0 || g2 > g1 || g1 > 1.0) {
        throw ConfigError("thresholds must satisfy 0 <= gamma2 <= gamma1 <= 1");
    }
    std::vector<inference::Detection> dets =
        inference::detect_all(model, dataset.episodes, g1, g2);
    inference::write_detections(dets, out_path);
    std::cout << "wrote " << dets.size() << " detections to " << out_path << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& detections_path, const std::string& data_path,
             const std::string& per_class_path) {
    std::vector<inference::Detection> dets = inference::read_detections(detections_path);
    Dataset dataset = synth::load(data_path);
    metrics::EvalReport report = metrics::evaluate(dets, dataset.episodes);
    metrics::write_report(report, std::cout);
    if (!per_class_path.empty()) metrics::write_per_class_csv(report, per_class_path);
    return kExitOk;
}

int cmd_gradcheck(const std::string& size, uint64_t seed) {
    synth::SynthConfig data_cfg;
    dcin::DcinConfig model_cfg;
    if (size == "tiny") {
        data_cfg.classes = 3;
        data_cfg.dim = 4;
        data_cfg.t_min = data_cfg.t_max = 8;
        data_cfg.event_len_min = 2;
        data_cfg.event_len_max = 4;
        data_cfg.events_min = 1;
        data_cfg.events_max = 2;
        model_cfg.layers = 2;
    } else if (size == "small") {
        data_cfg.classes = 6;
        data_cfg.dim = 8;
        data_cfg.t_min = data_cfg.t_max = 16;
        data_cfg.event_len_min = 3;
        data_cfg.event_len_max = 6;
        model_cfg.layers = 3;
    } else {
        throw ConfigError("gradcheck size must be tiny|small, got '" + size + "'");
    }
    data_cfg.train_episodes = 1;
    data_cfg.test_episodes = 1;
    data_cfg.seed = seed;
    model_cfg.dim = data_cfg.dim;
    model_cfg.classes = data_cfg.classes;

    const Episode episode = synth::generate(data_cfg).train.episodes.front();
    dcin::Model model = dcin::Model::init(model_cfg, seed);
    ccl::CclConfig loss_cfg;  // defaults: mask mode, R=2, full loss weights

    ccl::FreezeContext freeze;
    auto build = [&](ad::Graph& g, const std::vector<ad::Value>& leaves) {
        dcin::ModelVars vars = dcin::bind_model(model_cfg, leaves);
        ad::Value total = ccl::build_episode_loss(g, vars, episode, loss_cfg, &freeze).total;
        freeze.begin_replay();
        return total;
    };
    ad::GradCheckReport report = ad::finite_diff_check(model.parameters(), build, 1e-5);

    std::printf("max relative gradient error: %.6e\n", report.max_rel_err);
    std::printf("worst coordinate: parameter %d index %d (analytic %.6e, central diff %.6e)\n",
                report.worst_param, report.worst_coord, report.worst_analytic,
                report.worst_numeric);
    if (report.max_rel_err >= 1e-4) {
        std::cout << "FAIL (threshold 1e-4)\n";
        return kExitRuntime;
    }
    std::cout << "PASS (threshold 1e-4)\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Weakly-supervised temporal emotion localization over paired "
                 "video/subtitle feature sequences"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from a key=value file");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate synthetic train/test datasets");
    synth::SynthConfig synth_cfg;
    std::string gen_out;
    gen->add_option("--out", gen_out, "Output path prefix")->required();
    gen->add_option("--classes", synth_cfg.classes, "Emotion classes");
    gen->add_option("--dim", synth_cfg.dim, "Feature dimension");
    gen->add_option("--t-min", synth_cfg.t_min, "Minimum episode length");
    gen->add_option("--t-max", synth_cfg.t_max, "Maximum episode length");
    gen->add_option("--episodes", synth_cfg.train_episodes, "Training episodes");
    gen->add_option("--test-episodes", synth_cfg.test_episodes, "Test episodes");
    gen->add_option("--events-min", synth_cfg.events_min, "Minimum events per episode");
    gen->add_option("--events-max", synth_cfg.events_max, "Maximum events per episode");
    gen->add_option("--event-len-min", synth_cfg.event_len_min, "Minimum event length");
    gen->add_option("--event-len-max", synth_cfg.event_len_max, "Maximum event length");
    gen->add_option("--snr", synth_cfg.snr, "Signal-to-noise ratio");
    gen->add_option("--shift", synth_cfg.subtitle_shift, "Max subtitle misalignment");
    gen->add_option("--proto-corr", synth_cfg.proto_corr, "Cross-modal prototype correlation");
    gen->add_option("--seed", synth_cfg.seed, "Generator seed");

    // train
    auto* tr = app.add_subcommand("train", "Train a model on a dataset");
    TrainArgs train_args;
    tr->add_option("--data", train_args.data, "Training dataset file")->required();
    tr->add_option("--out-model", train_args.out_model, "Checkpoint output path")->required();
    tr->add_option("--log", train_args.log_path, "Epoch log path (default <out-model>.log.csv)");
    tr->add_option("--epochs", train_args.epochs, "Training epochs");
    tr->add_option("--seed", train_args.seed, "Init/shuffle seed");
    tr->add_option("--layers", train_args.dcin.layers, "Stacked context layers");
    tr->add_option("--delta", train_args.dcin.margin, "Context-sensitive margin");
    tr->add_option("--kernel", train_args.dcin.kernel_width, "Temporal kernel width (odd)");
    tr->add_option("--activation", train_args.activation, "Context activation (relu|sigmoid|identity)");
    tr->add_option("--relax", train_args.ccl.relax_range, "Alignment relaxation range per side");
    tr->add_option("--mode", train_args.mode, "Retrieval mode (mask|soft)");
    tr->add_option("--tau", train_args.ccl.temperature, "Soft retrieval temperature");
    tr->add_option("--beta", train_args.ccl.index_weight, "Alignment index-distance weight");
    tr->add_option("--lambda1", train_args.ccl.lambda_cs, "Context-sensitive loss weight");
    tr->add_option("--lambda2", train_args.ccl.lambda_cmc, "Consensus loss weight");
    tr->add_option("--lambda3", train_args.ccl.lambda_vc, "Video index loss weight");
    tr->add_option("--lambda4", train_args.ccl.lambda_sc, "Subtitle index loss weight");
    tr->add_option("--lr", train_args.ccl.learning_rate, "Adam learning rate");
    tr->add_option("--batch", train_args.ccl.batch_size, "Batch size");

    // infer
    auto* in = app.add_subcommand("infer", "Detect emotion intervals with a trained model");
    std::string infer_model, infer_data, infer_out;
    std::optional<double> gamma1, gamma2;
    in->add_option("--model", infer_model, "Checkpoint path")->required();
    in->add_option("--data", infer_data, "Dataset file")->required();
    in->add_option("--out", infer_out, "Detections output path")->required();
    in->add_option("--gamma1", gamma1, "Selection threshold (default 2/N)");
    in->add_option("--gamma2", gamma2, "Expansion threshold (default 1.2/N)");

    // eval
    auto* ev = app.add_subcommand("eval", "Score detections against ground truth");
    std::string eval_dets, eval_data, eval_per_class;
    ev->add_option("--detections", eval_dets, "Detections file")->required();
    ev->add_option("--data", eval_data, "Dataset file with ground truth")->required();
    ev->add_option("--per-class", eval_per_class, "Optional per-class AP table output");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the training gradient");
    std::string gc_size = "tiny";
    uint64_t gc_seed = 7;
    gc->add_option("--size", gc_size, "Problem size (tiny|small)");
    gc->add_option("--seed", gc_seed, "Seed for the probe model/episode");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(synth_cfg, gen_out);
        if (tr->parsed()) return cmd_train(train_args);
        if (in->parsed()) return cmd_infer(infer_model, infer_data, infer_out, gamma1, gamma2);
        if (ev->parsed()) return cmd_eval(eval_dets, eval_data, eval_per_class);
        if (gc->parsed()) return cmd_gradcheck(gc_size, gc_seed);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
