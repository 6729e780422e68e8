// Experiment driver: synthetic data generation, variant training and
// evaluation, depth/scaling sweeps, channel-sensitivity probes and report
// aggregation. Flags override values from --config files; relative output
// paths resolve under $CAMOSEG_OUT when it is set.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "camoseg/checkpoint.hpp"
#include "camoseg/config.hpp"
#include "camoseg/dataset.hpp"
#include "camoseg/experiment.hpp"
#include "camoseg/probe.hpp"
#include "camoseg/report.hpp"

namespace fs = std::filesystem;
using namespace camoseg;

namespace {

std::string resolve_out(const std::string& path) {
    const char* root = std::getenv("CAMOSEG_OUT");
    if (!root || *root == '\0' || path.empty() || fs::path(path).is_absolute()) return path;
    return (fs::path(root) / path).string();
}

// Collects config-affecting flags so that a --config file is applied first
// and explicitly given flags override it, independent of argument order.
class ConfigArgs {
public:
    explicit ConfigArgs(CLI::App* cmd) : cmd_(cmd) {
        cmd->add_option("--config", config_file_, "key=value config file");
    }

    void add(const std::string& flag, const std::string& key, const std::string& help) {
        values_.emplace_back();
        auto& slot = values_.back();
        slot.key = key;
        slot.opt = cmd_->add_option(flag, slot.raw, help);
    }

    ExperimentConfig finalize() const {
        ExperimentConfig cfg;
        if (!config_file_.empty()) cfg.merge_file(config_file_);
        for (const auto& slot : values_) {
            if (slot.opt->count() > 0) cfg.apply_kv(slot.key, slot.raw);
        }
        return cfg;
    }

private:
    struct Slot {
        std::string key, raw;
        CLI::Option* opt = nullptr;
    };
    CLI::App* cmd_;
    std::string config_file_;
    std::vector<Slot> values_;
};

void add_data_flags(ConfigArgs& args) {
    args.add("--image-size", "image_size", "square image extent (multiple of 8)");
    args.add("--train-count", "train_count", "training samples");
    args.add("--test-count", "test_count", "held-out samples");
    args.add("--data-seed", "data_seed", "dataset seed");
    args.add("--delta", "delta", "object/background mean intensity gap");
}

void add_model_flags(ConfigArgs& args) {
    args.add("--variant", "variant", "M1, M2 or M3");
    args.add("--channels", "channels", "embedding width C");
    args.add("--decoder-channels", "decoder_channels", "decoder stage-1 width");
    args.add("--rsampc-depth", "rsampc_depth", "3x3 layers in the perturbation stack (1..5)");
    args.add("--rsampc-scale", "rsampc_scale", "enable the fixed per-channel scale");
    args.add("--rsampc-scale-spread", "rsampc_scale_spread", "scale drawn from 1 +/- spread");
    args.add("--ttt-eta", "ttt_eta", "inner-loop learning rate");
    args.add("--ttt-mini-batch", "ttt_mini_batch", "tokens per inner update group");
    args.add("--ttt-residual", "ttt_residual", "residual + layer norm output head");
    args.add("--tvm-sum-details", "tvm_sum_details", "feed lh+hl+hh instead of hh");
    args.add("--model-seed", "model_seed", "weight init seed");
}

void add_train_flags(ConfigArgs& args) {
    args.add("--steps", "steps", "gradient steps");
    args.add("--batch-size", "batch_size", "samples per step");
    args.add("--lr", "lr", "outer learning rate");
}

int cmd_gen_data(const ConfigArgs& args, const std::string& out_dir) {
    ExperimentConfig cfg = args.finalize();
    const std::string out = resolve_out(out_dir);
    gen_dataset(cfg.data_config(cfg.train_count, cfg.data_seed), (fs::path(out) / "train").string());
    gen_dataset(cfg.data_config(cfg.test_count, derive_seed(cfg.data_seed, 2)),
                (fs::path(out) / "test").string());
    std::printf("wrote %zu train + %zu test samples to %s\n", cfg.train_count, cfg.test_count,
                out.c_str());
    return 0;
}

int cmd_train(const ConfigArgs& args, const std::string& data_dir, const std::string& out_dir) {
    ExperimentConfig cfg = args.finalize();
    if (!data_dir.empty()) cfg.data_dir = data_dir;
    cfg.out_dir = resolve_out(out_dir.empty() ? cfg.out_dir : out_dir);
    const ExperimentResult res = run_experiment(cfg);
    std::printf("variant %s: loss %.6f -> %.6f over %zu steps\n", variant_name(cfg.variant),
                res.train.initial_loss, res.train.final_loss, cfg.steps);
    std::printf("checkpoint: %s\nmetrics: %s\n", res.checkpoint_path.c_str(),
                res.metrics_csv_path.c_str());
    const auto& m = res.eval.aggregate;
    std::printf("s_alpha=%.4f f_beta_w=%.4f e_phi=%.4f e_x=%.4f f_m=%.4f mae=%.4f\n",
                m.s_alpha, m.f_beta_w, m.e_phi_mean, m.e_phi_max, m.f_mean, m.mae);
    return 0;
}

int cmd_eval(const ConfigArgs& args, const std::string& checkpoint, const std::string& split_dir,
             const std::string& out_dir) {
    ExperimentConfig cfg = args.finalize();
    const std::string out = resolve_out(out_dir);
    fs::create_directories(out);
    ToyModel model = build_model(cfg);
    load_model(checkpoint, model);
    const LoadedDataset split = load_dataset(split_dir);
    const EvalOutcome eval = evaluate_model(model, split, (fs::path(out) / "preds").string());
    const std::string csv = (fs::path(out) / "metrics.csv").string();
    write_metrics_csv(csv, eval, cfg.hash());
    const auto& m = eval.aggregate;
    std::printf("evaluated %zu images -> %s\n", split.size(), csv.c_str());
    std::printf("s_alpha=%.4f f_beta_w=%.4f e_phi=%.4f e_x=%.4f f_m=%.4f mae=%.4f\n",
                m.s_alpha, m.f_beta_w, m.e_phi_mean, m.e_phi_max, m.f_mean, m.mae);
    return 0;
}

int cmd_ablate(const ConfigArgs& args, const std::string& data_dir, const std::string& out_csv) {
    ExperimentConfig cfg = args.finalize();
    if (!data_dir.empty()) cfg.data_dir = data_dir;
    const std::string csv = resolve_out(out_csv);
    const auto rows = run_ablation(cfg, csv);
    std::printf("setting     P       N\n");
    for (const auto& r : rows) std::printf("%-8s %.4f  %.4f\n", r.setting.c_str(), r.p, r.n);
    std::printf("wrote %s\n", csv.c_str());
    return 0;
}

int cmd_probe(const ConfigArgs& args, const std::string& checkpoint, const std::string& base_csv,
              const std::string& variant_csv, const std::string& out_path,
              const std::string& channels_arg) {
    const std::string out = resolve_out(out_path);
    if (!base_csv.empty() || !variant_csv.empty()) {
        if (base_csv.empty() || variant_csv.empty()) {
            throw std::runtime_error("probe: gain mode needs both --base and --variant");
        }
        const auto base = read_deltas_csv(base_csv);
        const auto var = read_deltas_csv(variant_csv);
        const auto rows = gain_table(base, var);
        const double ed = effect_distance(base, var);
        write_gains_csv(out, rows, ed);
        std::printf("effect_distance=%.6g; wrote %s\n", ed, out.c_str());
        return 0;
    }
    if (checkpoint.empty()) {
        throw std::runtime_error("probe: need --checkpoint (delta mode) or --base/--variant");
    }
    ExperimentConfig cfg = args.finalize();
    ToyModel model = build_model(cfg);
    load_model(checkpoint, model);
    const ProbeSet set =
        make_probe_set(cfg.probe_count, cfg.image_size, cfg.probe_seed, cfg.delta);
    std::vector<std::size_t> channels;
    if (channels_arg.empty() || channels_arg == "all") {
        for (std::size_t c = 0; c < cfg.channels; ++c) channels.push_back(c);
    } else {
        std::size_t pos = 0;
        while (pos < channels_arg.size()) {
            const auto comma = channels_arg.find(',', pos);
            channels.push_back(std::stoull(channels_arg.substr(pos, comma - pos)));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
    }
    const auto deltas = channel_ablation(model, set, channels);
    write_deltas_csv(out, deltas);
    std::printf("probed %zu channels -> %s\n", deltas.size(), out.c_str());
    return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_dir) {
    std::vector<TableRow> rows;
    for (const auto& path : inputs) {
        auto part = read_table_csv(path);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    const std::string out = resolve_out(out_dir);
    fs::create_directories(out);
    const auto averages = aggregate_pn(rows);
    write_pn_csv((fs::path(out) / "pn.csv").string(), averages);
    write_pn_bar_svg((fs::path(out) / "pn_bars.svg").string(), averages);
    write_metric_lines_svg((fs::path(out) / "metric_lines.svg").string(), rows);
    for (const auto& a : averages) {
        std::printf("%s: P=%.4f (%zu metrics) N=%.4f (%zu metrics)\n", a.variant.c_str(), a.p,
                    a.positives, a.n, a.negatives);
    }
    std::printf("wrote pn.csv, pn_bars.svg, metric_lines.svg under %s\n", out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"camouflaged-segmentation experiment harness"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    ConfigArgs gen_args(gen);
    add_data_flags(gen_args);
    std::string gen_out;
    gen->add_option("--out", gen_out, "dataset root (train/ + test/)")->required();

    // train
    auto* train = app.add_subcommand("train", "train a variant and evaluate the test split");
    ConfigArgs train_args(train);
    add_data_flags(train_args);
    add_model_flags(train_args);
    add_train_flags(train_args);
    std::string train_data, train_out;
    train->add_option("--data", train_data, "dataset root from gen-data");
    train->add_option("--out", train_out, "output directory");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split directory");
    ConfigArgs eval_args(eval);
    add_data_flags(eval_args);
    add_model_flags(eval_args);
    std::string eval_ckpt, eval_split, eval_out;
    eval->add_option("--checkpoint", eval_ckpt, "model checkpoint (.sttc)")->required();
    eval->add_option("--split", eval_split, "split directory with img_*.ppm / gt_*.pgm")
        ->required();
    eval->add_option("--out", eval_out, "output directory")->required();

    // ablate
    auto* ablate = app.add_subcommand("ablate", "depth/scaling sweep (L0..L5, L4+eps)");
    ConfigArgs ablate_args(ablate);
    add_data_flags(ablate_args);
    add_model_flags(ablate_args);
    add_train_flags(ablate_args);
    std::string ablate_data, ablate_out;
    ablate->add_option("--data", ablate_data, "dataset root from gen-data");
    ablate->add_option("--out", ablate_out, "output csv path")->required();

    // probe
    auto* probe = app.add_subcommand("probe", "channel sensitivity deltas / gain tables");
    ConfigArgs probe_args(probe);
    add_data_flags(probe_args);
    add_model_flags(probe_args);
    std::string probe_ckpt, probe_base, probe_variant, probe_out, probe_channels;
    probe->add_option("--checkpoint", probe_ckpt, "checkpoint for delta mode");
    probe->add_option("--base", probe_base, "base deltas csv (gain mode)");
    probe->add_option("--variant", probe_variant, "variant deltas csv (gain mode)");
    probe->add_option("--channels", probe_channels, "comma list or 'all'");
    probe->add_option("--out", probe_out, "output csv path")->required();

    // report
    auto* report = app.add_subcommand("report", "aggregate metric tables into P/N + plots");
    std::vector<std::string> report_in;
    std::string report_out;
    report->add_option("--in", report_in, "long-form csv (dataset,variant,metric,value)")
        ->required();
    report->add_option("--out-dir", report_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(gen_args, gen_out);
        if (train->parsed()) return cmd_train(train_args, train_data, train_out);
        if (eval->parsed()) return cmd_eval(eval_args, eval_ckpt, eval_split, eval_out);
        if (ablate->parsed()) return cmd_ablate(ablate_args, ablate_data, ablate_out);
        if (probe->parsed()) {
            return cmd_probe(probe_args, probe_ckpt, probe_base, probe_variant, probe_out,
                             probe_channels);
        }
        if (report->parsed()) return cmd_report(report_in, report_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
