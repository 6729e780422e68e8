#include "camoseg/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace camoseg {

namespace fs = std::filesystem;

ToyModel build_model(const ExperimentConfig& cfg) {
    cfg.validate();
    return model_init<float>(cfg.model_config());
}

namespace {

std::vector<std::size_t> batch_indices(std::size_t step, std::size_t batch_size,
                                       std::size_t n) {
    std::vector<std::size_t> idx(batch_size);
    for (std::size_t j = 0; j < batch_size; ++j) idx[j] = (step * batch_size + j) % n;
    return idx;
}

double batch_loss(const ToyModel& model, const Batch& batch) {
    Tensor logits = model_forward(model, batch.images, batch.boxes, RunMode::Train);
    return model_loss(logits, batch.gt).value;
}

}  // namespace

TrainSummary train_model(ToyModel& model, const LoadedDataset& train,
                         const ExperimentConfig& cfg) {
    if (train.size() == 0) throw std::runtime_error("train_model: empty training split");
    TrainSummary summary;
    const Batch probe = make_batch(train, batch_indices(0, cfg.batch_size, train.size()));
    summary.initial_loss = batch_loss(model, probe);
    summary.step_losses.reserve(cfg.steps);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const Batch batch = make_batch(train, batch_indices(step, cfg.batch_size, train.size()));
        summary.step_losses.push_back(train_step(model, batch, static_cast<float>(cfg.lr)));
    }
    summary.final_loss = batch_loss(model, probe);
    return summary;
}

EvalOutcome evaluate_model(const ToyModel& model, const LoadedDataset& split,
                           const std::string& pred_dir) {
    if (!pred_dir.empty()) {
        std::error_code ec;
        fs::create_directories(pred_dir, ec);
    }
    EvalOutcome out;
    const std::size_t S = split.image_size;
    std::vector<MetricReport> reports;
    for (std::size_t i = 0; i < split.size(); ++i) {
        const Batch one = make_batch(split, {i});
        Tensor logits = model_forward(model, one.images, one.boxes, RunMode::Infer);
        GrayImage pred_img{S, S, std::vector<std::uint8_t>(S * S)};
        Tensor64 pred({S, S});
        for (std::size_t j = 0; j < S * S; ++j) {
            const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[j])));
            const auto q = static_cast<std::uint8_t>(std::lround(p * 255.0));
            pred_img.pixels[j] = q;
            pred[j] = static_cast<double>(q) / 255.0;
        }
        if (!pred_dir.empty()) {
            write_pgm((fs::path(pred_dir) / ("pred_" + split.names[i] + ".pgm")).string(),
                      pred_img);
        }
        const MaskPair pair{pred, mask_to_tensor(split.masks[i])};
        const MetricReport r = evaluate_pair(pair);
        out.per_image.emplace_back(split.names[i], r);
        reports.push_back(r);
    }
    out.aggregate = aggregate_reports(reports);
    return out;
}

namespace {

std::string metric_row(const MetricReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", r.s_alpha, r.f_beta_w,
                  r.e_phi_mean, r.e_phi_max, r.f_mean, r.mae);
    return buf;
}

}  // namespace

void write_metrics_csv(const std::string& path, const EvalOutcome& eval,
                       std::uint64_t config_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash));
    out << "# config_hash=" << buf << "\n";
    out << "name,s_alpha,f_beta_w,e_phi,e_x,f_m,mae\n";
    for (const auto& [name, r] : eval.per_image) {
        out << name << "," << metric_row(r) << "\n";
    }
    out << "aggregate," << metric_row(eval.aggregate) << "\n";
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.data_dir.empty()) throw std::runtime_error("run_experiment: data_dir is not set");
    const LoadedDataset train = load_dataset((fs::path(cfg.data_dir) / "train").string());
    const LoadedDataset test = load_dataset((fs::path(cfg.data_dir) / "test").string());

    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);

    ExperimentResult res;
    ToyModel model = build_model(cfg);
    res.train = train_model(model, train, cfg);
    res.checkpoint_path =
        (fs::path(cfg.out_dir) / (std::string(variant_name(cfg.variant)) + ".sttc")).string();
    save_model(res.checkpoint_path, model);
    res.eval = evaluate_model(model, test, (fs::path(cfg.out_dir) / "preds").string());
    res.metrics_csv_path =
        (fs::path(cfg.out_dir) / (std::string(variant_name(cfg.variant)) + "_metrics.csv"))
            .string();
    write_metrics_csv(res.metrics_csv_path, res.eval, cfg.hash());
    return res;
}

double positive_average(const MetricReport& r) {
    return (r.s_alpha + r.f_beta_w + r.e_phi_mean + r.f_mean + r.e_phi_max) / 5.0;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg,
                                      const std::string& csv_path) {
    cfg.validate();
    const LoadedDataset train = load_dataset((fs::path(cfg.data_dir) / "train").string());
    const LoadedDataset test = load_dataset((fs::path(cfg.data_dir) / "test").string());

    struct Setting {
        std::string name;
        Variant variant;
        std::size_t depth;
        bool scale;
    };
    const Setting settings[] = {
        {"L0", Variant::M1, 1, false},     {"L1", Variant::M2, 1, false},
        {"L2", Variant::M2, 2, false},     {"L3", Variant::M2, 3, false},
        {"L4", Variant::M2, 4, false},     {"L5", Variant::M2, 5, false},
        {"L4+eps", Variant::M2, 4, true},
    };

    std::vector<AblationRow> rows;
    for (const auto& s : settings) {
        ExperimentConfig run = cfg;
        run.variant = s.variant;
        run.rsampc_depth = s.depth;
        run.rsampc_scale = s.scale;
        ToyModel model = build_model(run);
        train_model(model, train, run);
        const EvalOutcome eval = evaluate_model(model, test);
        AblationRow row;
        row.setting = s.name;
        row.metrics = eval.aggregate;
        row.p = positive_average(eval.aggregate);
        row.n = eval.aggregate.mae;
        rows.push_back(row);
    }

    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + csv_path);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(cfg.hash()));
    out << "# config_hash=" << buf << "\n";
    out << "setting,s_alpha,f_beta_w,e_phi,f_m,e_x,mae,p,n\n";
    for (const auto& row : rows) {
        char line[320];
        std::snprintf(line, sizeof(line), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f",
                      row.setting.c_str(), row.metrics.s_alpha, row.metrics.f_beta_w,
                      row.metrics.e_phi_mean, row.metrics.f_mean, row.metrics.e_phi_max,
                      row.metrics.mae, row.p, row.n);
        out << line << "\n";
    }
    return rows;
}

}  // namespace camoseg
