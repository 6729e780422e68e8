#pragma once

#include <string>
#include <utility>
#include <vector>

#include "camoseg/checkpoint.hpp"
#include "camoseg/config.hpp"
#include "camoseg/dataset.hpp"
#include "camoseg/metrics.hpp"
#include "camoseg/model.hpp"

namespace camoseg {

struct TrainSummary {
    double initial_loss = 0;  // loss on the first batch before any update
    double final_loss = 0;    // loss on the same batch after training
    std::vector<double> step_losses;
};

struct EvalOutcome {
    std::vector<std::pair<std::string, MetricReport>> per_image;  // sorted by name
    MetricReport aggregate;
};

ToyModel build_model(const ExperimentConfig& cfg);

// Plain gradient descent over round-robin batches of the training split.
TrainSummary train_model(ToyModel& model, const LoadedDataset& train,
                         const ExperimentConfig& cfg);

// Inference-mode evaluation over a split. Predictions are quantized to 8-bit
// before scoring (and dumped as pred_<name>.pgm when pred_dir is non-empty)
// so scores match what lands on disk exactly.
EvalOutcome evaluate_model(const ToyModel& model, const LoadedDataset& split,
                           const std::string& pred_dir = "");

void write_metrics_csv(const std::string& path, const EvalOutcome& eval,
                       std::uint64_t config_hash);

struct ExperimentResult {
    TrainSummary train;
    EvalOutcome eval;
    std::string checkpoint_path;
    std::string metrics_csv_path;
};

// gen-data must have produced cfg.data_dir already; trains the configured
// variant, writes checkpoint + metrics CSV under cfg.out_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Depth/scaling sweep: L0 (baseline), L1..L5, L4+eps. One CSV row per
// setting with the six metrics plus the positive/negative averages.
struct AblationRow {
    std::string setting;
    MetricReport metrics;
    double p = 0, n = 0;
};

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg,
                                      const std::string& csv_path);

double positive_average(const MetricReport& r);

}  // namespace camoseg
