#pragma once

#include <cstdint>
#include <string>

#include "camoseg/dataset.hpp"
#include "camoseg/model.hpp"

namespace camoseg {

// Every knob of an experiment run. Serialized verbatim (canonical key=value
// text) into reports, and hashed for provenance. Toy-scale defaults: full
// runs finish in minutes on one CPU core.
struct ExperimentConfig {
    std::string data_dir;
    std::string out_dir = ".";

    std::size_t image_size = 256;
    std::size_t train_count = 200;
    std::size_t test_count = 50;
    std::uint64_t data_seed = 7;
    double delta = 0.1;

    std::size_t channels = 32;
    std::size_t decoder_channels = 16;
    Variant variant = Variant::M3;
    std::size_t rsampc_depth = 4;
    bool rsampc_scale = false;
    double rsampc_scale_spread = 0.1;
    double ttt_eta = 0.005;
    std::size_t ttt_mini_batch = 16;
    bool ttt_residual = false;
    bool tvm_sum_details = false;
    std::uint64_t model_seed = 1;

    std::size_t steps = 200;
    std::size_t batch_size = 4;
    double lr = 0.1;

    std::size_t probe_count = 32;
    std::uint64_t probe_seed = 99;

    void apply_kv(const std::string& key, const std::string& value);
    static ExperimentConfig from_file(const std::string& path);
    void merge_file(const std::string& path);

    std::string canonical() const;
    std::uint64_t hash() const;

    ModelConfig model_config() const;
    DataGenConfig data_config(std::size_t count, std::uint64_t seed) const;
    void validate() const;
};

Variant parse_variant(const std::string& s);

}  // namespace camoseg
