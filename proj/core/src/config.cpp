#include "camoseg/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace camoseg {

Variant parse_variant(const std::string& s) {
    if (s == "M1" || s == "m1") return Variant::M1;
    if (s == "M2" || s == "m2") return Variant::M2;
    if (s == "M3" || s == "m3") return Variant::M3;
    throw std::invalid_argument("unknown variant '" + s + "' (expected M1, M2 or M3)");
}

namespace {

bool parse_bool(const std::string& v) {
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

std::uint64_t parse_u64(const std::string& v) { return std::stoull(v); }
std::size_t parse_size(const std::string& v) { return static_cast<std::size_t>(std::stoull(v)); }
double parse_double(const std::string& v) { return std::stod(v); }

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void ExperimentConfig::apply_kv(const std::string& key, const std::string& value) {
    if (key == "data_dir") data_dir = value;
    else if (key == "out_dir") out_dir = value;
    else if (key == "image_size") image_size = parse_size(value);
    else if (key == "train_count") train_count = parse_size(value);
    else if (key == "test_count") test_count = parse_size(value);
    else if (key == "data_seed") data_seed = parse_u64(value);
    else if (key == "delta") delta = parse_double(value);
    else if (key == "channels") channels = parse_size(value);
    else if (key == "decoder_channels") decoder_channels = parse_size(value);
    else if (key == "variant") variant = parse_variant(value);
    else if (key == "rsampc_depth") rsampc_depth = parse_size(value);
    else if (key == "rsampc_scale") rsampc_scale = parse_bool(value);
    else if (key == "rsampc_scale_spread") rsampc_scale_spread = parse_double(value);
    else if (key == "ttt_eta") ttt_eta = parse_double(value);
    else if (key == "ttt_mini_batch") ttt_mini_batch = parse_size(value);
    else if (key == "ttt_residual") ttt_residual = parse_bool(value);
    else if (key == "tvm_sum_details") tvm_sum_details = parse_bool(value);
    else if (key == "model_seed") model_seed = parse_u64(value);
    else if (key == "steps") steps = parse_size(value);
    else if (key == "batch_size") batch_size = parse_size(value);
    else if (key == "lr") lr = parse_double(value);
    else if (key == "probe_count") probe_count = parse_size(value);
    else if (key == "probe_seed") probe_seed = parse_u64(value);
    else throw std::invalid_argument("unknown config key '" + key + "'");
}

void ExperimentConfig::merge_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected key=value, got '" + line + "'");
        }
        try {
            apply_kv(line.substr(0, eq), line.substr(eq + 1));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    ExperimentConfig cfg;
    cfg.merge_file(path);
    return cfg;
}

std::string ExperimentConfig::canonical() const {
    std::ostringstream os;
    os << "batch_size=" << batch_size << "\n"
       << "channels=" << channels << "\n"
       << "data_dir=" << data_dir << "\n"
       << "data_seed=" << data_seed << "\n"
       << "decoder_channels=" << decoder_channels << "\n"
       << "delta=" << fmt_double(delta) << "\n"
       << "image_size=" << image_size << "\n"
       << "lr=" << fmt_double(lr) << "\n"
       << "model_seed=" << model_seed << "\n"
       << "out_dir=" << out_dir << "\n"
       << "probe_count=" << probe_count << "\n"
       << "probe_seed=" << probe_seed << "\n"
       << "rsampc_depth=" << rsampc_depth << "\n"
       << "rsampc_scale=" << (rsampc_scale ? 1 : 0) << "\n"
       << "rsampc_scale_spread=" << fmt_double(rsampc_scale_spread) << "\n"
       << "steps=" << steps << "\n"
       << "test_count=" << test_count << "\n"
       << "train_count=" << train_count << "\n"
       << "ttt_eta=" << fmt_double(ttt_eta) << "\n"
       << "ttt_mini_batch=" << ttt_mini_batch << "\n"
       << "ttt_residual=" << (ttt_residual ? 1 : 0) << "\n"
       << "tvm_sum_details=" << (tvm_sum_details ? 1 : 0) << "\n"
       << "variant=" << variant_name(variant) << "\n";
    return os.str();
}

std::uint64_t ExperimentConfig::hash() const {
    const std::string text = canonical();
    return fnv1a64(text.data(), text.size());
}

ModelConfig ExperimentConfig::model_config() const {
    ModelConfig m;
    m.image_size = image_size;
    m.channels = channels;
    m.decoder_channels = decoder_channels;
    m.variant = variant;
    m.seed = model_seed;
    m.rsampc.depth = rsampc_depth;
    m.rsampc.channel_scale = rsampc_scale;
    m.rsampc.scale_spread = rsampc_scale_spread;
    m.tvm.ttt.inner_lr = ttt_eta;
    m.tvm.ttt.mini_batch = ttt_mini_batch;
    m.tvm.ttt.residual = ttt_residual;
    m.tvm.sum_details = tvm_sum_details;
    return m;
}

DataGenConfig ExperimentConfig::data_config(std::size_t count, std::uint64_t seed) const {
    DataGenConfig d;
    d.image_size = image_size;
    d.count = count;
    d.seed = seed;
    d.delta = delta;
    return d;
}

void ExperimentConfig::validate() const {
    model_config().validate();
    if (batch_size == 0) throw std::invalid_argument("config: batch_size must be >= 1");
    if (ttt_mini_batch == 0) throw std::invalid_argument("config: ttt_mini_batch must be >= 1");
    if (!(lr >= 0) || !(ttt_eta >= 0)) {
        throw std::invalid_argument("config: lr and ttt_eta must be >= 0");
    }
}

}  // namespace camoseg
