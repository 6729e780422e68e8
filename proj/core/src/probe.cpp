#include "camoseg/probe.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace camoseg {

namespace {

double metric_with_ablation(const ToyModel& model, const ProbeSet& set,
                            std::optional<std::size_t> channel) {
    const std::size_t n = set.images.extent(0);
    const std::size_t s = set.images.extent(2);
    std::vector<MetricReport> reports;
    reports.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor image = Tensor::from_data(
            {1, 3, s, s}, std::vector<float>(set.images.data() + i * 3 * s * s,
                                             set.images.data() + (i + 1) * 3 * s * s));
        Tensor box = Tensor::from_data(
            {1, 4},
            std::vector<float>(set.boxes.data() + i * 4, set.boxes.data() + (i + 1) * 4));
        ForwardCacheT<float>* no_cache = nullptr;
        Tensor logits = model_forward(model, image, box, RunMode::Infer, no_cache, channel);
        Tensor64 pred({s, s});
        for (std::size_t j = 0; j < s * s; ++j) {
            pred[j] = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[j])));
        }
        MetricReport r;
        r.s_alpha = s_measure(MaskPair::make(pred, set.gts[i]));
        reports.push_back(r);
    }
    return aggregate_reports(reports).s_alpha;
}

}  // namespace

double probe_metric(const ToyModel& model, const ProbeSet& set) {
    return metric_with_ablation(model, set, std::nullopt);
}

std::vector<ChannelDelta> channel_ablation(const ToyModel& model, const ProbeSet& set,
                                           const std::vector<std::size_t>& channels) {
    for (std::size_t c : channels) {
        if (c >= model.cfg.channels) {
            throw std::invalid_argument("channel_ablation: channel " + std::to_string(c) +
                                        " out of range");
        }
    }
    const double intact = probe_metric(model, set);
    std::vector<ChannelDelta> deltas;
    deltas.reserve(channels.size());
    for (std::size_t c : channels) {
        deltas.push_back({c, intact - metric_with_ablation(model, set, c)});
    }
    return deltas;
}

std::vector<GainRow> gain_table(const std::vector<ChannelDelta>& base,
                                const std::vector<ChannelDelta>& variant) {
    if (base.size() != variant.size()) {
        throw std::invalid_argument("gain_table: channel sets differ in size");
    }
    std::vector<GainRow> rows;
    rows.reserve(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        if (base[i].channel != variant[i].channel) {
            throw std::invalid_argument("gain_table: channel sets mismatch at position " +
                                        std::to_string(i));
        }
        GainRow r;
        r.channel = base[i].channel;
        r.base = base[i].delta;
        r.variant = variant[i].delta;
        r.gain = r.variant - r.base;
        if (std::abs(r.base) < 1e-12) {
            r.relative_defined = false;
            r.relative_pct = 0.0;
        } else {
            r.relative_pct = 100.0 * r.gain / std::abs(r.base);
        }
        rows.push_back(r);
    }
    return rows;
}

double effect_distance(const std::vector<ChannelDelta>& base,
                       const std::vector<ChannelDelta>& variant) {
    const auto rows = gain_table(base, variant);
    double adv_sum = 0, adv_n = 0, bad_sum = 0, bad_n = 0;
    for (const auto& r : rows) {
        if (r.base > 0) {
            adv_sum += r.gain;
            adv_n += 1;
        } else if (r.base < 0) {
            bad_sum += r.gain;
            bad_n += 1;
        }
    }
    const double adv = adv_n > 0 ? adv_sum / adv_n : 0.0;
    const double bad = bad_n > 0 ? bad_sum / bad_n : 0.0;
    return adv - bad;
}

void write_deltas_csv(const std::string& path, const std::vector<ChannelDelta>& deltas) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "channel,delta\n";
    char buf[64];
    for (const auto& d : deltas) {
        std::snprintf(buf, sizeof(buf), "%.12g", d.delta);
        out << d.channel << "," << buf << "\n";
    }
}

std::vector<ChannelDelta> read_deltas_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::vector<ChannelDelta> deltas;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (lineno == 1 && line.rfind("channel,", 0) == 0) continue;
        std::istringstream ss(line);
        std::string ch, val;
        if (!std::getline(ss, ch, ',') || !std::getline(ss, val)) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": malformed deltas row '" + line + "'");
        }
        try {
            deltas.push_back({static_cast<std::size_t>(std::stoull(ch)), std::stod(val)});
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": non-numeric deltas row '" + line + "'");
        }
    }
    return deltas;
}

void write_gains_csv(const std::string& path, const std::vector<GainRow>& rows,
                     double effect_dist) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "channel,base,variant,gain,relative_gain_pct\n";
    char buf[256];
    for (const auto& r : rows) {
        if (r.relative_defined) {
            std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12g,%.12g,%.4f", r.channel, r.base,
                          r.variant, r.gain, r.relative_pct);
        } else {
            std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12g,%.12g,undefined", r.channel,
                          r.base, r.variant, r.gain);
        }
        out << buf << "\n";
    }
    std::snprintf(buf, sizeof(buf), "# effect_distance=%.12g", effect_dist);
    out << buf << "\n";
}

}  // namespace camoseg
