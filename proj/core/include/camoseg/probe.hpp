#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "camoseg/metrics.hpp"
#include "camoseg/model.hpp"

namespace camoseg {

// Per-channel sensitivity: how much the aggregate probe metric (structure
// measure by default) drops when one embedding channel is zeroed. A positive
// delta means the channel helps (advantageous); negative means it hurts
// (adverse).
struct ChannelDelta {
    std::size_t channel = 0;
    double delta = 0;  // metric(intact) - metric(channel zeroed)
};

// Fixed, seeded evaluation set for the probe.
struct ProbeSet {
    Tensor images;                // [N, 3, S, S]
    Tensor boxes;                 // [N, 4]
    std::vector<Tensor64> gts;    // N x [S, S], binary
};

// Mean structure measure of the model over the probe set (inference mode).
double probe_metric(const ToyModel& model, const ProbeSet& set);

std::vector<ChannelDelta> channel_ablation(const ToyModel& model, const ProbeSet& set,
                                           const std::vector<std::size_t>& channels);

struct GainRow {
    std::size_t channel = 0;
    double base = 0;
    double variant = 0;
    double gain = 0;          // variant - base
    double relative_pct = 0;  // 100 * gain / |base|
    bool relative_defined = true;  // false when |base| < 1e-12
};

// Per-channel gains of a variant's deltas over a base's deltas, with the
// relative gain in percent. The channel sets must match exactly.
std::vector<GainRow> gain_table(const std::vector<ChannelDelta>& base,
                                const std::vector<ChannelDelta>& variant);

// Mean gain over the channels the base classifies as advantageous (delta>0)
// minus the mean gain over the adverse ones (delta<0); channels with a base
// delta of exactly zero are left out. Widens when beneficial channels are
// strengthened and harmful ones are suppressed; identical delta sets give 0.
double effect_distance(const std::vector<ChannelDelta>& base,
                       const std::vector<ChannelDelta>& variant);

// CSV I/O for delta and gain tables (header "channel,delta" /
// "channel,base,variant,gain,relative_gain_pct").
void write_deltas_csv(const std::string& path, const std::vector<ChannelDelta>& deltas);
std::vector<ChannelDelta> read_deltas_csv(const std::string& path);
void write_gains_csv(const std::string& path, const std::vector<GainRow>& rows,
                     double effect_dist);

}  // namespace camoseg
