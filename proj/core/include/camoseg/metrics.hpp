#pragma once

#include <utility>
#include <vector>

#include "camoseg/tensor.hpp"

namespace camoseg {

// One prediction/ground-truth pair. pred holds values in [0,1] (clamped on
// construction); gt is strictly binary, thresholded at 128/255 when built
// from 8-bit data. All metric computation runs in double precision.
struct MaskPair {
    Tensor64 pred;  // [rows, cols]
    Tensor64 gt;    // [rows, cols], values 0 or 1

    static MaskPair make(const Tensor64& pred, const Tensor64& gt_values);
};

struct MetricReport {
    double s_alpha = 0;
    double f_beta_w = 0;
    double e_phi_mean = 0;
    double e_phi_max = 0;
    double f_mean = 0;
    double mae = 0;
};

// Mean absolute pixel error.
double mae(const MaskPair& pair);

// Structure measure: alpha * object similarity + (1-alpha) * region
// similarity around the GT centroid. Degenerate conventions follow the
// original reference code: empty GT scores 1 - mean(pred), full GT scores
// mean(pred).
double s_measure(const MaskPair& pair, double alpha = 0.5);

// Enhanced-alignment measure evaluated at the 256 thresholds i/255; returns
// (mean over thresholds, max over thresholds). Empty/full GT falls back to
// the reference per-pixel conventions.
std::pair<double, double> e_measure(const MaskPair& pair);

// Weighted F-measure: pixel errors smeared by a 7x7 sigma=5 Gaussian over
// the GT-distance field and weighted by exponential decay exp(ln(0.5)/5 * d)
// away from the foreground; beta^2 = 1. Empty GT scores 0.
double weighted_fbeta(const MaskPair& pair);

// F-measure with beta^2 = 0.3 at the adaptive threshold min(2*mean(pred),1).
// Zero true positives (including an empty prediction or empty GT) score 0.
double f_mean(const MaskPair& pair);

MetricReport evaluate_pair(const MaskPair& pair);

// Arithmetic mean over per-image reports. Each field is summed in sorted
// order so the aggregate is exactly independent of input order.
MetricReport aggregate_reports(const std::vector<MetricReport>& reports);

}  // namespace camoseg
