#include "camoseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace camoseg {

namespace {

constexpr double kEps = 2.220446049250313e-16;  // double machine epsilon

void check_pair(const MaskPair& p) {
    if (p.pred.rank() != 2 || !p.pred.same_shape(p.gt)) {
        throw std::invalid_argument("metrics: pred/gt must be equal-shape rank-2 maps");
    }
}

double mean_of(const double* v, std::size_t n) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return n ? s / static_cast<double>(n) : 0.0;
}

}  // namespace

MaskPair MaskPair::make(const Tensor64& pred, const Tensor64& gt_values) {
    if (pred.rank() != 2 || !pred.same_shape(gt_values)) {
        throw std::invalid_argument("MaskPair: pred/gt must be equal-shape rank-2 maps");
    }
    MaskPair p{pred, Tensor64(gt_values.shape())};
    for (auto& v : p.pred.values()) v = std::clamp(v, 0.0, 1.0);
    const double thr = 128.0 / 255.0;
    for (std::size_t i = 0; i < gt_values.numel(); ++i) {
        p.gt[i] = gt_values[i] >= thr ? 1.0 : 0.0;
    }
    return p;
}

double mae(const MaskPair& pair) {
    check_pair(pair);
    double s = 0;
    for (std::size_t i = 0; i < pair.pred.numel(); ++i) {
        s += std::abs(pair.pred[i] - pair.gt[i]);
    }
    return s / static_cast<double>(pair.pred.numel());
}

// ---------------------------------------------------------------------------
// Structure measure
// ---------------------------------------------------------------------------

namespace {

// 2x/(x^2 + 1 + sigma_x + eps) over the prediction values inside a region.
double object_score(const std::vector<double>& vals) {
    const std::size_t n = vals.size();
    if (n == 0) return 0.0;
    const double x = mean_of(vals.data(), n);
    double sx = 0.0;
    if (n > 1) {
        double ss = 0;
        for (double v : vals) ss += (v - x) * (v - x);
        sx = std::sqrt(ss / static_cast<double>(n - 1));
    }
    return 2.0 * x / (x * x + 1.0 + sx + kEps);
}

double s_object(const MaskPair& p) {
    std::vector<double> fg, bg;
    fg.reserve(p.pred.numel());
    bg.reserve(p.pred.numel());
    double mu = 0;
    for (std::size_t i = 0; i < p.pred.numel(); ++i) {
        if (p.gt[i] > 0.5) {
            fg.push_back(p.pred[i]);
            mu += 1.0;
        } else {
            bg.push_back(1.0 - p.pred[i]);
        }
    }
    mu /= static_cast<double>(p.pred.numel());
    return mu * object_score(fg) + (1.0 - mu) * object_score(bg);
}

// The region-similarity variant of SSIM used by the structure measure.
double region_ssim(const double* pred, const double* gt, std::size_t rows, std::size_t cols,
                   std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1,
                   std::size_t stride) {
    (void)rows;
    (void)cols;
    const std::size_t n = (r1 - r0) * (c1 - c0);
    if (n == 0) return 0.0;
    double x = 0, y = 0;
    for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) {
            x += pred[r * stride + c];
            y += gt[r * stride + c];
        }
    }
    x /= static_cast<double>(n);
    y /= static_cast<double>(n);
    double sx2 = 0, sy2 = 0, sxy = 0;
    for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) {
            const double dp = pred[r * stride + c] - x;
            const double dg = gt[r * stride + c] - y;
            sx2 += dp * dp;
            sy2 += dg * dg;
            sxy += dp * dg;
        }
    }
    const double denom = static_cast<double>(n) - 1.0 + kEps;
    sx2 /= denom;
    sy2 /= denom;
    sxy /= denom;
    const double alpha = 4.0 * x * y * sxy;
    const double beta = (x * x + y * y) * (sx2 + sy2);
    if (alpha != 0.0) return alpha / (beta + kEps);
    if (beta == 0.0) return 1.0;
    return 0.0;
}

double s_region(const MaskPair& p) {
    const std::size_t rows = p.pred.extent(0), cols = p.pred.extent(1);
    // GT centroid, 1-based with round-half-away-from-zero (matching the
    // reference implementation's indexing).
    double total = 0, sx = 0, sy = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double g = p.gt.at2(r, c);
            total += g;
            sx += g * static_cast<double>(c + 1);
            sy += g * static_cast<double>(r + 1);
        }
    }
    const auto cx = static_cast<std::size_t>(std::llround(sx / total));
    const auto cy = static_cast<std::size_t>(std::llround(sy / total));

    const double area = static_cast<double>(rows * cols);
    const double w1 = static_cast<double>(cx * cy) / area;
    const double w2 = static_cast<double>((cols - cx) * cy) / area;
    const double w3 = static_cast<double>(cx * (rows - cy)) / area;
    const double w4 = 1.0 - w1 - w2 - w3;

    const double* pr = p.pred.data();
    const double* gt = p.gt.data();
    const double q1 = region_ssim(pr, gt, rows, cols, 0, cy, 0, cx, cols);
    const double q2 = region_ssim(pr, gt, rows, cols, 0, cy, cx, cols, cols);
    const double q3 = region_ssim(pr, gt, rows, cols, cy, rows, 0, cx, cols);
    const double q4 = region_ssim(pr, gt, rows, cols, cy, rows, cx, cols, cols);
    return w1 * q1 + w2 * q2 + w3 * q3 + w4 * q4;
}

}  // namespace

double s_measure(const MaskPair& pair, double alpha) {
    check_pair(pair);
    const double y = mean_of(pair.gt.data(), pair.gt.numel());
    const double x = mean_of(pair.pred.data(), pair.pred.numel());
    if (y == 0.0) return 1.0 - x;
    if (y == 1.0) return x;
    const double q = alpha * s_object(pair) + (1.0 - alpha) * s_region(pair);
    return q < 0.0 ? 0.0 : q;
}

// ---------------------------------------------------------------------------
// Enhanced-alignment measure
// ---------------------------------------------------------------------------

namespace {

// Number of thresholds in {0/255,...,255/255} satisfied by p (p >= t), i.e.
// the prefix length of satisfied thresholds. Computed arithmetically and
// then corrected against the exact comparisons to stay immune to rounding.
std::size_t threshold_bin(double p) {
    auto b = static_cast<long long>(std::floor(p * 255.0)) + 1;
    b = std::clamp<long long>(b, 1, 256);
    while (b <= 255 && static_cast<double>(b) / 255.0 <= p) ++b;
    while (b > 1 && static_cast<double>(b - 1) / 255.0 > p) --b;
    return static_cast<std::size_t>(b);
}

double enhanced_value(double fm, double gt, double mu_fm, double mu_gt) {
    const double af = fm - mu_fm;
    const double ag = gt - mu_gt;
    const double align = 2.0 * ag * af / (ag * ag + af * af + kEps);
    return (align + 1.0) * (align + 1.0) / 4.0;
}

}  // namespace

std::pair<double, double> e_measure(const MaskPair& pair) {
    check_pair(pair);
    const std::size_t n = pair.pred.numel();
    double gt_count = 0;
    for (std::size_t i = 0; i < n; ++i) gt_count += pair.gt[i];

    // Per-threshold foreground counts via the cumulative histogram of bins.
    std::vector<std::size_t> hist_fg(257, 0), hist_bg(257, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t b = threshold_bin(pair.pred[i]);
        (pair.gt[i] > 0.5 ? hist_fg : hist_bg)[b] += 1;
    }
    // suffix[i] = count of pixels with bin >= i  (threshold index i-1 met).
    std::vector<double> suf_fg(258, 0), suf_bg(258, 0);
    for (std::size_t i = 256; i >= 1; --i) {
        suf_fg[i] = suf_fg[i + 1] + static_cast<double>(hist_fg[i]);
        suf_bg[i] = suf_bg[i + 1] + static_cast<double>(hist_bg[i]);
    }

    const double denom = static_cast<double>(n) - 1.0 + kEps;
    double sum = 0.0, best = -1.0;
    for (std::size_t t = 0; t < 256; ++t) {
        const double tp = suf_fg[t + 1];
        const double fp = suf_bg[t + 1];
        const double fg_total = tp + fp;
        double e;
        if (gt_count == 0.0) {
            e = (static_cast<double>(n) - fg_total) / denom;
        } else if (gt_count == static_cast<double>(n)) {
            e = fg_total / denom;
        } else {
            const double mu_fm = fg_total / static_cast<double>(n);
            const double mu_gt = gt_count / static_cast<double>(n);
            const double fn = gt_count - tp;
            const double tn = static_cast<double>(n) - gt_count - fp;
            e = (tp * enhanced_value(1, 1, mu_fm, mu_gt) +
                 fp * enhanced_value(1, 0, mu_fm, mu_gt) +
                 fn * enhanced_value(0, 1, mu_fm, mu_gt) +
                 tn * enhanced_value(0, 0, mu_fm, mu_gt)) /
                denom;
        }
        // The classical n-1 normalization overshoots 1 by n/(n-1) on exact
        // matches; the range contract wins, so clamp.
        e = std::min(e, 1.0);
        sum += e;
        best = std::max(best, e);
    }
    return {sum / 256.0, best};
}

// ---------------------------------------------------------------------------
// Weighted F-measure
// ---------------------------------------------------------------------------

namespace {

// Exact Euclidean distance transform against the GT foreground with a fully
// specified nearest choice: minimal (distance^2, row, col) lexicographically.
// A column pre-pass finds the best foreground row per column; the row scan
// then widens outward and stops once the column offset alone exceeds the
// best distance.
struct DistanceField {
    std::vector<double> d2;       // squared distance to nearest fg
    std::vector<std::size_t> idx; // linear index of that fg pixel
};

DistanceField distance_to_foreground(const Tensor64& gt) {
    const std::size_t rows = gt.extent(0), cols = gt.extent(1);
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> col_d2(rows * cols, kInf);
    std::vector<std::size_t> col_row(rows * cols, 0);
    // Nearest fg row within each column, ties to the smaller row.
    for (std::size_t c = 0; c < cols; ++c) {
        long long last = -1;
        for (std::size_t r = 0; r < rows; ++r) {
            if (gt.at2(r, c) > 0.5) last = static_cast<long long>(r);
            if (last >= 0) {
                const double d = static_cast<double>(r) - static_cast<double>(last);
                col_d2[c * rows + r] = d * d;
                col_row[c * rows + r] = static_cast<std::size_t>(last);
            }
        }
        long long next = -1;
        for (std::size_t ri = rows; ri-- > 0;) {
            if (gt.at2(ri, c) > 0.5) next = static_cast<long long>(ri);
            if (next >= 0) {
                const double d = static_cast<double>(next) - static_cast<double>(ri);
                const double d2 = d * d;
                auto& cur = col_d2[c * rows + ri];
                // strict improvement only: equal distance keeps the smaller row
                if (d2 < cur) {
                    cur = d2;
                    col_row[c * rows + ri] = static_cast<std::size_t>(next);
                }
            }
        }
    }

    DistanceField f{std::vector<double>(rows * cols, 0.0),
                    std::vector<std::size_t>(rows * cols, 0)};
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (gt.at2(r, c) > 0.5) {
                f.idx[r * cols + c] = r * cols + c;
                continue;
            }
            double best_d2 = kInf;
            std::size_t best_r = 0, best_c = 0;
            auto consider = [&](std::size_t cc) {
                const double cd = col_d2[cc * rows + r];
                if (cd == kInf) return;
                const double off = static_cast<double>(cc) > static_cast<double>(c)
                                       ? static_cast<double>(cc - c)
                                       : static_cast<double>(c - cc);
                const double d2 = cd + off * off;
                const std::size_t rr = col_row[cc * rows + r];
                if (d2 < best_d2 ||
                    (d2 == best_d2 && (rr < best_r || (rr == best_r && cc < best_c)))) {
                    best_d2 = d2;
                    best_r = rr;
                    best_c = cc;
                }
            };
            consider(c);
            for (std::size_t off = 1;; ++off) {
                const double off2 = static_cast<double>(off) * static_cast<double>(off);
                if (off2 > best_d2) break;
                if (c >= off) consider(c - off);
                if (c + off < cols) consider(c + off);
                if (c < off && c + off >= cols) break;  // nothing left to scan
            }
            f.d2[r * cols + c] = best_d2;
            f.idx[r * cols + c] = best_r * cols + best_c;
        }
    }
    return f;
}

}  // namespace

double weighted_fbeta(const MaskPair& pair) {
    check_pair(pair);
    const std::size_t rows = pair.pred.extent(0), cols = pair.pred.extent(1);
    const std::size_t n = rows * cols;
    double gt_count = 0;
    for (std::size_t i = 0; i < n; ++i) gt_count += pair.gt[i];
    if (gt_count == 0.0) return 0.0;

    std::vector<double> err(n);
    for (std::size_t i = 0; i < n; ++i) err[i] = std::abs(pair.pred[i] - pair.gt[i]);

    const DistanceField field = distance_to_foreground(pair.gt);
    std::vector<double> err_t = err;
    for (std::size_t i = 0; i < n; ++i) {
        if (pair.gt[i] < 0.5) err_t[i] = err[field.idx[i]];
    }

    // 7x7 Gaussian (sigma 5), zero-padded correlation.
    double kernel[7][7];
    double ksum = 0;
    for (int i = 0; i < 7; ++i) {
        for (int j = 0; j < 7; ++j) {
            const double di = i - 3, dj = j - 3;
            kernel[i][j] = std::exp(-(di * di + dj * dj) / (2.0 * 25.0));
            ksum += kernel[i][j];
        }
    }
    for (auto& row : kernel)
        for (auto& v : row) v /= ksum;

    std::vector<double> ea(n, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            double acc = 0;
            for (int i = 0; i < 7; ++i) {
                const long long rr = static_cast<long long>(r) + i - 3;
                if (rr < 0 || rr >= static_cast<long long>(rows)) continue;
                for (int j = 0; j < 7; ++j) {
                    const long long cc = static_cast<long long>(c) + j - 3;
                    if (cc < 0 || cc >= static_cast<long long>(cols)) continue;
                    acc += kernel[i][j] * err_t[static_cast<std::size_t>(rr) * cols +
                                                static_cast<std::size_t>(cc)];
                }
            }
            ea[r * cols + c] = acc;
        }
    }

    const double decay = std::log(0.5) / 5.0;
    double ew_fg_sum = 0, ew_bg_sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double min_e = err[i];
        double importance = 1.0;
        if (pair.gt[i] > 0.5) {
            if (ea[i] < err[i]) min_e = ea[i];
        } else {
            importance = 2.0 - std::exp(decay * std::sqrt(field.d2[i]));
        }
        const double ew = min_e * importance;
        (pair.gt[i] > 0.5 ? ew_fg_sum : ew_bg_sum) += ew;
    }

    const double tpw = gt_count - ew_fg_sum;
    const double fpw = ew_bg_sum;
    const double recall = 1.0 - ew_fg_sum / gt_count;
    const double precision = tpw / (kEps + tpw + fpw);
    return 2.0 * recall * precision / (kEps + recall + precision);
}

// ---------------------------------------------------------------------------
// Mean F-measure
// ---------------------------------------------------------------------------

double f_mean(const MaskPair& pair) {
    check_pair(pair);
    const std::size_t n = pair.pred.numel();
    double max_p = 0;
    for (std::size_t i = 0; i < n; ++i) max_p = std::max(max_p, pair.pred[i]);
    if (max_p == 0.0) return 0.0;  // empty prediction convention
    const double thr = std::min(2.0 * mean_of(pair.pred.data(), n), 1.0);
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool bin = pair.pred[i] >= thr;
        const bool g = pair.gt[i] > 0.5;
        if (bin && g) tp += 1;
        else if (bin) fp += 1;
        else if (g) fn += 1;
    }
    if (tp == 0.0) return 0.0;
    const double precision = tp / (tp + fp);
    const double recall = tp / (tp + fn);
    constexpr double beta2 = 0.3;
    return (1.0 + beta2) * precision * recall / (beta2 * precision + recall);
}

MetricReport evaluate_pair(const MaskPair& pair) {
    MetricReport r;
    r.s_alpha = s_measure(pair);
    r.f_beta_w = weighted_fbeta(pair);
    const auto [em, ex] = e_measure(pair);
    r.e_phi_mean = em;
    r.e_phi_max = ex;
    r.f_mean = f_mean(pair);
    r.mae = mae(pair);
    return r;
}

namespace {

double sorted_mean(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

MetricReport aggregate_reports(const std::vector<MetricReport>& reports) {
    std::vector<double> a, b, c, d, e, f;
    a.reserve(reports.size());
    for (const auto& r : reports) {
        a.push_back(r.s_alpha);
        b.push_back(r.f_beta_w);
        c.push_back(r.e_phi_mean);
        d.push_back(r.e_phi_max);
        e.push_back(r.f_mean);
        f.push_back(r.mae);
    }
    MetricReport out;
    out.s_alpha = sorted_mean(std::move(a));
    out.f_beta_w = sorted_mean(std::move(b));
    out.e_phi_mean = sorted_mean(std::move(c));
    out.e_phi_max = sorted_mean(std::move(d));
    out.f_mean = sorted_mean(std::move(e));
    out.mae = sorted_mean(std::move(f));
    return out;
}

}  // namespace camoseg
