#include "support/reference_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace camoseg::reference {

namespace {

constexpr double kEps = 2.220446049250313e-16;

double vec_mean(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double vec_sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = vec_mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

double ref_mae(const MaskPair& pair) {
    double s = 0;
    for (std::size_t i = 0; i < pair.pred.numel(); ++i) {
        s += std::abs(pair.pred[i] - pair.gt[i]);
    }
    return s / static_cast<double>(pair.pred.numel());
}

namespace {

double ref_object(const std::vector<double>& region) {
    if (region.empty()) return 0.0;
    const double x = vec_mean(region);
    return 2.0 * x / (x * x + 1.0 + vec_sample_std(region) + kEps);
}

struct SubMap {
    std::size_t rows = 0, cols = 0;
    std::vector<double> v;
};

SubMap crop(const Tensor64& m, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
    SubMap s;
    s.rows = r1 - r0;
    s.cols = c1 - c0;
    for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) s.v.push_back(m.at2(r, c));
    }
    return s;
}

double ref_quadrant_ssim(const SubMap& p, const SubMap& g) {
    const std::size_t n = p.v.size();
    if (n == 0) return 0.0;
    const double x = vec_mean(p.v), y = vec_mean(g.v);
    double sx2 = 0, sy2 = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx2 += (p.v[i] - x) * (p.v[i] - x);
        sy2 += (g.v[i] - y) * (g.v[i] - y);
        sxy += (p.v[i] - x) * (g.v[i] - y);
    }
    const double d = static_cast<double>(n) - 1.0 + kEps;
    sx2 /= d;
    sy2 /= d;
    sxy /= d;
    const double alpha = 4.0 * x * y * sxy;
    const double beta = (x * x + y * y) * (sx2 + sy2);
    if (alpha != 0.0) return alpha / (beta + kEps);
    if (beta == 0.0) return 1.0;
    return 0.0;
}

}  // namespace

double ref_s_measure(const MaskPair& pair) {
    const std::size_t rows = pair.pred.extent(0), cols = pair.pred.extent(1);
    const std::size_t n = rows * cols;
    double gt_sum = 0, pred_sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        gt_sum += pair.gt[i];
        pred_sum += pair.pred[i];
    }
    const double y = gt_sum / static_cast<double>(n);
    const double x = pred_sum / static_cast<double>(n);
    if (y == 0.0) return 1.0 - x;
    if (y == 1.0) return x;

    // object term
    std::vector<double> fg, bg;
    for (std::size_t i = 0; i < n; ++i) {
        if (pair.gt[i] > 0.5) fg.push_back(pair.pred[i]);
        else bg.push_back(1.0 - pair.pred[i]);
    }
    const double s_obj = y * ref_object(fg) + (1.0 - y) * ref_object(bg);

    // region term
    double sx = 0, sy = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            sx += pair.gt.at2(r, c) * static_cast<double>(c + 1);
            sy += pair.gt.at2(r, c) * static_cast<double>(r + 1);
        }
    }
    const auto cx = static_cast<std::size_t>(std::llround(sx / gt_sum));
    const auto cy = static_cast<std::size_t>(std::llround(sy / gt_sum));
    const double area = static_cast<double>(n);
    const double w[4] = {static_cast<double>(cx * cy) / area,
                         static_cast<double>((cols - cx) * cy) / area,
                         static_cast<double>(cx * (rows - cy)) / area, 0.0};
    const double w4 = 1.0 - w[0] - w[1] - w[2];
    const double q1 = ref_quadrant_ssim(crop(pair.pred, 0, cy, 0, cx), crop(pair.gt, 0, cy, 0, cx));
    const double q2 =
        ref_quadrant_ssim(crop(pair.pred, 0, cy, cx, cols), crop(pair.gt, 0, cy, cx, cols));
    const double q3 =
        ref_quadrant_ssim(crop(pair.pred, cy, rows, 0, cx), crop(pair.gt, cy, rows, 0, cx));
    const double q4 = ref_quadrant_ssim(crop(pair.pred, cy, rows, cx, cols),
                                        crop(pair.gt, cy, rows, cx, cols));
    const double s_reg = w[0] * q1 + w[1] * q2 + w[2] * q3 + w4 * q4;
    const double q = 0.5 * s_obj + 0.5 * s_reg;
    return q < 0.0 ? 0.0 : q;
}

std::pair<double, double> ref_e_measure(const MaskPair& pair) {
    const std::size_t n = pair.pred.numel();
    double gt_sum = 0;
    for (std::size_t i = 0; i < n; ++i) gt_sum += pair.gt[i];
    const double denom = static_cast<double>(n) - 1.0 + kEps;

    double total = 0, best = -1;
    for (int t = 0; t < 256; ++t) {
        const double thr = static_cast<double>(t) / 255.0;
        double e_sum = 0;
        if (gt_sum == 0.0) {
            for (std::size_t i = 0; i < n; ++i) e_sum += pair.pred[i] >= thr ? 0.0 : 1.0;
        } else if (gt_sum == static_cast<double>(n)) {
            for (std::size_t i = 0; i < n; ++i) e_sum += pair.pred[i] >= thr ? 1.0 : 0.0;
        } else {
            double fm_sum = 0;
            for (std::size_t i = 0; i < n; ++i) fm_sum += pair.pred[i] >= thr ? 1.0 : 0.0;
            const double mu_fm = fm_sum / static_cast<double>(n);
            const double mu_gt = gt_sum / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double af = (pair.pred[i] >= thr ? 1.0 : 0.0) - mu_fm;
                const double ag = pair.gt[i] - mu_gt;
                const double align = 2.0 * ag * af / (ag * ag + af * af + kEps);
                e_sum += (align + 1.0) * (align + 1.0) / 4.0;
            }
        }
        const double e = std::min(e_sum / denom, 1.0);  // same clamp as the fast path
        total += e;
        best = std::max(best, e);
    }
    return {total / 256.0, best};
}

double ref_weighted_fbeta(const MaskPair& pair) {
    const std::size_t rows = pair.pred.extent(0), cols = pair.pred.extent(1);
    const std::size_t n = rows * cols;
    std::vector<std::pair<std::size_t, std::size_t>> fg_pixels;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (pair.gt.at2(r, c) > 0.5) fg_pixels.emplace_back(r, c);
        }
    }
    if (fg_pixels.empty()) return 0.0;

    std::vector<double> err(n), err_t(n), dist(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) err[i] = std::abs(pair.pred[i] - pair.gt[i]);
    err_t = err;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (pair.gt.at2(r, c) > 0.5) continue;
            // brute force: nearest fg pixel, ties by (row, col)
            double best_d2 = 1e300;
            std::size_t br = 0, bc = 0;
            for (const auto& [fr, fc] : fg_pixels) {
                const double dr = static_cast<double>(fr) - static_cast<double>(r);
                const double dc = static_cast<double>(fc) - static_cast<double>(c);
                const double d2 = dr * dr + dc * dc;
                if (d2 < best_d2 ||
                    (d2 == best_d2 && (fr < br || (fr == br && fc < bc)))) {
                    best_d2 = d2;
                    br = fr;
                    bc = fc;
                }
            }
            err_t[r * cols + c] = err[br * cols + bc];
            dist[r * cols + c] = std::sqrt(best_d2);
        }
    }

    std::vector<double> kernel(49);
    double ksum = 0;
    for (int i = -3; i <= 3; ++i) {
        for (int j = -3; j <= 3; ++j) {
            const double k = std::exp(-(i * i + j * j) / 50.0);
            kernel[(i + 3) * 7 + (j + 3)] = k;
            ksum += k;
        }
    }
    for (auto& k : kernel) k /= ksum;

    // The smoothed error only enters through the foreground min term;
    // background pixels keep their raw error, weighted by the decay away
    // from the object.
    double ew_fg = 0, ew_bg = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t idx = r * cols + c;
            if (pair.gt[idx] > 0.5) {
                double ea = 0;
                for (int i = -3; i <= 3; ++i) {
                    for (int j = -3; j <= 3; ++j) {
                        const long long rr = static_cast<long long>(r) + i;
                        const long long cc = static_cast<long long>(c) + j;
                        if (rr < 0 || cc < 0 || rr >= static_cast<long long>(rows) ||
                            cc >= static_cast<long long>(cols)) {
                            continue;
                        }
                        ea += kernel[(i + 3) * 7 + (j + 3)] *
                              err_t[static_cast<std::size_t>(rr) * cols +
                                    static_cast<std::size_t>(cc)];
                    }
                }
                ew_fg += (ea < err[idx] ? ea : err[idx]);
            } else {
                const double importance = 2.0 - std::exp(std::log(0.5) / 5.0 * dist[idx]);
                ew_bg += err[idx] * importance;
            }
        }
    }

    const double gt_count = static_cast<double>(fg_pixels.size());
    const double tpw = gt_count - ew_fg;
    const double fpw = ew_bg;
    const double recall = 1.0 - ew_fg / gt_count;
    const double precision = tpw / (kEps + tpw + fpw);
    return 2.0 * recall * precision / (kEps + recall + precision);
}

double ref_f_mean(const MaskPair& pair) {
    const std::size_t n = pair.pred.numel();
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) any = any || pair.pred[i] > 0.0;
    if (!any) return 0.0;
    double mean_p = 0;
    for (std::size_t i = 0; i < n; ++i) mean_p += pair.pred[i];
    mean_p /= static_cast<double>(n);
    const double thr = std::min(2.0 * mean_p, 1.0);
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool b = pair.pred[i] >= thr;
        const bool g = pair.gt[i] > 0.5;
        tp += (b && g) ? 1 : 0;
        fp += (b && !g) ? 1 : 0;
        fn += (!b && g) ? 1 : 0;
    }
    if (tp == 0) return 0.0;
    const double p = tp / (tp + fp), r = tp / (tp + fn);
    return 1.3 * p * r / (0.3 * p + r);
}

}  // namespace camoseg::reference
