#include "camoseg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace camoseg {

namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Smooth value noise in [0,1]: a coarse random grid interpolated with a
// smoothstep kernel, three octaves.
std::vector<double> value_noise(std::size_t size, std::uint64_t seed) {
    std::vector<double> out(size * size, 0.0);
    const struct {
        std::size_t cell;
        double amp;
    } octaves[] = {{32, 0.5}, {16, 0.3}, {8, 0.2}};
    for (std::size_t o = 0; o < 3; ++o) {
        const std::size_t cell = std::max<std::size_t>(2, octaves[o].cell * size / 256);
        const std::size_t gw = size / cell + 2;
        Prng rng(derive_seed(seed, 77 + o));
        std::vector<double> grid(gw * gw);
        for (auto& g : grid) g = rng.next_double();
        for (std::size_t y = 0; y < size; ++y) {
            const double gy = static_cast<double>(y) / static_cast<double>(cell);
            const auto iy = static_cast<std::size_t>(gy);
            double fy = gy - static_cast<double>(iy);
            fy = fy * fy * (3.0 - 2.0 * fy);
            for (std::size_t x = 0; x < size; ++x) {
                const double gx = static_cast<double>(x) / static_cast<double>(cell);
                const auto ix = static_cast<std::size_t>(gx);
                double fx = gx - static_cast<double>(ix);
                fx = fx * fx * (3.0 - 2.0 * fx);
                const double v00 = grid[iy * gw + ix], v01 = grid[iy * gw + ix + 1];
                const double v10 = grid[(iy + 1) * gw + ix], v11 = grid[(iy + 1) * gw + ix + 1];
                const double v = (v00 * (1 - fx) + v01 * fx) * (1 - fy) +
                                 (v10 * (1 - fx) + v11 * fx) * fy;
                out[y * size + x] += octaves[o].amp * v;
            }
        }
    }
    return out;
}

struct BlobShape {
    double cx, cy, base_r;
    double amp[4], phase[4];  // radial wobble harmonics k = 2..5

    double radius(double theta) const {
        double f = 1.0;
        for (int k = 0; k < 4; ++k) f += amp[k] * std::cos((k + 2) * theta + phase[k]);
        return base_r * f;
    }
};

std::vector<std::uint8_t> rasterize_blob(const BlobShape& blob, std::size_t size) {
    std::vector<std::uint8_t> mask(size * size, 0);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double dy = static_cast<double>(y) - blob.cy;
            const double dx = static_cast<double>(x) - blob.cx;
            const double d = std::sqrt(dx * dx + dy * dy);
            if (d <= blob.radius(std::atan2(dy, dx))) mask[y * size + x] = 1;
        }
    }
    return mask;
}

}  // namespace

Sample gen_sample(const DataGenConfig& cfg, std::size_t index) {
    const std::size_t S = cfg.image_size;
    if (S < 16) throw std::invalid_argument("gen_sample: image_size must be >= 16");
    const std::uint64_t sample_seed = derive_seed(cfg.seed, 1000 + index);
    Prng rng(sample_seed);

    constexpr double kMargin = 2.0;
    std::vector<std::uint8_t> mask;
    double area_frac = 0;
    for (int attempt = 0; attempt < 64; ++attempt) {
        BlobShape blob{};
        const double target = rng.uniform(cfg.min_area + 0.03, cfg.max_area - 0.06);
        blob.base_r = static_cast<double>(S) * std::sqrt(target / 3.141592653589793);
        double amp_sum = 0;
        for (int k = 0; k < 4; ++k) {
            blob.amp[k] = rng.uniform(-0.10, 0.10) / (k + 1);
            blob.phase[k] = rng.uniform(0.0, kTwoPi);
            amp_sum += std::abs(blob.amp[k]);
        }
        const double rho_max = blob.base_r * (1.0 + amp_sum);
        const double lo = kMargin + rho_max + 1.0;
        const double hi = static_cast<double>(S) - 1.0 - kMargin - rho_max - 1.0;
        if (hi <= lo) continue;  // blob too large for the frame, redraw
        blob.cx = rng.uniform(lo, hi);
        blob.cy = rng.uniform(lo, hi);
        mask = rasterize_blob(blob, S);
        std::size_t count = 0;
        for (auto v : mask) count += v;
        area_frac = static_cast<double>(count) / static_cast<double>(S * S);
        if (area_frac >= cfg.min_area && area_frac <= cfg.max_area) break;
        mask.clear();
    }
    if (mask.empty()) {
        throw std::runtime_error("gen_sample: could not draw a blob inside the area band");
    }

    // Background and object textures from independent streams, small
    // per-channel tint on top, then the object/background mean luminance gap
    // is pinned to exactly delta before quantization.
    const auto bg = value_noise(S, derive_seed(sample_seed, 1));
    const auto obj = value_noise(S, derive_seed(sample_seed, 2));
    Sample out;
    out.delta = cfg.delta;
    out.image.width = S;
    out.image.height = S;
    out.image.pixels.resize(S * S * 3);
    out.mask.width = S;
    out.mask.height = S;
    out.mask.pixels.resize(S * S);

    std::vector<double> channel(S * S);
    std::vector<std::vector<double>> channels(3, std::vector<double>(S * S));
    for (std::size_t c = 0; c < 3; ++c) {
        const auto tint = value_noise(S, derive_seed(sample_seed, 10 + c));
        double bg_sum = 0, obj_sum = 0;
        std::size_t bg_n = 0, obj_n = 0;
        for (std::size_t i = 0; i < S * S; ++i) {
            const double base = mask[i] ? obj[i] : bg[i];
            const double v = 0.30 + 0.40 * base + 0.05 * (tint[i] - 0.5);
            channels[c][i] = v;
            if (mask[i]) {
                obj_sum += v;
                ++obj_n;
            } else {
                bg_sum += v;
                ++bg_n;
            }
        }
        const double shift = (bg_sum / bg_n + cfg.delta) - obj_sum / obj_n;
        for (std::size_t i = 0; i < S * S; ++i) {
            if (mask[i]) channels[c][i] += shift;
        }
    }
    for (std::size_t i = 0; i < S * S; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            const double v = std::clamp(channels[c][i], 0.0, 1.0);
            out.image.pixels[i * 3 + c] =
                static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
        out.mask.pixels[i] = mask[i] ? 255 : 0;
    }
    return out;
}

void gen_dataset(const DataGenConfig& cfg, const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::ofstream manifest(fs::path(out_dir) / "manifest.csv", std::ios::binary);
    if (!manifest) throw std::runtime_error("cannot write to " + out_dir);
    manifest << "sample,delta,area_fraction\n";
    char buf[128];
    for (std::size_t i = 0; i < cfg.count; ++i) {
        Sample s = gen_sample(cfg, i);
        std::snprintf(buf, sizeof(buf), "%04zu", i);
        const std::string stem(buf);
        write_ppm((fs::path(out_dir) / ("img_" + stem + ".ppm")).string(), s.image);
        write_pgm((fs::path(out_dir) / ("gt_" + stem + ".pgm")).string(), s.mask);
        std::size_t fg = 0;
        for (auto v : s.mask.pixels) fg += v ? 1 : 0;
        std::snprintf(buf, sizeof(buf), "%04zu,%.6g,%.6f", i, s.delta,
                      static_cast<double>(fg) / static_cast<double>(s.mask.pixels.size()));
        manifest << buf << "\n";
    }
}

LoadedDataset load_dataset(const std::string& dir) {
    LoadedDataset ds;
    std::vector<std::string> stems;
    if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("img_", 0) == 0 && entry.path().extension() == ".ppm") {
            stems.push_back(name.substr(4, name.size() - 8));
        }
    }
    std::sort(stems.begin(), stems.end());
    if (stems.empty()) throw std::runtime_error("no img_*.ppm samples in " + dir);
    for (const auto& stem : stems) {
        RgbImage img = read_ppm((fs::path(dir) / ("img_" + stem + ".ppm")).string());
        GrayImage mask = read_pgm((fs::path(dir) / ("gt_" + stem + ".pgm")).string());
        if (img.width != img.height || img.width != mask.width || mask.width != mask.height) {
            throw std::runtime_error("sample " + stem + ": image/mask extents disagree");
        }
        if (ds.image_size == 0) ds.image_size = img.width;
        if (img.width != ds.image_size) {
            throw std::runtime_error("sample " + stem + ": inconsistent image size");
        }
        ds.names.push_back(stem);
        ds.images.push_back(std::move(img));
        ds.masks.push_back(std::move(mask));
    }
    return ds;
}

BoxPrompt box_from_mask(const GrayImage& mask) {
    std::size_t rmin = mask.height, rmax = 0, cmin = mask.width, cmax = 0;
    bool any = false;
    for (std::size_t r = 0; r < mask.height; ++r) {
        for (std::size_t c = 0; c < mask.width; ++c) {
            if (mask.pixels[r * mask.width + c] >= 128) {
                any = true;
                rmin = std::min(rmin, r);
                rmax = std::max(rmax, r);
                cmin = std::min(cmin, c);
                cmax = std::max(cmax, c);
            }
        }
    }
    if (!any) throw std::invalid_argument("box_from_mask: empty mask");
    BoxPrompt b;
    b.x0 = static_cast<double>(cmin) / static_cast<double>(mask.width);
    b.x1 = static_cast<double>(cmax + 1) / static_cast<double>(mask.width);
    b.y0 = static_cast<double>(rmin) / static_cast<double>(mask.height);
    b.y1 = static_cast<double>(rmax + 1) / static_cast<double>(mask.height);
    return b;
}

Tensor64 mask_to_tensor(const GrayImage& mask) {
    Tensor64 t({mask.height, mask.width});
    for (std::size_t i = 0; i < mask.pixels.size(); ++i) {
        t[i] = mask.pixels[i] >= 128 ? 1.0 : 0.0;
    }
    return t;
}

Batch make_batch(const LoadedDataset& ds, const std::vector<std::size_t>& indices) {
    const std::size_t S = ds.image_size, B = indices.size();
    Batch batch{Tensor({B, 3, S, S}), Tensor({B, 4}), Tensor({B, 1, S, S})};
    std::vector<BoxPrompt> boxes;
    boxes.reserve(B);
    for (std::size_t b = 0; b < B; ++b) {
        const auto& img = ds.images.at(indices[b]);
        const auto& mask = ds.masks.at(indices[b]);
        for (std::size_t i = 0; i < S * S; ++i) {
            for (std::size_t c = 0; c < 3; ++c) {
                batch.images.data()[((b * 3 + c) * S * S) + i] =
                    static_cast<float>(img.pixels[i * 3 + c]) / 255.0f - 0.5f;
            }
            batch.gt.data()[b * S * S + i] = mask.pixels[i] >= 128 ? 1.0f : 0.0f;
        }
        boxes.push_back(box_from_mask(mask));
    }
    batch.boxes = boxes_tensor<float>(boxes);
    return batch;
}

ProbeSet make_probe_set(std::size_t count, std::size_t image_size, std::uint64_t seed,
                        double delta) {
    DataGenConfig cfg;
    cfg.image_size = image_size;
    cfg.count = count;
    cfg.seed = seed;
    cfg.delta = delta;
    ProbeSet set;
    set.images = Tensor({count, 3, image_size, image_size});
    std::vector<BoxPrompt> boxes;
    const std::size_t n = image_size * image_size;
    for (std::size_t i = 0; i < count; ++i) {
        Sample s = gen_sample(cfg, i);
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t c = 0; c < 3; ++c) {
                set.images.data()[((i * 3 + c) * n) + j] =
                    static_cast<float>(s.image.pixels[j * 3 + c]) / 255.0f - 0.5f;
            }
        }
        boxes.push_back(box_from_mask(s.mask));
        set.gts.push_back(mask_to_tensor(s.mask));
    }
    set.boxes = boxes_tensor<float>(boxes);
    return set;
}

}  // namespace camoseg
