#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "camoseg/model.hpp"
#include "camoseg/pnm.hpp"
#include "camoseg/probe.hpp"
#include "camoseg/tensor.hpp"

namespace camoseg {

// Synthetic camouflage data: textured backgrounds with one low-contrast
// textured blob per image. `delta` is the enforced object/background mean
// luminance difference; delta = 0 produces the camouflage limit. Objects
// never touch the image border, and their area fraction is kept inside
// [min_area, max_area].
struct DataGenConfig {
    std::size_t image_size = 256;
    std::size_t count = 0;
    std::uint64_t seed = 7;
    double delta = 0.1;
    double min_area = 0.05;
    double max_area = 0.40;
};

struct Sample {
    RgbImage image;
    GrayImage mask;  // 0 / 255
    double delta = 0;
};

Sample gen_sample(const DataGenConfig& cfg, std::size_t index);

// Writes img_NNNN.ppm / gt_NNNN.pgm pairs plus manifest.csv into out_dir
// (created if missing).
void gen_dataset(const DataGenConfig& cfg, const std::string& out_dir);

struct LoadedDataset {
    std::size_t image_size = 0;
    std::vector<std::string> names;  // sorted sample stems
    std::vector<RgbImage> images;
    std::vector<GrayImage> masks;

    std::size_t size() const { return names.size(); }
};

LoadedDataset load_dataset(const std::string& dir);

// Normalized bounding box of the mask foreground.
BoxPrompt box_from_mask(const GrayImage& mask);

// Image pixels scaled to [-0.5, 0.5]; gt as a {0,1} float map.
Batch make_batch(const LoadedDataset& ds, const std::vector<std::size_t>& indices);

Tensor64 mask_to_tensor(const GrayImage& mask);

// Fixed in-memory probe set generated from its own seed.
ProbeSet make_probe_set(std::size_t count, std::size_t image_size, std::uint64_t seed,
                        double delta);

}  // namespace camoseg
