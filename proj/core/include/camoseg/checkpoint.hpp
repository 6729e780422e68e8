#pragma once

#include <string>
#include <vector>

#include "camoseg/model.hpp"
#include "camoseg/tensor.hpp"

namespace camoseg {

// On-disk weight container. Layout (all integers little-endian):
//   magic "STTC" | u32 version (=1) | u64 entry count | entries...
// entry:
//   u64 name length | name bytes | u8 frozen flag | u64 rank |
//   u64 dims[rank] | f32 data[numel]
// Entry order is the model's canonical parameter order, so a save/load
// round-trip is byte-identical.
struct CheckpointEntry {
    std::string name;
    bool frozen = false;
    Tensor data;
};

void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> load_checkpoint(const std::string& path);

// Canonical entry list of a model: frozen encoder + perturbation stack, then
// the trainable fusion/decoder/projection tensors. Variants without a module
// simply omit its entries.
std::vector<CheckpointEntry> model_entries(const ToyModel& model);

// Copies checkpoint tensors into an already-constructed model; every entry
// must exist with matching shape.
void load_model_weights(ToyModel& model, const std::vector<CheckpointEntry>& entries);

// Convenience wrappers.
void save_model(const std::string& path, const ToyModel& model);
void load_model(const std::string& path, ToyModel& model);

}  // namespace camoseg
