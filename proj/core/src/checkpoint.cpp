#include "camoseg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace camoseg {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error(path + ": truncated checkpoint");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

std::uint64_t get_u64(std::istream& in, const std::string& path) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw std::runtime_error(path + ": truncated checkpoint");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_u64(out, entries.size());
    for (const auto& e : entries) {
        put_u64(out, e.name.size());
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        out.put(e.frozen ? '\1' : '\0');
        put_u64(out, e.data.rank());
        for (std::size_t d = 0; d < e.data.rank(); ++d) put_u64(out, e.data.extent(d));
        for (std::size_t i = 0; i < e.data.numel(); ++i) put_f32(out, e.data[i]);
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error(path + ": not a checkpoint (bad magic)");
    }
    const std::uint32_t version = get_u32(in, path);
    if (version != kVersion) {
        throw std::runtime_error(path + ": unsupported checkpoint version " +
                                 std::to_string(version));
    }
    const std::uint64_t count = get_u64(in, path);
    std::vector<CheckpointEntry> entries;
    entries.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        const std::uint64_t name_len = get_u64(in, path);
        e.name.resize(name_len);
        in.read(e.name.data(), static_cast<std::streamsize>(name_len));
        const int frozen = in.get();
        if (!in || frozen == EOF) throw std::runtime_error(path + ": truncated checkpoint");
        e.frozen = frozen != 0;
        const std::uint64_t rank = get_u64(in, path);
        Shape shape(rank);
        for (auto& d : shape) d = get_u64(in, path);
        Tensor t(shape);
        for (std::size_t j = 0; j < t.numel(); ++j) {
            const std::uint32_t bits = get_u32(in, path);
            float v;
            std::memcpy(&v, &bits, 4);
            t[j] = v;
        }
        e.data = std::move(t);
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<CheckpointEntry> model_entries(const ToyModel& model) {
    std::vector<CheckpointEntry> e;
    auto add = [&e](const std::string& name, bool frozen, const Tensor& t) {
        e.push_back({name, frozen, t});
    };
    add("encoder.conv1.w", true, model.enc1_w);
    add("encoder.conv2.w", true, model.enc2_w);
    add("encoder.conv3.w", true, model.enc3_w);
    if (model.cfg.variant >= Variant::M2) {
        add("rsampc.ci_d.w", true, model.rsampc.ci_d);
        for (std::size_t i = 0; i < model.rsampc.si.size(); ++i) {
            add("rsampc.si" + std::to_string(i) + ".w", true, model.rsampc.si[i]);
        }
        add("rsampc.ci_r.w", true, model.rsampc.ci_r);
        if (!model.rsampc.channel_scale.empty()) {
            add("rsampc.channel_scale", true,
                Tensor::from_data({model.rsampc.channel_scale.size()},
                                  model.rsampc.channel_scale));
        }
    }
    if (model.cfg.variant == Variant::M3) {
        add("tvm.theta_k", false, model.tvm.proj.theta_k);
        add("tvm.theta_v", false, model.tvm.proj.theta_v);
        add("tvm.theta_q", false, model.tvm.proj.theta_q);
        add("tvm.w0", true, model.tvm.w0);
    }
    add("fusion.conv.w", false, model.fuse_w);
    add("fusion.conv.b", false, model.fuse_b);
    add("fusion.proj.w", false, model.proj_w);
    add("fusion.proj.b", false, model.proj_b);
    add("decoder.conv1.w", false, model.dec1_w);
    add("decoder.conv1.b", false, model.dec1_b);
    add("decoder.box.w", false, model.box_w);
    add("decoder.conv2.w", false, model.dec2_w);
    add("decoder.conv2.b", false, model.dec2_b);
    return e;
}

void load_model_weights(ToyModel& model, const std::vector<CheckpointEntry>& entries) {
    std::map<std::string, const CheckpointEntry*> by_name;
    for (const auto& e : entries) by_name[e.name] = &e;
    auto expected = model_entries(model);
    for (auto& want : expected) {
        auto it = by_name.find(want.name);
        if (it == by_name.end()) {
            throw std::runtime_error("checkpoint is missing entry '" + want.name + "'");
        }
        if (it->second->data.shape() != want.data.shape()) {
            throw std::runtime_error("checkpoint entry '" + want.name + "' has shape " +
                                     shape_str(it->second->data.shape()) + ", model expects " +
                                     shape_str(want.data.shape()));
        }
    }
    auto fetch = [&by_name](const std::string& name) -> const Tensor& {
        return by_name.at(name)->data;
    };
    model.enc1_w = fetch("encoder.conv1.w");
    model.enc2_w = fetch("encoder.conv2.w");
    model.enc3_w = fetch("encoder.conv3.w");
    if (model.cfg.variant >= Variant::M2) {
        model.rsampc.ci_d = fetch("rsampc.ci_d.w");
        for (std::size_t i = 0; i < model.rsampc.si.size(); ++i) {
            model.rsampc.si[i] = fetch("rsampc.si" + std::to_string(i) + ".w");
        }
        model.rsampc.ci_r = fetch("rsampc.ci_r.w");
        if (!model.rsampc.channel_scale.empty()) {
            model.rsampc.channel_scale = fetch("rsampc.channel_scale").values();
        }
    }
    if (model.cfg.variant == Variant::M3) {
        model.tvm.proj.theta_k = fetch("tvm.theta_k");
        model.tvm.proj.theta_v = fetch("tvm.theta_v");
        model.tvm.proj.theta_q = fetch("tvm.theta_q");
        model.tvm.w0 = fetch("tvm.w0");
    }
    model.fuse_w = fetch("fusion.conv.w");
    model.fuse_b = fetch("fusion.conv.b");
    model.proj_w = fetch("fusion.proj.w");
    model.proj_b = fetch("fusion.proj.b");
    model.dec1_w = fetch("decoder.conv1.w");
    model.dec1_b = fetch("decoder.conv1.b");
    model.box_w = fetch("decoder.box.w");
    model.dec2_w = fetch("decoder.conv2.w");
    model.dec2_b = fetch("decoder.conv2.b");
}

void save_model(const std::string& path, const ToyModel& model) {
    save_checkpoint(path, model_entries(model));
}

void load_model(const std::string& path, ToyModel& model) {
    load_model_weights(model, load_checkpoint(path));
}

}  // namespace camoseg
