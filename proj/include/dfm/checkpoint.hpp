#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "dfm/common.hpp"
#include "dfm/model.hpp"

namespace dfm {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

/// Binary layout: "DFM1", then u32 input_dim, u32 num_hidden, u32 per hidden
/// width, u32 num_classes, u32 time_features, u32 class_embed_dim, u64
/// parameter count, then the parameters as raw f64.
inline void save_checkpoint(const std::string& path, const VelocityField& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("save_checkpoint: cannot open " + path);
    out.write("DFM1", 4);
    auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    put_u32(static_cast<std::uint32_t>(m.input_dim));
    put_u32(static_cast<std::uint32_t>(m.hidden_dims.size()));
    for (int h : m.hidden_dims) put_u32(static_cast<std::uint32_t>(h));
    put_u32(static_cast<std::uint32_t>(m.num_classes));
    put_u32(static_cast<std::uint32_t>(m.time_features));
    put_u32(static_cast<std::uint32_t>(m.class_embed_dim));
    std::uint64_t count = static_cast<std::uint64_t>(m.parameters.size());
    out.write(reinterpret_cast<const char*>(&count), 8);
    out.write(reinterpret_cast<const char*>(m.parameters.data()),
              static_cast<std::streamsize>(count * sizeof(double)));
    if (!out) throw io_error("save_checkpoint: write failed for " + path);
}

inline VelocityField load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("load_checkpoint: cannot open " + path);

    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, "DFM1", 4) != 0)
        throw format_error("load_checkpoint: " + path + " is not a checkpoint (bad magic)");

    auto get_u32 = [&]() {
        std::uint32_t v;
        in.read(reinterpret_cast<char*>(&v), 4);
        if (in.gcount() != 4)
            throw format_error("load_checkpoint: truncated header in " + path);
        return v;
    };
    VelocityField m;
    m.input_dim = static_cast<int>(get_u32());
    std::uint32_t num_hidden = get_u32();
    if (num_hidden > 1024)
        throw format_error("load_checkpoint: implausible hidden-layer count in " + path);
    m.hidden_dims.resize(num_hidden);
    for (std::uint32_t i = 0; i < num_hidden; ++i) m.hidden_dims[i] = static_cast<int>(get_u32());
    m.num_classes = static_cast<int>(get_u32());
    m.time_features = static_cast<int>(get_u32());
    m.class_embed_dim = static_cast<int>(get_u32());
    if (m.input_dim < 1 || m.num_classes < 1 || m.time_features < 1 || m.class_embed_dim < 1)
        throw format_error("load_checkpoint: invalid dimensions in " + path);
    for (int h : m.hidden_dims)
        if (h < 1) throw format_error("load_checkpoint: invalid hidden width in " + path);

    std::uint64_t count;
    in.read(reinterpret_cast<char*>(&count), 8);
    if (in.gcount() != 8) throw format_error("load_checkpoint: truncated header in " + path);
    if (count != static_cast<std::uint64_t>(m.param_count()))
        throw format_error("load_checkpoint: parameter count mismatch in " + path);

    m.parameters.resize(static_cast<Eigen::Index>(count));
    in.read(reinterpret_cast<char*>(m.parameters.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (static_cast<std::uint64_t>(in.gcount()) != count * sizeof(double))
        throw format_error("load_checkpoint: truncated parameters in " + path);
    return m;
}

/// FNV-1a over the raw bytes of a file, as a fixed-width hex string; the
/// reproducibility checks compare these.
inline std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("file_digest: cannot open " + path);
    std::uint64_t h = 1469598103934665603ull;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!in) break;
    }
    char out[17];
    static const char* hexd = "0123456789abcdef";
    for (int i = 0; i < 16; ++i) out[i] = hexd[(h >> (60 - 4 * i)) & 0xf];
    out[16] = '\0';
    return std::string(out);
}

}  // namespace dfm
