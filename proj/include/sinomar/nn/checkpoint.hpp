#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tensor.hpp"

namespace sinomar::nn {

inline constexpr char kCheckpointMagic[8] = {'S', 'M', 'A', 'R', 'C', 'K', 'P', 'T'};

/// Single-file model container: magic, little-endian u64 header length, JSON
/// header (architecture, normalization constants, seed, step count), then one
/// raw little-endian float32 block per parameter in declaration order.
inline void checkpoint_save(const std::string& path, const nlohmann::json& meta,
                            const std::vector<Tensor>& params) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint_save: cannot open " + path);
    const std::string header = meta.dump();
    f.write(kCheckpointMagic, 8);
    const uint64_t hlen = header.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const Tensor& p : params) {
        std::vector<float> block(p->value.size());
        for (size_t i = 0; i < block.size(); ++i) block[i] = static_cast<float>(p->value[i]);
        f.write(reinterpret_cast<const char*>(block.data()),
                static_cast<std::streamsize>(block.size() * sizeof(float)));
    }
    if (!f) throw std::runtime_error("checkpoint_save: write failed for " + path);
}

struct CheckpointData {
    nlohmann::json meta;
    std::vector<float> raw;  // concatenated parameter payload
};

inline CheckpointData checkpoint_read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint_read: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw std::runtime_error("checkpoint_read: bad magic in " + path);
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    std::string header(hlen, '\0');
    f.read(header.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw std::runtime_error("checkpoint_read: truncated header in " + path);
    CheckpointData out;
    out.meta = nlohmann::json::parse(header);
    std::vector<char> rest((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (rest.size() % sizeof(float) != 0)
        throw std::runtime_error("checkpoint_read: payload not float-aligned in " + path);
    out.raw.resize(rest.size() / sizeof(float));
    std::memcpy(out.raw.data(), rest.data(), rest.size());
    return out;
}

/// Copies the payload into the given parameters (declaration order), checking
/// that the total element count matches exactly.
inline void checkpoint_assign(const CheckpointData& data, std::vector<Tensor>& params) {
    size_t total = 0;
    for (const Tensor& p : params) total += p->value.size();
    if (total != data.raw.size())
        throw std::runtime_error("checkpoint_assign: parameter count mismatch");
    size_t off = 0;
    for (Tensor& p : params) {
        for (size_t i = 0; i < p->value.size(); ++i)
            p->value[i] = static_cast<double>(data.raw[off + i]);
        off += p->value.size();
    }
}

/// Rounds live parameters through float32, mirroring a save/load round trip.
inline void quantize_to_float(std::vector<Tensor>& params) {
    for (Tensor& p : params)
        for (double& v : p->value) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace sinomar::nn
