#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "harmonize/errors.hpp"
#include "harmonize/tensor.hpp"

namespace harmonize {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'H', 'A', 'R', 'M', 'C', 'K', 'P', 'T'};

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

// On-disk layout (all integers and floats little-endian):
//   magic[8] | version u32 | config_len u64 + bytes | meta_len u64 + bytes |
//   array_count u64 | arrays... | fnv1a64 checksum u64
// each array: name_len u32 | name | ndim u32 | dims u64[] | float32 data.
struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::string config_text;  // key=value lines echoing the training config
    std::string meta_text;    // key=value lines: step, epoch, rng state
    std::vector<NamedArray> arrays;

    const NamedArray* find(const std::string& name) const {
        for (const auto& a : arrays)
            if (a.name == name) return &a;
        return nullptr;
    }
};

namespace detail {

inline void put_u32(std::string& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& b, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::string& b, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(b, bits);
}

struct Cursor {
    const unsigned char* p;
    std::size_t remaining;
    const char* context;

    void need(std::size_t n) const {
        if (remaining < n)
            throw CheckpointError(std::string("checkpoint: truncated while reading ") + context);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        p += 4;
        remaining -= 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        p += 8;
        remaining -= 8;
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        remaining -= n;
        return s;
    }
};

inline std::uint64_t fnv1a64(const unsigned char* data, std::size_t len) {
    std::uint64_t h = 14695981039346656037ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= data[i];
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace detail

/// Serializes and atomically replaces the file at path (temp write + rename).
inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::string buf;
    buf.append(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::put_u32(buf, ck.version);
    detail::put_u64(buf, ck.config_text.size());
    buf += ck.config_text;
    detail::put_u64(buf, ck.meta_text.size());
    buf += ck.meta_text;
    detail::put_u64(buf, ck.arrays.size());
    for (const auto& a : ck.arrays) {
        if (a.data.size() != shape_numel(a.shape))
            throw CheckpointError("checkpoint: array '" + a.name + "' data does not fill its shape");
        detail::put_u32(buf, static_cast<std::uint32_t>(a.name.size()));
        buf += a.name;
        detail::put_u32(buf, static_cast<std::uint32_t>(a.shape.size()));
        for (std::size_t d : a.shape) detail::put_u64(buf, d);
        for (float v : a.data) detail::put_f32(buf, v);
    }
    detail::put_u64(buf,
                    detail::fnv1a64(reinterpret_cast<const unsigned char*>(buf.data()), buf.size()));

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("checkpoint: cannot open " + tmp + " for writing");
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw CheckpointError("checkpoint: write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw CheckpointError("checkpoint: cannot replace " + path + ": " + ec.message());
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < sizeof kCheckpointMagic + 4 + 8)
        throw CheckpointError("checkpoint: file too short: " + path);
    if (std::memcmp(buf.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
        throw CheckpointError("checkpoint: bad magic in " + path);
    const auto* base = reinterpret_cast<const unsigned char*>(buf.data());
    const std::uint64_t stored = detail::Cursor{base + buf.size() - 8, 8, "checksum"}.u64();
    if (detail::fnv1a64(base, buf.size() - 8) != stored)
        throw CheckpointError("checkpoint: checksum mismatch (corrupt or truncated): " + path);

    detail::Cursor c{base + sizeof kCheckpointMagic, buf.size() - sizeof kCheckpointMagic - 8,
                     "header"};
    Checkpoint ck;
    ck.version = c.u32();
    if (ck.version != kCheckpointVersion)
        throw CheckpointError("checkpoint: version " + std::to_string(ck.version) +
                              " unsupported (expected " + std::to_string(kCheckpointVersion) + ")");
    c.context = "config";
    ck.config_text = c.bytes(c.u64());
    c.context = "metadata";
    ck.meta_text = c.bytes(c.u64());
    c.context = "arrays";
    const std::uint64_t count = c.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
        NamedArray a;
        a.name = c.bytes(c.u32());
        const std::uint32_t ndim = c.u32();
        for (std::uint32_t d = 0; d < ndim; ++d) a.shape.push_back(c.u64());
        const std::size_t numel = shape_numel(a.shape);
        a.data.reserve(numel);
        for (std::size_t k = 0; k < numel; ++k) a.data.push_back(c.f32());
        ck.arrays.push_back(std::move(a));
    }
    if (c.remaining != 0)
        throw CheckpointError("checkpoint: trailing bytes after arrays: " + path);
    return ck;
}

/// Parses "key=value" lines (the config/meta text blocks).
inline std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(pos, end - pos);
        const std::size_t eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
        pos = end + 1;
    }
    return kv;
}

}  // namespace harmonize
