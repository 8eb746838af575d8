#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tmgan/common.hpp"
#include "tmgan/tensor.hpp"

namespace tmgan {

// Versioned binary container: magic, version, step counter, config snapshot,
// named tensors (parameters and buffers), two optimizer state blobs, CRC32
// over the payload. Truncation or bit rot fails the CRC before anything is
// applied.

inline constexpr char kCkptMagic[4] = {'T', 'M', 'G', 'N'};
inline constexpr uint32_t kCkptVersion = 1;

struct CheckpointData {
    uint64_t step = 0;
    std::string config_text;
    std::vector<std::pair<std::string, Tensor>> tensors;
    std::vector<real_t> opt_g, opt_d;
};

namespace detail {

inline void put_u32(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(uint8_t(v >> (8 * i)));
}
inline void put_u64(std::vector<uint8_t>& b, uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(uint8_t(v >> (8 * i)));
}
inline void put_f64(std::vector<uint8_t>& b, real_t v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(b, bits);
}
inline void put_str(std::vector<uint8_t>& b, const std::string& s) {
    put_u32(b, uint32_t(s.size()));
    b.insert(b.end(), s.begin(), s.end());
}

struct Reader {
    const uint8_t* p;
    size_t n, pos = 0;

    void need(size_t k) const {
        TMGAN_CHECK(pos + k <= n, CheckpointError, "checkpoint: truncated container");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(p[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    real_t f64() {
        uint64_t bits = u64();
        real_t v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str() {
        uint32_t len = u32();
        need(len);
        std::string s(reinterpret_cast<const char*>(p + pos), len);
        pos += len;
        return s;
    }
};

}  // namespace detail

inline void save_checkpoint(const std::string& path, const CheckpointData& data) {
    std::vector<uint8_t> buf;
    buf.insert(buf.end(), kCkptMagic, kCkptMagic + 4);
    detail::put_u32(buf, kCkptVersion);
    detail::put_u64(buf, data.step);
    detail::put_str(buf, data.config_text);
    detail::put_u64(buf, uint64_t(data.tensors.size()));
    for (const auto& [name, t] : data.tensors) {
        detail::put_str(buf, name);
        detail::put_u32(buf, uint32_t(t.rank()));
        for (size_t i = 0; i < t.rank(); ++i) detail::put_u64(buf, uint64_t(t.dim(i)));
        for (int64_t i = 0; i < t.numel(); ++i) detail::put_f64(buf, t[i]);
    }
    detail::put_u64(buf, uint64_t(data.opt_g.size()));
    for (real_t v : data.opt_g) detail::put_f64(buf, v);
    detail::put_u64(buf, uint64_t(data.opt_d.size()));
    for (real_t v : data.opt_d) detail::put_f64(buf, v);
    uint32_t crc = crc32_update(0, buf.data(), buf.size());
    detail::put_u32(buf, crc);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    TMGAN_CHECK(f.good(), FormatError, "save_checkpoint: cannot open " + path);
    f.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
    TMGAN_CHECK(f.good(), FormatError, "save_checkpoint: write failed for " + path);
}

inline CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    TMGAN_CHECK(f.good(), CheckpointError, "load_checkpoint: cannot open " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
    TMGAN_CHECK(buf.size() >= 12, CheckpointError, "load_checkpoint: file too short");
    TMGAN_CHECK(std::memcmp(buf.data(), kCkptMagic, 4) == 0, CheckpointError,
                "load_checkpoint: bad magic");
    uint32_t stored_crc = 0;
    for (int i = 0; i < 4; ++i) stored_crc |= uint32_t(buf[buf.size() - 4 + i]) << (8 * i);
    uint32_t crc = crc32_update(0, buf.data(), buf.size() - 4);
    TMGAN_CHECK(crc == stored_crc, CheckpointError, "load_checkpoint: CRC mismatch");

    detail::Reader r{buf.data(), buf.size() - 4};
    r.pos = 4;  // magic
    uint32_t version = r.u32();
    TMGAN_CHECK(version == kCkptVersion, CheckpointError,
                "load_checkpoint: unsupported version " + std::to_string(version));
    CheckpointData data;
    data.step = r.u64();
    data.config_text = r.str();
    uint64_t count = r.u64();
    for (uint64_t i = 0; i < count; ++i) {
        std::string name = r.str();
        uint32_t rank = r.u32();
        TMGAN_CHECK(rank <= 8, CheckpointError, "load_checkpoint: absurd tensor rank");
        std::vector<int64_t> shape;
        for (uint32_t d = 0; d < rank; ++d) shape.push_back(int64_t(r.u64()));
        Tensor t(shape);
        for (int64_t j = 0; j < t.numel(); ++j) t[j] = r.f64();
        data.tensors.emplace_back(std::move(name), std::move(t));
    }
    uint64_t ng = r.u64();
    for (uint64_t i = 0; i < ng; ++i) data.opt_g.push_back(r.f64());
    uint64_t nd = r.u64();
    for (uint64_t i = 0; i < nd; ++i) data.opt_d.push_back(r.f64());
    return data;
}

}  // namespace tmgan
