#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace tmgan {

using real_t = double;

// ---------------------------------------------------------------------------
// Error taxonomy. Every precondition failure maps to one of these so callers
// (and the CLI) can translate them into exit codes.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LengthError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };
struct ParamError : Error { using Error::Error; };
struct ProtocolError : Error { using Error::Error; };
struct CheckpointError : Error { using Error::Error; };
struct NanError : Error { using Error::Error; };

#define TMGAN_CHECK(cond, etype, msg)                                          \
    do {                                                                       \
        if (!(cond)) throw etype(std::string(msg));                            \
    } while (0)

// ---------------------------------------------------------------------------
// Seeded RNG. All randomness in the project funnels through this wrapper so
// runs are reproducible from a single 64-bit seed.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Derive a stream seed from a base seed and one or more stream ids.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ull));
}
inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
    return mix_seed(mix_seed(a, b), c);
}

class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t u64() { return gen_(); }

    // Uniform in [0, 1).
    real_t uniform() {
        return static_cast<real_t>(gen_() >> 11) * 0x1.0p-53;
    }

    real_t uniform(real_t lo, real_t hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive integer range.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        TMGAN_CHECK(hi >= lo, ParamError, "uniform_int: empty range");
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        if (span == 0) return static_cast<int64_t>(gen_());  // full range
        return lo + static_cast<int64_t>(gen_() % span);
    }

    real_t normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // Box-Muller; u clamped away from 0.
        real_t u = uniform();
        if (u < 1e-300) u = 1e-300;
        real_t v = uniform();
        real_t r = std::sqrt(-2.0 * std::log(u));
        real_t a = 2.0 * M_PI * v;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    real_t spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// CRC32 (IEEE) for checkpoint container integrity.
// ---------------------------------------------------------------------------

inline uint32_t crc32_update(uint32_t crc, const void* buf, size_t len) {
    static uint32_t table[256];
    static bool init = false;
    if (!init) {
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k)
                c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            table[i] = c;
        }
        init = true;
    }
    const uint8_t* p = static_cast<const uint8_t*>(buf);
    crc ^= 0xffffffffu;
    for (size_t i = 0; i < len; ++i)
        crc = table[(crc ^ p[i]) & 0xffu] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

inline bool is_finite(real_t v) { return std::isfinite(v); }

}  // namespace tmgan
