#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tmgan/common.hpp"

namespace tmgan {

// Per-frame received(1)/lost(0) indicators.
struct LossTrace {
    std::vector<uint8_t> flags;
    int frame_length_ms = 20;

    int64_t num_frames() const { return static_cast<int64_t>(flags.size()); }

    void validate() const {
        TMGAN_CHECK(!flags.empty(), FormatError, "LossTrace: empty trace");
        for (uint8_t f : flags)
            TMGAN_CHECK(f == 0 || f == 1, FormatError, "LossTrace: flag not 0/1");
    }

    int64_t lost_count() const {
        int64_t n = 0;
        for (uint8_t f : flags) n += (f == 0);
        return n;
    }

    // Length of the longest run of lost frames.
    int64_t max_burst_frames() const {
        int64_t best = 0, run = 0;
        for (uint8_t f : flags) {
            if (f == 0) best = std::max(best, ++run);
            else run = 0;
        }
        return best;
    }
};

// Burst-length class, by maximal burst duration in milliseconds.
enum class BurstClass { Short, Mid, Long, Mixed };

struct BurstBounds {
    int min_ms;  // exclusive
    int max_ms;  // inclusive
};

inline BurstBounds burst_bounds(BurstClass c) {
    switch (c) {
        case BurstClass::Short: return {0, 120};
        case BurstClass::Mid: return {120, 320};
        case BurstClass::Long: return {320, 1000};
        case BurstClass::Mixed: return {0, 1000};
    }
    throw ParamError("burst_bounds: bad class");
}

inline BurstClass parse_burst_class(const std::string& s) {
    if (s == "short") return BurstClass::Short;
    if (s == "mid") return BurstClass::Mid;
    if (s == "long") return BurstClass::Long;
    if (s == "mixed") return BurstClass::Mixed;
    throw ParamError("unknown burst class '" + s + "' (want short|mid|long|mixed)");
}

inline std::string burst_class_name(BurstClass c) {
    switch (c) {
        case BurstClass::Short: return "short";
        case BurstClass::Mid: return "mid";
        case BurstClass::Long: return "long";
        case BurstClass::Mixed: return "mixed";
    }
    return "?";
}

// Class the trace by its maximum burst, mirroring the three evaluation
// subsets. Traces with no loss report "none".
inline std::string classify_trace(const LossTrace& t) {
    int64_t ms = t.max_burst_frames() * t.frame_length_ms;
    if (ms == 0) return "none";
    if (ms <= 120) return "short";
    if (ms <= 320) return "mid";
    if (ms <= 1000) return "long";
    return "over";
}

// ---------------------------------------------------------------------------
// Trace sampling. Burst lengths follow a geometric distribution truncated to
// the class interval; gaps between bursts are sized so the expected loss rate
// matches `loss_rate`. Every maximal run of lost frames is guaranteed to lie
// inside the class bounds: bursts never merge (gap >= 1) and are only placed
// when they fit in full.
// ---------------------------------------------------------------------------

namespace detail {

// Inverse-CDF sample of a geometric distribution restricted to [lo, hi].
inline int64_t trunc_geom(Rng& rng, real_t p, int64_t lo, int64_t hi) {
    if (lo >= hi) return lo;
    real_t q = 1.0 - p;
    // P(k) proportional to q^(k-lo) for k in [lo, hi].
    real_t total = (1.0 - std::pow(q, real_t(hi - lo + 1))) / (1.0 - q);
    real_t u = rng.uniform() * total;
    real_t acc = 0.0, w = 1.0;
    for (int64_t k = lo; k <= hi; ++k) {
        acc += w;
        if (u < acc) return k;
        w *= q;
    }
    return hi;
}

inline real_t trunc_geom_mean(real_t p, int64_t lo, int64_t hi) {
    real_t q = 1.0 - p;
    real_t num = 0.0, den = 0.0, w = 1.0;
    for (int64_t k = lo; k <= hi; ++k) {
        num += k * w;
        den += w;
        w *= q;
    }
    return num / den;
}

}  // namespace detail

inline LossTrace sample_trace(uint64_t seed, int64_t num_frames, BurstClass burst_class,
                              real_t loss_rate = 0.10, int frame_length_ms = 20) {
    TMGAN_CHECK(num_frames >= 1, ParamError, "sample_trace: num_frames must be >= 1");
    TMGAN_CHECK(loss_rate >= 0.0 && loss_rate < 1.0, ParamError,
                "sample_trace: loss_rate must be in [0, 1)");
    BurstBounds b = burst_bounds(burst_class);
    int64_t min_f = b.min_ms / frame_length_ms + 1;  // strictly above min_ms
    int64_t max_f = b.max_ms / frame_length_ms;
    TMGAN_CHECK(max_f >= min_f, ParamError, "sample_trace: degenerate class bounds");
    if (loss_rate > 0.0)
        TMGAN_CHECK(min_f <= num_frames, ParamError,
                    "sample_trace: shortest class burst exceeds trace length");

    LossTrace t;
    t.frame_length_ms = frame_length_ms;
    t.flags.assign(static_cast<size_t>(num_frames), 1);
    if (loss_rate == 0.0) return t;

    Rng rng(seed);
    real_t p_burst = 2.0 / static_cast<real_t>(min_f + max_f);
    real_t mean_burst = detail::trunc_geom_mean(p_burst, min_f, max_f);
    real_t mean_gap = std::max(real_t(1.0), mean_burst * (1.0 - loss_rate) / loss_rate);
    // gap = 1 + Geom(p_gap) on {0,1,...}
    real_t p_gap = 1.0 / std::max(real_t(1.0), mean_gap);

    auto draw_gap = [&]() -> int64_t {
        int64_t g = 0;
        while (rng.uniform() >= p_gap && g < num_frames) ++g;
        return 1 + g;
    };

    int64_t pos = rng.uniform_int(0, std::max<int64_t>(0, int64_t(mean_gap)));
    bool placed = false;
    while (pos < num_frames) {
        int64_t len = detail::trunc_geom(rng, p_burst, min_f, max_f);
        if (pos + len > num_frames) break;  // never truncate a burst
        for (int64_t i = pos; i < pos + len; ++i) t.flags[size_t(i)] = 0;
        placed = true;
        pos += len + draw_gap();
    }
    if (!placed) {
        // Guarantee at least one burst when one fits.
        int64_t hi = std::min(max_f, num_frames);
        int64_t len = detail::trunc_geom(rng, p_burst, min_f, hi);
        int64_t start = rng.uniform_int(0, num_frames - len);
        for (int64_t i = start; i < start + len; ++i) t.flags[size_t(i)] = 0;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Trace text format: header "# frame_ms=<n>", then one "0"/"1" line per frame.
// ---------------------------------------------------------------------------

inline void write_trace(const std::string& path, const LossTrace& trace) {
    trace.validate();
    std::ofstream f(path, std::ios::trunc);
    TMGAN_CHECK(f.good(), FormatError, "write_trace: cannot open " + path);
    f << "# frame_ms=" << trace.frame_length_ms << "\n";
    for (uint8_t flag : trace.flags) f << int(flag) << "\n";
    TMGAN_CHECK(f.good(), FormatError, "write_trace: write failed for " + path);
}

inline LossTrace read_trace(const std::string& path) {
    std::ifstream f(path);
    TMGAN_CHECK(f.good(), FormatError, "read_trace: cannot open " + path);
    std::string line;
    TMGAN_CHECK(static_cast<bool>(std::getline(f, line)), FormatError,
                "read_trace: empty file " + path);
    LossTrace t;
    const std::string prefix = "# frame_ms=";
    TMGAN_CHECK(line.rfind(prefix, 0) == 0, FormatError,
                "read_trace: malformed header '" + line + "'");
    try {
        size_t used = 0;
        t.frame_length_ms = std::stoi(line.substr(prefix.size()), &used);
    } catch (const std::exception&) {
        throw FormatError("read_trace: malformed header '" + line + "'");
    }
    TMGAN_CHECK(t.frame_length_ms > 0, FormatError, "read_trace: frame_ms must be positive");
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        if (line == "0") t.flags.push_back(0);
        else if (line == "1") t.flags.push_back(1);
        else throw FormatError("read_trace: bad flag line '" + line + "'");
    }
    t.validate();
    return t;
}

}  // namespace tmgan
