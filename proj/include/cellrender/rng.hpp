// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace cellrender {

/// Seeded generator with distribution transforms written out explicitly.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++ standard. The
/// standard library's distributions are implementation-defined, so uniform and normal draws
/// are derived here from raw 64-bit words. Bump kAlgorithm if any transform changes.
class Rng {
  public:
    static constexpr const char *kAlgorithm = "mt19937_64/u53-polar-v1";

    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t
    nextU64() {
        return engine_();
    }

    /// Uniform in [0, 1) with 53 random mantissa bits.
    double
    uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double
    uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    /// Uniform integer in [lo, hi] (inclusive); rejection sampling keeps it unbiased.
    std::int64_t
    uniformInt(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1u;
        if (span == 0) {
            return static_cast<std::int64_t>(engine_());
        }
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % span);
        std::uint64_t       word  = engine_();
        while (word >= limit) {
            word = engine_();
        }
        return lo + static_cast<std::int64_t>(word % span);
    }

    /// Standard normal via the Marsaglia polar method.
    double
    normal() {
        if (hasSpare_) {
            hasSpare_ = false;
            return spare_;
        }
        double u = 0.0, v = 0.0, s = 0.0;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double scale = std::sqrt(-2.0 * std::log(s) / s);
        spare_             = v * scale;
        hasSpare_          = true;
        return u * scale;
    }

    double
    normal(double mean, double stddev) {
        return mean + stddev * normal();
    }

  private:
    std::mt19937_64 engine_;
    double          spare_    = 0.0;
    bool            hasSpare_ = false;
};

} // namespace cellrender
