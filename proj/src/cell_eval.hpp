// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

// Shared per-interaction math for the forward, backward and accelerated paths. Every backend
// goes through interact() and CellAccumulator so results agree bit-for-bit.

#pragma once

#include "cellrender/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace cellrender::detail {

struct CellFrame {
    const SensorCell *cell = nullptr;
    Eigen::Matrix3d   R;
    double            radius2 = std::numeric_limits<double>::infinity();

    explicit CellFrame(const SensorCell &c) : cell(&c), R(c.view.rotation.toRotationMatrix()) {
        if (auto rho = supportRadius(c.lateral)) {
            radius2 = *rho * *rho;
        }
    }
};

struct Interaction {
    Eigen::Vector3d u; // c - position
    Eigen::Vector3d v; // R u
    Eigen::Vector3d r; // kernel-space offset
    double          rho   = 0.0;
    double          f     = 0.0;
    double          omega = 1.0;
    double          base  = 0.0; // f * omega * sensitivity
};

/// Returns false when the lateral kernel vanishes for this point.
inline bool
interact(const CellFrame &frame, const Point3 &c, Interaction &it) {
    const SensorCell &cell = *frame.cell;
    it.u                   = c - cell.position;
    it.v.noalias()         = frame.R * it.u;
    it.r = {it.v.x() - cell.shift.x(), it.v.y() - cell.shift.y(), cell.view.elongation * it.v.z()};
    const double rho2 = cell.radial ? it.r.squaredNorm() : it.r.x() * it.r.x() + it.r.y() * it.r.y();
    if (rho2 > frame.radius2) {
        return false;
    }
    it.rho = std::sqrt(rho2);
    it.f   = kernelValue(cell.lateral, it.rho);
    if (!(it.f > 0.0)) {
        return false;
    }
    it.omega = cell.attenuation ? attenuationValue(*cell.attenuation, it.r.z()) : 1.0;
    it.base  = it.f * it.omega * cell.sensitivity;
    return true;
}

/// Depth factor kernel used by a channel: its own band, else the cell's depth kernel, else none.
inline const KernelSpec *
channelDepthKernel(const ChannelSpec &channel, const SensorCell &cell) {
    if (channel.kind == ChannelKind::Density) {
        if (channel.lateralOnly) {
            return nullptr;
        }
        if (channel.depthKernel) {
            return &*channel.depthKernel;
        }
    }
    return cell.depth ? &*cell.depth : nullptr;
}

inline double
depthFactor(const KernelSpec *kernel, double z) {
    return kernel ? kernelValue(*kernel, z) : 1.0;
}

/// Correctly rounded running sum (Shewchuk's non-overlapping partials, the fsum algorithm).
/// The result is the exact sum rounded once, so it does not depend on the order of the terms,
/// and scaling every term by a power of two scales the result exactly.
class ExactSum {
  public:
    void
    add(double x) {
        std::size_t used = 0;
        for (double y : partials_) {
            if (std::abs(x) < std::abs(y)) {
                std::swap(x, y);
            }
            const double hi = x + y;
            const double lo = y - (hi - x);
            if (lo != 0.0) {
                partials_[used++] = lo;
            }
            x = hi;
        }
        partials_.resize(used);
        partials_.push_back(x);
    }

    void
    merge(const ExactSum &other) {
        for (double y : other.partials_) {
            add(y);
        }
    }

    void
    clear() {
        partials_.clear();
    }

    double
    value() const {
        std::size_t n = partials_.size();
        if (n == 0) {
            return 0.0;
        }
        double hi = partials_[--n];
        double lo = 0.0;
        while (n > 0) {
            const double x = hi;
            const double y = partials_[--n];
            hi             = x + y;
            lo             = y - (hi - x);
            if (lo != 0.0) {
                break;
            }
        }
        // round half to even across the remaining partials
        if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
            const double y = lo * 2.0;
            const double x = hi + y;
            if (y == x - hi) {
                hi = x;
            }
        }
        return hi;
    }

  private:
    std::vector<double> partials_;
};

/// Running reduction state for one cell. Points must be added in ascending index order.
struct CellAccumulator {
    double                           best      = 0.0;
    std::int64_t                     bestIndex = -1;
    double                           bestDepth = 0.0;
    std::vector<ExactSum> sums; // per channel; only density channels are filled

    void
    reset(std::size_t channels) {
        best      = 0.0;
        bestIndex = -1;
        bestDepth = 0.0;
        sums.resize(channels);
        for (auto &s : sums) {
            s.clear();
        }
    }

    /// Per-channel contributions of one interaction; `terms` has one slot per channel, and
    /// only density slots are written. Returns the range response psi.
    static double
    contributions(const SensorCell &cell, const std::vector<ChannelSpec> &channels, const Interaction &it,
                  std::span<double> terms) {
        const double z = it.r.z();
        for (std::size_t k = 0; k < channels.size(); ++k) {
            if (channels[k].kind == ChannelKind::Density) {
                terms[k] = it.base * depthFactor(channelDepthKernel(channels[k], cell), z);
            }
        }
        return it.base * depthFactor(cell.depth ? &*cell.depth : nullptr, z);
    }

    void
    addTerms(const std::vector<ChannelSpec> &channels, std::size_t index, double psi, double depth,
             std::span<const double> terms) {
        if (psi > best) {
            best      = psi;
            bestIndex = static_cast<std::int64_t>(index);
            bestDepth = depth;
        }
        for (std::size_t k = 0; k < channels.size(); ++k) {
            if (channels[k].kind == ChannelKind::Density && terms[k] > 0.0) {
                sums[k].add(terms[k]);
            }
        }
    }

    void
    add(const SensorCell &cell, const std::vector<ChannelSpec> &channels, std::size_t index,
        const Interaction &it) {
        double       stack[8];
        std::vector<double> heap;
        std::span<double>   terms(stack, channels.size() <= 8 ? channels.size() : 0);
        if (channels.size() > 8) {
            heap.resize(channels.size());
            terms = heap;
        }
        const double psi = contributions(cell, channels, it, terms);
        addTerms(channels, index, psi, it.v.z(), terms);
    }

    /// Folds a later chunk of points into this one.
    void
    merge(CellAccumulator &later) {
        if (later.best > best) {
            best      = later.best;
            bestIndex = later.bestIndex;
            bestDepth = later.bestDepth;
        }
        for (std::size_t k = 0; k < sums.size(); ++k) {
            sums[k].merge(later.sums[k]);
        }
    }

    /// Writes channel values; `density` receives the raw (uncompressed) sums.
    void
    finish(const std::vector<ChannelSpec> &channels, double farValue, std::span<double> out,
           std::span<double> density) {
        for (std::size_t k = 0; k < channels.size(); ++k) {
            switch (channels[k].kind) {
            case ChannelKind::Range: out[k] = best; break;
            case ChannelKind::Depth: out[k] = bestIndex >= 0 ? bestDepth : farValue; break;
            case ChannelKind::Density: {
                const double d = sums[k].value();
                if (!density.empty()) {
                    density[k] = d;
                }
                out[k] = channels[k].compressBeta ? std::log1p(*channels[k].compressBeta * d) : d;
                break;
            }
            }
        }
    }
};

// Which smooth piece of the kernel x falls in.
inline std::int64_t
kernelRegion(const KernelSpec &k, double x) {
    switch (k.family) {
    case KernelFamily::Triangular:
        if (std::abs(x) >= k.params[0]) {
            return 0;
        }
        return x < 0.0 ? 1 : 2;
    case KernelFamily::EpanechnikovPow: return std::abs(x) < k.params[1] ? 1 : 0;
    case KernelFamily::ExpBand: return x < k.params[0] ? 1 : 2;
    default: return 0;
    }
}

/// Smooth-piece code of one interaction: kernel supports and cusps, softsign sign changes and
/// attenuation clamping. Equal codes mean the response is smooth between the two states.
inline std::int64_t
interactionCode(const SensorCell &cell, const std::vector<ChannelSpec> &channels, const Interaction &it,
                bool live) {
    std::int64_t code =
        kernelRegion(cell.lateral, std::sqrt(cell.radial ? it.r.squaredNorm() : it.r.head<2>().squaredNorm()));
    code           = code * 2 + (live ? 1 : 0);
    const double z = it.r.z();
    if (cell.depth) {
        code = code * 3 + kernelRegion(*cell.depth, z);
    }
    for (const auto &ch : channels) {
        if (ch.kind == ChannelKind::Density && ch.depthKernel && !ch.lateralOnly) {
            code = code * 3 + kernelRegion(*ch.depthKernel, z);
        }
    }
    if (cell.attenuation && cell.attenuation->squash == Squash::Softsign) {
        // softsign is only C1 where the mixture crosses zero
        double chi = 0.0;
        for (const auto &g : cell.attenuation->components) {
            const double u = (z - g.center) / g.width;
            chi += g.amplitude * std::exp(-u * u);
        }
        code = code * 2 + (chi < 0.0 ? 1 : 0);
    }
    if (cell.attenuation && cell.attenuation->clamp) {
        const double w =
            attenuationValue(AttenuationField{cell.attenuation->components, cell.attenuation->squash, false}, z);
        code = code * 2 + (w > 1.0 ? 1 : 0);
    }
    return code;
}

} // namespace cellrender::detail
