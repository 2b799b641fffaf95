// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

// Random configuration generators shared by the unit tests and the acceptance binary.

#pragma once

#include "cellrender/gradients.hpp"
#include "cellrender/renderer.hpp"
#include "cellrender/rng.hpp"
#include "cellrender/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace cellrender::fixtures {

/// Relative error of an analytic derivative against the central difference of (fp, f0, fm),
/// scaled by the largest slope reachable within 10 steps (same rule as finiteDiffCheck).
/// The rounding error of the difference quotient, 4 eps max|f| / h, is allowed on top.
inline double
slopeRelError(double analytic, double fp, double f0, double fm, double h) {
    const double numeric  = (fp - fm) / (2.0 * h);
    const double curv     = (fp - 2.0 * f0 + fm) / (h * h);
    const double scale    = std::max({std::abs(analytic), std::abs(numeric), 10.0 * h * std::abs(curv), 1e-6});
    const double rounding = 4.0 * std::numeric_limits<double>::epsilon() *
                            std::max({std::abs(fp), std::abs(f0), std::abs(fm)}) / h;
    return std::max(0.0, std::abs(analytic - numeric) - rounding) / scale;
}

inline PointCloud
uniformCloud(Rng &rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<Point3> pts(n);
    for (auto &p : pts) {
        p = Point3(rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi));
    }
    return PointCloud(std::move(pts));
}

inline RenderedImage
randomImage(Rng &rng, int h, int w, int c, double sigma = 1.0) {
    RenderedImage img(h, w, c);
    for (auto &v : img.data()) {
        v = rng.normal(0.0, sigma);
    }
    return img;
}

inline RenderedImage
positiveImage(Rng &rng, int h, int w, int c, double lo = 0.5, double hi = 1.5) {
    RenderedImage img(h, w, c);
    for (auto &v : img.data()) {
        v = rng.uniform(lo, hi);
    }
    return img;
}

/// Small random rotation about a random axis.
inline Quaternion
tilt(Rng &rng, double maxAngle) {
    return randomRotation(rng, rng.uniform(0.0, maxAngle));
}

inline std::vector<ChannelSpec>
randomChannels(Rng &rng) {
    std::vector<ChannelSpec> ch;
    if (rng.uniform() < 0.7) {
        ch.push_back(ChannelSpec::range());
    }
    if (rng.uniform() < 0.5) {
        ch.push_back(ChannelSpec::depth());
    }
    if (rng.uniform() < 0.5) {
        ch.push_back(ChannelSpec::density());
    }
    if (rng.uniform() < 0.4) {
        ch.push_back(ChannelSpec::density(KernelSpec::expBand(rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5)),
                                          0.2));
    }
    if (rng.uniform() < 0.3) {
        ch.push_back(ChannelSpec::lateralDensity(rng.uniform(0.1, 1.0)));
    }
    if (ch.empty()) {
        ch.push_back(ChannelSpec::density());
    }
    return ch;
}

/// Lateral kernels with scales large enough that a 1e-4 finite-difference step is smooth.
/// Exponents >= 5 keep the Epanechnikov power C4 across its support edge, so central differences
/// stay accurate right up to the edge.
inline KernelSpec
smoothLateral(Rng &rng) {
    switch (rng.uniformInt(0, 2)) {
    case 0: return KernelSpec::gaussian(rng.uniform(0.8, 1.5));
    case 1: return KernelSpec::cauchy(rng.uniform(0.8, 1.5));
    default: return KernelSpec::epanechnikovPow(rng.uniform(5.0, 8.0), rng.uniform(2.5, 4.0));
    }
}

inline std::optional<KernelSpec>
smoothDepth(Rng &rng) {
    switch (rng.uniformInt(0, 3)) {
    case 0: return KernelSpec::triangular(rng.uniform(5.0, 8.0));
    case 1: return KernelSpec::gaussian(rng.uniform(1.0, 3.0));
    case 2: return KernelSpec::expBand(rng.uniform(0.5, 1.5), rng.uniform(1.0, 2.0));
    default: return std::nullopt;
    }
}

inline AttenuationField
randomAttenuation(Rng &rng, int n) {
    AttenuationField f;
    f.squash = rng.uniform() < 0.5 ? Squash::Tanh : Squash::Softsign;
    for (int i = 0; i < n; ++i) {
        f.components.push_back({rng.uniform(-1.0, 1.0), rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5)});
    }
    return f;
}

struct GradientCase {
    SensorGrid    grid;
    PointCloud    cloud;
    RenderParams  params;
    RenderedImage upstream;
};

/// Random smooth configuration for gradient checks. The grid looks along +z from z = -1 at a
/// cloud inside [-0.5, 0.5]^3; every cell gets its own perturbed pose, kernels and attenuation.
inline GradientCase
smoothGradientCase(Rng &rng, int maxSide = 5, std::size_t maxPoints = 40, GeometricKind geo = GeometricKind::None) {
    const int   rows = static_cast<int>(rng.uniformInt(1, maxSide));
    const int   cols = static_cast<int>(rng.uniformInt(1, maxSide));
    SensorCell  proto;
    SensorGrid  grid = SensorGrid::planar(rows, cols, proto, 1.0, -1.0);
    grid.channels    = randomChannels(rng);
    for (auto &cell : grid.cells) {
        cell.position += Point3(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.2, 0.2));
        cell.shift       = Vec2(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2));
        cell.view        = ViewTransform{tilt(rng, 0.3), rng.uniform(0.6, 1.6)};
        cell.lateral     = smoothLateral(rng);
        cell.radial      = rng.uniform() < 0.25;
        cell.depth       = cell.radial ? std::nullopt : smoothDepth(rng);
        cell.sensitivity = rng.uniform(0.5, 1.5);
        if (rng.uniform() < 0.6) {
            cell.attenuation = randomAttenuation(rng, static_cast<int>(rng.uniformInt(1, 3)));
        }
    }
    GradientCase out;
    out.cloud = uniformCloud(rng, static_cast<std::size_t>(rng.uniformInt(1, static_cast<std::int64_t>(maxPoints))), -0.5, 0.5);
    GeometricTransform g;
    if (geo == GeometricKind::Rotation) {
        g = tilt(rng, 0.5);
    } else if (geo == GeometricKind::Tps) {
        g = randomTpsWarp(rng, 0.07);
    }
    out.grid     = grid;
    out.params   = RenderParams::pack(grid, g);
    out.upstream = positiveImage(rng, rows, cols, static_cast<int>(grid.channels.size()));
    return out;
}

/// Axis-aligned planar grid on which every backend applies, with a bounded lateral kernel.
inline SensorGrid
latticeGrid(Rng &rng, int rows, int cols, std::vector<ChannelSpec> channels) {
    SensorCell proto;
    proto.lateral = rng.uniform() < 0.5 ? KernelSpec::epanechnikovPow(rng.uniform(1.0, 3.0), rng.uniform(0.05, 0.3))
                                        : KernelSpec::triangular(rng.uniform(0.05, 0.3));
    proto.radial  = rng.uniform() < 0.2;
    proto.depth   = KernelSpec::triangular(rng.uniform(2.0, 4.0));
    if (rng.uniform() < 0.3) {
        proto.attenuation = randomAttenuation(rng, 2);
    }
    SensorGrid grid = SensorGrid::planar(rows, cols, proto);
    grid.channels   = std::move(channels);
    if (proto.radial) {
        return grid;
    }
    for (auto &cell : grid.cells) {
        cell.shift       = Vec2(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05));
        cell.sensitivity = rng.uniform(0.5, 1.5);
    }
    return grid;
}

/// side x side lateral-density panels looking along +z, +x and +y at the unit ball, stacked
/// as rows. Smooth Gaussian kernels; used for pose and rectification fits.
inline SensorGrid
threeViewGrid(int side, double sigma) {
    SensorCell proto;
    proto.lateral         = KernelSpec::gaussian(sigma);
    proto.depth           = std::nullopt;
    const SensorGrid face = SensorGrid::planar(side, side, proto, 1.0, -2.0);
    SensorGrid       out  = face;
    out.rows              = 3 * side;
    out.lattice.reset();
    out.cells.clear();
    const Quaternion views[3] = {Quaternion::identity(),
                                 Quaternion::fromAxisAngle(Eigen::Vector3d::UnitY(), -M_PI / 2),
                                 Quaternion::fromAxisAngle(Eigen::Vector3d::UnitX(), M_PI / 2)};
    for (const auto &q : views) {
        for (SensorCell c : face.cells) {
            c.position      = q.toRotationMatrix().transpose() * c.position;
            c.view.rotation = q;
            out.cells.push_back(c);
        }
    }
    out.channels = {ChannelSpec::lateralDensity()};
    return out;
}

} // namespace cellrender::fixtures
