// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cellrender/renderer.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace cellrender {

struct ParamGradients {
    std::vector<double>          params; // same layout as RenderParams::values
    std::vector<Eigen::Vector3d> points; // w.r.t. the input (untransformed) points
};

/// Reverse pass of render(grid, cloud, params) for the scalar sum(upstream * image).
///
/// Sum channels get exact chain-rule gradients; max channels route the gradient to the argmax
/// point only (lowest index on ties); the depth channel is differentiated through the depth
/// of its selected point. Forward quantities are recomputed with the same candidate sets as
/// the forward pass, so culled interactions contribute exactly zero.
ParamGradients renderBackward(const SensorGrid &grid, const PointCloud &cloud,
                              const RenderParams &params, const RenderedImage &upstream,
                              const RenderOptions &options = {});

/// sum(upstream * image), accumulated in a fixed order.
double weightedImageSum(const RenderedImage &upstream, const RenderedImage &image);

// ---------------------------------------------------------------------------------------
// Finite differences

/// f(x) where `changed` names the single coordinate that differs from the base point (or
/// SIZE_MAX); closures may use it to recompute only what that coordinate touches, as long as
/// differences f(x + h) - f(x - h) are preserved.
using ScalarClosure    = std::function<double(std::span<const double> x, std::size_t changed)>;
using SignatureClosure =
    std::function<std::vector<std::int64_t>(std::span<const double> x, std::size_t changed)>;

struct FiniteDiffOptions {
    double                   step       = 1e-4;
    double                   tolerance  = 1e-4;
    double                   floor      = 1e-6; // denominator floor of the relative error
    double                   kinkFactor = 10.0; // kink probe distance in steps
    std::vector<std::size_t> coordinates;       // empty: every coordinate
};

struct CoordinateCheck {
    std::size_t index     = 0;
    double      analytic  = 0.0;
    double      numeric   = 0.0;
    double      curvature = 0.0; // second difference along the coordinate
    double      scale     = 0.0; // denominator of relError
    double      relError  = 0.0;
};

struct FiniteDiffReport {
    double                       maxRelError = 0.0;
    std::vector<CoordinateCheck> checked;
    std::vector<CoordinateCheck> offending; // relError >= tolerance
    std::vector<std::size_t>     excluded;  // kink within kinkFactor * step
    std::vector<ParamClass>      classes;   // per coordinate, when known

    bool
    passed() const {
        return offending.empty();
    }
};

/// Central differences per coordinate against `analytic`. When `signature` is given, any
/// coordinate whose signature changes at x +- kinkFactor * step is excluded instead of tested.
///
/// relError = |analytic - numeric| / max(|analytic|, |numeric|, kinkFactor * step * |f''|, floor)
/// where f'' is the second difference from the same evaluations, i.e. the slope scale within
/// the probe window.
FiniteDiffReport finiteDiffCheck(const ScalarClosure &f, std::span<const double> x,
                                 std::span<const double> analytic,
                                 const FiniteDiffOptions &options   = {},
                                 const SignatureClosure  &signature = {});

/// Checks renderBackward on the coordinates [params..., point x y z...].
FiniteDiffReport checkRenderGradients(const SensorGrid &grid, const PointCloud &cloud,
                                      const RenderParams &params, const RenderedImage &upstream,
                                      const FiniteDiffOptions &options       = {},
                                      const RenderOptions     &renderOptions = {});

} // namespace cellrender
