// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cellrender/gradients.hpp"
#include "cellrender/renderer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cellrender {

// ---------------------------------------------------------------------------------------
// Losses

enum class LossKind {
    ImageMse,           // weighted per-channel mean squared error against a target image
    ClutterSuppression, // image MSE against a render of the object-labeled points only
    ChannelEnergy,      // weighted per-channel mean of squared values over a pixel mask
};

std::string_view lossKindName(LossKind kind);
LossKind         lossKindFromName(std::string_view name);

struct LossSpec {
    LossKind                     kind = LossKind::ImageMse;
    std::optional<RenderedImage> target;
    std::vector<double>          channelWeights; // empty: all 1
    std::vector<std::uint8_t>    mask;           // ChannelEnergy; empty: every pixel

    static LossSpec imageMse(RenderedImage target, std::vector<double> weights = {});
    static LossSpec clutterSuppression(std::vector<double> weights = {});
    static LossSpec channelEnergy(std::vector<std::uint8_t> mask, std::vector<double> weights = {});
};

struct LossValue {
    double        value = 0.0;
    RenderedImage gradient; // d loss / d image
};

/// Evaluates an image loss; `target` must be set for the MSE kinds.
LossValue evaluateLoss(const LossSpec &spec, const RenderedImage &image,
                       const RenderedImage *target = nullptr);

// ---------------------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind { Sgd, Adam };

struct OptimizerSpec {
    OptimizerKind kind  = OptimizerKind::Adam;
    double        lr    = 2e-4;
    double        beta1 = 0.9;
    double        beta2 = 0.999;
    double        eps   = 1e-8;
    /// Sgd only: halve the rate and retry while the loss would increase.
    bool backtracking = false;
    int  maxHalvings  = 40;
    /// Sgd only: rate multiplier after an accepted step (1 keeps it fixed).
    double growth = 1.0;

    static OptimizerSpec sgd(double lr, bool backtracking = false, double growth = 1.0);
    static OptimizerSpec adam(double lr = 2e-4, double beta1 = 0.9, double beta2 = 0.999,
                              double eps = 1e-8);
    void                 validate() const;
};

struct OptimizeOptions {
    int           steps = 100;
    OptimizerSpec optimizer;
    /// Classes updated by the optimizer; empty means every class.
    std::vector<ParamClass> freeClasses;
    RenderOptions           render;
    int                     frameEvery    = 0; // keep the rendered image every N steps (0: never)
    int                     snapshotEvery = 0; // keep the parameter vector every N steps (0: never)
};

struct TrajectoryRecord {
    int                        step = 0;
    double                     loss = 0.0;
    double                     lr   = 0.0;
    std::optional<std::size_t> snapshot; // index into Trajectory::snapshots
    std::optional<RenderedImage> frame;
};

struct Trajectory {
    std::vector<TrajectoryRecord>    records; // step 0 is the initial state
    std::vector<std::vector<double>> snapshots;
    RenderParams                     finalParams;
    bool                             aborted = false;
    std::string                      diagnostic;

    std::vector<double> losses() const;
};

/// First-order descent on the flat render parameters against an image loss. Feasibility is
/// restored after every step: bounded coordinates are clamped and quaternions renormalized.
/// A non-finite loss stops the run with `aborted` set; recorded losses are always finite.
Trajectory optimize(const PointCloud &scene, const SensorGrid &grid, const RenderParams &params0,
                    const LossSpec &loss, const OptimizeOptions &options);

/// Clamps coordinates to their lower bounds and renormalizes quaternion blocks in place.
void projectFeasible(RenderParams &params);

// ---------------------------------------------------------------------------------------
// Pose and rectification

struct PoseFitOptions {
    int           iterations = 8;
    int           innerSteps = 25;
    OptimizerSpec optimizer  = OptimizerSpec::sgd(0.05, true, 1.5);
    RenderOptions render;
};

struct PoseFitResult {
    Quaternion          rotation;     // accumulated; apply to the input cloud
    std::vector<double> updateAngles; // per outer iteration
    std::vector<double> losses;       // image loss after each outer iteration
};

/// Outer loop: rotate the input by the accumulated estimate, fit an incremental quaternion
/// against the target image, compose it onto the estimate.
PoseFitResult poseFit(const PointCloud &cloud, const RenderedImage &target, const SensorGrid &grid,
                      const PoseFitOptions &options = {});

struct RectifyFitOptions {
    int           iterations = 150;
    OptimizerSpec optimizer  = OptimizerSpec::sgd(0.05, true, 1.5);
    RenderOptions render;
};

struct RectifyFitResult {
    TpsWarp             warp;
    std::vector<double> losses; // image loss per iteration (entry 0 is the start)
    std::vector<double> rmse;   // correspondence RMSE per iteration when a reference is given
};

/// Fits TPS displacements on the default 4 x 4 control grid so the warped cloud renders like
/// the target. `reference` (corresponding undeformed points) only feeds the RMSE report.
RectifyFitResult rectifyFit(const PointCloud &cloud, const RenderedImage &target,
                            const SensorGrid &grid, const RectifyFitOptions &options = {},
                            const PointCloud *reference = nullptr);

// ---------------------------------------------------------------------------------------
// Clutter measurement

struct ClutterRatioOptions {
    double threshold = 1e-2; // pixels respond when their range value exceeds this
    int    quantiles = 4;
};

struct ClutterRatio {
    double              ratio      = 0.0;
    std::size_t         responding = 0;
    std::size_t         clutter    = 0;
    std::vector<double> quantileRatios; // by ascending depth of the selected point
    std::vector<double> quantileUpperDepth;
};

/// Fraction of responding pixels whose range-selected point is labeled clutter.
ClutterRatio clutterRatio(const RenderResult &rendered, const PointCloud &scene,
                          const ClutterRatioOptions &options = {});
/// Renders the scene (after applying params) and measures it.
ClutterRatio clutterRatio(const SensorGrid &grid, const PointCloud &scene,
                          const RenderParams &params, const ClutterRatioOptions &options = {},
                          const RenderOptions &render = {});

} // namespace cellrender
