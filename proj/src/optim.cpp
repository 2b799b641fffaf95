// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#include "cellrender/optim.hpp"

#include "cellrender/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace cellrender {

std::string_view
lossKindName(LossKind kind) {
    switch (kind) {
    case LossKind::ImageMse: return "image_mse";
    case LossKind::ClutterSuppression: return "clutter_suppression";
    case LossKind::ChannelEnergy: return "channel_energy";
    }
    return "unknown";
}

LossKind
lossKindFromName(std::string_view name) {
    for (auto k : {LossKind::ImageMse, LossKind::ClutterSuppression, LossKind::ChannelEnergy}) {
        if (lossKindName(k) == name) {
            return k;
        }
    }
    throw InvalidParameter("unknown loss kind '" + std::string(name) + "'");
}

LossSpec
LossSpec::imageMse(RenderedImage target, std::vector<double> weights) {
    LossSpec s;
    s.kind           = LossKind::ImageMse;
    s.target         = std::move(target);
    s.channelWeights = std::move(weights);
    return s;
}

LossSpec
LossSpec::clutterSuppression(std::vector<double> weights) {
    LossSpec s;
    s.kind           = LossKind::ClutterSuppression;
    s.channelWeights = std::move(weights);
    return s;
}

LossSpec
LossSpec::channelEnergy(std::vector<std::uint8_t> mask, std::vector<double> weights) {
    LossSpec s;
    s.kind           = LossKind::ChannelEnergy;
    s.mask           = std::move(mask);
    s.channelWeights = std::move(weights);
    return s;
}

LossValue
evaluateLoss(const LossSpec &spec, const RenderedImage &image, const RenderedImage *target) {
    const int         nCh = image.channels();
    const std::size_t nPx = image.pixelCount();
    if (!spec.channelWeights.empty() && spec.channelWeights.size() != static_cast<std::size_t>(nCh)) {
        throw InvalidParameter("loss: channel weight count does not match the image");
    }
    auto weight = [&](int c) { return spec.channelWeights.empty() ? 1.0 : spec.channelWeights[c]; };

    LossValue out;
    out.gradient = RenderedImage(image.height(), image.width(), nCh);
    if (spec.kind == LossKind::ChannelEnergy) {
        if (!spec.mask.empty() && spec.mask.size() != nPx) {
            throw InvalidParameter("loss: mask size does not match the image");
        }
        std::size_t active = 0;
        for (std::size_t p = 0; p < nPx; ++p) {
            active += spec.mask.empty() || spec.mask[p] ? 1 : 0;
        }
        if (active == 0) {
            return out;
        }
        for (int c = 0; c < nCh; ++c) {
            const auto img = image.channel(c);
            auto       g   = out.gradient.channel(c);
            double     s   = 0.0;
            for (std::size_t p = 0; p < nPx; ++p) {
                if (spec.mask.empty() || spec.mask[p]) {
                    s += img[p] * img[p];
                    g[p] = 2.0 * weight(c) * img[p] / static_cast<double>(active);
                }
            }
            out.value += weight(c) * s / static_cast<double>(active);
        }
        return out;
    }
    if (!target) {
        throw InvalidParameter("loss: target image required");
    }
    if (!target->sameShape(image)) {
        throw InvalidParameter("loss: target shape does not match the rendered image");
    }
    if (nPx == 0) {
        return out;
    }
    for (int c = 0; c < nCh; ++c) {
        const auto img = image.channel(c);
        const auto tgt = target->channel(c);
        auto       g   = out.gradient.channel(c);
        double     s   = 0.0;
        for (std::size_t p = 0; p < nPx; ++p) {
            const double d = img[p] - tgt[p];
            s += d * d;
            g[p] = 2.0 * weight(c) * d / static_cast<double>(nPx);
        }
        out.value += weight(c) * s / static_cast<double>(nPx);
    }
    return out;
}

OptimizerSpec
OptimizerSpec::sgd(double lr, bool backtracking, double growth) {
    OptimizerSpec s;
    s.kind         = OptimizerKind::Sgd;
    s.lr           = lr;
    s.backtracking = backtracking;
    s.growth       = growth;
    return s;
}

OptimizerSpec
OptimizerSpec::adam(double lr, double beta1, double beta2, double eps) {
    OptimizerSpec s;
    s.kind  = OptimizerKind::Adam;
    s.lr    = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps   = eps;
    return s;
}

void
OptimizerSpec::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) {
        throw InvalidParameter("optimizer: learning rate must be finite and >= 0");
    }
    if (kind == OptimizerKind::Adam) {
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0)) {
            throw InvalidParameter("optimizer: adam needs 0 <= beta < 1 and eps > 0");
        }
    }
    if (!(growth >= 1.0) || !std::isfinite(growth) || maxHalvings < 0) {
        throw InvalidParameter("optimizer: growth must be >= 1 and halvings >= 0");
    }
}

std::vector<double>
Trajectory::losses() const {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto &r : records) {
        out.push_back(r.loss);
    }
    return out;
}

void
projectFeasible(RenderParams &params) {
    auto       &v = params.values;
    const auto &L = params.layout;
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = std::max(v[i], L.lowerBounds[i]);
    }
    auto normalize = [&](std::size_t o) {
        const double n2 = v[o] * v[o] + v[o + 1] * v[o + 1] + v[o + 2] * v[o + 2] + v[o + 3] * v[o + 3];
        const double n  = std::sqrt(n2);
        // same tolerance as Quaternion construction, so unit blocks are left bit-identical
        if (std::abs(n2 - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon()) {
            return;
        }
        if (n > 0.0 && std::isfinite(n)) {
            for (std::size_t k = 0; k < 4; ++k) {
                v[o + k] /= n;
            }
        } else {
            v[o]     = 1.0;
            v[o + 1] = v[o + 2] = v[o + 3] = 0.0;
        }
    };
    for (std::size_t k = 0; k + 1 < L.cellOffsets.size(); ++k) {
        normalize(L.cellOffsets[k] + 5);
    }
    if (L.geometric == GeometricKind::Rotation) {
        normalize(L.geometricOffset());
    }
}

namespace {

struct Evaluation {
    double        loss = 0.0;
    RenderedImage image;
    RenderedImage upstream;
};

} // namespace

Trajectory
optimize(const PointCloud &scene, const SensorGrid &grid, const RenderParams &params0,
         const LossSpec &loss, const OptimizeOptions &options) {
    if (options.steps < 1) {
        throw InvalidParameter("optimize: steps must be >= 1");
    }
    options.optimizer.validate();
    if (scene.empty()) {
        throw InvalidInput("optimize: empty scene");
    }
    params0.applyTo(grid); // validates layout and values

    std::optional<RenderedImage> target = loss.target;
    if (loss.kind == LossKind::ClutterSuppression) {
        const PointCloud object = scene.select(PointLabel::Object);
        if (object.empty()) {
            throw InvalidInput("optimize: clutter suppression needs object-labeled points");
        }
        target = render(grid, object, params0, options.render);
    }
    if (target && (target->height() != grid.rows || target->width() != grid.cols ||
                   target->channels() != static_cast<int>(grid.channels.size()))) {
        throw InvalidParameter("optimize: target dimensions do not match the grid");
    }

    std::vector<std::uint8_t> free(params0.layout.size(), 1);
    if (!options.freeClasses.empty()) {
        for (std::size_t i = 0; i < free.size(); ++i) {
            free[i] = std::find(options.freeClasses.begin(), options.freeClasses.end(),
                                params0.layout.classes[i]) != options.freeClasses.end();
        }
    }

    auto evaluate = [&](const RenderParams &p) {
        Evaluation e;
        e.image         = render(grid, scene, p, options.render);
        LossValue lv    = evaluateLoss(loss, e.image, target ? &*target : nullptr);
        e.loss          = lv.value;
        e.upstream      = std::move(lv.gradient);
        return e;
    };

    Trajectory   traj;
    RenderParams params = params0;
    Evaluation   cur    = evaluate(params);
    const auto  &opt    = options.optimizer;
    double       lr     = opt.lr;

    auto record = [&](int step) {
        TrajectoryRecord r;
        r.step = step;
        r.loss = cur.loss;
        r.lr   = lr;
        if (options.snapshotEvery > 0 && step % options.snapshotEvery == 0) {
            r.snapshot = traj.snapshots.size();
            traj.snapshots.push_back(params.values);
        }
        if (options.frameEvery > 0 && step % options.frameEvery == 0) {
            r.frame = cur.image;
        }
        traj.records.push_back(std::move(r));
    };
    auto abort = [&](int step, const std::string &why) {
        std::ostringstream msg;
        msg << "optimize: step " << step << ": " << why;
        traj.aborted    = true;
        traj.diagnostic = msg.str();
    };

    if (!std::isfinite(cur.loss)) {
        abort(0, "non-finite initial loss");
        traj.finalParams = params;
        return traj;
    }
    record(0);

    const std::size_t   n = params.values.size();
    std::vector<double> m(n, 0.0), v(n, 0.0);
    for (int step = 1; step <= options.steps; ++step) {
        const ParamGradients grads = renderBackward(grid, scene, params, cur.upstream, options.render);
        std::vector<double>  g     = grads.params;
        for (std::size_t i = 0; i < n; ++i) {
            if (!free[i]) {
                g[i] = 0.0;
            }
            if (!std::isfinite(g[i])) {
                abort(step, "non-finite gradient");
                traj.finalParams = params;
                return traj;
            }
        }

        if (opt.kind == OptimizerKind::Adam) {
            const double b1t = 1.0 - std::pow(opt.beta1, step);
            const double b2t = 1.0 - std::pow(opt.beta2, step);
            RenderParams cand = params;
            for (std::size_t i = 0; i < n; ++i) {
                m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
                v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
                if (free[i]) {
                    cand.values[i] -= lr * (m[i] / b1t) / (std::sqrt(v[i] / b2t) + opt.eps);
                }
            }
            projectFeasible(cand);
            Evaluation next = evaluate(cand);
            if (!std::isfinite(next.loss)) {
                abort(step, "non-finite loss");
                break;
            }
            params = std::move(cand);
            cur    = std::move(next);
        } else {
            bool accepted = false;
            for (int tries = 0; tries <= (opt.backtracking ? opt.maxHalvings : 0); ++tries) {
                RenderParams cand = params;
                for (std::size_t i = 0; i < n; ++i) {
                    cand.values[i] -= lr * g[i];
                }
                projectFeasible(cand);
                Evaluation next = evaluate(cand);
                if (!opt.backtracking) {
                    if (!std::isfinite(next.loss)) {
                        abort(step, "non-finite loss");
                        break;
                    }
                    params   = std::move(cand);
                    cur      = std::move(next);
                    accepted = true;
                    break;
                }
                if (std::isfinite(next.loss) && next.loss <= cur.loss) {
                    params   = std::move(cand);
                    cur      = std::move(next);
                    accepted = true;
                    break;
                }
                lr *= 0.5;
            }
            if (traj.aborted) {
                break;
            }
            if (accepted && opt.backtracking) {
                lr *= opt.growth;
            }
        }
        record(step);
    }
    traj.finalParams = params;
    return traj;
}

PoseFitResult
poseFit(const PointCloud &cloud, const RenderedImage &target, const SensorGrid &grid,
        const PoseFitOptions &options) {
    if (options.iterations < 1 || options.innerSteps < 1) {
        throw InvalidParameter("poseFit: iterations and inner steps must be >= 1");
    }
    const LossSpec  loss = LossSpec::imageMse(target);
    OptimizeOptions inner;
    inner.steps       = options.innerSteps;
    inner.optimizer   = options.optimizer;
    inner.freeClasses = {ParamClass::GeomRotation};
    inner.render      = options.render;

    PoseFitResult result;
    for (int it = 0; it < options.iterations; ++it) {
        const PointCloud   current = quatRotate(result.rotation, cloud);
        const RenderParams start   = RenderParams::pack(grid, Quaternion::identity());
        const Trajectory   traj    = optimize(current, grid, start, loss, inner);
        if (traj.aborted) {
            throw NumericalError("poseFit: " + traj.diagnostic);
        }
        const Quaternion step = std::get<Quaternion>(traj.finalParams.geometric());
        result.rotation       = quatCompose(step, result.rotation);
        result.updateAngles.push_back(angularDistance(step, Quaternion::identity()));
        result.losses.push_back(traj.records.back().loss);
    }
    return result;
}

RectifyFitResult
rectifyFit(const PointCloud &cloud, const RenderedImage &target, const SensorGrid &grid,
           const RectifyFitOptions &options, const PointCloud *reference) {
    if (options.iterations < 1) {
        throw InvalidParameter("rectifyFit: iterations must be >= 1");
    }
    if (reference && reference->size() != cloud.size()) {
        throw InvalidInput("rectifyFit: reference must correspond point-for-point");
    }
    OptimizeOptions opts;
    opts.steps         = options.iterations;
    opts.optimizer     = options.optimizer;
    opts.freeClasses   = {ParamClass::GeomTps};
    opts.render        = options.render;
    opts.snapshotEvery = reference ? 1 : 0;
    const RenderParams start = RenderParams::pack(grid, TpsWarp());
    const Trajectory   traj  = optimize(cloud, grid, start, LossSpec::imageMse(target), opts);
    if (traj.aborted) {
        throw NumericalError("rectifyFit: " + traj.diagnostic);
    }
    RectifyFitResult result;
    result.warp   = std::get<TpsWarp>(traj.finalParams.geometric());
    result.losses = traj.losses();
    if (reference) {
        const std::size_t go = start.layout.geometricOffset();
        for (const auto &snap : traj.snapshots) {
            const TpsWarp w = TpsWarp::fromFlat(std::span<const double>(snap).subspan(go));
            result.rmse.push_back(correspondenceRmse(tpsApply(w, cloud), *reference));
        }
    }
    return result;
}

ClutterRatio
clutterRatio(const RenderResult &rendered, const PointCloud &scene, const ClutterRatioOptions &options) {
    if (!scene.hasLabels()) {
        throw InvalidInput("clutterRatio: scene carries no labels");
    }
    if (options.quantiles < 1) {
        throw InvalidParameter("clutterRatio: quantiles must be >= 1");
    }
    struct Hit {
        double depth;
        bool   clutter;
    };
    std::vector<Hit> hits;
    for (std::size_t k = 0; k < rendered.argmax.size(); ++k) {
        if (rendered.argmax[k] < 0 || !(rendered.range[k] > options.threshold)) {
            continue;
        }
        const auto idx = static_cast<std::size_t>(rendered.argmax[k]);
        if (idx >= scene.size()) {
            throw InvalidInput("clutterRatio: render does not belong to this scene");
        }
        hits.push_back({rendered.depth[k], scene.label(idx) == PointLabel::Clutter});
    }
    ClutterRatio out;
    out.responding = hits.size();
    for (const auto &h : hits) {
        out.clutter += h.clutter ? 1 : 0;
    }
    out.ratio = hits.empty() ? 0.0 : static_cast<double>(out.clutter) / hits.size();

    std::stable_sort(hits.begin(), hits.end(), [](const Hit &a, const Hit &b) { return a.depth < b.depth; });
    const auto q = static_cast<std::size_t>(options.quantiles);
    for (std::size_t b = 0; b < q; ++b) {
        const std::size_t lo = hits.size() * b / q;
        const std::size_t hi = hits.size() * (b + 1) / q;
        std::size_t       c  = 0;
        for (std::size_t i = lo; i < hi; ++i) {
            c += hits[i].clutter ? 1 : 0;
        }
        out.quantileRatios.push_back(hi > lo ? static_cast<double>(c) / (hi - lo) : 0.0);
        out.quantileUpperDepth.push_back(hi > lo ? hits[hi - 1].depth : 0.0);
    }
    return out;
}

ClutterRatio
clutterRatio(const SensorGrid &grid, const PointCloud &scene, const RenderParams &params,
             const ClutterRatioOptions &options, const RenderOptions &render) {
    if (!scene.hasLabels()) {
        throw InvalidInput("clutterRatio: scene carries no labels");
    }
    const SensorGrid   applied = params.applyTo(grid);
    const PointCloud   moved   = applyGeometric(params.geometric(), scene);
    const RenderResult result  = renderDetailed(applied, moved, render);
    return clutterRatio(result, scene, options);
}

} // namespace cellrender
