// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include "cellrender/error.hpp"
#include "cellrender/gradients.hpp"
#include "cellrender/io.hpp"
#include "cellrender/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>

namespace cellrender::cli {

namespace fs = std::filesystem;

namespace {

std::string
g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Point3
point(const std::array<double, 3> &a) {
    return {a[0], a[1], a[2]};
}

struct SceneBundle {
    PointCloud                object; // untransformed object points
    PointCloud                scene;  // final scene, labeled when clutter was added
    std::optional<SceneTruth> truth;
    GeometricTransform        applied;
};

// Every random draw of a run comes from this one stream, in a fixed order: base shape,
// fragment pool, clutter seed, scene transform, then subcommand-specific draws.
SceneBundle
buildScene(const SceneConfig &cfg, Rng &rng) {
    SceneBundle b;
    switch (cfg.source) {
    case SceneSource::Primitive: b.object = samplePrimitive(cfg.primitive, cfg.count, rng); break;
    case SceneSource::File: b.object = readCloud(cfg.path); break;
    case SceneSource::Points: {
        std::vector<Point3> pts;
        for (const auto &p : cfg.points) {
            pts.push_back(point(p));
        }
        b.object = PointCloud(std::move(pts));
        break;
    }
    }
    if (b.object.empty()) {
        throw InvalidInput("scene: no points");
    }
    b.scene = b.object;
    if (cfg.clutter.enabled) {
        const auto             &k = cfg.clutter;
        std::vector<PointCloud> pool;
        for (auto p : k.pool) {
            pool.push_back(samplePrimitive(p, k.poolPoints, rng));
        }
        ClutterSpec spec;
        spec.minFragments    = k.minFragments;
        spec.maxFragments    = k.maxFragments;
        spec.cropRadius      = k.cropRadius;
        spec.clutterScale    = k.scale;
        spec.placement       = Eigen::AlignedBox3d(point(k.placementMin), point(k.placementMax));
        spec.rotateFragments = k.rotate;
        spec.seed            = rng.nextU64();
        if (k.occluder) {
            spec.occluder = OccluderSpec{point(k.occluder->center), k.occluder->radius, k.occluder->points};
        }
        SynthResult r = synthScene(b.object, pool, spec);
        b.scene       = std::move(r.scene);
        b.truth       = std::move(r.truth);
    }
    if (cfg.transform.kind == GeometricKind::Rotation) {
        b.applied = randomRotation(rng, cfg.transform.angle);
    } else if (cfg.transform.kind == GeometricKind::Tps) {
        b.applied = randomTpsWarp(rng, cfg.transform.sigma);
    }
    b.scene = applyGeometric(b.applied, b.scene);
    return b;
}

Json
transformJson(const GeometricTransform &t) {
    if (const auto *q = std::get_if<Quaternion>(&t)) {
        return {{"kind", "rotation"}, {"quaternion", {q->w(), q->x(), q->y(), q->z()}}};
    }
    if (const auto *w = std::get_if<TpsWarp>(&t)) {
        return {{"kind", "tps"}, {"displacements", w->flatDisplacements()}};
    }
    return {{"kind", "none"}};
}

RenderOptions
renderOptions(const RunConfig &c) {
    RenderOptions o;
    o.backend = c.backend;
    return o;
}

void
writeText(const fs::path &path, const std::string &text) {
    std::ofstream os(path);
    if (!os) {
        throw InvalidInput("cannot write " + path.string());
    }
    os << text;
}

} // namespace

int
runSynth(const RunConfig &c, std::ostream &out) {
    Rng         rng(c.seed);
    SceneBundle b = buildScene(c.scene, rng);
    const fs::path dir(c.output);
    writeCloudText(dir / "scene.txt", b.scene);
    writeCloudBinary(dir / "scene.cpts", b.scene);

    Json truth;
    truth["points"]    = b.scene.size();
    truth["transform"] = transformJson(b.applied);
    if (b.truth) {
        truth["object_count"] = b.truth->objectCount;
        truth["fragments"]    = Json::array();
        for (const auto &f : b.truth->fragments) {
            truth["fragments"].push_back({{"begin", f.begin},
                                          {"end", f.end},
                                          {"source", f.source},
                                          {"crop_center", {f.cropCenter.x(), f.cropCenter.y(), f.cropCenter.z()}},
                                          {"scale", f.scale},
                                          {"rotation", {f.rotation.w(), f.rotation.x(), f.rotation.y(), f.rotation.z()}},
                                          {"translation", {f.translation.x(), f.translation.y(), f.translation.z()}}});
        }
        if (b.truth->occluder) {
            truth["occluder_begin"] = b.truth->occluderBegin;
        }
    } else {
        truth["object_count"] = b.scene.size();
    }
    writeText(dir / "truth.json", truth.dump(2) + "\n");
    out << "synth: " << b.scene.size() << " points written to " << (dir / "scene.txt").string() << " and "
        << (dir / "scene.cpts").string() << "\n";
    return kOk;
}

int
runRender(const RunConfig &c, std::ostream &out) {
    Rng                rng(c.seed);
    SceneBundle        b    = buildScene(c.scene, rng);
    const SensorGrid   grid = buildGrid(c.grid);
    const RenderResult r    = renderDetailed(grid, b.scene, renderOptions(c));
    const fs::path     dir(c.output);
    writeImageSet(dir / "image", r.image);
    std::size_t covered = 0;
    for (auto v : r.coverage) {
        covered += v;
    }
    out << "render: " << grid.rows << "x" << grid.cols << " x " << grid.channels.size() << " channels, "
        << b.scene.size() << " points, backend " << backendName(r.backend) << ", " << covered
        << " covered pixels\n";
    if (b.scene.hasLabels()) {
        const ClutterRatio cr = clutterRatio(r, b.scene);
        out << "clutter_ratio " << g17(cr.ratio) << " (" << cr.clutter << "/" << cr.responding << ")\n";
    }
    out << "wrote " << (dir / "image.crnd").string() << "\n";
    return kOk;
}

int
runGradCheck(const RunConfig &c, std::ostream &out) {
    Rng              rng(c.seed);
    SceneBundle      b    = buildScene(c.scene, rng);
    const SensorGrid grid = buildGrid(c.grid);
    GeometricTransform geo;
    if (c.gradCheck.geometric == GeometricKind::Rotation) {
        geo = randomRotation(rng, c.gradCheck.angle);
    } else if (c.gradCheck.geometric == GeometricKind::Tps) {
        geo = randomTpsWarp(rng, c.gradCheck.sigma);
    }
    const RenderParams params = RenderParams::pack(grid, geo);
    RenderedImage      upstream(grid.rows, grid.cols, static_cast<int>(grid.channels.size()));
    for (auto &v : upstream.data()) {
        v = rng.uniform(0.5, 1.5);
    }
    FiniteDiffOptions fd;
    fd.step      = c.gradCheck.step;
    fd.tolerance = c.gradCheck.tolerance;
    const FiniteDiffReport rep = checkRenderGradients(grid, b.scene, params, upstream, fd, renderOptions(c));

    std::map<std::string, double> worst;
    std::ofstream                 tsv(fs::path(c.output) / "grad_check.tsv");
    tsv << "index\tclass\tanalytic\tnumeric\trel_error\n";
    for (const auto &chk : rep.checked) {
        const std::string cls(paramClassName(rep.classes[chk.index]));
        worst[cls] = std::max(worst[cls], chk.relError);
        tsv << chk.index << "\t" << cls << "\t" << g17(chk.analytic) << "\t" << g17(chk.numeric) << "\t"
            << g17(chk.relError) << "\n";
    }
    out << "grad-check: " << rep.checked.size() << " coordinates checked, " << rep.excluded.size()
        << " excluded near kinks\n";
    for (const auto &[cls, e] : worst) {
        out << "  " << cls << " max_rel_error " << g17(e) << "\n";
    }
    out << "max_rel_error " << g17(rep.maxRelError) << " tolerance " << g17(fd.tolerance) << "\n";
    for (const auto &bad : rep.offending) {
        out << "  FAIL index " << bad.index << " (" << paramClassName(rep.classes[bad.index]) << ") analytic "
            << g17(bad.analytic) << " numeric " << g17(bad.numeric) << " rel " << g17(bad.relError) << "\n";
    }
    out << (rep.passed() ? "PASS" : "FAIL") << "\n";
    return rep.passed() ? kOk : kNumericalError;
}

int
runOptimize(const RunConfig &c, std::ostream &out) {
    Rng              rng(c.seed);
    SceneBundle      b    = buildScene(c.scene, rng);
    const SensorGrid grid = buildGrid(c.grid);
    GeometricTransform start;
    if (c.optimize.geometric == GeometricKind::Rotation) {
        start = Quaternion::identity();
    } else if (c.optimize.geometric == GeometricKind::Tps) {
        start = TpsWarp();
    }
    const RenderParams params0 = RenderParams::pack(grid, start);

    LossSpec loss;
    loss.kind           = c.loss.kind;
    loss.channelWeights = c.loss.weights;
    if (loss.kind == LossKind::ImageMse) {
        if (c.loss.target == "clean") {
            loss.target = render(grid, b.object, renderOptions(c));
        } else {
            loss.target = readImageRaw(c.loss.target);
        }
    }
    OptimizeOptions opts;
    opts.steps         = c.optimize.steps;
    opts.optimizer     = c.optimizer;
    opts.freeClasses   = c.optimize.free;
    opts.render        = renderOptions(c);
    opts.snapshotEvery = c.optimize.snapshotEvery;
    opts.frameEvery    = c.optimize.frameEvery;
    const Trajectory traj = optimize(b.scene, grid, params0, loss, opts);

    const fs::path dir(c.output);
    {
        std::ofstream tsv(dir / "trajectory.tsv");
        tsv << "step\tloss\tlr\n";
        for (const auto &r : traj.records) {
            tsv << r.step << "\t" << g17(r.loss) << "\t" << g17(r.lr) << "\n";
        }
    }
    if (!traj.snapshots.empty()) {
        std::ofstream tsv(dir / "snapshots.tsv");
        for (const auto &r : traj.records) {
            if (r.snapshot) {
                tsv << r.step;
                for (double v : traj.snapshots[*r.snapshot]) {
                    tsv << "\t" << g17(v);
                }
                tsv << "\n";
            }
        }
    }
    for (const auto &r : traj.records) {
        if (r.frame) {
            char name[32];
            std::snprintf(name, sizeof name, "frame_%05d", r.step);
            fs::create_directories(dir / "frames");
            writeImageSet(dir / "frames" / name, *r.frame);
        }
    }
    {
        std::ofstream tsv(dir / "final_params.tsv");
        tsv << "index\tclass\tvalue\n";
        for (std::size_t i = 0; i < traj.finalParams.values.size(); ++i) {
            tsv << i << "\t" << paramClassName(traj.finalParams.layout.classes[i]) << "\t"
                << g17(traj.finalParams.values[i]) << "\n";
        }
    }
    out << "optimize: " << traj.records.size() - (traj.records.empty() ? 0 : 1) << " steps";
    if (!traj.records.empty()) {
        out << ", loss " << g17(traj.records.front().loss) << " -> " << g17(traj.records.back().loss);
    }
    out << "\n";
    if (b.scene.hasLabels()) {
        const ClutterRatio before = clutterRatio(grid, b.scene, params0, {}, renderOptions(c));
        const ClutterRatio after  = clutterRatio(grid, b.scene, traj.finalParams, {}, renderOptions(c));
        out << "clutter_ratio " << g17(before.ratio) << " -> " << g17(after.ratio) << "\n";
    }
    out << "wrote " << (dir / "trajectory.tsv").string() << "\n";
    if (traj.aborted) {
        out << "aborted: " << traj.diagnostic << "\n";
        return kNumericalError;
    }
    return kOk;
}

int
runBench(const RunConfig &c, std::ostream &out) {
    using clock = std::chrono::steady_clock;
    Rng        rng(c.seed);
    SensorCell proto;
    proto.lateral   = KernelSpec::epanechnikovPow(1.65, c.bench.support);
    proto.depth     = KernelSpec::triangular(4.0);
    SensorGrid grid = SensorGrid::planar(c.bench.rows, c.bench.cols, proto, 1.0, -2.0);
    grid.channels   = {ChannelSpec::range(), ChannelSpec::density()};

    std::ofstream tsv(fs::path(c.output) / "bench.tsv");
    tsv << "points\tbackend\tseconds\tspeedup\tmax_abs_diff\n";
    out << "bench: " << grid.rows << "x" << grid.cols << " grid, lateral support " << g17(c.bench.support)
        << ", median of " << c.bench.repeats << "\n";
    out << "points\tbackend\tseconds\tspeedup\tmax_abs_diff\n";
    for (std::size_t n : c.bench.sizes) {
        std::vector<Point3> pts(n);
        for (auto &p : pts) {
            p = Point3(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
        }
        const PointCloud cloud(std::move(pts));
        double           reference = 0.0;
        RenderedImage    refImage;
        for (Backend backend : c.bench.backends) {
            RenderOptions o;
            o.backend = backend;
            std::vector<double> times;
            RenderedImage       img;
            for (int r = 0; r < c.bench.repeats; ++r) {
                const auto t0 = clock::now();
                img           = render(grid, cloud, o);
                times.push_back(std::chrono::duration<double>(clock::now() - t0).count());
            }
            std::sort(times.begin(), times.end());
            const double t = times[times.size() / 2];
            if (refImage.data().empty()) {
                refImage  = img;
                reference = t;
            }
            double diff = 0.0;
            for (std::size_t k = 0; k < img.data().size(); ++k) {
                diff = std::max(diff, std::abs(img.data()[k] - refImage.data()[k]));
            }
            const std::string row = std::to_string(n) + "\t" + std::string(backendName(backend)) + "\t" + g17(t) +
                                    "\t" + g17(reference / t) + "\t" + g17(diff) + "\n";
            tsv << row;
            out << row;
        }
    }
    return kOk;
}

} // namespace cellrender::cli
