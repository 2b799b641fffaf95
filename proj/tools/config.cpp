// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#include "config.hpp"

#include "cellrender/error.hpp"
#include "cellrender/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>

namespace cellrender::cli {

namespace {

std::string
join(const std::string &path, const std::string &key) {
    return path.empty() ? key : path + "." + key;
}

std::string
indexed(const std::string &path, std::size_t i) {
    return path + "[" + std::to_string(i) + "]";
}

// Strict view of one JSON object: unknown keys are rejected up front, missing keys fall
// back to the caller's default.
class Obj {
  public:
    Obj(const Json &j, std::string path, std::initializer_list<std::string_view> allowed)
        : j_(j), path_(std::move(path)) {
        if (!j.is_object()) {
            throw ConfigError(path_, "expected an object");
        }
        for (const auto &item : j.items()) {
            if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
                throw ConfigError(join(path_, item.key()), "unknown key '" + item.key() + "'");
            }
        }
    }

    bool
    has(const std::string &key) const {
        return j_.contains(key);
    }
    bool
    isNull(const std::string &key) const {
        return j_.contains(key) && j_.at(key).is_null();
    }
    const Json &
    at(const std::string &key) const {
        return j_.at(key);
    }
    std::string
    path(const std::string &key) const {
        return join(path_, key);
    }

    double
    num(const std::string &key, double def) const {
        if (!has(key)) {
            return def;
        }
        const Json &v = at(key);
        if (!v.is_number()) {
            throw ConfigError(path(key), "expected a number");
        }
        const double d = v.get<double>();
        if (!std::isfinite(d)) {
            throw ConfigError(path(key), "must be finite");
        }
        return d;
    }
    std::int64_t
    integer(const std::string &key, std::int64_t def, std::int64_t lo = std::numeric_limits<std::int64_t>::min()) const {
        if (!has(key)) {
            return def;
        }
        const Json &v = at(key);
        if (!v.is_number_integer()) {
            throw ConfigError(path(key), "expected an integer");
        }
        const auto i = v.get<std::int64_t>();
        if (i < lo) {
            throw ConfigError(path(key), "must be >= " + std::to_string(lo));
        }
        return i;
    }
    bool
    boolean(const std::string &key, bool def) const {
        if (!has(key)) {
            return def;
        }
        if (!at(key).is_boolean()) {
            throw ConfigError(path(key), "expected true or false");
        }
        return at(key).get<bool>();
    }
    std::string
    str(const std::string &key, const std::string &def) const {
        if (!has(key)) {
            return def;
        }
        if (!at(key).is_string()) {
            throw ConfigError(path(key), "expected a string");
        }
        return at(key).get<std::string>();
    }
    const Json &
    array(const std::string &key) const {
        if (!at(key).is_array()) {
            throw ConfigError(path(key), "expected an array");
        }
        return at(key);
    }

  private:
    const Json &j_;
    std::string path_;
};

// Maps a name through `parse`, reporting failures at `path`.
template <typename F>
auto
named(const std::string &path, const std::string &name, F parse) {
    try {
        return parse(name);
    } catch (const InvalidParameter &e) {
        throw ConfigError(path, e.what());
    }
}

std::array<double, 3>
vec3(const Json &j, const std::string &path) {
    if (!j.is_array() || j.size() != 3) {
        throw ConfigError(path, "expected [x, y, z]");
    }
    std::array<double, 3> out{};
    for (std::size_t k = 0; k < 3; ++k) {
        if (!j[k].is_number()) {
            throw ConfigError(indexed(path, k), "expected a number");
        }
        out[k] = j[k].get<double>();
        if (!std::isfinite(out[k])) {
            throw ConfigError(indexed(path, k), "must be finite");
        }
    }
    return out;
}

std::string_view
geometricName(GeometricKind k) {
    switch (k) {
    case GeometricKind::None: return "none";
    case GeometricKind::Rotation: return "rotation";
    case GeometricKind::Tps: return "tps";
    }
    return "none";
}

GeometricKind
geometricFromName(std::string_view name) {
    for (auto k : {GeometricKind::None, GeometricKind::Rotation, GeometricKind::Tps}) {
        if (geometricName(k) == name) {
            return k;
        }
    }
    throw InvalidParameter("unknown geometric transform '" + std::string(name) + "' (none, rotation, tps)");
}

ParamClass
paramClassFromName(std::string_view name) {
    for (int c = 0; c <= static_cast<int>(ParamClass::GeomTps); ++c) {
        if (paramClassName(static_cast<ParamClass>(c)) == name) {
            return static_cast<ParamClass>(c);
        }
    }
    throw InvalidParameter("unknown parameter class '" + std::string(name) + "'");
}

KernelSpec
parseKernel(const Json &j, const std::string &path) {
    if (!j.is_object() || !j.contains("family") || !j.at("family").is_string()) {
        throw ConfigError(join(path, "family"), "kernel needs a family name");
    }
    const std::string family = j.at("family").get<std::string>();
    KernelSpec        spec;
    spec.family      = named(join(path, "family"), family, kernelFamilyFromName);
    const auto names = spec.paramNames();
    const auto n     = spec.paramCount();
    Obj        o(j, path, {"family", n > 0 ? names[0] : "family", n > 1 ? names[1] : "family"});
    for (std::size_t k = 0; k < n; ++k) {
        const std::string key(names[k]);
        if (!o.has(key)) {
            throw ConfigError(o.path(key), "missing kernel parameter");
        }
        spec.params[k] = o.num(key, 0.0);
    }
    try {
        spec.validate();
    } catch (const InvalidParameter &e) {
        throw ConfigError(path, e.what());
    }
    return spec;
}

Json
kernelJson(const KernelSpec &spec) {
    Json j;
    j["family"]      = std::string(kernelFamilyName(spec.family));
    const auto names = spec.paramNames();
    for (std::size_t k = 0; k < spec.paramCount(); ++k) {
        j[std::string(names[k])] = spec.params[k];
    }
    return j;
}

ChannelSpec
parseChannel(const Json &j, const std::string &path) {
    Obj         o(j, path, {"kind", "band", "beta", "lateral_only"});
    const auto  kind = o.str("kind", "range");
    ChannelSpec c;
    if (kind == "range") {
        c = ChannelSpec::range();
    } else if (kind == "depth") {
        c = ChannelSpec::depth();
    } else if (kind == "density") {
        c = ChannelSpec::density();
        if (o.has("band") && !o.isNull("band")) {
            c.depthKernel = parseKernel(o.at("band"), o.path("band"));
        }
        if (o.has("beta") && !o.isNull("beta")) {
            c.compressBeta = o.num("beta", 0.0);
        }
        c.lateralOnly = o.boolean("lateral_only", false);
    } else {
        throw ConfigError(o.path("kind"), "unknown channel kind '" + kind + "' (range, depth, density)");
    }
    if (kind != "density" && ((o.has("band") && !o.isNull("band")) || (o.has("beta") && !o.isNull("beta")) ||
                              o.has("lateral_only"))) {
        throw ConfigError(path, "band, beta and lateral_only apply to density channels only");
    }
    try {
        c.validate();
    } catch (const InvalidParameter &e) {
        throw ConfigError(path, e.what());
    }
    return c;
}

Json
channelJson(const ChannelSpec &c) {
    Json j;
    switch (c.kind) {
    case ChannelKind::Range: j["kind"] = "range"; break;
    case ChannelKind::Depth: j["kind"] = "depth"; break;
    case ChannelKind::Density:
        j["kind"]         = "density";
        j["band"]         = c.depthKernel ? kernelJson(*c.depthKernel) : Json(nullptr);
        j["beta"]         = c.compressBeta ? Json(*c.compressBeta) : Json(nullptr);
        j["lateral_only"] = c.lateralOnly;
        break;
    }
    return j;
}

CellConfig
parseCell(const Json &j, const std::string &path) {
    Obj        o(j, path, {"lateral", "depth", "radial", "elongation", "sensitivity", "attenuation"});
    CellConfig c;
    if (o.has("lateral")) {
        c.lateral = parseKernel(o.at("lateral"), o.path("lateral"));
    }
    if (o.isNull("depth")) {
        c.depth.reset();
    } else if (o.has("depth")) {
        c.depth = parseKernel(o.at("depth"), o.path("depth"));
    }
    c.radial      = o.boolean("radial", c.radial);
    c.elongation  = o.num("elongation", c.elongation);
    c.sensitivity = o.num("sensitivity", c.sensitivity);
    if (o.has("attenuation") && !o.isNull("attenuation")) {
        const std::string ap = o.path("attenuation");
        Obj               a(o.at("attenuation"), ap, {"components", "near", "far", "width", "squash", "clamp"});
        AttenuationConfig at;
        at.components = static_cast<int>(a.integer("components", at.components, 1));
        at.nearZ      = a.num("near", at.nearZ);
        at.farZ       = a.num("far", at.farZ);
        at.width      = a.num("width", at.width);
        at.squash     = named(a.path("squash"), a.str("squash", std::string(squashName(at.squash))), squashFromName);
        at.clamp      = a.boolean("clamp", at.clamp);
        if (!(at.width > 0.0)) {
            throw ConfigError(a.path("width"), "must be positive");
        }
        c.attenuation = at;
    }
    return c;
}

GridConfig
parseGrid(const Json &j, const std::string &path) {
    Obj o(j, path, {"topology", "rows", "cols", "extent", "plane_z", "full_circle", "radius", "far_value", "cell",
                    "channels"});
    GridConfig g;
    const auto topo = o.str("topology", "planar");
    if (topo == "planar") {
        g.topology = GridTopology::Planar;
    } else if (topo == "cylindrical") {
        g.topology = GridTopology::Cylindrical;
    } else {
        throw ConfigError(o.path("topology"), "unknown topology '" + topo + "' (planar, cylindrical)");
    }
    g.rows       = static_cast<int>(o.integer("rows", g.rows, 1));
    g.cols       = static_cast<int>(o.integer("cols", g.cols, 1));
    g.extent     = o.num("extent", g.extent);
    g.planeZ     = o.num("plane_z", g.planeZ);
    g.fullCircle = o.boolean("full_circle", g.fullCircle);
    g.radius     = o.num("radius", g.radius);
    g.farValue   = o.num("far_value", g.farValue);
    if (o.has("cell")) {
        g.cell = parseCell(o.at("cell"), o.path("cell"));
    }
    if (o.has("channels")) {
        const Json &arr = o.array("channels");
        if (arr.empty()) {
            throw ConfigError(o.path("channels"), "at least one channel is required");
        }
        g.channels.clear();
        for (std::size_t i = 0; i < arr.size(); ++i) {
            g.channels.push_back(parseChannel(arr[i], indexed(o.path("channels"), i)));
        }
    }
    try {
        buildGrid(g).validate();
    } catch (const InvalidParameter &e) {
        throw ConfigError(path, e.what());
    }
    return g;
}

SceneConfig
parseScene(const Json &j, const std::string &path) {
    Obj         o(j, path, {"source", "primitive", "count", "path", "points", "clutter", "transform"});
    SceneConfig s;
    const auto  src = o.str("source", "primitive");
    if (src == "primitive") {
        s.source = SceneSource::Primitive;
    } else if (src == "file") {
        s.source = SceneSource::File;
    } else if (src == "points") {
        s.source = SceneSource::Points;
    } else {
        throw ConfigError(o.path("source"), "unknown source '" + src + "' (primitive, file, points)");
    }
    s.primitive = named(o.path("primitive"), o.str("primitive", std::string(primitiveName(s.primitive))),
                        primitiveFromName);
    s.count     = static_cast<std::size_t>(o.integer("count", static_cast<std::int64_t>(s.count), 1));
    s.path      = o.str("path", s.path);
    if (o.has("points")) {
        const Json &arr = o.array("points");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            s.points.push_back(vec3(arr[i], indexed(o.path("points"), i)));
        }
    }
    if (s.source == SceneSource::File && s.path.empty()) {
        throw ConfigError(o.path("path"), "source 'file' needs a path");
    }
    if (s.source == SceneSource::Points && s.points.empty()) {
        throw ConfigError(o.path("points"), "source 'points' needs at least one point");
    }
    if (o.has("clutter")) {
        const std::string cp = o.path("clutter");
        Obj c(o.at("clutter"), cp, {"enabled", "min_fragments", "max_fragments", "crop_radius", "scale", "pool",
                                    "pool_points", "rotate", "placement_min", "placement_max", "occluder"});
        auto &k        = s.clutter;
        k.enabled      = c.boolean("enabled", k.enabled);
        k.minFragments = static_cast<int>(c.integer("min_fragments", k.minFragments, 0));
        k.maxFragments = static_cast<int>(c.integer("max_fragments", k.maxFragments, 0));
        k.cropRadius   = c.num("crop_radius", k.cropRadius);
        k.scale        = c.num("scale", k.scale);
        if (c.has("pool")) {
            const Json &arr = c.array("pool");
            k.pool.clear();
            for (std::size_t i = 0; i < arr.size(); ++i) {
                const auto p = indexed(c.path("pool"), i);
                if (!arr[i].is_string()) {
                    throw ConfigError(p, "expected a primitive name");
                }
                k.pool.push_back(named(p, arr[i].get<std::string>(), primitiveFromName));
            }
        }
        k.poolPoints = static_cast<std::size_t>(c.integer("pool_points", static_cast<std::int64_t>(k.poolPoints), 1));
        k.rotate     = c.boolean("rotate", k.rotate);
        if (c.has("placement_min")) {
            k.placementMin = vec3(c.at("placement_min"), c.path("placement_min"));
        }
        if (c.has("placement_max")) {
            k.placementMax = vec3(c.at("placement_max"), c.path("placement_max"));
        }
        if (c.has("occluder") && !c.isNull("occluder")) {
            Obj            oc(c.at("occluder"), c.path("occluder"), {"center", "radius", "points"});
            OccluderConfig occ;
            if (oc.has("center")) {
                occ.center = vec3(oc.at("center"), oc.path("center"));
            }
            occ.radius = oc.num("radius", occ.radius);
            occ.points = static_cast<std::size_t>(oc.integer("points", static_cast<std::int64_t>(occ.points), 1));
            k.occluder = occ;
        }
        if (k.maxFragments < k.minFragments) {
            throw ConfigError(c.path("max_fragments"), "must be >= min_fragments");
        }
        if (!(k.cropRadius > 0.0)) {
            throw ConfigError(c.path("crop_radius"), "must be positive");
        }
        if (!(k.scale > 0.0)) {
            throw ConfigError(c.path("scale"), "must be positive");
        }
        if (k.enabled && k.maxFragments > 0 && k.pool.empty()) {
            throw ConfigError(c.path("pool"), "fragments requested from an empty pool");
        }
        for (int a = 0; a < 3; ++a) {
            if (k.placementMax[a] < k.placementMin[a]) {
                throw ConfigError(c.path("placement_max"), "placement region is empty");
            }
        }
        if (k.occluder && !(k.occluder->radius > 0.0)) {
            throw ConfigError(c.path("occluder.radius"), "must be positive");
        }
    }
    if (o.has("transform")) {
        Obj t(o.at("transform"), o.path("transform"), {"kind", "angle", "sigma"});
        s.transform.kind  = named(t.path("kind"), t.str("kind", "none"), geometricFromName);
        s.transform.angle = t.num("angle", s.transform.angle);
        s.transform.sigma = t.num("sigma", s.transform.sigma);
        if (s.transform.sigma < 0.0) {
            throw ConfigError(t.path("sigma"), "must be >= 0");
        }
    }
    return s;
}

std::vector<double>
numbers(const Obj &o, const std::string &key) {
    std::vector<double> out;
    const Json         &arr = o.array(key);
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number()) {
            throw ConfigError(indexed(o.path(key), i), "expected a number");
        }
        out.push_back(arr[i].get<double>());
    }
    return out;
}

} // namespace

SensorGrid
buildGrid(const GridConfig &g) {
    SensorCell proto;
    proto.lateral         = g.cell.lateral;
    proto.depth           = g.cell.depth;
    proto.radial          = g.cell.radial;
    proto.view.elongation = g.cell.elongation;
    proto.sensitivity     = g.cell.sensitivity;
    if (g.cell.attenuation) {
        const auto &a     = *g.cell.attenuation;
        proto.attenuation = AttenuationField::neutral(a.components, a.nearZ, a.farZ, a.width, a.squash);
        proto.attenuation->clamp = a.clamp;
    }
    SensorGrid grid;
    if (g.topology == GridTopology::Planar) {
        grid = SensorGrid::planar(g.rows, g.cols, proto, g.extent, g.planeZ);
    } else {
        CylindricalGrid layout;
        layout.height     = g.rows;
        layout.width      = g.cols;
        layout.fullCircle = g.fullCircle;
        layout.radius     = g.radius;
        grid              = SensorGrid::cylindrical(layout, proto);
    }
    grid.channels = g.channels;
    grid.farValue = g.farValue;
    return grid;
}

RunConfig
parseConfig(const Json &doc) {
    Obj       o(doc, "", {"rng", "seed", "threads", "backend", "output", "grid", "scene", "loss", "optimizer",
                          "optimize", "grad_check", "bench"});
    RunConfig c;
    if (o.has("rng") && o.str("rng", "") != Rng::kAlgorithm) {
        throw ConfigError("rng", std::string("this build generates with ") + Rng::kAlgorithm);
    }
    if (o.has("seed")) {
        const Json &seed = o.at("seed");
        if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
            throw ConfigError("seed", "expected a non-negative integer");
        }
        c.seed = seed.get<std::uint64_t>();
    }
    c.threads = static_cast<int>(o.integer("threads", c.threads, 0));
    c.backend = named("backend", o.str("backend", "auto"), backendFromName);
    c.output  = o.str("output", c.output);
    if (c.output.empty()) {
        throw ConfigError("output", "must not be empty");
    }
    if (o.has("grid")) {
        c.grid = parseGrid(o.at("grid"), "grid");
    }
    if (o.has("scene")) {
        c.scene = parseScene(o.at("scene"), "scene");
    }
    if (o.has("loss")) {
        Obj l(o.at("loss"), "loss", {"kind", "target", "weights"});
        c.loss.kind   = named("loss.kind", l.str("kind", "image_mse"), lossKindFromName);
        c.loss.target = l.str("target", c.loss.target);
        if (l.has("weights")) {
            c.loss.weights = numbers(l, "weights");
        }
    }
    if (!c.loss.weights.empty() && c.loss.weights.size() != c.grid.channels.size()) {
        throw ConfigError("loss.weights", "need one weight per channel");
    }
    if (c.loss.kind == LossKind::ChannelEnergy) {
        throw ConfigError("loss.kind", "channel_energy needs a pixel mask and is library-only");
    }
    if (o.has("optimizer")) {
        Obj        p(o.at("optimizer"), "optimizer",
                     {"kind", "lr", "beta1", "beta2", "eps", "backtracking", "growth", "max_halvings"});
        const auto kind = p.str("kind", "adam");
        if (kind == "adam") {
            c.optimizer.kind = OptimizerKind::Adam;
        } else if (kind == "sgd") {
            c.optimizer.kind = OptimizerKind::Sgd;
        } else {
            throw ConfigError("optimizer.kind", "unknown optimizer '" + kind + "' (sgd, adam)");
        }
        c.optimizer.lr           = p.num("lr", c.optimizer.lr);
        c.optimizer.beta1        = p.num("beta1", c.optimizer.beta1);
        c.optimizer.beta2        = p.num("beta2", c.optimizer.beta2);
        c.optimizer.eps          = p.num("eps", c.optimizer.eps);
        c.optimizer.backtracking = p.boolean("backtracking", c.optimizer.backtracking);
        c.optimizer.growth       = p.num("growth", c.optimizer.growth);
        c.optimizer.maxHalvings  = static_cast<int>(p.integer("max_halvings", c.optimizer.maxHalvings, 0));
    }
    try {
        c.optimizer.validate();
    } catch (const InvalidParameter &e) {
        throw ConfigError("optimizer", e.what());
    }
    if (o.has("optimize")) {
        Obj p(o.at("optimize"), "optimize", {"steps", "free", "geometric", "snapshot_every", "frame_every"});
        c.optimize.steps = static_cast<int>(p.integer("steps", c.optimize.steps, 1));
        if (p.has("free")) {
            const Json &arr = p.array("free");
            for (std::size_t i = 0; i < arr.size(); ++i) {
                const auto path = indexed("optimize.free", i);
                if (!arr[i].is_string()) {
                    throw ConfigError(path, "expected a parameter class name");
                }
                c.optimize.free.push_back(named(path, arr[i].get<std::string>(), paramClassFromName));
            }
        }
        c.optimize.geometric     = named("optimize.geometric", p.str("geometric", "none"), geometricFromName);
        c.optimize.snapshotEvery = static_cast<int>(p.integer("snapshot_every", 0, 0));
        c.optimize.frameEvery    = static_cast<int>(p.integer("frame_every", 0, 0));
    }
    if (o.has("grad_check")) {
        Obj g(o.at("grad_check"), "grad_check", {"step", "tolerance", "geometric", "angle", "sigma"});
        c.gradCheck.step      = g.num("step", c.gradCheck.step);
        c.gradCheck.tolerance = g.num("tolerance", c.gradCheck.tolerance);
        c.gradCheck.geometric = named("grad_check.geometric", g.str("geometric", "none"), geometricFromName);
        c.gradCheck.angle     = g.num("angle", c.gradCheck.angle);
        c.gradCheck.sigma     = g.num("sigma", c.gradCheck.sigma);
        if (!(c.gradCheck.step > 0.0)) {
            throw ConfigError("grad_check.step", "must be positive");
        }
        if (!(c.gradCheck.tolerance > 0.0)) {
            throw ConfigError("grad_check.tolerance", "must be positive");
        }
        if (c.gradCheck.sigma < 0.0) {
            throw ConfigError("grad_check.sigma", "must be >= 0");
        }
    }
    if (o.has("bench")) {
        Obj b(o.at("bench"), "bench", {"sizes", "backends", "rows", "cols", "support", "repeats"});
        if (b.has("sizes")) {
            c.bench.sizes.clear();
            const Json &arr = b.array("sizes");
            for (std::size_t i = 0; i < arr.size(); ++i) {
                if (!arr[i].is_number_integer() || arr[i].get<std::int64_t>() < 1) {
                    throw ConfigError(indexed("bench.sizes", i), "expected a positive integer");
                }
                c.bench.sizes.push_back(arr[i].get<std::size_t>());
            }
        }
        if (b.has("backends")) {
            c.bench.backends.clear();
            const Json &arr = b.array("backends");
            for (std::size_t i = 0; i < arr.size(); ++i) {
                const auto path = indexed("bench.backends", i);
                if (!arr[i].is_string()) {
                    throw ConfigError(path, "expected a backend name");
                }
                c.bench.backends.push_back(named(path, arr[i].get<std::string>(), backendFromName));
            }
        }
        c.bench.rows    = static_cast<int>(b.integer("rows", c.bench.rows, 1));
        c.bench.cols    = static_cast<int>(b.integer("cols", c.bench.cols, 1));
        c.bench.support = b.num("support", c.bench.support);
        c.bench.repeats = static_cast<int>(b.integer("repeats", c.bench.repeats, 1));
        if (!(c.bench.support > 0.0)) {
            throw ConfigError("bench.support", "must be positive");
        }
    }
    return c;
}

Json
toJson(const RunConfig &c) {
    auto vec = [](const std::array<double, 3> &v) { return Json::array({v[0], v[1], v[2]}); };
    Json j;
    j["rng"]     = Rng::kAlgorithm;
    j["seed"]    = c.seed;
    j["threads"] = c.threads;
    j["backend"] = std::string(backendName(c.backend));
    j["output"]  = c.output;

    Json &g          = j["grid"];
    g["topology"]    = c.grid.topology == GridTopology::Planar ? "planar" : "cylindrical";
    g["rows"]        = c.grid.rows;
    g["cols"]        = c.grid.cols;
    g["extent"]      = c.grid.extent;
    g["plane_z"]     = c.grid.planeZ;
    g["full_circle"] = c.grid.fullCircle;
    g["radius"]      = c.grid.radius;
    g["far_value"]   = c.grid.farValue;
    Json &cell       = g["cell"];
    cell["lateral"]  = kernelJson(c.grid.cell.lateral);
    cell["depth"]    = c.grid.cell.depth ? kernelJson(*c.grid.cell.depth) : Json(nullptr);
    cell["radial"]   = c.grid.cell.radial;
    cell["elongation"]  = c.grid.cell.elongation;
    cell["sensitivity"] = c.grid.cell.sensitivity;
    if (c.grid.cell.attenuation) {
        const auto &a       = *c.grid.cell.attenuation;
        cell["attenuation"] = {{"components", a.components}, {"near", a.nearZ},
                               {"far", a.farZ},              {"width", a.width},
                               {"squash", std::string(squashName(a.squash))}, {"clamp", a.clamp}};
    } else {
        cell["attenuation"] = nullptr;
    }
    g["channels"] = Json::array();
    for (const auto &ch : c.grid.channels) {
        g["channels"].push_back(channelJson(ch));
    }

    Json &s = j["scene"];
    s["source"] = c.scene.source == SceneSource::Primitive ? "primitive"
                  : c.scene.source == SceneSource::File    ? "file"
                                                           : "points";
    s["primitive"] = std::string(primitiveName(c.scene.primitive));
    s["count"]     = c.scene.count;
    s["path"]      = c.scene.path;
    s["points"]    = Json::array();
    for (const auto &p : c.scene.points) {
        s["points"].push_back(vec(p));
    }
    const auto &k          = c.scene.clutter;
    Json       &cl         = s["clutter"];
    cl["enabled"]          = k.enabled;
    cl["min_fragments"]    = k.minFragments;
    cl["max_fragments"]    = k.maxFragments;
    cl["crop_radius"]      = k.cropRadius;
    cl["scale"]            = k.scale;
    cl["pool"]             = Json::array();
    for (auto p : k.pool) {
        cl["pool"].push_back(std::string(primitiveName(p)));
    }
    cl["pool_points"]   = k.poolPoints;
    cl["rotate"]        = k.rotate;
    cl["placement_min"] = vec(k.placementMin);
    cl["placement_max"] = vec(k.placementMax);
    cl["occluder"]      = k.occluder ? Json{{"center", vec(k.occluder->center)},
                                            {"radius", k.occluder->radius},
                                            {"points", k.occluder->points}}
                                     : Json(nullptr);
    s["transform"] = {{"kind", std::string(geometricName(c.scene.transform.kind))},
                      {"angle", c.scene.transform.angle},
                      {"sigma", c.scene.transform.sigma}};

    j["loss"] = {{"kind", std::string(lossKindName(c.loss.kind))}, {"target", c.loss.target}, {"weights", c.loss.weights}};
    const auto &op   = c.optimizer;
    j["optimizer"] = {{"kind", op.kind == OptimizerKind::Adam ? "adam" : "sgd"},
                      {"lr", op.lr},
                      {"beta1", op.beta1},
                      {"beta2", op.beta2},
                      {"eps", op.eps},
                      {"backtracking", op.backtracking},
                      {"growth", op.growth},
                      {"max_halvings", op.maxHalvings}};
    Json freeNames = Json::array();
    for (auto cls : c.optimize.free) {
        freeNames.push_back(std::string(paramClassName(cls)));
    }
    j["optimize"]   = {{"steps", c.optimize.steps},
                       {"free", freeNames},
                       {"geometric", std::string(geometricName(c.optimize.geometric))},
                       {"snapshot_every", c.optimize.snapshotEvery},
                       {"frame_every", c.optimize.frameEvery}};
    j["grad_check"] = {{"step", c.gradCheck.step},
                       {"tolerance", c.gradCheck.tolerance},
                       {"geometric", std::string(geometricName(c.gradCheck.geometric))},
                       {"angle", c.gradCheck.angle},
                       {"sigma", c.gradCheck.sigma}};
    Json backends   = Json::array();
    for (auto b : c.bench.backends) {
        backends.push_back(std::string(backendName(b)));
    }
    j["bench"] = {{"sizes", c.bench.sizes}, {"backends", backends}, {"rows", c.bench.rows},
                  {"cols", c.bench.cols},   {"support", c.bench.support}, {"repeats", c.bench.repeats}};
    return j;
}

void
setPath(Json &doc, const std::string &path, const std::string &value) {
    if (path.empty()) {
        throw ConfigError("", "empty --set path");
    }
    Json       *node = &doc;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) {
            throw ConfigError(path, "malformed --set path");
        }
        if (!node->is_object()) {
            if (!node->is_null()) {
                throw ConfigError(path, "cannot descend into a non-object value");
            }
            *node = Json::object();
        }
        node = &(*node)[key];
        if (dot == std::string::npos) {
            break;
        }
        start = dot + 1;
    }
    try {
        *node = Json::parse(value);
    } catch (const Json::parse_error &) {
        *node = value;
    }
}

Json
readConfigFile(const std::string &path) {
    std::ifstream is(path);
    if (!is) {
        throw ConfigError("", "cannot open config file " + path);
    }
    try {
        return Json::parse(is);
    } catch (const Json::parse_error &e) {
        // nlohmann reports "at line L, column C" in the message
        throw ConfigError("", path + ": " + e.what());
    }
}

} // namespace cellrender::cli
