// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cellrender/optim.hpp"
#include "cellrender/renderer.hpp"
#include "cellrender/scene.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cellrender::cli {

using Json = nlohmann::ordered_json;

/// Invalid configuration; `field` is the dotted path of the offending entry.
class ConfigError : public std::runtime_error {
  public:
    ConfigError(std::string field, const std::string &message)
        : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}

    const std::string &
    field() const {
        return field_;
    }

  private:
    std::string field_;
};

struct AttenuationConfig {
    int    components = 3;
    double nearZ      = 1.0;
    double farZ       = 3.0;
    double width      = 0.3;
    Squash squash     = Squash::Softsign;
    bool   clamp      = false;
};

struct CellConfig {
    KernelSpec                       lateral = KernelSpec::gaussian(0.15);
    std::optional<KernelSpec>        depth   = KernelSpec::triangular(4.0);
    bool                             radial  = false;
    double                           elongation  = 1.0;
    double                           sensitivity = 1.0;
    std::optional<AttenuationConfig> attenuation;
};

struct GridConfig {
    GridTopology             topology   = GridTopology::Planar;
    int                      rows       = 16;
    int                      cols       = 16;
    double                   extent     = 1.0;
    double                   planeZ     = -2.0;
    bool                     fullCircle = false;
    double                   radius     = 0.5;
    double                   farValue   = 0.0;
    CellConfig               cell;
    std::vector<ChannelSpec> channels = {ChannelSpec::range(), ChannelSpec::density()};
};

struct OccluderConfig {
    std::array<double, 3> center = {0.0, 0.0, -1.2};
    double                radius = 0.6;
    std::size_t           points = 1024;
};

struct ClutterConfig {
    bool                          enabled      = false;
    int                           minFragments = 4;
    int                           maxFragments = 6;
    double                        cropRadius   = 0.3;
    double                        scale        = 1.0;
    std::vector<Primitive>        pool         = {Primitive::Torus, Primitive::Box, Primitive::Sphere};
    std::size_t                   poolPoints   = 1024;
    bool                          rotate       = true;
    std::array<double, 3>         placementMin = {-1.0, -1.0, -1.0};
    std::array<double, 3>         placementMax = {1.0, 1.0, 1.0};
    std::optional<OccluderConfig> occluder;
};

enum class SceneSource { Primitive, File, Points };

struct TransformConfig {
    GeometricKind kind  = GeometricKind::None;
    double        angle = 0.3;  // rotation
    double        sigma = 0.07; // tps
};

struct SceneConfig {
    SceneSource                        source    = SceneSource::Primitive;
    Primitive                          primitive = Primitive::ThreeArm;
    std::size_t                        count     = 256;
    std::string                        path;
    std::vector<std::array<double, 3>> points;
    ClutterConfig                      clutter;
    TransformConfig                    transform;
};

struct LossConfig {
    LossKind            kind   = LossKind::ImageMse;
    std::string         target = "clean"; // "clean" or a .crnd path
    std::vector<double> weights;
};

struct OptimizeConfig {
    int                     steps = 100;
    std::vector<ParamClass> free;
    GeometricKind           geometric     = GeometricKind::None;
    int                     snapshotEvery = 0;
    int                     frameEvery    = 0;
};

struct GradCheckConfig {
    double        step      = 1e-4;
    double        tolerance = 1e-4;
    GeometricKind geometric = GeometricKind::None;
    double        angle     = 0.2;
    double        sigma     = 0.07;
};

struct BenchConfig {
    std::vector<std::size_t> sizes    = {10000, 100000};
    std::vector<Backend>     backends = {Backend::Brute, Backend::KdTree, Backend::Binning};
    int                      rows     = 64;
    int                      cols     = 64;
    double                   support  = 1.0 / 32.0; // lateral radius, epanechnikov_pow 1.65
    int                      repeats  = 3;
};

struct RunConfig {
    std::uint64_t   seed    = 0;
    int             threads = 0;
    Backend         backend = Backend::Auto;
    std::string     output  = "cellrender_out";
    GridConfig      grid;
    SceneConfig     scene;
    LossConfig      loss;
    OptimizerSpec   optimizer;
    OptimizeConfig  optimize;
    GradCheckConfig gradCheck;
    BenchConfig     bench;
};

/// Parses and validates a config document. Unknown keys and type mismatches throw ConfigError.
RunConfig parseConfig(const Json &doc);
/// Fully resolved document; parseConfig(toJson(c)) reproduces c.
Json toJson(const RunConfig &config);

/// Sets `dotted.path` to `value` (parsed as JSON, or taken as a string when that fails).
void setPath(Json &doc, const std::string &path, const std::string &value);

/// Reads a JSON file; parse errors carry line and column.
Json readConfigFile(const std::string &path);

SensorGrid buildGrid(const GridConfig &config);

} // namespace cellrender::cli
