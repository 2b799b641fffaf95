// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cellrender/geometry.hpp"
#include "cellrender/renderer.hpp"
#include "cellrender/rng.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace cellrender {

// ---------------------------------------------------------------------------------------
// Primitive samplers. Every sampler returns a cloud normalized to the unit ball.

enum class Primitive {
    Sphere,   // surface of a sphere
    Box,      // surface of a 1 x 0.7 x 0.5 box
    Torus,    // surface, tube ratio 0.35
    LBracket, // solid L-shaped bracket
    ThreeArm, // solid; three orthogonal arms of different length and thickness
};

std::string_view primitiveName(Primitive p);
Primitive        primitiveFromName(std::string_view name);

PointCloud samplePrimitive(Primitive p, std::size_t count, Rng &rng);

/// Points within `radius` of `center` (inclusive), labels kept.
PointCloud cropBall(const PointCloud &cloud, const Point3 &center, double radius);

// ---------------------------------------------------------------------------------------
// Cluttered scenes

struct OccluderSpec {
    Point3      center = Point3(0.0, 0.0, -1.2);
    double      radius = 0.6;
    std::size_t points = 1024;
};

struct ClutterSpec {
    int                       minFragments = 4;
    int                       maxFragments = 6;
    double                    cropRadius   = 0.3;
    double                    clutterScale = 1.0;
    Eigen::AlignedBox3d       placement{Point3(-1.0, -1.0, -1.0), Point3(1.0, 1.0, 1.0)};
    std::uint64_t             seed              = 0;
    std::size_t               minFragmentPoints = 8;
    bool                      rotateFragments   = true;
    std::vector<Primitive>    primitives;           // extra fragment sources besides the pool
    std::size_t               primitivePoints = 512;
    std::optional<OccluderSpec> occluder;

    void validate() const;
};

struct FragmentRecord {
    std::size_t begin = 0, end = 0; // index range in the scene
    int         source = 0;         // pool index, or pool.size() + k for primitives[k]
    Point3      cropCenter = Point3::Zero();
    double      scale      = 1.0;
    Quaternion  rotation;
    Point3      translation = Point3::Zero();

    /// Placed point from a cropped source point: translation + scale * R (p - cropCenter).
    Point3 place(const Point3 &p) const;
    Point3 unplace(const Point3 &q) const;
};

struct SceneTruth {
    std::size_t                 objectCount = 0; // object points come first
    std::vector<FragmentRecord> fragments;
    std::optional<OccluderSpec> occluder;
    std::size_t                 occluderBegin = 0;
};

struct SynthResult {
    PointCloud scene;
    SceneTruth truth;
};

/// Base object followed by ball-cropped fragments and an optional sphere occluder. All
/// randomness comes from `spec.seed`.
SynthResult synthScene(const PointCloud &base, const std::vector<PointCloud> &pool,
                       const ClutterSpec &spec);

// ---------------------------------------------------------------------------------------
// Perturbations

Point3     randomUnitVector(Rng &rng);
/// Rotation by exactly `angle` about a uniformly random axis.
Quaternion randomRotation(Rng &rng, double angle);
/// Haar-uniform rotation.
Quaternion uniformRandomRotation(Rng &rng);
/// Default 4 x 4 control grid with i.i.d. N(0, sigma^2) in-plane displacements.
TpsWarp randomTpsWarp(Rng &rng, double sigma = 0.07);

/// `count` points drawn with probability proportional to pixel intensity of one channel,
/// jittered uniformly within the pixel, mapped to [-1, 1]^2 (row 0 at y = -1), z = 0.
PointCloud sampleIntensity(const RenderedImage &image, std::size_t count, Rng &rng, int channel = 0);

} // namespace cellrender
