// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "cellrender/error.hpp"
#include "cellrender/rng.hpp"
#include "cellrender/scene.hpp"

#include <cmath>

using namespace cellrender;

namespace {

PointCloud
base(std::uint64_t seed = 1) {
    Rng rng(seed);
    return samplePrimitive(Primitive::LBracket, 500, rng);
}

std::vector<PointCloud>
pool() {
    Rng rng(2);
    return {samplePrimitive(Primitive::Torus, 800, rng), samplePrimitive(Primitive::Box, 800, rng)};
}

} // namespace

TEST(Primitives, NormalizedToUnitBall) {
    Rng rng(3);
    for (auto p : {Primitive::Sphere, Primitive::Box, Primitive::Torus, Primitive::LBracket, Primitive::ThreeArm}) {
        auto   c    = samplePrimitive(p, 400, rng);
        Point3 mean = Point3::Zero();
        double rmax = 0.0;
        for (const auto &q : c.points()) {
            mean += q;
            rmax = std::max(rmax, q.norm());
        }
        EXPECT_EQ(c.size(), 400u);
        EXPECT_LT((mean / 400.0).norm(), 1e-12) << primitiveName(p);
        EXPECT_NEAR(rmax, 1.0, 1e-12) << primitiveName(p);
        EXPECT_EQ(primitiveFromName(primitiveName(p)), p);
    }
    EXPECT_THROW(primitiveFromName("cone"), InvalidParameter);
}

TEST(Primitives, SphereSurfaceIsAtUnitRadius) {
    Rng rng(4);
    auto c = samplePrimitive(Primitive::Sphere, 2000, rng);
    // the sample centroid is removed, so radii only stay near one
    for (const auto &q : c.points()) {
        EXPECT_NEAR(q.norm(), 1.0, 0.1);
    }
}

TEST(CropBall, InclusiveRadius) {
    PointCloud c({Point3(0, 0, 0), Point3(0.3, 0, 0), Point3(0.3000001, 0, 0)},
                 {PointLabel::Object, PointLabel::Clutter, PointLabel::Object});
    auto r = cropBall(c, Point3::Zero(), 0.3);
    ASSERT_EQ(r.size(), 2u);
    EXPECT_EQ(r.label(1), PointLabel::Clutter);
    EXPECT_THROW(cropBall(c, Point3::Zero(), 0.0), InvalidParameter);
}

TEST(SynthScene, ZeroFragmentsIsTheBase) {
    ClutterSpec spec;
    spec.minFragments = spec.maxFragments = 0;
    auto b  = base();
    auto r  = synthScene(b, {}, spec);
    EXPECT_EQ(r.scene.points(), b.points());
    for (auto l : r.scene.labels()) {
        EXPECT_EQ(l, PointLabel::Object);
    }
    EXPECT_TRUE(r.truth.fragments.empty());
}

TEST(SynthScene, DeterministicUnderSeed) {
    ClutterSpec spec;
    spec.seed     = 42;
    spec.occluder = OccluderSpec{};
    auto a        = synthScene(base(), pool(), spec);
    auto b        = synthScene(base(), pool(), spec);
    EXPECT_EQ(a.scene.points(), b.scene.points());
    EXPECT_EQ(a.scene.labels(), b.scene.labels());
    spec.seed = 43;
    auto c    = synthScene(base(), pool(), spec);
    EXPECT_NE(a.scene.points(), c.scene.points());
}

TEST(SynthScene, FragmentsStayInsideTheCropBall) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ClutterSpec spec;
        spec.seed         = seed;
        spec.clutterScale = 1.0 + 0.1 * static_cast<double>(seed % 3);
        spec.primitives   = {Primitive::Sphere};
        auto r            = synthScene(base(), pool(), spec);
        ASSERT_GE(r.truth.fragments.size(), 4u);
        ASSERT_LE(r.truth.fragments.size(), 6u);
        for (const auto &f : r.truth.fragments) {
            EXPECT_GT(f.end, f.begin);
            for (std::size_t i = f.begin; i < f.end; ++i) {
                const Point3 src = f.unplace(r.scene[i]);
                EXPECT_LE((src - f.cropCenter).norm(), 0.3 + 1e-12);
                // placement is a similarity, so the placed piece sits in a ball of scaled radius
                EXPECT_LE((r.scene[i] - f.translation).norm(), 0.3 * f.scale + 1e-12);
            }
        }
    }
}

TEST(SynthScene, LabelsPartitionAndObjectIsUntouched) {
    ClutterSpec spec;
    spec.seed     = 7;
    spec.occluder = OccluderSpec{Point3(0, 0, -1.2), 0.6, 300};
    auto b        = base();
    auto r        = synthScene(b, pool(), spec);
    ASSERT_EQ(r.truth.objectCount, b.size());
    std::size_t clutter = 0;
    for (std::size_t i = 0; i < r.scene.size(); ++i) {
        if (i < b.size()) {
            EXPECT_EQ(r.scene.label(i), PointLabel::Object);
            EXPECT_EQ(r.scene[i], b[i]);
        } else {
            EXPECT_EQ(r.scene.label(i), PointLabel::Clutter);
            ++clutter;
        }
    }
    std::size_t recorded = 300;
    for (const auto &f : r.truth.fragments) {
        recorded += f.end - f.begin;
    }
    EXPECT_EQ(clutter, recorded);
    EXPECT_EQ(r.scene.select(PointLabel::Object).size() + r.scene.select(PointLabel::Clutter).size(), r.scene.size());
    for (std::size_t i = r.truth.occluderBegin; i < r.scene.size(); ++i) {
        EXPECT_NEAR((r.scene[i] - Point3(0, 0, -1.2)).norm(), 0.6, 1e-12);
    }
}

TEST(SynthScene, Errors) {
    ClutterSpec spec;
    EXPECT_THROW(synthScene(base(), {}, spec), InvalidInput);
    EXPECT_THROW(synthScene(PointCloud(), pool(), spec), InvalidInput);
    spec.cropRadius = 0.0;
    EXPECT_THROW(synthScene(base(), pool(), spec), InvalidParameter);
    spec.cropRadius   = 0.3;
    spec.minFragments = 5;
    spec.maxFragments = 4;
    EXPECT_THROW(synthScene(base(), pool(), spec), InvalidParameter);
}

TEST(FragmentRecord, PlaceUnplaceRoundTrip) {
    Rng            rng(8);
    FragmentRecord f;
    f.cropCenter  = Point3(0.1, 0.2, 0.3);
    f.scale       = 1.3;
    f.rotation    = uniformRandomRotation(rng);
    f.translation = Point3(-0.5, 0.4, 0.0);
    for (int t = 0; t < 100; ++t) {
        Point3 p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        EXPECT_LT((f.unplace(f.place(p)) - p).norm(), 1e-14);
    }
}

TEST(Perturbations, RandomRotationHasTheRequestedAngle) {
    Rng rng(9);
    for (int t = 0; t < 200; ++t) {
        const double a = rng.uniform(0.0, 3.0);
        EXPECT_NEAR(angularDistance(randomRotation(rng, a), Quaternion::identity()), a, 1e-7);
    }
}

TEST(Perturbations, UniformRotationsCoverTheSphere) {
    // for Haar rotations, E[tr R] = 0 and E[R e_z] = 0
    Rng    rng(10);
    double tr = 0.0;
    Point3 z  = Point3::Zero();
    const int n = 20000;
    for (int t = 0; t < n; ++t) {
        auto R = uniformRandomRotation(rng).toRotationMatrix();
        tr += R.trace();
        z += R.col(2);
    }
    EXPECT_NEAR(tr / n, 0.0, 0.05);
    EXPECT_LT((z / n).norm(), 0.03);
}

TEST(Perturbations, TpsWarpDisplacementsFollowSigma) {
    Rng    rng(11);
    double s2 = 0.0;
    int    n  = 0;
    for (int t = 0; t < 500; ++t) {
        for (double d : randomTpsWarp(rng, 0.07).flatDisplacements()) {
            s2 += d * d;
            ++n;
        }
    }
    EXPECT_NEAR(std::sqrt(s2 / n), 0.07, 0.002);
    EXPECT_EQ(randomTpsWarp(rng, 0.0).flatDisplacements(), std::vector<double>(32, 0.0));
    EXPECT_THROW(randomTpsWarp(rng, -1.0), InvalidParameter);
}

TEST(SampleIntensity, ProportionalToIntensity) {
    RenderedImage img(2, 2, 1);
    img.data() = {0.0, 1.0, 3.0, 0.0}; // (0,1) weight 1, (1,0) weight 3
    Rng  rng(12);
    auto c = sampleIntensity(img, 40000, rng);
    int  right = 0;
    for (const auto &p : c.points()) {
        EXPECT_EQ(p.z(), 0.0);
        const bool topRight  = p.x() >= 0.0 && p.y() < 0.0;
        const bool bottomLeft = p.x() < 0.0 && p.y() >= 0.0;
        EXPECT_TRUE(topRight || bottomLeft);
        right += topRight;
        EXPECT_LE(std::abs(p.x()), 1.0);
        EXPECT_LE(std::abs(p.y()), 1.0);
    }
    EXPECT_NEAR(right / 40000.0, 0.25, 0.01);
}

TEST(SampleIntensity, Errors) {
    Rng           rng(13);
    RenderedImage zero(2, 2, 1);
    EXPECT_THROW(sampleIntensity(zero, 10, rng), InvalidInput);
    RenderedImage neg(1, 1, 1, -1.0);
    EXPECT_THROW(sampleIntensity(neg, 10, rng), InvalidInput);
    EXPECT_THROW(sampleIntensity(RenderedImage(1, 1, 1, 1.0), 10, rng, 1), InvalidParameter);
}
