// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#include "cellrender/scene.hpp"

#include "cellrender/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace cellrender {

std::string_view
primitiveName(Primitive p) {
    switch (p) {
    case Primitive::Sphere: return "sphere";
    case Primitive::Box: return "box";
    case Primitive::Torus: return "torus";
    case Primitive::LBracket: return "l_bracket";
    case Primitive::ThreeArm: return "three_arm";
    }
    return "unknown";
}

Primitive
primitiveFromName(std::string_view name) {
    for (auto p : {Primitive::Sphere, Primitive::Box, Primitive::Torus, Primitive::LBracket,
                   Primitive::ThreeArm}) {
        if (primitiveName(p) == name) {
            return p;
        }
    }
    throw InvalidParameter("unknown primitive '" + std::string(name) + "'");
}

Point3
randomUnitVector(Rng &rng) {
    while (true) {
        const Point3 v(rng.normal(), rng.normal(), rng.normal());
        const double n = v.norm();
        if (n > 1e-12) {
            return v / n;
        }
    }
}

namespace {

Point3
sampleBoxSurface(const Point3 &half, Rng &rng) {
    // face pairs weighted by area
    const double ayz = half.y() * half.z(), axz = half.x() * half.z(), axy = half.x() * half.y();
    const double t   = rng.uniform() * (ayz + axz + axy);
    const double sgn = rng.uniform() < 0.5 ? -1.0 : 1.0;
    Point3       p(rng.uniform(-half.x(), half.x()), rng.uniform(-half.y(), half.y()),
                   rng.uniform(-half.z(), half.z()));
    if (t < ayz) {
        p.x() = sgn * half.x();
    } else if (t < ayz + axz) {
        p.y() = sgn * half.y();
    } else {
        p.z() = sgn * half.z();
    }
    return p;
}

struct Slab {
    Point3 lo, hi;
    bool
    contains(const Point3 &p) const {
        return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
    }
};

Point3
sampleUnion(const std::vector<Slab> &parts, Rng &rng) {
    Point3 lo = parts[0].lo, hi = parts[0].hi;
    for (const auto &s : parts) {
        lo = lo.cwiseMin(s.lo);
        hi = hi.cwiseMax(s.hi);
    }
    while (true) {
        const Point3 p(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()),
                       rng.uniform(lo.z(), hi.z()));
        for (const auto &s : parts) {
            if (s.contains(p)) {
                return p;
            }
        }
    }
}

} // namespace

PointCloud
samplePrimitive(Primitive prim, std::size_t count, Rng &rng) {
    if (count == 0) {
        throw InvalidParameter("samplePrimitive: count must be positive");
    }
    std::vector<Point3> pts;
    pts.reserve(count);
    const std::vector<Slab> bracket = {
        {Point3(0.0, 0.0, 0.0), Point3(1.0, 0.25, 0.5)},
        {Point3(0.0, 0.0, 0.0), Point3(0.25, 1.0, 0.5)},
    };
    const std::vector<Slab> arms = {
        {Point3(-0.1, -0.1, -0.1), Point3(1.0, 0.1, 0.1)},
        {Point3(-0.15, -0.15, -0.15), Point3(0.15, 0.6, 0.15)},
        {Point3(-0.06, -0.06, -0.06), Point3(0.06, 0.06, 0.35)},
    };
    for (std::size_t i = 0; i < count; ++i) {
        switch (prim) {
        case Primitive::Sphere: pts.push_back(randomUnitVector(rng)); break;
        case Primitive::Box: pts.push_back(sampleBoxSurface(Point3(0.5, 0.35, 0.25), rng)); break;
        case Primitive::Torus: {
            constexpr double R = 1.0, r = 0.35;
            double           phi = 0.0;
            do {
                phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
            } while (rng.uniform() * (R + r) > R + r * std::cos(phi));
            const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
            const double ring  = R + r * std::cos(phi);
            pts.emplace_back(ring * std::cos(theta), ring * std::sin(theta), r * std::sin(phi));
            break;
        }
        case Primitive::LBracket: pts.push_back(sampleUnion(bracket, rng)); break;
        case Primitive::ThreeArm: pts.push_back(sampleUnion(arms, rng)); break;
        }
    }
    return normalizeCloud(PointCloud(std::move(pts)));
}

PointCloud
cropBall(const PointCloud &cloud, const Point3 &center, double radius) {
    if (!(radius > 0.0)) {
        throw InvalidParameter("cropBall: radius must be positive");
    }
    std::vector<Point3>     pts;
    std::vector<PointLabel> labels;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if ((cloud[i] - center).norm() <= radius) {
            pts.push_back(cloud[i]);
            if (cloud.hasLabels()) {
                labels.push_back(cloud.label(i));
            }
        }
    }
    return cloud.hasLabels() ? PointCloud(std::move(pts), std::move(labels)) : PointCloud(std::move(pts));
}

void
ClutterSpec::validate() const {
    if (minFragments < 0 || maxFragments < minFragments) {
        throw InvalidParameter("clutter: fragment count range must be nonempty and >= 0");
    }
    if (!(cropRadius > 0.0) || !std::isfinite(cropRadius)) {
        throw InvalidParameter("clutter: crop_radius must be positive");
    }
    if (!(clutterScale > 0.0) || !std::isfinite(clutterScale)) {
        throw InvalidParameter("clutter: clutter_scale must be positive");
    }
    if (placement.isEmpty()) {
        throw InvalidParameter("clutter: placement region is empty");
    }
    if (occluder && (!(occluder->radius > 0.0) || occluder->points == 0)) {
        throw InvalidParameter("clutter: occluder needs a positive radius and point count");
    }
    if (!primitives.empty() && primitivePoints == 0) {
        throw InvalidParameter("clutter: primitive_points must be positive");
    }
}

Point3
FragmentRecord::place(const Point3 &p) const {
    return translation + scale * rotation.rotate(p - cropCenter);
}

Point3
FragmentRecord::unplace(const Point3 &q) const {
    return cropCenter + rotation.conjugate().rotate((q - translation) / scale);
}

SynthResult
synthScene(const PointCloud &base, const std::vector<PointCloud> &pool, const ClutterSpec &spec) {
    spec.validate();
    if (base.empty()) {
        throw InvalidInput("synthScene: empty base cloud");
    }
    const std::size_t sources = pool.size() + spec.primitives.size();
    if (spec.maxFragments > 0 && sources == 0) {
        throw InvalidInput("synthScene: empty fragment pool and no primitives requested");
    }
    for (const auto &c : pool) {
        if (c.empty()) {
            throw InvalidInput("synthScene: empty cloud in fragment pool");
        }
    }

    Rng                     rng(spec.seed);
    std::vector<Point3>     pts    = base.points();
    std::vector<PointLabel> labels(pts.size(), PointLabel::Object);
    SynthResult             out;
    out.truth.objectCount = pts.size();

    std::vector<std::optional<PointCloud>> primitiveClouds(spec.primitives.size());
    const int count = static_cast<int>(rng.uniformInt(spec.minFragments, spec.maxFragments));
    for (int f = 0; f < count; ++f) {
        FragmentRecord rec;
        rec.source = static_cast<int>(rng.uniformInt(0, static_cast<std::int64_t>(sources) - 1));
        const PointCloud *src = nullptr;
        if (static_cast<std::size_t>(rec.source) < pool.size()) {
            src = &pool[rec.source];
        } else {
            auto &slot = primitiveClouds[rec.source - pool.size()];
            if (!slot) {
                slot = samplePrimitive(spec.primitives[rec.source - pool.size()], spec.primitivePoints, rng);
            }
            src = &*slot;
        }
        // retry a few centers when the crop comes out too sparse
        PointCloud piece;
        for (int attempt = 0; attempt < 16; ++attempt) {
            rec.cropCenter = (*src)[rng.uniformInt(0, static_cast<std::int64_t>(src->size()) - 1)];
            piece          = cropBall(*src, rec.cropCenter, spec.cropRadius);
            if (piece.size() >= spec.minFragmentPoints) {
                break;
            }
        }
        rec.scale    = spec.clutterScale;
        rec.rotation = spec.rotateFragments ? uniformRandomRotation(rng) : Quaternion::identity();
        const Point3 &lo = spec.placement.min(), &hi = spec.placement.max();
        rec.translation  = Point3(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()),
                                  rng.uniform(lo.z(), hi.z()));
        rec.begin = pts.size();
        for (const auto &p : piece.points()) {
            pts.push_back(rec.place(p));
            labels.push_back(PointLabel::Clutter);
        }
        rec.end = pts.size();
        out.truth.fragments.push_back(rec);
    }
    if (spec.occluder) {
        out.truth.occluder      = spec.occluder;
        out.truth.occluderBegin = pts.size();
        for (std::size_t i = 0; i < spec.occluder->points; ++i) {
            pts.push_back(spec.occluder->center + spec.occluder->radius * randomUnitVector(rng));
            labels.push_back(PointLabel::Clutter);
        }
    }
    out.scene = PointCloud(std::move(pts), std::move(labels));
    return out;
}

Quaternion
randomRotation(Rng &rng, double angle) {
    return Quaternion::fromAxisAngle(randomUnitVector(rng), angle);
}

Quaternion
uniformRandomRotation(Rng &rng) {
    const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
    const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
    const double t2 = 2.0 * std::numbers::pi * u2, t3 = 2.0 * std::numbers::pi * u3;
    return Quaternion(b * std::cos(t3), a * std::sin(t2), a * std::cos(t2), b * std::sin(t3));
}

TpsWarp
randomTpsWarp(Rng &rng, double sigma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
        throw InvalidParameter("randomTpsWarp: sigma must be finite and >= 0");
    }
    std::vector<double> d(32);
    for (auto &v : d) {
        v = rng.normal(0.0, sigma);
    }
    return TpsWarp::fromFlat(d);
}

PointCloud
sampleIntensity(const RenderedImage &image, std::size_t count, Rng &rng, int channel) {
    if (channel < 0 || channel >= image.channels()) {
        throw InvalidParameter("sampleIntensity: channel out of range");
    }
    const auto          px = image.channel(channel);
    std::vector<double> cdf(px.size());
    double              total = 0.0;
    for (std::size_t k = 0; k < px.size(); ++k) {
        if (!(px[k] >= 0.0) || !std::isfinite(px[k])) {
            throw InvalidInput("sampleIntensity: intensities must be finite and >= 0");
        }
        total += px[k];
        cdf[k] = total;
    }
    if (!(total > 0.0)) {
        throw InvalidInput("sampleIntensity: image has no positive intensity");
    }
    const int           h = image.height(), w = image.width();
    std::vector<Point3> pts;
    pts.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
        const double t = rng.uniform() * total;
        auto         k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), t) - cdf.begin());
        k              = std::min(k, cdf.size() - 1);
        while (px[k] <= 0.0) { // never land on a zero pixel through rounding
            k = k == 0 ? cdf.size() - 1 : k - 1;
        }
        const int i = static_cast<int>(k) / w, j = static_cast<int>(k) % w;
        const double x = -1.0 + 2.0 * (j + rng.uniform()) / w;
        const double y = -1.0 + 2.0 * (i + rng.uniform()) / h;
        pts.emplace_back(x, y, 0.0);
    }
    return PointCloud(std::move(pts));
}

} // namespace cellrender
