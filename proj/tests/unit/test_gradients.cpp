// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "cellrender/error.hpp"
#include "cellrender/gradients.hpp"
#include "cellrender/parallel.hpp"
#include "cellrender/renderer.hpp"
#include "cellrender/rng.hpp"

#include "fixtures.hpp"

#include <cmath>

using namespace cellrender;

namespace {

RenderOptions
with(Backend b) {
    RenderOptions o;
    o.backend = b;
    return o;
}

std::vector<double>
flatten(const ParamGradients &g) {
    std::vector<double> out = g.params;
    for (const auto &p : g.points) {
        out.insert(out.end(), {p.x(), p.y(), p.z()});
    }
    return out;
}

} // namespace

TEST(RenderBackward, ZeroUpstreamGivesZeroGradients) {
    Rng  rng(1);
    auto c = fixtures::smoothGradientCase(rng, 4, 20, GeometricKind::Tps);
    RenderedImage zero(c.upstream.height(), c.upstream.width(), c.upstream.channels());
    for (double v : flatten(renderBackward(c.grid, c.cloud, c.params, zero))) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(RenderBackward, SinglePointGaussianClosedForm) {
    SensorCell cell;
    cell.position     = Point3(0.1, -0.2, -1.0);
    cell.shift        = Vec2(0.05, 0.02);
    cell.lateral      = KernelSpec::gaussian(0.7);
    cell.depth        = std::nullopt;
    SensorGrid grid   = SensorGrid::planar(1, 1, cell);
    grid.cells[0]     = cell;
    grid.channels     = {ChannelSpec::density()};
    const Point3 p(0.4, 0.3, 0.2);
    RenderedImage up(1, 1, 1, 1.0);
    auto params = RenderParams::pack(grid);
    auto g      = renderBackward(grid, PointCloud({p}), params, up);

    const double sigma = 0.7;
    const Vec2   d(p.x() - cell.position.x() - cell.shift.x(), p.y() - cell.position.y() - cell.shift.y());
    const double f = std::exp(-d.squaredNorm() / (2 * sigma * sigma));
    // d f / d p = -f d / sigma^2 in the plane, nothing along the view axis
    EXPECT_NEAR(g.points[0].x(), -f * d.x() / (sigma * sigma), 1e-15);
    EXPECT_NEAR(g.points[0].y(), -f * d.y() / (sigma * sigma), 1e-15);
    EXPECT_NEAR(g.points[0].z(), 0.0, 1e-15);
    EXPECT_NEAR(g.params[0], f * d.x() / (sigma * sigma), 1e-15);
    EXPECT_NEAR(g.params[3], f * d.x() / (sigma * sigma), 1e-15); // shift enters like position
    EXPECT_NEAR(g.params[10], f * d.squaredNorm() / (sigma * sigma * sigma), 1e-15);
    EXPECT_NEAR(g.params[11], f, 1e-15); // sensitivity
}

TEST(RenderBackward, DoublingUpstreamDoublesExactly) {
    Rng rng(2);
    for (int t = 0; t < 10; ++t) {
        auto c  = fixtures::smoothGradientCase(rng, 4, 30, static_cast<GeometricKind>(t % 3));
        auto up = c.upstream;
        for (auto &v : up.data()) {
            v *= 2.0;
        }
        auto a = flatten(renderBackward(c.grid, c.cloud, c.params, c.upstream));
        auto b = flatten(renderBackward(c.grid, c.cloud, c.params, up));
        for (std::size_t k = 0; k < a.size(); ++k) {
            EXPECT_EQ(b[k], 2.0 * a[k]);
        }
    }
}

TEST(RenderBackward, LinearInUpstream) {
    Rng rng(3);
    for (int t = 0; t < 10; ++t) {
        auto c  = fixtures::smoothGradientCase(rng, 4, 30, static_cast<GeometricKind>(t % 3));
        auto u2 = fixtures::randomImage(rng, c.upstream.height(), c.upstream.width(), c.upstream.channels());
        auto us = c.upstream;
        for (std::size_t k = 0; k < us.data().size(); ++k) {
            us.data()[k] += u2.data()[k];
        }
        auto a = flatten(renderBackward(c.grid, c.cloud, c.params, c.upstream));
        auto b = flatten(renderBackward(c.grid, c.cloud, c.params, u2));
        auto s = flatten(renderBackward(c.grid, c.cloud, c.params, us));
        for (std::size_t k = 0; k < a.size(); ++k) {
            EXPECT_NEAR(s[k], a[k] + b[k], 1e-12 * std::max(1.0, std::abs(s[k])));
        }
    }
}

TEST(RenderBackward, MaxPixelGradientTouchesOnePoint) {
    Rng rng(4);
    for (int t = 0; t < 20; ++t) {
        auto c = fixtures::smoothGradientCase(rng, 4, 30);
        c.grid.channels = {ChannelSpec::range()};
        auto res = renderDetailed(c.params.applyTo(c.grid), c.cloud);
        for (std::size_t k = 0; k < c.grid.cellCount(); ++k) {
            RenderedImage up(c.grid.rows, c.grid.cols, 1);
            up.data()[k] = 1.0;
            auto g       = renderBackward(c.grid, c.cloud, c.params, up);
            int  touched = 0;
            for (std::size_t i = 0; i < g.points.size(); ++i) {
                if (g.points[i] != Eigen::Vector3d::Zero()) {
                    ++touched;
                    EXPECT_EQ(static_cast<std::int64_t>(i), res.argmax[k]);
                }
            }
            EXPECT_LE(touched, 1);
        }
    }
}

TEST(RenderBackward, BackendsAgree) {
    Rng rng(5);
    for (int t = 0; t < 10; ++t) {
        auto grid   = fixtures::latticeGrid(rng, 8, 8, fixtures::randomChannels(rng));
        auto cloud  = fixtures::uniformCloud(rng, 300);
        auto params = RenderParams::pack(grid);
        auto up     = fixtures::randomImage(rng, 8, 8, static_cast<int>(grid.channels.size()));
        auto ref    = flatten(renderBackward(grid, cloud, params, up, with(Backend::Brute)));
        for (auto b : {Backend::KdTree, Backend::Binning}) {
            auto got = flatten(renderBackward(grid, cloud, params, up, with(b)));
            ASSERT_EQ(got.size(), ref.size());
            for (std::size_t k = 0; k < got.size(); ++k) {
                EXPECT_NEAR(got[k], ref[k], 1e-12 * std::max(1.0, std::abs(ref[k])));
            }
        }
    }
}

TEST(RenderBackward, BitReproducibleAcrossThreadCounts) {
    Rng  rng(6);
    auto c = fixtures::smoothGradientCase(rng, 5, 40, GeometricKind::Rotation);
    setThreadCount(1);
    auto a = flatten(renderBackward(c.grid, c.cloud, c.params, c.upstream));
    setThreadCount(4);
    auto b = flatten(renderBackward(c.grid, c.cloud, c.params, c.upstream));
    setThreadCount(0);
    EXPECT_EQ(a, b);
}

TEST(RenderBackward, ShapeMismatchRejected) {
    Rng  rng(7);
    auto c = fixtures::smoothGradientCase(rng, 3, 10);
    RenderedImage wrong(c.grid.rows + 1, c.grid.cols, c.upstream.channels());
    EXPECT_THROW(renderBackward(c.grid, c.cloud, c.params, wrong), InvalidParameter);
}

// ---------------------------------------------------------------------------------------------

TEST(FiniteDiff, QuadraticIsExactToRoundoff) {
    std::vector<double> x = {0.3, -1.2, 2.5, 0.01};
    std::vector<double> g;
    for (double v : x) {
        g.push_back(2 * v);
    }
    auto f = [](std::span<const double> p, std::size_t) {
        double s = 0.0;
        for (double v : p) {
            s += v * v;
        }
        return s;
    };
    auto rep = finiteDiffCheck(f, x, g);
    EXPECT_TRUE(rep.passed());
    EXPECT_LT(rep.maxRelError, 1e-8);
    EXPECT_EQ(rep.checked.size(), 4u);
}

TEST(FiniteDiff, WrongGradientIsReported) {
    std::vector<double> x = {1.0, 2.0};
    std::vector<double> g = {2.0, 4.1};
    auto f = [](std::span<const double> p, std::size_t) { return p[0] * p[0] + p[1] * p[1]; };
    auto rep = finiteDiffCheck(f, x, g);
    ASSERT_EQ(rep.offending.size(), 1u);
    EXPECT_EQ(rep.offending[0].index, 1u);
}

TEST(FiniteDiff, SmoothRenderConfigurations) {
    Rng rng(8);
    for (int t = 0; t < 30; ++t) {
        auto c   = fixtures::smoothGradientCase(rng, 4, 25, static_cast<GeometricKind>(t % 3));
        auto rep = checkRenderGradients(c.grid, c.cloud, c.params, c.upstream);
        EXPECT_TRUE(rep.passed()) << "case " << t << " max rel " << rep.maxRelError;
        EXPECT_LT(rep.maxRelError, 1e-4);
        EXPECT_FALSE(rep.checked.empty());
    }
}

TEST(FiniteDiff, SupportBoundaryIsExcludedNotFailed) {
    // a point 3 steps inside the triangular support edge along x
    SensorCell cell;
    cell.lateral    = KernelSpec::triangular(0.5);
    cell.depth      = std::nullopt;
    SensorGrid grid = SensorGrid::planar(1, 1, cell, 1.0, -1.0);
    grid.channels   = {ChannelSpec::density()};
    const double h  = 1e-4;
    PointCloud    cloud({Point3(0.5 - 3 * h, 0.0, 0.0)});
    auto          params = RenderParams::pack(grid);
    RenderedImage up(1, 1, 1, 1.0);
    FiniteDiffOptions opts;
    opts.step = h;
    auto rep  = checkRenderGradients(grid, cloud, params, up, opts);
    const std::size_t px = params.values.size(); // the point's x coordinate
    EXPECT_NE(std::find(rep.excluded.begin(), rep.excluded.end(), px), rep.excluded.end());
    EXPECT_NE(std::find(rep.excluded.begin(), rep.excluded.end(), 0u), rep.excluded.end());
    EXPECT_TRUE(rep.passed());
}

TEST(FiniteDiff, MaxTieIsExcluded) {
    SensorCell cell;
    cell.lateral    = KernelSpec::gaussian(1.0);
    cell.depth      = std::nullopt;
    SensorGrid grid = SensorGrid::planar(1, 1, cell, 1.0, -1.0);
    grid.channels   = {ChannelSpec::range()};
    PointCloud    cloud({Point3(0.3, 0.0, 0.0), Point3(-0.3, 0.0, 0.0)});
    auto          params = RenderParams::pack(grid);
    RenderedImage up(1, 1, 1, 1.0);
    auto          rep = checkRenderGradients(grid, cloud, params, up);
    // moving the cell along x flips the argmax
    EXPECT_NE(std::find(rep.excluded.begin(), rep.excluded.end(), 0u), rep.excluded.end());
    EXPECT_TRUE(rep.passed());
}

TEST(FiniteDiff, ClassesCoverEveryParameterKind) {
    Rng  rng(9);
    auto c   = fixtures::smoothGradientCase(rng, 2, 5, GeometricKind::Rotation);
    auto rep = checkRenderGradients(c.grid, c.cloud, c.params, c.upstream);
    ASSERT_EQ(rep.classes.size(), c.params.values.size() + 3 * c.cloud.size());
    EXPECT_EQ(rep.classes.back(), ParamClass::PointCoordinate);
    EXPECT_EQ(rep.classes[c.params.layout.geometricOffset()], ParamClass::GeomRotation);
}

TEST(FiniteDiff, LocalShortcutsMatchFullRerender) {
    // plain closure: whole image, whole signature, every time
    Rng         rng(10);
    std::size_t excluded = 0;
    for (int t = 0; t < 12; ++t) {
        auto c = fixtures::smoothGradientCase(rng, 4, 20, static_cast<GeometricKind>(t % 3));
        if (t % 4 == 3) {
            // compact kernels so some coordinates sit on support boundaries
            c.grid  = fixtures::latticeGrid(rng, 3, 3, fixtures::randomChannels(rng));
            c.cloud = fixtures::uniformCloud(rng, 25, -0.4, 0.4);
            // one point just inside the lateral support edge of cell 4
            const SensorCell &cell = c.grid.cells[4];
            const double      R    = cell.lateral.family == KernelFamily::Triangular ? cell.lateral.params[0]
                                                                                      : cell.lateral.params[1];
            auto pts = c.cloud.points();
            pts.push_back(cell.position + Point3(cell.shift.x() + R - 2e-4, cell.shift.y(), 0.0));
            c.cloud = PointCloud(std::move(pts));
            c.params   = RenderParams::pack(c.grid);
            c.upstream = fixtures::positiveImage(rng, 3, 3, static_cast<int>(c.grid.channels.size()));
        }
        const std::size_t np = c.params.values.size();
        auto unpack = [&](std::span<const double> x, RenderParams &p) {
            p = c.params;
            std::copy(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(np), p.values.begin());
            std::vector<Point3> pts;
            for (std::size_t i = np; i < x.size(); i += 3) {
                pts.emplace_back(x[i], x[i + 1], x[i + 2]);
            }
            return PointCloud(std::move(pts));
        };
        auto f = [&](std::span<const double> x, std::size_t) {
            RenderParams p;
            auto         cloud = unpack(x, p);
            return weightedImageSum(c.upstream, render(c.grid, cloud, p));
        };
        auto sig = [&](std::span<const double> x, std::size_t) {
            RenderParams p;
            auto         cloud = unpack(x, p);
            auto g             = p.applyTo(c.grid);
            auto moved         = applyGeometric(p.geometric(), cloud);
            std::vector<std::int64_t> s;
            for (std::size_t k = 0; k < g.cellCount(); ++k) {
                auto part = interactionSignature(g, k, moved);
                s.insert(s.end(), part.begin(), part.end());
            }
            return s;
        };
        const auto fast = checkRenderGradients(c.grid, c.cloud, c.params, c.upstream);
        std::vector<double> x0 = c.params.values;
        for (const auto &p : c.cloud.points()) {
            x0.insert(x0.end(), {p.x(), p.y(), p.z()});
        }
        std::vector<double> analytic(x0.size(), 0.0);
        for (const auto &cc : fast.checked) {
            analytic[cc.index] = cc.analytic;
        }
        const auto slow = finiteDiffCheck(f, x0, analytic, {}, sig);
        ASSERT_EQ(fast.excluded, slow.excluded) << "case " << t;
        excluded += fast.excluded.size();
        ASSERT_EQ(fast.checked.size(), slow.checked.size());
        for (std::size_t i = 0; i < fast.checked.size(); ++i) {
            const double scale = std::max(1.0, std::abs(slow.checked[i].numeric));
            EXPECT_NEAR(fast.checked[i].numeric, slow.checked[i].numeric, 1e-9 * scale)
                << "case " << t << " coordinate " << fast.checked[i].index;
        }
    }
    EXPECT_GT(excluded, 0u);
}
