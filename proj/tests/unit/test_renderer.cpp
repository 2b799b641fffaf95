// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "cellrender/error.hpp"
#include "cellrender/renderer.hpp"
#include "cellrender/rng.hpp"
#include "cellrender/scene.hpp"

#include "fixtures.hpp"
#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

using namespace cellrender;
using fixtures::naiveRender;

namespace {

double
maxAbsDiff(const RenderedImage &a, const RenderedImage &b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.data().size(); ++k) {
        m = std::max(m, std::abs(a.data()[k] - b.data()[k]));
    }
    return m;
}

SensorGrid
randomGrid(Rng &rng, int rows, int cols) {
    SensorCell proto;
    proto.lateral = fixtures::smoothLateral(rng);
    proto.depth   = fixtures::smoothDepth(rng);
    SensorGrid grid = SensorGrid::planar(rows, cols, proto, 1.0, -1.5);
    grid.channels   = fixtures::randomChannels(rng);
    for (auto &cell : grid.cells) {
        cell.shift       = Vec2(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
        cell.view        = ViewTransform{fixtures::tilt(rng, 0.4), rng.uniform(0.5, 2.0)};
        cell.sensitivity = rng.uniform(0.5, 1.5);
        if (rng.uniform() < 0.5) {
            cell.attenuation = fixtures::randomAttenuation(rng, 2);
        }
    }
    return grid;
}

PointCloud
shuffled(const PointCloud &c, Rng &rng) {
    std::vector<std::size_t> idx(c.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniformInt(0, static_cast<std::int64_t>(i) - 1))]);
    }
    std::vector<Point3> pts;
    for (auto i : idx) {
        pts.push_back(c[i]);
    }
    return PointCloud(std::move(pts));
}

} // namespace

TEST(CellResponse, DuplicationDoublesSumAndKeepsMax) {
    Rng rng(1);
    for (int t = 0; t < 20; ++t) {
        SensorCell cell;
        cell.lateral = KernelSpec::gaussian(0.5);
        cell.depth   = KernelSpec::triangular(5.0);
        auto cloud   = fixtures::uniformCloud(rng, 30);
        auto pts     = cloud.points();
        pts.insert(pts.end(), cloud.points().begin(), cloud.points().end());
        PointCloud twice(pts);
        EXPECT_EQ(cellResponse(cell, twice, Reduction::Sum), 2.0 * cellResponse(cell, cloud, Reduction::Sum));
        EXPECT_EQ(cellResponse(cell, twice, Reduction::Max), cellResponse(cell, cloud, Reduction::Max));
    }
}

TEST(CellResponse, PeakAtCellCenter) {
    SensorCell cell;
    cell.lateral = KernelSpec::epanechnikovPow(1.65, 1.0);
    cell.depth   = KernelSpec::triangular(1.0);
    EXPECT_EQ(cellResponse(cell, PointCloud({Point3::Zero()}), Reduction::Max), 1.0);
    EXPECT_EQ(cellResponse(cell, PointCloud({Point3::Zero()}), Reduction::Sum), 1.0);
    EXPECT_THROW(cellResponse(cell, PointCloud(), Reduction::Max), InvalidInput);
}

TEST(Render, EmptyChannelListGivesZeroChannelImage) {
    SensorGrid grid = SensorGrid::planar(3, 5, SensorCell{});
    grid.channels.clear();
    auto img = render(grid, PointCloud({Point3::Zero()}));
    EXPECT_EQ(img.height(), 3);
    EXPECT_EQ(img.width(), 5);
    EXPECT_EQ(img.channels(), 0);
    EXPECT_TRUE(img.data().empty());
}

TEST(Render, ThreePointsOnFourByFourMatchesBruteForce) {
    SensorCell proto;
    proto.lateral   = KernelSpec::epanechnikovPow(1.65, 0.6);
    proto.depth     = KernelSpec::triangular(4.0);
    SensorGrid grid = SensorGrid::planar(4, 4, proto);
    grid.channels   = {ChannelSpec::range(), ChannelSpec::depth(), ChannelSpec::density(),
                       ChannelSpec::density(KernelSpec::expBand(2.0, 0.15), 0.2)};
    PointCloud cloud({Point3(0.1, 0.2, 0.0), Point3(-0.5, 0.4, 0.3), Point3(0.6, -0.7, -0.2)});
    auto       img = render(grid, cloud);
    EXPECT_LT(maxAbsDiff(img, naiveRender(grid, cloud)), 1e-12);
    // one hand-checked pixel: cell (2, 2) sits at (0.25, 0.25, -2)
    const double d   = std::hypot(0.1 - 0.25, 0.2 - 0.25);
    const double val = std::pow(1.0 - (d / 0.6) * (d / 0.6), 1.65) * (1.0 - 2.0 / 4.0);
    EXPECT_NEAR(img.at(0, 2, 2), val, 1e-15);
    EXPECT_NEAR(img.at(1, 2, 2), 2.0, 1e-15);
}

TEST(Render, MatchesNaiveOracleOnRandomScenes) {
    Rng rng(2);
    for (int t = 0; t < 40; ++t) {
        auto grid  = randomGrid(rng, static_cast<int>(rng.uniformInt(1, 8)), static_cast<int>(rng.uniformInt(1, 8)));
        auto cloud = fixtures::uniformCloud(rng, static_cast<std::size_t>(rng.uniformInt(1, 300)));
        for (auto b : {Backend::Brute, Backend::Auto, Backend::KdTree}) {
            RenderOptions o;
            o.backend = b;
            EXPECT_LT(maxAbsDiff(render(grid, cloud, o), naiveRender(grid, cloud)), 1e-12) << "trial " << t;
        }
    }
}

TEST(Render, PermutationInvariantBitForBit) {
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        auto grid  = randomGrid(rng, 6, 6);
        auto cloud = fixtures::uniformCloud(rng, 200);
        EXPECT_EQ(render(grid, cloud), render(grid, shuffled(cloud, rng)));
    }
}

TEST(Render, DeterministicAcrossCalls) {
    Rng  rng(4);
    auto grid  = randomGrid(rng, 7, 5);
    auto cloud = fixtures::uniformCloud(rng, 500);
    EXPECT_EQ(render(grid, cloud), render(grid, cloud));
}

TEST(Render, TranslationEquivariantInPlane) {
    Rng rng(5);
    for (int t = 0; t < 20; ++t) {
        SensorCell proto;
        proto.lateral   = fixtures::smoothLateral(rng);
        proto.depth     = std::nullopt;
        SensorGrid grid = SensorGrid::planar(5, 5, proto);
        grid.channels   = {ChannelSpec::range(), ChannelSpec::depth(), ChannelSpec::density()};
        auto       cloud = fixtures::uniformCloud(rng, 50);
        Point3     delta(rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0);
        SensorGrid moved = grid;
        for (auto &c : moved.cells) {
            c.position += delta;
        }
        std::vector<Point3> pts;
        for (const auto &p : cloud.points()) {
            pts.push_back(p + delta);
        }
        EXPECT_LT(maxAbsDiff(render(grid, cloud), render(moved, PointCloud(pts))), 1e-12);
    }
}

TEST(Render, RangeChannelMonotoneUnderAddedPoints) {
    Rng rng(6);
    for (int t = 0; t < 20; ++t) {
        auto grid = randomGrid(rng, 6, 6);
        grid.channels = {ChannelSpec::range()};
        auto cloud = fixtures::uniformCloud(rng, 40);
        auto more  = cloud.points();
        for (int k = 0; k < 40; ++k) {
            more.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        }
        auto a = render(grid, cloud), b = render(grid, PointCloud(more));
        for (std::size_t k = 0; k < a.data().size(); ++k) {
            EXPECT_GE(b.data()[k], a.data()[k]);
        }
    }
}

TEST(Render, EmptyCellsUseFarValueAndZeroDensity) {
    SensorCell proto;
    proto.lateral   = KernelSpec::triangular(0.1);
    SensorGrid grid = SensorGrid::planar(2, 2, proto);
    grid.channels   = {ChannelSpec::range(), ChannelSpec::depth(), ChannelSpec::density()};
    grid.farValue   = 9.0;
    auto res        = renderDetailed(grid, PointCloud({Point3(0.5, 0.5, -1.5)}));
    EXPECT_EQ(res.image.at(1, 0, 0), 9.0);
    EXPECT_EQ(res.image.at(2, 0, 0), 0.0);
    EXPECT_EQ(res.coverage[0], 0);
    EXPECT_EQ(res.argmax[0], -1);
    EXPECT_EQ(res.coverage[3], 1);
    EXPECT_EQ(res.argmax[3], 0);
    EXPECT_NEAR(res.image.at(1, 1, 1), 0.5, 1e-15);
}

TEST(Render, TieGoesToLowestIndex) {
    SensorCell proto;
    proto.lateral   = KernelSpec::gaussian(1.0);
    proto.depth     = std::nullopt;
    SensorGrid grid = SensorGrid::planar(1, 1, proto);
    // two points at the same lateral distance on opposite sides
    auto res = renderDetailed(grid, PointCloud({Point3(0.3, 0, 0), Point3(-0.3, 0, 0), Point3(0.3, 0, 0)}));
    EXPECT_EQ(res.argmax[0], 0);
}

TEST(Render, Errors) {
    SensorGrid grid = SensorGrid::planar(2, 2, SensorCell{});
    EXPECT_THROW(render(grid, PointCloud()), InvalidInput);
    auto params = RenderParams::pack(grid);
    params.values.pop_back();
    EXPECT_THROW(render(grid, PointCloud({Point3::Zero()}), params), InvalidParameter);
    SensorGrid bad = grid;
    bad.cells.pop_back();
    EXPECT_THROW(render(bad, PointCloud({Point3::Zero()})), InvalidParameter);
    bad = grid;
    bad.cells[0].sensitivity = 0.0;
    EXPECT_THROW(render(bad, PointCloud({Point3::Zero()})), InvalidParameter);
    bad = grid;
    bad.channels = {ChannelSpec{ChannelKind::Range, std::nullopt, 0.2}};
    EXPECT_THROW(render(bad, PointCloud({Point3::Zero()})), InvalidParameter);
    EXPECT_THROW(SensorGrid::planar(0, 2, SensorCell{}), InvalidParameter);
    EXPECT_THROW(backendFromName("gpu"), InvalidParameter);
}

TEST(Render, BandedPresetLayout) {
    auto p = bandedChannelPreset();
    ASSERT_EQ(p.size(), 5u);
    EXPECT_EQ(p[0].kind, ChannelKind::Depth);
    EXPECT_EQ(*p[2].depthKernel, KernelSpec::expBand(0.5, 0.15));
    EXPECT_EQ(*p[3].compressBeta, 0.2);
    EXPECT_TRUE(p[4].lateralOnly);
}

// ---------------------------------------------------------------------------------------------

TEST(RenderParams, PackApplyRoundTrip) {
    Rng rng(7);
    for (int t = 0; t < 20; ++t) {
        auto c = fixtures::smoothGradientCase(rng, 4, 10, static_cast<GeometricKind>(t % 3));
        auto again = RenderParams::pack(c.params.applyTo(c.grid), c.params.geometric());
        EXPECT_EQ(again.values, c.params.values);
        EXPECT_EQ(again.layout, c.params.layout);
        EXPECT_EQ(render(c.grid, c.cloud, c.params),
                  render(c.params.applyTo(c.grid), applyGeometric(c.params.geometric(), c.cloud)));
    }
}

TEST(RenderParams, LayoutClassesAndOffsets) {
    SensorCell proto;
    proto.lateral     = KernelSpec::epanechnikovPow(2.0, 0.5);
    proto.depth       = KernelSpec::expBand(0.5, 0.2);
    proto.attenuation = AttenuationField::neutral(3, 0, 1, 0.3);
    SensorGrid grid   = SensorGrid::planar(2, 3, proto);
    auto       L      = paramLayout(grid, GeometricKind::Tps);
    const std::size_t per = 3 + 2 + 4 + 1 + 2 + 2 + 9 + 1;
    ASSERT_EQ(L.cellOffsets.size(), 7u);
    EXPECT_EQ(L.cellOffsets[1], per);
    EXPECT_EQ(L.size(), 6 * per + 32);
    EXPECT_EQ(L.classes[0], ParamClass::Position);
    EXPECT_EQ(L.classes[5], ParamClass::Rotation);
    EXPECT_EQ(L.classes[9], ParamClass::Elongation);
    EXPECT_EQ(L.classes[10], ParamClass::LateralKernel);
    EXPECT_EQ(L.classes[12], ParamClass::DepthKernel);
    EXPECT_EQ(L.classes[14], ParamClass::Attenuation);
    EXPECT_EQ(L.classes[per - 1], ParamClass::Sensitivity);
    EXPECT_EQ(L.classes[L.geometricOffset()], ParamClass::GeomTps);
    EXPECT_EQ(L.cellOf(per + 1), 1);
    EXPECT_EQ(L.cellOf(L.geometricOffset()), -1);
    EXPECT_EQ(paramLayout(grid, GeometricKind::Rotation).size(), 6 * per + 4);
}

TEST(RenderParams, RejectsNonFinite) {
    SensorGrid grid = SensorGrid::planar(1, 1, SensorCell{});
    auto       p    = RenderParams::pack(grid);
    p.values[0]     = std::nan("");
    EXPECT_THROW(p.applyTo(grid), InvalidParameter);
}

// ---------------------------------------------------------------------------------------------

TEST(Panoramic, IdentityColumnsSitOnCylinderLookingInward) {
    CylindricalGrid layout{5, 8};
    auto            grid = SensorGrid::cylindrical(layout, SensorCell{});
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 8; ++j) {
            const auto &c = grid.cell(i, j);
            EXPECT_LT((c.position - cylinderMap(i, j, layout)).norm(), 1e-15);
            Eigen::Vector3d dir = c.view.rotation.toRotationMatrix().row(2).transpose();
            Eigen::Vector3d in  = Point3(0, c.position.y(), 0) - c.position;
            EXPECT_LT((dir - in.normalized()).norm(), 1e-14);
        }
    }
}

TEST(Panoramic, RadiusInterpolatesLinearly) {
    CylindricalGrid layout{5, 4};
    auto            grid = SensorGrid::cylindrical(layout, SensorCell{});
    std::vector<ColumnParams> cols(4, ColumnParams::identity());
    for (auto &c : cols) {
        c.bottom.radius = 0.6;
        c.top.radius    = 0.4;
    }
    auto out = interpolateColumnParams(cols, grid);
    for (int j = 0; j < 4; ++j) {
        const Point3 p = out.cell(2, j).position;
        EXPECT_NEAR(std::hypot(p.x(), p.z()), 0.5, 1e-15);
        EXPECT_NEAR(std::hypot(out.cell(0, j).position.x(), out.cell(0, j).position.z()), 0.6, 1e-15);
    }
    cols[1].top.radius = -1.0;
    EXPECT_THROW(interpolateColumnParams(cols, grid), InvalidParameter);
    EXPECT_THROW(interpolateColumnParams(std::vector<ColumnParams>(3), grid), InvalidParameter);
}

TEST(Panoramic, ViewShiftAndVerticalMoveDestination) {
    CylindricalGrid layout{3, 4};
    auto            grid = SensorGrid::cylindrical(layout, SensorCell{});
    std::vector<ColumnParams> cols(4, ColumnParams::identity());
    cols[0].viewShift      = 0.1;
    cols[0].bottom.vertical = 0.2;
    auto out = interpolateColumnParams(cols, grid);
    // column 0 at theta 0: source (0, -0.5, 0.5), tangent (-1, 0, 0)
    const auto     &c    = out.cell(0, 0);
    Eigen::Vector3d dest = Point3(-0.1, -0.5 + 0.2, 0.0);
    Eigen::Vector3d dir  = c.view.rotation.toRotationMatrix().row(2).transpose();
    EXPECT_LT((dir - (dest - c.position).normalized()).norm(), 1e-14);
}

TEST(Panoramic, AngleShiftRotatesImageByWholeColumns) {
    Rng             rng(8);
    CylindricalGrid layout{6, 16, true};
    SensorCell      proto;
    proto.lateral = KernelSpec::gaussian(0.08);
    proto.depth   = KernelSpec::triangular(2.0);
    auto grid     = SensorGrid::cylindrical(layout, proto);
    grid.channels = {ChannelSpec::range(), ChannelSpec::density()};
    auto cloud    = fixtures::uniformCloud(rng, 300, -0.4, 0.4);
    auto base     = render(grid, cloud);
    for (int k : {1, 3, 5}) {
        std::vector<ColumnParams> cols(16, ColumnParams::identity());
        for (auto &c : cols) {
            c.angleShift = 2.0 * std::numbers::pi * k / 16;
        }
        auto shifted = render(interpolateColumnParams(cols, grid), cloud);
        double diff = 0.0;
        for (int ch = 0; ch < 2; ++ch) {
            for (int i = 0; i < 6; ++i) {
                for (int j = 0; j < 16; ++j) {
                    diff = std::max(diff, std::abs(shifted.at(ch, i, j) - base.at(ch, i, (j + k) % 16)));
                }
            }
        }
        EXPECT_LT(diff, 1e-12) << "shift " << k;
    }
}

TEST(CyclicConvolve, ConstantRowGivesKernelSum) {
    RenderedImage   img(1, 7, 1, 1.0);
    Eigen::MatrixXd K(1, 3);
    K << 0.2, 0.5, 0.9;
    auto out = cyclicConvolve(img, K);
    for (int x = 0; x < 7; ++x) {
        EXPECT_NEAR(out.at(0, 0, x), 1.6, 1e-15);
    }
}

TEST(CyclicConvolve, DeltaFollowsTheFormulaConvention) {
    RenderedImage img(1, 6, 1);
    img.at(0, 0, 0) = 1.0;
    Eigen::MatrixXd K(1, 3);
    K << 0.2, 0.5, 0.9; // K(-1), K(0), K(1)
    auto out = cyclicConvolve(img, K);
    // out(x) = sum_j I(x + j) K(-j): out(w - 1) = K(-1), out(0) = K(0), out(1) = K(1)
    EXPECT_EQ(out.at(0, 0, 5), 0.2);
    EXPECT_EQ(out.at(0, 0, 0), 0.5);
    EXPECT_EQ(out.at(0, 0, 1), 0.9);
    EXPECT_EQ(out.at(0, 0, 3), 0.0);
}

TEST(CyclicConvolve, IdentityKernel) {
    Rng             rng(9);
    auto            img = fixtures::randomImage(rng, 5, 8, 2);
    Eigen::MatrixXd K   = Eigen::MatrixXd::Zero(3, 5);
    K(1, 2)             = 1.0;
    EXPECT_EQ(cyclicConvolve(img, K), img);
}

TEST(CyclicConvolve, MatchesBruteForceWrapAround) {
    Rng rng(10);
    for (int t = 0; t < 30; ++t) {
        const int H = static_cast<int>(rng.uniformInt(1, 8)), W = static_cast<int>(rng.uniformInt(1, 10));
        auto      img = fixtures::randomImage(rng, H, W, 2);
        const int kh  = static_cast<int>(rng.uniformInt(0, (H - 1) / 2));
        const int kw  = static_cast<int>(rng.uniformInt(0, (W - 1) / 2));
        Eigen::MatrixXd K(2 * kh + 1, 2 * kw + 1);
        for (int a = 0; a < K.rows(); ++a) {
            for (int b = 0; b < K.cols(); ++b) {
                K(a, b) = rng.normal();
            }
        }
        auto out = cyclicConvolve(img, K);
        for (int c = 0; c < 2; ++c) {
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    double s = 0.0;
                    for (int dy = -kh; dy <= kh; ++dy) {
                        for (int dx = -kw; dx <= kw; ++dx) {
                            const int yy = y + dy;
                            if (yy >= 0 && yy < H) {
                                s += img.at(c, yy, (x + dx + 10 * W) % W) * K(kh - dy, kw - dx);
                            }
                        }
                    }
                    EXPECT_NEAR(out.at(c, y, x), s, 1e-12);
                }
            }
        }
    }
}

TEST(CyclicConvolve, Errors) {
    RenderedImage img(3, 3, 1);
    EXPECT_THROW(cyclicConvolve(img, Eigen::MatrixXd::Ones(5, 1)), InvalidParameter);
    EXPECT_THROW(cyclicConvolve(img, Eigen::MatrixXd::Ones(2, 1)), InvalidParameter);
}

// ---------------------------------------------------------------------------------------------

TEST(RangeRelaxation, OnRayPointIsExact) {
    for (double s : {1.0, 0.1, 0.01, 0.001}) {
        EXPECT_EQ(rangeRelaxation(Point3::Zero(), s, PointCloud({Point3(0, 0, 5)})), 5.0);
    }
}

TEST(RangeRelaxation, OffRayPointFollowsTheFormula) {
    // (1/s) sqrt(0.01 + 25 s^2) grows as s shrinks for a point off the ray
    const PointCloud c({Point3(0.1, 0, 5)});
    for (double s : {1.0, 0.1, 0.01}) {
        EXPECT_NEAR(rangeRelaxation(Point3::Zero(), s, c), std::sqrt(0.01 + 25 * s * s) / s, 1e-12);
    }
}

TEST(RangeRelaxation, ConvergesToRayDepthFromBelow) {
    // a point on the ray behind an off-ray point nearer to the cell
    const PointCloud c({Point3(0.3, 0, 2), Point3(0, 0, 5)});
    double           prev = 0.0;
    for (double s : {1.0, 0.1, 0.01, 0.001}) {
        const double v = rangeRelaxation(Point3::Zero(), s, c);
        EXPECT_LE(v, 5.0);
        EXPECT_GE(v, prev);
        prev = v;
    }
    EXPECT_NEAR(prev, 5.0, 1e-12);
    EXPECT_NEAR(rangeRelaxation(Point3::Zero(), 1.0, c), std::hypot(0.3, 2.0), 1e-15);
}

TEST(RangeRelaxation, NonIncreasingInSWithoutRoundingSlack) {
    Rng rng(12);
    for (int t = 0; t < 200; ++t) {
        const Point3 x(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        auto         cloud = fixtures::uniformCloud(rng, static_cast<std::size_t>(rng.uniformInt(1, 10)), -2.0, 2.0);
        auto         pts   = cloud.points();
        pts.push_back(x + Point3(0, 0, rng.uniform(0.1, 3.0)));
        const PointCloud c(std::move(pts));
        double           prev = 0.0;
        for (double s : {1.0, 0.5, 0.1, 0.03, 0.01, 0.001}) {
            const double v = rangeRelaxation(x, s, c);
            EXPECT_GE(v, prev) << t << " " << s;
            prev = v;
        }
    }
}

TEST(RangeRelaxation, Errors) {
    EXPECT_THROW(rangeRelaxation(Point3::Zero(), 0.0, PointCloud({Point3(0, 0, 1)})), InvalidParameter);
    EXPECT_THROW(rangeRelaxation(Point3::Zero(), 1.0, PointCloud()), InvalidInput);
}
