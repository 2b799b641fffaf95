// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#include "cellrender/accel.hpp"

#include "cell_eval.hpp"
#include "cellrender/error.hpp"
#include "cellrender/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cellrender {

bool
Obb::contains(const Point3 &p, double pad) const {
    const Eigen::Vector3d d = p - center;
    for (int k = 0; k < 3; ++k) {
        if (std::abs(d.dot(axes.col(k))) > halfExtents(k) + pad) {
            return false;
        }
    }
    return true;
}

bool
obbIntersectsAabb(const Obb &obb, const Eigen::AlignedBox3d &box, double pad) {
    const Eigen::Vector3d h = 0.5 * (box.max() - box.min());
    const Eigen::Vector3d t = obb.center - box.center();
    const Eigen::Matrix3d &A = obb.axes;
    const Eigen::Vector3d &e = obb.halfExtents;

    auto separated = [&](const Eigen::Vector3d &L) {
        const double rb = h.x() * std::abs(L.x()) + h.y() * std::abs(L.y()) + h.z() * std::abs(L.z());
        const double ra = e(0) * std::abs(L.dot(A.col(0))) + e(1) * std::abs(L.dot(A.col(1))) +
                          e(2) * std::abs(L.dot(A.col(2)));
        return std::abs(t.dot(L)) > ra + rb + pad * L.lpNorm<1>();
    };

    for (int i = 0; i < 3; ++i) {
        if (separated(Eigen::Vector3d::Unit(i)) || separated(A.col(i))) {
            return false;
        }
    }
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            const Eigen::Vector3d L = Eigen::Vector3d::Unit(i).cross(A.col(j));
            if (L.squaredNorm() > 1e-20 && separated(L)) {
                return false;
            }
        }
    }
    return true;
}

KdTree::KdTree(const PointCloud &cloud, std::size_t leafSize) : cloud_(&cloud), leafSize_(leafSize) {
    if (cloud.empty()) {
        throw InvalidInput("kdBuild: empty cloud");
    }
    if (leafSize == 0) {
        throw InvalidParameter("kdBuild: leaf size must be >= 1");
    }
    order_.resize(cloud.size());
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.reserve(2 * (cloud.size() / leafSize + 1));
    build(0, static_cast<std::uint32_t>(cloud.size()));
}

std::int32_t
KdTree::build(std::uint32_t begin, std::uint32_t end) {
    const auto &pts = cloud_->points();
    Node        node;
    node.begin = begin;
    node.end   = end;
    for (std::uint32_t i = begin; i < end; ++i) {
        node.box.extend(pts[order_[i]]);
    }
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= leafSize_) {
        return id;
    }
    int axis = 0;
    node.box.sizes().maxCoeff(&axis);
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                         const double pa = pts[a](axis), pb = pts[b](axis);
                         return pa < pb || (pa == pb && a < b);
                     });
    const std::int32_t left  = build(begin, mid);
    const std::int32_t right = build(mid, end);
    nodes_[id].left          = left;
    nodes_[id].right         = right;
    return id;
}

namespace {

double
obbPad(const Obb &box) {
    return 1e-9 * (1.0 + box.center.cwiseAbs().maxCoeff() + box.halfExtents.maxCoeff());
}

bool
boxInside(const Obb &obb, const Eigen::AlignedBox3d &box) {
    for (int c = 0; c < 8; ++c) {
        if (!obb.contains(box.corner(static_cast<Eigen::AlignedBox3d::CornerType>(c)))) {
            return false;
        }
    }
    return true;
}

} // namespace

void
KdTree::queryObb(const Obb &box, std::vector<std::uint32_t> &out) const {
    out.clear();
    const double              pad = obbPad(box);
    const auto               &pts = cloud_->points();
    std::vector<std::int32_t> stack{0};
    while (!stack.empty()) {
        const Node &node = nodes_[stack.back()];
        stack.pop_back();
        if (!obbIntersectsAabb(box, node.box, pad)) {
            continue;
        }
        if (boxInside(box, node.box)) {
            out.insert(out.end(), order_.begin() + node.begin, order_.begin() + node.end);
            continue;
        }
        if (node.leaf()) {
            for (std::uint32_t i = node.begin; i < node.end; ++i) {
                if (box.contains(pts[order_[i]], pad)) {
                    out.push_back(order_[i]);
                }
            }
            continue;
        }
        stack.push_back(node.right);
        stack.push_back(node.left);
    }
    std::sort(out.begin(), out.end());
}

std::vector<std::uint32_t>
KdTree::queryObb(const Obb &box) const {
    std::vector<std::uint32_t> out;
    queryObb(box, out);
    return out;
}

KdTree
kdBuild(const PointCloud &cloud, std::size_t leafSize) {
    return KdTree(cloud, leafSize);
}

std::vector<std::uint32_t>
kdQueryObb(const KdTree &tree, const Obb &box) {
    return tree.queryObb(box);
}

Obb
supportObb(const SensorCell &cell, const Eigen::AlignedBox3d &sceneBounds) {
    const auto rho = supportRadius(cell.lateral);
    if (!rho) {
        throw UnsupportedKernel("supportObb: lateral kernel '" +
                                std::string(kernelFamilyName(cell.lateral.family)) +
                                "' has unbounded support");
    }
    const Eigen::Matrix3d R = cell.view.rotation.toRotationMatrix();
    Eigen::Vector3d       localCenter(cell.shift.x(), cell.shift.y(), 0.0);
    Eigen::Vector3d       half(*rho, *rho, 0.0);
    if (cell.radial) {
        half.z() = *rho / cell.view.elongation;
    } else {
        double zmin = std::numeric_limits<double>::infinity();
        double zmax = -zmin;
        for (int c = 0; c < 8; ++c) {
            const Point3 corner = sceneBounds.corner(static_cast<Eigen::AlignedBox3d::CornerType>(c));
            const double z      = R.row(2).dot(corner - cell.position);
            zmin                = std::min(zmin, z);
            zmax                = std::max(zmax, z);
        }
        localCenter.z() = 0.5 * (zmin + zmax);
        half.z()        = 0.5 * (zmax - zmin);
    }
    half.z() = std::max(half.z(), 1e-12);
    Obb box;
    box.axes        = R.transpose();
    box.center      = cell.position + box.axes * localCenter;
    box.halfExtents = half;
    return box;
}

BinningPlan
binningPlan(const SensorGrid &grid) {
    if (grid.topology != GridTopology::Planar || !grid.lattice) {
        throw PreconditionError("orthographic binning: grid is not a planar lattice");
    }
    BinningPlan plan;
    plan.lattice   = *grid.lattice;
    const auto &L  = plan.lattice;
    if (!(L.pitchX > 0.0) || !(L.pitchY > 0.0)) {
        throw PreconditionError("orthographic binning: lattice pitch must be positive");
    }
    const double tol = 1e-9 * std::min(L.pitchX, L.pitchY);
    for (int i = 0; i < grid.rows; ++i) {
        for (int j = 0; j < grid.cols; ++j) {
            const SensorCell &cell = grid.cell(i, j);
            if (cell.view.rotation.toRotationMatrix() != Eigen::Matrix3d::Identity()) {
                throw PreconditionError("orthographic binning: cells must face the lattice normal");
            }
            const auto rho = supportRadius(cell.lateral);
            if (!rho) {
                throw PreconditionError("orthographic binning: lateral kernel is unbounded");
            }
            const Vec2   nominal(L.x0 + j * L.pitchX, L.y0 + i * L.pitchY);
            const double dev = (cell.position.head<2>() - nominal).norm();
            if (dev > tol) {
                throw PreconditionError("orthographic binning: cell positions are off the lattice");
            }
            plan.reach = std::max(plan.reach, dev + cell.shift.norm() + *rho);
        }
    }
    plan.radiusX = static_cast<int>(std::ceil(plan.reach / L.pitchX));
    plan.radiusY = static_cast<int>(std::ceil(plan.reach / L.pitchY));
    plan.radius  = std::max(plan.radiusX, plan.radiusY);
    return plan;
}

bool
binningApplicable(const SensorGrid &grid) {
    try {
        binningPlan(grid);
        return true;
    } catch (const PreconditionError &) {
        return false;
    }
}

namespace {

struct Span {
    int lo = 0, hi = -1;
};

// Lattice neighborhood of a point: [floor(u) - R, floor(u) + R + 1] clamped to the grid.
inline Span
neighborhood(double coord, double origin, double pitch, int radius, int count) {
    const double u = (coord - origin) / pitch;
    if (!(u > -1e9 && u < 1e9)) {
        return {};
    }
    const auto base = static_cast<int>(std::floor(u));
    return {std::max(0, base - radius), std::min(count - 1, base + radius + 1)};
}

} // namespace

RenderResult
orthographicBinning(const PointCloud &cloud, const SensorGrid &grid, const RenderOptions &options) {
    if (cloud.empty()) {
        throw InvalidInput("render: empty cloud");
    }
    grid.validate();
    const BinningPlan plan    = binningPlan(grid);
    const int         rx      = plan.radiusX + std::max(0, options.binningExtraRadius);
    const int         ry      = plan.radiusY + std::max(0, options.binningExtraRadius);
    const auto        nCells  = grid.cellCount();
    const auto        nCh     = grid.channels.size();
    const auto       &pts     = cloud.points();
    const std::size_t nChunks = std::clamp<std::size_t>(threadCount(), 1, std::max<std::size_t>(1, pts.size() / 4096));

    std::vector<detail::CellFrame> frames;
    frames.reserve(nCells);
    for (const auto &c : grid.cells) {
        frames.emplace_back(c);
    }

    std::vector<std::vector<detail::CellAccumulator>> chunkAcc(nChunks);
    parallelFor(nChunks, [&](std::size_t chunk) {
        auto &acc = chunkAcc[chunk];
        acc.resize(nCells);
        for (auto &a : acc) {
            a.reset(nCh);
        }
        const std::size_t   begin = pts.size() * chunk / nChunks;
        const std::size_t   end   = pts.size() * (chunk + 1) / nChunks;
        detail::Interaction it;
        for (std::size_t p = begin; p < end; ++p) {
            const Span sx = neighborhood(pts[p].x(), plan.lattice.x0, plan.lattice.pitchX, rx, grid.cols);
            const Span sy = neighborhood(pts[p].y(), plan.lattice.y0, plan.lattice.pitchY, ry, grid.rows);
            for (int i = sy.lo; i <= sy.hi; ++i) {
                for (int j = sx.lo; j <= sx.hi; ++j) {
                    const std::size_t k = static_cast<std::size_t>(i) * grid.cols + j;
                    if (detail::interact(frames[k], pts[p], it)) {
                        acc[k].add(grid.cells[k], grid.channels, p, it);
                    }
                }
            }
        }
    });

    RenderResult result;
    result.backend = Backend::Binning;
    result.image   = RenderedImage(grid.rows, grid.cols, static_cast<int>(nCh));
    result.coverage.assign(nCells, 0);
    result.argmax.assign(nCells, -1);
    result.range.assign(nCells, 0.0);
    result.depth.assign(nCells, grid.farValue);
    std::vector<double> values(nCh);
    for (std::size_t k = 0; k < nCells; ++k) {
        auto &acc = chunkAcc[0][k];
        for (std::size_t c = 1; c < nChunks; ++c) {
            acc.merge(chunkAcc[c][k]);
        }
        acc.finish(grid.channels, grid.farValue, values, {});
        for (std::size_t ch = 0; ch < nCh; ++ch) {
            result.image.data()[ch * nCells + k] = values[ch];
        }
        result.coverage[k] = acc.bestIndex >= 0 ? 1 : 0;
        result.argmax[k]   = acc.bestIndex;
        result.range[k]    = acc.best;
        result.depth[k]    = acc.bestIndex >= 0 ? acc.bestDepth : grid.farValue;
    }
    return result;
}

Backend
resolveBackend(const SensorGrid &grid, const RenderOptions &options) {
    switch (options.backend) {
    case Backend::Brute:
    case Backend::KdTree: return options.backend;
    case Backend::Binning:
        binningPlan(grid); // throws PreconditionError when not applicable
        return Backend::Binning;
    case Backend::Auto: break;
    }
    if (binningApplicable(grid)) {
        return Backend::Binning;
    }
    for (const auto &c : grid.cells) {
        if (supportRadius(c.lateral)) {
            return Backend::KdTree;
        }
    }
    return Backend::Brute;
}

CandidateProvider::CandidateProvider(const SensorGrid &grid, const PointCloud &cloud,
                                     const RenderOptions &options)
    : backend_(resolveBackend(grid, options)), grid_(&grid) {
    if (cloud.empty()) {
        throw InvalidInput("render: empty cloud");
    }
    if (backend_ == Backend::KdTree) {
        tree_.emplace(cloud, options.leafSize);
        bounds_ = cloud.bounds();
    } else if (backend_ == Backend::Binning) {
        const BinningPlan plan = binningPlan(grid);
        const int         rx   = plan.radiusX + std::max(0, options.binningExtraRadius);
        const int         ry   = plan.radiusY + std::max(0, options.binningExtraRadius);
        bins_.resize(grid.cellCount());
        const auto &pts = cloud.points();
        for (std::size_t p = 0; p < pts.size(); ++p) {
            const Span sx = neighborhood(pts[p].x(), plan.lattice.x0, plan.lattice.pitchX, rx, grid.cols);
            const Span sy = neighborhood(pts[p].y(), plan.lattice.y0, plan.lattice.pitchY, ry, grid.rows);
            for (int i = sy.lo; i <= sy.hi; ++i) {
                for (int j = sx.lo; j <= sx.hi; ++j) {
                    bins_[static_cast<std::size_t>(i) * grid.cols + j].push_back(
                        static_cast<std::uint32_t>(p));
                }
            }
        }
    }
}

bool
CandidateProvider::candidates(std::size_t cell, std::vector<std::uint32_t> &out) const {
    switch (backend_) {
    case Backend::Binning: out = bins_[cell]; return true;
    case Backend::KdTree: {
        const SensorCell &c = grid_->cells[cell];
        if (!supportRadius(c.lateral)) {
            return false;
        }
        tree_->queryObb(supportObb(c, bounds_), out);
        return true;
    }
    default: return false;
    }
}

} // namespace cellrender
