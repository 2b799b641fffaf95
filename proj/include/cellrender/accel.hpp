// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cellrender/renderer.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace cellrender {

/// Oriented box; `axes` columns are the box axes in world coordinates.
struct Obb {
    Point3          center = Point3::Zero();
    Eigen::Vector3d halfExtents{1.0, 1.0, 1.0};
    Eigen::Matrix3d axes = Eigen::Matrix3d::Identity();

    /// Membership with an absolute tolerance `pad` on every axis.
    bool contains(const Point3 &p, double pad = 0.0) const;
};

/// Separating-axis test (15 axes). Conservative: only reports disjoint when a separating axis
/// clears the boxes by more than `pad`.
bool obbIntersectsAabb(const Obb &obb, const Eigen::AlignedBox3d &box, double pad = 0.0);

class KdTree {
  public:
    struct Node {
        Eigen::AlignedBox3d box; // tight bounds of the node's points
        std::uint32_t       begin = 0, end = 0;
        std::int32_t        left = -1, right = -1;

        bool
        leaf() const {
            return left < 0;
        }
    };

    /// Splits the widest box dimension at the median until nodes hold <= leafSize points.
    KdTree(const PointCloud &cloud, std::size_t leafSize = 16);

    const std::vector<Node> &
    nodes() const {
        return nodes_;
    }
    /// Point indices permuted so each node covers [begin, end).
    const std::vector<std::uint32_t> &
    order() const {
        return order_;
    }
    std::size_t
    leafSize() const {
        return leafSize_;
    }
    const PointCloud &
    cloud() const {
        return *cloud_;
    }

    /// Indices of the points inside the box, ascending.
    std::vector<std::uint32_t> queryObb(const Obb &box) const;
    void                       queryObb(const Obb &box, std::vector<std::uint32_t> &out) const;

  private:
    std::int32_t build(std::uint32_t begin, std::uint32_t end);

    const PointCloud          *cloud_;
    std::size_t                leafSize_;
    std::vector<std::uint32_t> order_;
    std::vector<Node>          nodes_;
};

KdTree                     kdBuild(const PointCloud &cloud, std::size_t leafSize = 16);
std::vector<std::uint32_t> kdQueryObb(const KdTree &tree, const Obb &box);

/// Box holding every point the cell can respond to. Separable kernels span the scene's extent
/// along the view axis; radial kernels use the elongated support ellipsoid.
/// Throws UnsupportedKernel for unbounded lateral kernels.
Obb supportObb(const SensorCell &cell, const Eigen::AlignedBox3d &sceneBounds);

/// Binning geometry of a planar grid: neighborhood radius in cells and the world-space reach
/// of the widest cell support.
struct BinningPlan {
    PlanarLattice lattice;
    double        reach  = 0.0;
    int           radius = 0; // ceil(reach / pitch), per axis maximum
    int           radiusX = 0, radiusY = 0;
};

/// Throws PreconditionError unless every cell has an identity rotation, a bounded lateral
/// kernel and sits on the grid's planar lattice.
BinningPlan binningPlan(const SensorGrid &grid);
bool        binningApplicable(const SensorGrid &grid);

/// Single pass over the points scattering each one into its lattice neighborhood.
RenderResult orthographicBinning(const PointCloud &cloud, const SensorGrid &grid,
                                 const RenderOptions &options = {});

/// Auto picks binning when applicable, else the KD-tree when any cell has bounded support,
/// else brute force.
Backend resolveBackend(const SensorGrid &grid, const RenderOptions &options);

/// Per-cell candidate point sets for a given backend; shared by forward and backward passes.
class CandidateProvider {
  public:
    CandidateProvider(const SensorGrid &grid, const PointCloud &cloud, const RenderOptions &options);

    Backend
    backend() const {
        return backend_;
    }
    /// Fills `out` with ascending candidate indices; returns false if every point is a candidate.
    bool candidates(std::size_t cell, std::vector<std::uint32_t> &out) const;

  private:
    Backend                                 backend_;
    const SensorGrid                       *grid_;
    std::optional<KdTree>                   tree_;
    Eigen::AlignedBox3d                     bounds_;
    std::vector<std::vector<std::uint32_t>> bins_;
};

} // namespace cellrender
