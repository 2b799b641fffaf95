// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace cellrender {

using Point3 = Eigen::Vector3d;
using Vec2   = Eigen::Vector2d;

enum class PointLabel : std::uint8_t { Object = 0, Clutter = 1 };

/// Unordered point set, optionally tagged object/clutter for evaluation.
class PointCloud {
  public:
    PointCloud() = default;
    explicit PointCloud(std::vector<Point3> points);
    PointCloud(std::vector<Point3> points, std::vector<PointLabel> labels);

    std::size_t
    size() const {
        return points_.size();
    }
    bool
    empty() const {
        return points_.empty();
    }
    const std::vector<Point3> &
    points() const {
        return points_;
    }
    const Point3 &
    operator[](std::size_t i) const {
        return points_[i];
    }

    bool
    hasLabels() const {
        return labels_.has_value();
    }
    const std::vector<PointLabel> &labels() const;
    PointLabel
    label(std::size_t i) const {
        return labels().at(i);
    }

    /// Same labels, new coordinates. Sizes must match.
    PointCloud withPoints(std::vector<Point3> points) const;
    /// Points whose label equals `which`; throws InvalidInput when unlabeled.
    PointCloud select(PointLabel which) const;

    /// Axis-aligned bounds; throws InvalidInput on an empty cloud.
    Eigen::AlignedBox3d bounds() const;

  private:
    std::vector<Point3>                    points_;
    std::optional<std::vector<PointLabel>> labels_;
};

/// Unit quaternion, Hamilton convention, scalar-first, active rotation.
///
/// Construction normalizes unless the input is already unit to rounding precision, so
/// unit values round-trip through flat parameter vectors bit-for-bit.
class Quaternion {
  public:
    Quaternion() = default;
    Quaternion(double w, double x, double y, double z);

    static Quaternion
    identity() {
        return {};
    }
    static Quaternion fromAxisAngle(const Eigen::Vector3d &axis, double angle);
    static Quaternion fromRotationMatrix(const Eigen::Matrix3d &rotation);

    double
    w() const {
        return w_;
    }
    double
    x() const {
        return x_;
    }
    double
    y() const {
        return y_;
    }
    double
    z() const {
        return z_;
    }
    /// (w, x, y, z)
    Eigen::Vector4d
    coeffs() const {
        return {w_, x_, y_, z_};
    }

    Quaternion conjugate() const;
    /// Representative with w >= 0 (q and -q encode the same rotation).
    Quaternion canonical() const;

    Eigen::Matrix3d toRotationMatrix() const;
    Point3          rotate(const Point3 &p) const;

    friend Quaternion operator*(const Quaternion &a, const Quaternion &b);

  private:
    double w_ = 1.0, x_ = 0.0, y_ = 0.0, z_ = 0.0;
};

/// 2 * acos(|<q1, q2>|): angle of the relative rotation, invariant to the double cover.
double angularDistance(const Quaternion &a, const Quaternion &b);

/// dR/dq_k (k over w, x, y, z) of the unit-norm rotation matrix formula evaluated at `q`.
/// Tangent-space gradients follow by projecting out the q component.
std::array<Eigen::Matrix3d, 4> rotationMatrixDerivatives(const Quaternion &q);

/// Chain rule through q_hat = raw / |raw| for a gradient taken w.r.t. the unit quaternion.
Eigen::Vector4d projectQuaternionGradient(const Eigen::Vector4d &raw, const Eigen::Vector4d &grad);

PointCloud quatRotate(const Quaternion &q, const PointCloud &cloud);
/// Rotation by the result equals rotating by `accumulated` and then by `update`.
Quaternion quatCompose(const Quaternion &update, const Quaternion &accumulated);

/// Thin-plate spline displacement field on a plane (the z = 0 plane of the scene).
///
/// u(p) = sum_k w_k U(|p - c_k|) + a0 + a1 x + a2 y with U(r) = r^2 log r, interpolating
/// the control displacements exactly. Points move only in x/y; z is untouched.
class TpsWarp {
  public:
    /// n x n control lattice spanning [-extent, extent]^2, row-major in y then x.
    static std::vector<Vec2> controlGrid(int n = 4, double extent = 1.0);

    /// Identity warp on the default 4 x 4 grid.
    TpsWarp();
    /// Solves the interpolation system; NumericalError if the control layout is degenerate.
    TpsWarp(std::vector<Vec2> controls, std::vector<Vec2> displacements);
    /// Default 4 x 4 grid with displacements given as interleaved (dx, dy) pairs.
    static TpsWarp fromFlat(std::span<const double> displacements);

    const std::vector<Vec2> &
    controls() const {
        return controls_;
    }
    const std::vector<Vec2> &
    displacements() const {
        return displacements_;
    }
    std::vector<double> flatDisplacements() const;

    Vec2   displacementAt(const Vec2 &p) const;
    Point3 apply(const Point3 &p) const;
    /// beta(p) with u(p) = sum_k beta_k(p) d_k; the field is linear in the displacements.
    Eigen::VectorXd influence(const Vec2 &p) const;
    /// du/dp at p (2 x 2).
    Eigen::Matrix2d jacobian(const Vec2 &p) const;

    /// Radial weights (n x 2) followed by affine rows a0, a1, a2 (3 x 2).
    const Eigen::MatrixXd &
    coefficients() const {
        return coefficients_;
    }

  private:
    std::vector<Vec2> controls_;
    std::vector<Vec2> displacements_;
    Eigen::MatrixXd   solveColumns_; // (n+3) x n block of the inverse system matrix
    Eigen::MatrixXd   coefficients_; // (n+3) x 2
};

double     tpsBasis(double r);
PointCloud tpsApply(const TpsWarp &warp, const PointCloud &cloud);

/// h x w sensor grid wrapped on the radius-0.5 cylinder around the Y axis.
struct CylindricalGrid {
    int    height = 2;
    int    width  = 2;
    bool   fullCircle = false; // theta_j = 2 pi j / w instead of pi j / w
    double radius     = 0.5;

    void   validate() const;
    double columnAngle(int column) const;
    double rowHeight(int row) const;
};

Point3 cylinderMap(int row, int column, const CylindricalGrid &grid);
/// (theta, height, radius) -> Cartesian, matching cylinderMap's convention.
Point3 cylindricalToCartesian(double theta, double height, double radius);

/// Centroid to the origin, max point norm to 1. A cloud of coincident points is only translated.
PointCloud normalizeCloud(const PointCloud &cloud);

/// sqrt(mean |a_i - b_i|^2) over corresponding points.
double correspondenceRmse(const PointCloud &a, const PointCloud &b);

} // namespace cellrender
