// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#include "cellrender/geometry.hpp"

#include "cellrender/error.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace cellrender {

namespace {

bool
allFinite(const Point3 &p) {
    return std::isfinite(p.x()) && std::isfinite(p.y()) && std::isfinite(p.z());
}

} // namespace

// ---------------------------------------------------------------------------------------------
// PointCloud

PointCloud::PointCloud(std::vector<Point3> points) : points_(std::move(points)) {
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (!allFinite(points_[i])) {
            throw InvalidInput("PointCloud: point " + std::to_string(i) + " is not finite");
        }
    }
}

PointCloud::PointCloud(std::vector<Point3> points, std::vector<PointLabel> labels)
    : PointCloud(std::move(points)) {
    if (labels.size() != points_.size()) {
        throw InvalidInput("PointCloud: label count " + std::to_string(labels.size()) +
                           " does not match point count " + std::to_string(points_.size()));
    }
    labels_ = std::move(labels);
}

const std::vector<PointLabel> &
PointCloud::labels() const {
    if (!labels_) {
        throw InvalidInput("PointCloud: cloud carries no labels");
    }
    return *labels_;
}

PointCloud
PointCloud::withPoints(std::vector<Point3> points) const {
    if (points.size() != points_.size()) {
        throw InvalidInput("PointCloud::withPoints: size mismatch");
    }
    if (labels_) {
        return PointCloud(std::move(points), *labels_);
    }
    return PointCloud(std::move(points));
}

PointCloud
PointCloud::select(PointLabel which) const {
    const auto         &tags = labels();
    std::vector<Point3> kept;
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (tags[i] == which) {
            kept.push_back(points_[i]);
        }
    }
    std::vector<PointLabel> keptLabels(kept.size(), which);
    return PointCloud(std::move(kept), std::move(keptLabels));
}

Eigen::AlignedBox3d
PointCloud::bounds() const {
    if (points_.empty()) {
        throw InvalidInput("PointCloud::bounds: empty cloud");
    }
    Eigen::AlignedBox3d box(points_.front());
    for (const auto &p : points_) {
        box.extend(p);
    }
    return box;
}

// ---------------------------------------------------------------------------------------------
// Quaternion

Quaternion::Quaternion(double w, double x, double y, double z) {
    if (!std::isfinite(w) || !std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) {
        throw InvalidParameter("Quaternion: non-finite component");
    }
    const double n2 = w * w + x * x + y * y + z * z;
    if (n2 == 0.0) {
        throw InvalidParameter("Quaternion: zero norm");
    }
    if (std::abs(n2 - 1.0) > 4.0 * std::numeric_limits<double>::epsilon()) {
        const double inv = 1.0 / std::sqrt(n2);
        w *= inv;
        x *= inv;
        y *= inv;
        z *= inv;
    }
    w_ = w;
    x_ = x;
    y_ = y;
    z_ = z;
}

Quaternion
Quaternion::fromAxisAngle(const Eigen::Vector3d &axis, double angle) {
    const double n = axis.norm();
    if (!(n > 0.0) || !std::isfinite(angle)) {
        throw InvalidParameter("Quaternion::fromAxisAngle: degenerate axis or angle");
    }
    const Eigen::Vector3d a = axis / n;
    const double          s = std::sin(0.5 * angle);
    return {std::cos(0.5 * angle), s * a.x(), s * a.y(), s * a.z()};
}

Quaternion
Quaternion::fromRotationMatrix(const Eigen::Matrix3d &rotation) {
    const Eigen::Quaterniond q(rotation);
    return {q.w(), q.x(), q.y(), q.z()};
}

Quaternion
Quaternion::conjugate() const {
    Quaternion q;
    q.w_ = w_;
    q.x_ = -x_;
    q.y_ = -y_;
    q.z_ = -z_;
    return q;
}

Quaternion
Quaternion::canonical() const {
    if (w_ >= 0.0) {
        return *this;
    }
    Quaternion q;
    q.w_ = -w_;
    q.x_ = -x_;
    q.y_ = -y_;
    q.z_ = -z_;
    return q;
}

Eigen::Matrix3d
Quaternion::toRotationMatrix() const {
    const double    w = w_, x = x_, y = y_, z = z_;
    Eigen::Matrix3d r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

Point3
Quaternion::rotate(const Point3 &p) const {
    return toRotationMatrix() * p;
}

Quaternion
operator*(const Quaternion &a, const Quaternion &b) {
    return {a.w_ * b.w_ - a.x_ * b.x_ - a.y_ * b.y_ - a.z_ * b.z_,
            a.w_ * b.x_ + a.x_ * b.w_ + a.y_ * b.z_ - a.z_ * b.y_,
            a.w_ * b.y_ - a.x_ * b.z_ + a.y_ * b.w_ + a.z_ * b.x_,
            a.w_ * b.z_ + a.x_ * b.y_ - a.y_ * b.x_ + a.z_ * b.w_};
}

double
angularDistance(const Quaternion &a, const Quaternion &b) {
    // 2 acos(|<a,b>|) evaluated through atan2 so small angles keep full precision.
    const Quaternion rel = a.conjugate() * b;
    const double     v   = std::sqrt(rel.x() * rel.x() + rel.y() * rel.y() + rel.z() * rel.z());
    return 2.0 * std::atan2(v, std::abs(rel.w()));
}

std::array<Eigen::Matrix3d, 4>
rotationMatrixDerivatives(const Quaternion &q) {
    const double                   w = q.w(), x = q.x(), y = q.y(), z = q.z();
    std::array<Eigen::Matrix3d, 4> d;
    d[0] << 0.0, -2.0 * z, 2.0 * y, 2.0 * z, 0.0, -2.0 * x, -2.0 * y, 2.0 * x, 0.0;
    d[1] << 0.0, 2.0 * y, 2.0 * z, 2.0 * y, -4.0 * x, -2.0 * w, 2.0 * z, 2.0 * w, -4.0 * x;
    d[2] << -4.0 * y, 2.0 * x, 2.0 * w, 2.0 * x, 0.0, 2.0 * z, -2.0 * w, 2.0 * z, -4.0 * y;
    d[3] << -4.0 * z, -2.0 * w, 2.0 * x, 2.0 * w, -4.0 * z, 2.0 * y, 2.0 * x, 2.0 * y, 0.0;
    return d;
}

Eigen::Vector4d
projectQuaternionGradient(const Eigen::Vector4d &raw, const Eigen::Vector4d &grad) {
    const double          n    = raw.norm();
    const Eigen::Vector4d unit = raw / n;
    return (grad - grad.dot(unit) * unit) / n;
}

PointCloud
quatRotate(const Quaternion &q, const PointCloud &cloud) {
    const Eigen::Matrix3d r = q.toRotationMatrix();
    std::vector<Point3>   out;
    out.reserve(cloud.size());
    for (const auto &p : cloud.points()) {
        out.emplace_back(r * p);
    }
    return cloud.withPoints(std::move(out));
}

Quaternion
quatCompose(const Quaternion &update, const Quaternion &accumulated) {
    const Quaternion q = update * accumulated;
    // Explicit renormalization; the constructor skips it for already-unit inputs.
    const double n = q.coeffs().norm();
    return Quaternion(q.w() / n, q.x() / n, q.y() / n, q.z() / n).canonical();
}

// ---------------------------------------------------------------------------------------------
// TpsWarp

double
tpsBasis(double r) {
    return r > 0.0 ? r * r * std::log(r) : 0.0;
}

std::vector<Vec2>
TpsWarp::controlGrid(int n, double extent) {
    if (n < 2 || !(extent > 0.0)) {
        throw InvalidParameter("TpsWarp::controlGrid: need n >= 2 and extent > 0");
    }
    std::vector<Vec2> grid;
    grid.reserve(static_cast<std::size_t>(n * n));
    for (int iy = 0; iy < n; ++iy) {
        for (int ix = 0; ix < n; ++ix) {
            grid.emplace_back(-extent + 2.0 * extent * ix / (n - 1),
                              -extent + 2.0 * extent * iy / (n - 1));
        }
    }
    return grid;
}

TpsWarp::TpsWarp() : TpsWarp(controlGrid(), std::vector<Vec2>(16, Vec2::Zero())) {}

TpsWarp::TpsWarp(std::vector<Vec2> controls, std::vector<Vec2> displacements)
    : controls_(std::move(controls)), displacements_(std::move(displacements)) {
    const auto n = static_cast<Eigen::Index>(controls_.size());
    if (n < 3) {
        throw NumericalError("TpsWarp: at least 3 control points are required");
    }
    if (displacements_.size() != controls_.size()) {
        throw InvalidParameter("TpsWarp: displacement count does not match control count");
    }
    for (const auto &d : displacements_) {
        if (!std::isfinite(d.x()) || !std::isfinite(d.y())) {
            throw InvalidParameter("TpsWarp: non-finite displacement");
        }
    }

    Eigen::MatrixXd system = Eigen::MatrixXd::Zero(n + 3, n + 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            system(i, j) = tpsBasis((controls_[i] - controls_[j]).norm());
        }
        system(i, n)     = 1.0;
        system(i, n + 1) = controls_[i].x();
        system(i, n + 2) = controls_[i].y();
        system(n, i)     = 1.0;
        system(n + 1, i) = controls_[i].x();
        system(n + 2, i) = controls_[i].y();
    }

    const Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
    if (!lu.isInvertible()) {
        throw NumericalError("TpsWarp: singular system (degenerate control layout)");
    }
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + 3, n);
    rhs.topRows(n).setIdentity();
    solveColumns_ = lu.solve(rhs);
    if (!solveColumns_.allFinite()) {
        throw NumericalError("TpsWarp: non-finite solution");
    }

    Eigen::MatrixXd d(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        d.row(i) = displacements_[i].transpose();
    }
    coefficients_ = solveColumns_ * d;
}

TpsWarp
TpsWarp::fromFlat(std::span<const double> displacements) {
    auto grid = controlGrid();
    if (displacements.size() != 2 * grid.size()) {
        throw InvalidParameter("TpsWarp::fromFlat: expected " + std::to_string(2 * grid.size()) +
                               " values");
    }
    std::vector<Vec2> d(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        d[k] = Vec2(displacements[2 * k], displacements[2 * k + 1]);
    }
    return TpsWarp(std::move(grid), std::move(d));
}

std::vector<double>
TpsWarp::flatDisplacements() const {
    std::vector<double> out;
    out.reserve(2 * displacements_.size());
    for (const auto &d : displacements_) {
        out.push_back(d.x());
        out.push_back(d.y());
    }
    return out;
}

Vec2
TpsWarp::displacementAt(const Vec2 &p) const {
    const auto n = static_cast<Eigen::Index>(controls_.size());
    Vec2       u = coefficients_.row(n).transpose() + p.x() * coefficients_.row(n + 1).transpose() +
             p.y() * coefficients_.row(n + 2).transpose();
    for (Eigen::Index k = 0; k < n; ++k) {
        const double b = tpsBasis((p - controls_[k]).norm());
        if (b != 0.0) {
            u += b * coefficients_.row(k).transpose();
        }
    }
    return u;
}

Point3
TpsWarp::apply(const Point3 &p) const {
    const Vec2 u = displacementAt(p.head<2>());
    return {p.x() + u.x(), p.y() + u.y(), p.z()};
}

Eigen::VectorXd
TpsWarp::influence(const Vec2 &p) const {
    const auto      n = static_cast<Eigen::Index>(controls_.size());
    Eigen::VectorXd phi(n + 3);
    for (Eigen::Index k = 0; k < n; ++k) {
        phi(k) = tpsBasis((p - controls_[k]).norm());
    }
    phi(n)     = 1.0;
    phi(n + 1) = p.x();
    phi(n + 2) = p.y();
    return solveColumns_.transpose() * phi;
}

Eigen::Matrix2d
TpsWarp::jacobian(const Vec2 &p) const {
    const auto      n = static_cast<Eigen::Index>(controls_.size());
    Eigen::Matrix2d j;
    // d u_a / d p_b
    j << coefficients_(n + 1, 0), coefficients_(n + 2, 0), coefficients_(n + 1, 1),
        coefficients_(n + 2, 1);
    for (Eigen::Index k = 0; k < n; ++k) {
        const Vec2   diff = p - controls_[k];
        const double r    = diff.norm();
        if (r == 0.0) {
            continue;
        }
        const Vec2 grad = (2.0 * std::log(r) + 1.0) * diff;
        j.row(0) += coefficients_(k, 0) * grad.transpose();
        j.row(1) += coefficients_(k, 1) * grad.transpose();
    }
    return j;
}

PointCloud
tpsApply(const TpsWarp &warp, const PointCloud &cloud) {
    std::vector<Point3> out;
    out.reserve(cloud.size());
    for (const auto &p : cloud.points()) {
        out.push_back(warp.apply(p));
    }
    return cloud.withPoints(std::move(out));
}

// ---------------------------------------------------------------------------------------------
// Cylinder

void
CylindricalGrid::validate() const {
    if (height < 2 || width < 2) {
        throw InvalidParameter("CylindricalGrid: height and width must be >= 2");
    }
    if (!(radius > 0.0) || !std::isfinite(radius)) {
        throw InvalidParameter("CylindricalGrid: radius must be positive");
    }
}

double
CylindricalGrid::columnAngle(int column) const {
    const double span = fullCircle ? 2.0 * std::numbers::pi : std::numbers::pi;
    return static_cast<double>(column) / width * span;
}

double
CylindricalGrid::rowHeight(int row) const {
    return static_cast<double>(row) / (height - 1) - 0.5;
}

Point3
cylindricalToCartesian(double theta, double height, double radius) {
    return {-radius * std::sin(theta), height, radius * std::cos(theta)};
}

Point3
cylinderMap(int row, int column, const CylindricalGrid &grid) {
    grid.validate();
    if (row < 0 || row >= grid.height || column < 0 || column >= grid.width) {
        throw InvalidParameter("cylinderMap: index (" + std::to_string(row) + ", " +
                               std::to_string(column) + ") outside the grid");
    }
    return cylindricalToCartesian(grid.columnAngle(column), grid.rowHeight(row), grid.radius);
}

// ---------------------------------------------------------------------------------------------

PointCloud
normalizeCloud(const PointCloud &cloud) {
    if (cloud.empty()) {
        throw InvalidInput("normalizeCloud: empty cloud");
    }
    Point3 centroid = Point3::Zero();
    for (const auto &p : cloud.points()) {
        centroid += p;
    }
    centroid /= static_cast<double>(cloud.size());

    std::vector<Point3> out;
    out.reserve(cloud.size());
    double maxNorm = 0.0;
    for (const auto &p : cloud.points()) {
        out.emplace_back(p - centroid);
        maxNorm = std::max(maxNorm, out.back().norm());
    }
    if (maxNorm > 0.0) {
        for (auto &p : out) {
            p /= maxNorm;
        }
    }
    return cloud.withPoints(std::move(out));
}

double
correspondenceRmse(const PointCloud &a, const PointCloud &b) {
    if (a.size() != b.size() || a.empty()) {
        throw InvalidInput("correspondenceRmse: clouds must be nonempty and equally sized");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += (a[i] - b[i]).squaredNorm();
    }
    return std::sqrt(acc / static_cast<double>(a.size()));
}

} // namespace cellrender
