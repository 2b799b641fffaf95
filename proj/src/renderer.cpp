// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#include "cellrender/renderer.hpp"

#include "cell_eval.hpp"
#include "cellrender/accel.hpp"
#include "cellrender/error.hpp"
#include "cellrender/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cellrender {

// ---------------------------------------------------------------------------------------
// Channels, cells, grids

ChannelSpec
ChannelSpec::range() {
    return {ChannelKind::Range, std::nullopt, std::nullopt, false};
}
ChannelSpec
ChannelSpec::depth() {
    return {ChannelKind::Depth, std::nullopt, std::nullopt, false};
}
ChannelSpec
ChannelSpec::density(std::optional<KernelSpec> band, std::optional<double> beta) {
    return {ChannelKind::Density, band, beta, false};
}
ChannelSpec
ChannelSpec::lateralDensity(std::optional<double> beta) {
    return {ChannelKind::Density, std::nullopt, beta, true};
}

void
ChannelSpec::validate() const {
    if (kind != ChannelKind::Density && (depthKernel || compressBeta || lateralOnly)) {
        throw InvalidParameter("channel: depth kernels and compression apply to density channels only");
    }
    if (depthKernel) {
        depthKernel->validate();
    }
    if (compressBeta && !(*compressBeta > 0.0 && std::isfinite(*compressBeta))) {
        throw InvalidParameter("channel: compression beta must be finite and > 0");
    }
}

std::vector<ChannelSpec>
bandedChannelPreset(double beta) {
    std::vector<ChannelSpec> out{ChannelSpec::depth()};
    for (double mu : {0.0, 0.5, 1.0}) {
        out.push_back(ChannelSpec::density(KernelSpec::expBand(mu, 0.15), beta));
    }
    out.push_back(ChannelSpec::lateralDensity(beta));
    return out;
}

void
SensorCell::validate() const {
    if (!position.allFinite() || !shift.allFinite()) {
        throw InvalidParameter("SensorCell: non-finite position or shift");
    }
    view.validate();
    lateral.validate();
    if (depth) {
        depth->validate();
    }
    if (attenuation) {
        attenuation->validate();
    }
    if (!(sensitivity > 0.0) || !std::isfinite(sensitivity)) {
        throw InvalidParameter("SensorCell: sensitivity must be finite and > 0");
    }
}

std::size_t
SensorCell::paramCount() const {
    return 3 + 2 + 4 + 1 + lateral.paramCount() + (depth ? depth->paramCount() : 0) +
           (attenuation ? attenuation->paramCount() : 0) + 1;
}

SensorGrid
SensorGrid::planar(int rows, int cols, const SensorCell &prototype, double extent, double planeZ) {
    if (rows < 1 || cols < 1) {
        throw InvalidParameter("SensorGrid::planar: rows and cols must be >= 1");
    }
    if (!(extent > 0.0) || !std::isfinite(extent) || !std::isfinite(planeZ)) {
        throw InvalidParameter("SensorGrid::planar: extent must be finite and > 0");
    }
    SensorGrid grid;
    grid.topology = GridTopology::Planar;
    grid.rows     = rows;
    grid.cols     = cols;
    PlanarLattice L;
    L.pitchX = 2.0 * extent / cols;
    L.pitchY = 2.0 * extent / rows;
    L.x0     = -extent + 0.5 * L.pitchX;
    L.y0     = -extent + 0.5 * L.pitchY;
    L.z      = planeZ;
    grid.lattice = L;
    grid.cells.reserve(static_cast<std::size_t>(rows) * cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            SensorCell c     = prototype;
            c.position       = {L.x0 + j * L.pitchX, L.y0 + i * L.pitchY, planeZ};
            c.view.rotation  = Quaternion::identity();
            grid.cells.push_back(std::move(c));
        }
    }
    grid.validate();
    return grid;
}

SensorGrid
SensorGrid::cylindrical(const CylindricalGrid &layout, const SensorCell &prototype) {
    layout.validate();
    SensorGrid grid;
    grid.topology = GridTopology::Cylindrical;
    grid.rows     = layout.height;
    grid.cols     = layout.width;
    grid.cylinder = layout;
    grid.cells.assign(static_cast<std::size_t>(layout.height) * layout.width, prototype);
    const std::vector<ColumnParams> identity(layout.width, ColumnParams::identity(layout.radius));
    return interpolateColumnParams(identity, grid);
}

void
SensorGrid::validate() const {
    if (rows < 1 || cols < 1) {
        throw InvalidParameter("SensorGrid: rows and cols must be >= 1");
    }
    if (cells.size() != static_cast<std::size_t>(rows) * cols) {
        throw InvalidParameter("SensorGrid: cell count does not match rows x cols");
    }
    for (const auto &c : cells) {
        c.validate();
    }
    for (const auto &ch : channels) {
        ch.validate();
    }
    if (!std::isfinite(farValue)) {
        throw InvalidParameter("SensorGrid: far value must be finite");
    }
    if (topology == GridTopology::Cylindrical) {
        if (!cylinder || cylinder->height != rows || cylinder->width != cols) {
            throw InvalidParameter("SensorGrid: cylindrical layout does not match the grid");
        }
    }
}

RenderedImage::RenderedImage(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
    if (height < 0 || width < 0 || channels < 0) {
        throw InvalidParameter("RenderedImage: negative extent");
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

std::span<double>
RenderedImage::channel(int c) {
    return {data_.data() + static_cast<std::size_t>(c) * pixelCount(), pixelCount()};
}

std::span<const double>
RenderedImage::channel(int c) const {
    return {data_.data() + static_cast<std::size_t>(c) * pixelCount(), pixelCount()};
}

bool
RenderedImage::sameShape(const RenderedImage &other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
}

// ---------------------------------------------------------------------------------------
// Parameters

std::string_view
paramClassName(ParamClass c) {
    switch (c) {
    case ParamClass::Position: return "position";
    case ParamClass::Shift: return "shift";
    case ParamClass::Rotation: return "rotation";
    case ParamClass::Elongation: return "elongation";
    case ParamClass::LateralKernel: return "lateral_kernel";
    case ParamClass::DepthKernel: return "depth_kernel";
    case ParamClass::Attenuation: return "attenuation";
    case ParamClass::Sensitivity: return "sensitivity";
    case ParamClass::GeomRotation: return "geom_rotation";
    case ParamClass::GeomTps: return "geom_tps";
    case ParamClass::PointCoordinate: return "point";
    }
    return "unknown";
}

GeometricKind
geometricKind(const GeometricTransform &transform) {
    switch (transform.index()) {
    case 1: return GeometricKind::Rotation;
    case 2: return GeometricKind::Tps;
    default: return GeometricKind::None;
    }
}

PointCloud
applyGeometric(const GeometricTransform &transform, const PointCloud &cloud) {
    if (const auto *q = std::get_if<Quaternion>(&transform)) {
        return quatRotate(*q, cloud);
    }
    if (const auto *w = std::get_if<TpsWarp>(&transform)) {
        return tpsApply(*w, cloud);
    }
    return cloud;
}

std::int64_t
ParamLayout::cellOf(std::size_t index) const {
    if (index >= geometricOffset()) {
        return -1;
    }
    const auto it = std::upper_bound(cellOffsets.begin(), cellOffsets.end(), index);
    return static_cast<std::int64_t>(it - cellOffsets.begin()) - 1;
}

namespace {

constexpr double kFree     = -std::numeric_limits<double>::infinity();
constexpr double kPositive = 1e-6;

double
kernelLowerBound(const KernelSpec &k, std::size_t i) {
    switch (k.family) {
    case KernelFamily::EpanechnikovPow: return i == 0 ? 1.0 : kPositive;
    case KernelFamily::ExpBand: return i == 0 ? kFree : kPositive;
    default: return kPositive;
    }
}

} // namespace

ParamLayout
paramLayout(const SensorGrid &grid, GeometricKind geometric) {
    ParamLayout L;
    L.geometric = geometric;
    auto push   = [&](ParamClass c, std::size_t n, double lower) {
        L.classes.insert(L.classes.end(), n, c);
        L.lowerBounds.insert(L.lowerBounds.end(), n, lower);
    };
    for (const auto &cell : grid.cells) {
        L.cellOffsets.push_back(L.classes.size());
        push(ParamClass::Position, 3, kFree);
        push(ParamClass::Shift, 2, kFree);
        push(ParamClass::Rotation, 4, kFree);
        push(ParamClass::Elongation, 1, kPositive);
        for (std::size_t i = 0; i < cell.lateral.paramCount(); ++i) {
            push(ParamClass::LateralKernel, 1, kernelLowerBound(cell.lateral, i));
        }
        if (cell.depth) {
            for (std::size_t i = 0; i < cell.depth->paramCount(); ++i) {
                push(ParamClass::DepthKernel, 1, kernelLowerBound(*cell.depth, i));
            }
        }
        if (cell.attenuation) {
            for (std::size_t i = 0; i < cell.attenuation->components.size(); ++i) {
                push(ParamClass::Attenuation, 2, kFree);
                push(ParamClass::Attenuation, 1, kPositive);
            }
        }
        push(ParamClass::Sensitivity, 1, kPositive);
    }
    L.cellOffsets.push_back(L.classes.size());
    if (geometric == GeometricKind::Rotation) {
        push(ParamClass::GeomRotation, 4, kFree);
    } else if (geometric == GeometricKind::Tps) {
        push(ParamClass::GeomTps, 2 * TpsWarp::controlGrid().size(), kFree);
    }
    return L;
}

RenderParams
RenderParams::pack(const SensorGrid &grid, const GeometricTransform &geometric) {
    RenderParams p;
    p.layout = paramLayout(grid, geometricKind(geometric));
    p.values.reserve(p.layout.size());
    auto &v = p.values;
    for (const auto &cell : grid.cells) {
        v.insert(v.end(), {cell.position.x(), cell.position.y(), cell.position.z()});
        v.insert(v.end(), {cell.shift.x(), cell.shift.y()});
        const auto q = cell.view.rotation.coeffs();
        v.insert(v.end(), {q(0), q(1), q(2), q(3)});
        v.push_back(cell.view.elongation);
        for (std::size_t i = 0; i < cell.lateral.paramCount(); ++i) {
            v.push_back(cell.lateral.params[i]);
        }
        if (cell.depth) {
            for (std::size_t i = 0; i < cell.depth->paramCount(); ++i) {
                v.push_back(cell.depth->params[i]);
            }
        }
        if (cell.attenuation) {
            for (const auto &c : cell.attenuation->components) {
                v.insert(v.end(), {c.amplitude, c.center, c.width});
            }
        }
        v.push_back(cell.sensitivity);
    }
    if (const auto *q = std::get_if<Quaternion>(&geometric)) {
        const auto c = q->coeffs();
        v.insert(v.end(), {c(0), c(1), c(2), c(3)});
    } else if (const auto *w = std::get_if<TpsWarp>(&geometric)) {
        if (w->controls() != TpsWarp::controlGrid()) {
            throw InvalidParameter("RenderParams: TPS warps must use the default 4 x 4 control grid");
        }
        const auto d = w->flatDisplacements();
        v.insert(v.end(), d.begin(), d.end());
    }
    return p;
}

namespace {

void
writeCell(SensorCell &cell, const double *p) {
    cell.position        = {p[0], p[1], p[2]};
    cell.shift           = {p[3], p[4]};
    cell.view.rotation   = Quaternion(p[5], p[6], p[7], p[8]);
    cell.view.elongation = p[9];
    p += 10;
    for (std::size_t i = 0; i < cell.lateral.paramCount(); ++i) {
        cell.lateral.params[i] = *p++;
    }
    if (cell.depth) {
        for (std::size_t i = 0; i < cell.depth->paramCount(); ++i) {
            cell.depth->params[i] = *p++;
        }
    }
    if (cell.attenuation) {
        for (auto &c : cell.attenuation->components) {
            c.amplitude = p[0];
            c.center    = p[1];
            c.width     = p[2];
            p += 3;
        }
    }
    cell.sensitivity = *p;
    cell.validate();
}

} // namespace

SensorGrid
RenderParams::applyTo(const SensorGrid &grid) const {
    if (values.size() != layout.size() || !(paramLayout(grid, layout.geometric) == layout)) {
        throw InvalidParameter("RenderParams: parameter layout does not match the grid (" +
                               std::to_string(values.size()) + " values)");
    }
    for (double x : values) {
        if (!std::isfinite(x)) {
            throw InvalidParameter("RenderParams: non-finite parameter");
        }
    }
    SensorGrid out = grid;
    for (std::size_t k = 0; k < out.cells.size(); ++k) {
        writeCell(out.cells[k], values.data() + layout.cellOffsets[k]);
    }
    return out;
}

SensorCell
RenderParams::applyToCell(const SensorGrid &grid, std::size_t k) const {
    if (values.size() != layout.size() || layout.cellOffsets.size() != grid.cellCount() + 1 ||
        k >= grid.cellCount()) {
        throw InvalidParameter("RenderParams: parameter layout does not match the grid (" +
                               std::to_string(values.size()) + " values)");
    }
    const std::size_t begin = layout.cellOffsets[k], end = layout.cellOffsets[k + 1];
    const SensorCell &src   = grid.cells[k];
    const std::size_t count = 11 + src.lateral.paramCount() + (src.depth ? src.depth->paramCount() : 0) +
                              (src.attenuation ? 3 * src.attenuation->components.size() : 0);
    if (end - begin != count) {
        throw InvalidParameter("RenderParams: cell block does not match the cell");
    }
    for (std::size_t i = begin; i < end; ++i) {
        if (!std::isfinite(values[i])) {
            throw InvalidParameter("RenderParams: non-finite parameter");
        }
    }
    SensorCell cell = src;
    writeCell(cell, values.data() + begin);
    return cell;
}

GeometricTransform
RenderParams::geometric() const {
    const double *g = values.data() + layout.geometricOffset();
    switch (layout.geometric) {
    case GeometricKind::Rotation: return Quaternion(g[0], g[1], g[2], g[3]);
    case GeometricKind::Tps:
        return TpsWarp::fromFlat(std::span<const double>(g, layout.size() - layout.geometricOffset()));
    case GeometricKind::None: break;
    }
    return std::monostate{};
}

// ---------------------------------------------------------------------------------------
// Forward rendering

std::string_view
backendName(Backend backend) {
    switch (backend) {
    case Backend::Auto: return "auto";
    case Backend::Brute: return "brute";
    case Backend::KdTree: return "kdtree";
    case Backend::Binning: return "binning";
    }
    return "unknown";
}

Backend
backendFromName(std::string_view name) {
    for (auto b : {Backend::Auto, Backend::Brute, Backend::KdTree, Backend::Binning}) {
        if (backendName(b) == name) {
            return b;
        }
    }
    throw InvalidParameter("unknown backend '" + std::string(name) + "'");
}

namespace {

void
evaluateCell(const SensorGrid &grid, std::size_t k, const PointCloud &cloud,
             const CandidateProvider *provider, detail::CellAccumulator &acc,
             std::vector<std::uint32_t> &scratch) {
    const detail::CellFrame frame(grid.cells[k]);
    const auto             &pts = cloud.points();
    detail::Interaction     it;
    acc.reset(grid.channels.size());
    if (provider && provider->candidates(k, scratch)) {
        for (std::uint32_t idx : scratch) {
            if (detail::interact(frame, pts[idx], it)) {
                acc.add(grid.cells[k], grid.channels, idx, it);
            }
        }
        return;
    }
    for (std::size_t idx = 0; idx < pts.size(); ++idx) {
        if (detail::interact(frame, pts[idx], it)) {
            acc.add(grid.cells[k], grid.channels, idx, it);
        }
    }
}

} // namespace

RenderResult
renderDetailed(const SensorGrid &grid, const PointCloud &cloud, const RenderOptions &options) {
    grid.validate();
    if (cloud.empty()) {
        throw InvalidInput("render: empty cloud");
    }
    if (resolveBackend(grid, options) == Backend::Binning) {
        return orthographicBinning(cloud, grid, options);
    }
    const CandidateProvider provider(grid, cloud, options);
    const auto              nCells = grid.cellCount();
    const auto              nCh    = grid.channels.size();

    RenderResult result;
    result.backend = provider.backend();
    result.image   = RenderedImage(grid.rows, grid.cols, static_cast<int>(nCh));
    result.coverage.assign(nCells, 0);
    result.argmax.assign(nCells, -1);
    result.range.assign(nCells, 0.0);
    result.depth.assign(nCells, grid.farValue);
    parallelFor(nCells, [&](std::size_t k) {
        detail::CellAccumulator    acc;
        std::vector<std::uint32_t> scratch;
        std::vector<double>        values(nCh);
        evaluateCell(grid, k, cloud, &provider, acc, scratch);
        acc.finish(grid.channels, grid.farValue, values, {});
        for (std::size_t ch = 0; ch < nCh; ++ch) {
            result.image.data()[ch * nCells + k] = values[ch];
        }
        result.coverage[k] = acc.bestIndex >= 0 ? 1 : 0;
        result.argmax[k]   = acc.bestIndex;
        result.range[k]    = acc.best;
        result.depth[k]    = acc.bestIndex >= 0 ? acc.bestDepth : grid.farValue;
    });
    return result;
}

RenderedImage
render(const SensorGrid &grid, const PointCloud &cloud, const RenderOptions &options) {
    return renderDetailed(grid, cloud, options).image;
}

RenderedImage
render(const SensorGrid &grid, const PointCloud &cloud, const RenderParams &params,
       const RenderOptions &options) {
    const SensorGrid applied = params.applyTo(grid);
    return render(applied, applyGeometric(params.geometric(), cloud), options);
}

std::vector<double>
renderPixel(const SensorGrid &grid, std::size_t cell, const PointCloud &cloud) {
    if (cloud.empty()) {
        throw InvalidInput("renderPixel: empty cloud");
    }
    if (cell >= grid.cellCount()) {
        throw InvalidParameter("renderPixel: cell index out of range");
    }
    detail::CellAccumulator    acc;
    std::vector<std::uint32_t> scratch;
    std::vector<double>        values(grid.channels.size());
    evaluateCell(grid, cell, cloud, nullptr, acc, scratch);
    acc.finish(grid.channels, grid.farValue, values, {});
    return values;
}

double
cellResponse(const SensorCell &cell, const PointCloud &cloud, Reduction reduction) {
    if (cloud.empty()) {
        throw InvalidInput("cellResponse: empty cloud");
    }
    cell.validate();
    const detail::CellFrame frame(cell);
    detail::Interaction     it;
    double                  best = 0.0;
    detail::ExactSum        sum;
    for (const auto &p : cloud.points()) {
        if (!detail::interact(frame, p, it)) {
            continue;
        }
        const double psi = it.base * detail::depthFactor(cell.depth ? &*cell.depth : nullptr, it.r.z());
        best             = std::max(best, psi);
        if (psi > 0.0) {
            sum.add(psi);
        }
    }
    return reduction == Reduction::Max ? best : sum.value();
}


std::vector<std::int64_t>
interactionSignature(const SensorGrid &grid, std::size_t cellIndex, const PointCloud &cloud) {
    const SensorCell       &cell = grid.cells.at(cellIndex);
    const detail::CellFrame frame(cell);
    detail::CellAccumulator acc;
    acc.reset(grid.channels.size());
    std::vector<std::int64_t> sig;
    sig.reserve(cloud.size() + 1);
    detail::Interaction it;
    const auto         &pts = cloud.points();
    for (std::size_t idx = 0; idx < pts.size(); ++idx) {
        const bool live = detail::interact(frame, pts[idx], it);
        sig.push_back(detail::interactionCode(cell, grid.channels, it, live));
        if (live) {
            acc.add(cell, grid.channels, idx, it);
        }
    }
    sig.push_back(acc.bestIndex);
    return sig;
}

// ---------------------------------------------------------------------------------------
// Panoramic grids

ColumnParams
ColumnParams::identity(double radius) {
    ColumnParams p;
    p.bottom.radius = radius;
    p.top.radius    = radius;
    return p;
}

SensorGrid
interpolateColumnParams(const std::vector<ColumnParams> &columns, const SensorGrid &grid) {
    if (grid.topology != GridTopology::Cylindrical || !grid.cylinder) {
        throw InvalidParameter("interpolateColumnParams: grid is not cylindrical");
    }
    const CylindricalGrid &layout = *grid.cylinder;
    layout.validate();
    if (columns.size() != static_cast<std::size_t>(layout.width)) {
        throw InvalidParameter("interpolateColumnParams: expected one parameter set per column");
    }
    SensorGrid out = grid;
    const int  h   = layout.height;
    for (int j = 0; j < layout.width; ++j) {
        const ColumnParams &cp = columns[j];
        for (int i = 0; i < h; ++i) {
            const double t      = static_cast<double>(i) / (h - 1);
            auto         lerp   = [t](double a, double b) { return a + t * (b - a); };
            const double radius = lerp(cp.bottom.radius, cp.top.radius);
            const double dh     = lerp(cp.bottom.height, cp.top.height);
            const double vert   = lerp(cp.bottom.vertical, cp.top.vertical);
            if (!(radius > 0.0) || !std::isfinite(radius)) {
                throw InvalidParameter("interpolateColumnParams: interpolated radius must be > 0");
            }
            const double theta  = layout.columnAngle(j) + cp.angleShift;
            const double height = layout.rowHeight(i) + dh;
            const Point3 source = cylindricalToCartesian(theta, height, radius);
            const Eigen::Vector3d tangent(-std::cos(theta), 0.0, -std::sin(theta));
            const Point3          dest = Point3(0.0, height, 0.0) + cp.viewShift * tangent +
                                Eigen::Vector3d(0.0, vert, 0.0);
            Eigen::Vector3d z = dest - source;
            if (!(z.norm() > 0.0) || !z.allFinite()) {
                throw InvalidParameter("interpolateColumnParams: degenerate view direction");
            }
            z.normalize();
            Eigen::Vector3d y = Eigen::Vector3d::UnitY() - z.y() * z;
            if (y.norm() < 1e-12) {
                y = tangent - tangent.dot(z) * z;
            }
            y.normalize();
            const Eigen::Vector3d x = y.cross(z);
            Eigen::Matrix3d       R;
            R.row(0) = x;
            R.row(1) = y;
            R.row(2) = z;

            SensorCell &cell    = out.cell(i, j);
            cell.position       = source;
            cell.view.rotation  = Quaternion::fromRotationMatrix(R);
        }
    }
    return out;
}

RenderedImage
cyclicConvolve(const RenderedImage &image, const Eigen::MatrixXd &kernel) {
    if (kernel.rows() % 2 == 0 || kernel.cols() % 2 == 0) {
        throw InvalidParameter("cyclicConvolve: kernel extents must be odd");
    }
    if (kernel.rows() > image.height() || kernel.cols() > image.width()) {
        throw InvalidParameter("cyclicConvolve: kernel larger than the image");
    }
    if (!kernel.allFinite()) {
        throw InvalidParameter("cyclicConvolve: non-finite kernel");
    }
    const int     kh = static_cast<int>(kernel.rows() - 1) / 2;
    const int     kw = static_cast<int>(kernel.cols() - 1) / 2;
    const int     H  = image.height();
    const int     W  = image.width();
    RenderedImage out(H, W, image.channels());
    for (int c = 0; c < image.channels(); ++c) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                double s = 0.0;
                for (int j = -kw; j <= kw; ++j) {
                    const int xx = ((x + j) % W + W) % W;
                    for (int i = -kh; i <= kh; ++i) {
                        const int yy = y + i;
                        if (yy < 0 || yy >= H) {
                            continue;
                        }
                        s += image.at(c, yy, xx) * kernel(kh - i, kw - j);
                    }
                }
                out.at(c, y, x) = s;
            }
        }
    }
    return out;
}

double
rangeRelaxation(const Point3 &position, double elongation, const PointCloud &cloud) {
    if (!(elongation > 0.0) || !std::isfinite(elongation)) {
        throw InvalidParameter("rangeRelaxation: elongation must be finite and > 0");
    }
    if (!position.allFinite()) {
        throw InvalidParameter("rangeRelaxation: non-finite position");
    }
    if (cloud.empty()) {
        throw InvalidInput("rangeRelaxation: empty cloud");
    }
    // |(dx / s, dy / s, dz)|: every step rounds monotonically in s, so the result is
    // non-increasing in s in floating point too, and exact for on-ray points.
    double best = std::numeric_limits<double>::infinity();
    for (const auto &c : cloud.points()) {
        const Eigen::Vector3d d = position - c;
        const double          a = d.x() / elongation, b = d.y() / elongation;
        best = std::min(best, std::sqrt(a * a + b * b + d.z() * d.z()));
    }
    return best;
}

} // namespace cellrender
