// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cellrender/attenuation.hpp"
#include "cellrender/geometry.hpp"
#include "cellrender/kernels.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace cellrender {

enum class ChannelKind {
    Range,   // max of the cell response
    Depth,   // cell-frame depth of the point selected by the range channel
    Density, // sum of the cell response
};

struct ChannelSpec {
    ChannelKind kind = ChannelKind::Range;
    /// Density only: replaces the cell's own depth kernel for this channel (fixed preset,
    /// not optimized). Without it the cell depth kernel is used.
    std::optional<KernelSpec> depthKernel;
    /// Density only: log(1 + beta D) applied after summation.
    std::optional<double> compressBeta;
    /// Density only: drop every depth factor (plain lateral density).
    bool lateralOnly = false;

    static ChannelSpec range();
    static ChannelSpec depth();
    static ChannelSpec density(std::optional<KernelSpec> band = std::nullopt,
                               std::optional<double>     beta = std::nullopt);
    static ChannelSpec lateralDensity(std::optional<double> beta = std::nullopt);

    void validate() const;
    bool operator==(const ChannelSpec &) const = default;
};

/// Depth + three exp-band density channels (mu 0, 0.5, 1; width 0.15) + plain lateral
/// density, all summation channels compressed with beta = 0.2.
std::vector<ChannelSpec> bandedChannelPreset(double beta = 0.2);

/// One pixel's sampling function.
///
/// With separable kernels the response to a point c is
///   lateral(|r_xy|) * depth(r_z) * attenuation(r_z) * sensitivity,
/// with radial kernels lateral(|r|) replaces lateral(|r_xy|), where
///   r = diag(1, 1, s) * Rot * (c - position) - (shift_x, shift_y, 0).
/// Cells look along +z of their own frame.
struct SensorCell {
    Point3                          position = Point3::Zero();
    ViewTransform                   view;
    Vec2                            shift   = Vec2::Zero();
    KernelSpec                      lateral = KernelSpec::epanechnikovPow(1.65, 1.0 / 32.0);
    bool                            radial  = false;
    std::optional<KernelSpec>       depth   = KernelSpec::triangular(1.0);
    std::optional<AttenuationField> attenuation;
    double                          sensitivity = 1.0;

    void        validate() const;
    std::size_t paramCount() const;
};

enum class GridTopology { Planar, Cylindrical };

/// Nominal lattice of a planar grid: cell (i, j) sits at (x0 + j px, y0 + i py, z).
struct PlanarLattice {
    double x0 = 0.0, y0 = 0.0, z = 0.0;
    double pitchX = 1.0, pitchY = 1.0;
};

struct SensorGrid {
    GridTopology                   topology = GridTopology::Planar;
    int                            rows     = 0;
    int                            cols     = 0;
    std::vector<SensorCell>        cells; // row-major
    std::vector<ChannelSpec>       channels = {ChannelSpec::range()};
    double                         farValue = 0.0; // depth reported where no point responds
    std::optional<PlanarLattice>   lattice;
    std::optional<CylindricalGrid> cylinder;

    /// rows x cols cells on the z = planeZ plane covering [-extent, extent]^2 (cell centers),
    /// all with the prototype's kernels and identity rotation (looking along +z).
    static SensorGrid planar(int rows, int cols, const SensorCell &prototype, double extent = 1.0,
                             double planeZ = -2.0);
    /// Cells on the cylinder, each looking at the Y axis at its own height.
    static SensorGrid cylindrical(const CylindricalGrid &layout, const SensorCell &prototype);

    std::size_t
    cellCount() const {
        return cells.size();
    }
    SensorCell &
    cell(int row, int col) {
        return cells[static_cast<std::size_t>(row) * cols + col];
    }
    const SensorCell &
    cell(int row, int col) const {
        return cells[static_cast<std::size_t>(row) * cols + col];
    }

    void validate() const;
};

/// Channel-major dense image: value(c, i, j) at data[(c * height + i) * width + j].
class RenderedImage {
  public:
    RenderedImage() = default;
    RenderedImage(int height, int width, int channels, double fill = 0.0);

    int
    height() const {
        return height_;
    }
    int
    width() const {
        return width_;
    }
    int
    channels() const {
        return channels_;
    }
    std::size_t
    pixelCount() const {
        return static_cast<std::size_t>(height_) * width_;
    }

    double &
    at(int channel, int row, int col) {
        return data_[(static_cast<std::size_t>(channel) * height_ + row) * width_ + col];
    }
    double
    at(int channel, int row, int col) const {
        return data_[(static_cast<std::size_t>(channel) * height_ + row) * width_ + col];
    }
    std::span<double>       channel(int c);
    std::span<const double> channel(int c) const;

    std::vector<double> &
    data() {
        return data_;
    }
    const std::vector<double> &
    data() const {
        return data_;
    }

    bool sameShape(const RenderedImage &other) const;
    bool operator==(const RenderedImage &) const = default;

  private:
    int                 height_ = 0, width_ = 0, channels_ = 0;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------------------
// Flat parameter vectors

enum class ParamClass {
    Position,
    Shift,
    Rotation,
    Elongation,
    LateralKernel,
    DepthKernel,
    Attenuation,
    Sensitivity,
    GeomRotation,
    GeomTps,
    PointCoordinate, // only used by gradient checks that append point coordinates
};

std::string_view paramClassName(ParamClass c);

enum class GeometricKind { None, Rotation, Tps };

/// Transform applied to the cloud before rendering.
using GeometricTransform = std::variant<std::monostate, Quaternion, TpsWarp>;

GeometricKind geometricKind(const GeometricTransform &transform);
PointCloud    applyGeometric(const GeometricTransform &transform, const PointCloud &cloud);

/// Where each cell's parameters live in the flat vector.
///
/// Per cell, in order: position (3), shift (2), rotation quaternion w x y z (4), elongation (1),
/// lateral kernel params, depth kernel params, attenuation (a, c, sigma) per component,
/// sensitivity (1). The geometric transform follows all cells: quaternion (4) or TPS
/// displacements (32, interleaved dx dy per control point).
struct ParamLayout {
    std::vector<std::size_t> cellOffsets; // cellCount + 1 entries
    GeometricKind            geometric = GeometricKind::None;
    std::vector<ParamClass>  classes;
    std::vector<double>      lowerBounds; // feasibility bound per coordinate (-inf if free)

    std::size_t
    size() const {
        return classes.size();
    }
    std::size_t
    geometricOffset() const {
        return cellOffsets.back();
    }
    /// Cell owning the coordinate, or -1 for the geometric transform.
    std::int64_t cellOf(std::size_t index) const;

    bool operator==(const ParamLayout &) const = default;
};

ParamLayout paramLayout(const SensorGrid &grid, GeometricKind geometric = GeometricKind::None);

struct RenderParams {
    std::vector<double> values;
    ParamLayout         layout;

    static RenderParams pack(const SensorGrid &grid, const GeometricTransform &geometric = {});

    /// Writes cell parameters into a copy of `grid` (normalizing quaternions) and returns it;
    /// throws InvalidParameter if the layout does not match the grid.
    SensorGrid         applyTo(const SensorGrid &grid) const;
    /// Same for one cell only; cheaper when a single cell's block changed.
    SensorCell         applyToCell(const SensorGrid &grid, std::size_t cell) const;
    GeometricTransform geometric() const;
};

// ---------------------------------------------------------------------------------------
// Rendering

enum class Backend { Auto, Brute, KdTree, Binning };

std::string_view backendName(Backend backend);
Backend          backendFromName(std::string_view name);

struct RenderOptions {
    Backend     backend  = Backend::Auto;
    std::size_t leafSize = 16;
    /// Extra binning neighborhood rings beyond the sound minimum (output must not change).
    int binningExtraRadius = 0;
};

struct RenderResult {
    RenderedImage             image;
    std::vector<std::uint8_t> coverage; // 1 where some point responds to the range kernel
    std::vector<std::int64_t> argmax;   // range-channel point index per pixel, -1 if none
    std::vector<double>       range;    // max response per pixel (0 if none)
    std::vector<double>       depth;    // cell-frame depth of the argmax point (far value if none)
    Backend                   backend = Backend::Brute; // backend actually used
};

RenderResult  renderDetailed(const SensorGrid &grid, const PointCloud &cloud,
                             const RenderOptions &options = {});
RenderedImage render(const SensorGrid &grid, const PointCloud &cloud,
                     const RenderOptions &options = {});
/// Applies params to the grid, the geometric transform to the cloud, then renders.
RenderedImage render(const SensorGrid &grid, const PointCloud &cloud, const RenderParams &params,
                     const RenderOptions &options = {});

/// Channel values of one cell (brute force over the cloud).
std::vector<double> renderPixel(const SensorGrid &grid, std::size_t cell, const PointCloud &cloud);

enum class Reduction { Max, Sum };

/// Max or sum over the cloud of the cell response (cell depth kernel, attenuation, sensitivity).
double cellResponse(const SensorCell &cell, const PointCloud &cloud, Reduction reduction);

/// Per-cell codes that change when some interaction crosses a kernel support boundary, a
/// kernel cusp, an attenuation clamp or the range-channel argmax. Used to exclude
/// non-differentiable coordinates from finite-difference checks.
std::vector<std::int64_t> interactionSignature(const SensorGrid &grid, std::size_t cell,
                                               const PointCloud &cloud);

// ---------------------------------------------------------------------------------------
// Panoramic grids

struct ColumnEnd {
    double radius   = 0.5; // absolute
    double height   = 0.0; // offset added to the default row height
    double vertical = 0.0; // vertical displacement of the view destination
    bool   operator==(const ColumnEnd &) const = default;
};

/// Eight placement parameters per cylinder column; bottom is row 0, top is row h - 1.
struct ColumnParams {
    double    angleShift = 0.0; // radians added to the column angle
    double    viewShift  = 0.0; // horizontal displacement of the view destination
    ColumnEnd bottom;
    ColumnEnd top;

    static ColumnParams identity(double radius = 0.5);
    bool                operator==(const ColumnParams &) const = default;
};

/// Places and orients every cell of a cylindrical grid from per-column parameters, linearly
/// interpolated over rows. Kernels and attenuation are kept from the input grid.
SensorGrid interpolateColumnParams(const std::vector<ColumnParams> &columns,
                                   const SensorGrid                &grid);

/// I^(x, y) = sum_j sum_i I((x + j) mod w, y + i) K(-j, -i), wrapping in width and zero padded in
/// height. `kernel` is (2 Kh + 1) x (2 Kw + 1) with K(0, 0) at its center; rows index height.
RenderedImage cyclicConvolve(const RenderedImage &image, const Eigen::MatrixXd &kernel);

/// (1/s) min_c |diag(1, 1, s) (x_p - c)|.
double rangeRelaxation(const Point3 &position, double elongation, const PointCloud &cloud);

} // namespace cellrender
