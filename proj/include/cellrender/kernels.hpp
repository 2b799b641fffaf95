// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cellrender/geometry.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace cellrender {

enum class KernelFamily {
    Cauchy,          // 1 / (1 + (x/a)^2)
    EpanechnikovPow, // max(0, 1 - (x/r)^2)^a
    Triangular,      // max(0, 1 - |x|/r)
    ExpBand,         // exp(-|x - mu| / sigma)
    Gaussian,        // exp(-x^2 / (2 sigma^2))
};

std::string_view kernelFamilyName(KernelFamily family);
KernelFamily     kernelFamilyFromName(std::string_view name);

/// A scalar kernel with at most two real parameters.
///
/// Parameter order per family:
///   Cauchy          {bandwidth}
///   EpanechnikovPow {exponent, radius}
///   Triangular      {radius}
///   ExpBand         {center, width}
///   Gaussian        {sigma}
struct KernelSpec {
    KernelFamily          family = KernelFamily::Gaussian;
    std::array<double, 2> params = {1.0, 0.0};

    static KernelSpec cauchy(double bandwidth);
    static KernelSpec epanechnikovPow(double exponent, double radius);
    static KernelSpec triangular(double radius = 1.0);
    static KernelSpec expBand(double center, double width);
    static KernelSpec gaussian(double sigma);

    std::size_t paramCount() const;
    /// Names in parameter order, used by the config format.
    std::array<std::string_view, 2> paramNames() const;
    void                            validate() const;

    bool operator==(const KernelSpec &) const = default;
};

struct KernelValue {
    double                value   = 0.0;
    double                dx      = 0.0;
    std::array<double, 2> dparams = {0.0, 0.0};
};

/// Value, d/dx and d/dparams. At the support boundary and at cusps the one-sided derivative
/// from the interior is returned (0 at the exp_band peak).
KernelValue kernelEval(const KernelSpec &spec, double x);
/// Value only; skips the derivative work.
double kernelValue(const KernelSpec &spec, double x);

/// Radius beyond which the kernel is exactly zero, or nullopt for unbounded families.
std::optional<double> supportRadius(const KernelSpec &spec);

/// Lateral (in-plane) kernel times depth kernel: K(x, y, z) = f(|(x, y)|) g(z).
struct SeparableKernel {
    KernelSpec lateral = KernelSpec::epanechnikovPow(1.65, 1.0 / 32.0);
    KernelSpec depth   = KernelSpec::triangular(1.0);
};

/// Per-cell view transform A = diag(1, 1, s) * Rot.
struct ViewTransform {
    Quaternion rotation;
    double     elongation = 1.0;

    Eigen::Matrix3d matrix() const;
    void            validate() const;
};

struct MahalanobisValue {
    double          value = 0.0;
    Eigen::Vector3d dOffset;        // d/d(offset)
    double          dElongation = 0.0;
    Eigen::Vector4d dRotation;      // d/d(w, x, y, z), tangent-projected
};

/// sqrt(d^T A^T A d). The gradient at d = 0 is the zero subgradient.
MahalanobisValue mahalanobis(const ViewTransform &view, const Eigen::Vector3d &offset);

struct CompressedValue {
    double value      = 0.0;
    double derivative = 0.0;
};

/// log(1 + beta x) for x >= 0, beta > 0.
CompressedValue logCompress(double x, double beta);

} // namespace cellrender
