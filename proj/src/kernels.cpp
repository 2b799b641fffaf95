// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#include "cellrender/kernels.hpp"

#include "cellrender/error.hpp"

#include <cmath>
#include <string>

namespace cellrender {

std::string_view
kernelFamilyName(KernelFamily family) {
    switch (family) {
    case KernelFamily::Cauchy: return "cauchy";
    case KernelFamily::EpanechnikovPow: return "epanechnikov_pow";
    case KernelFamily::Triangular: return "triangular";
    case KernelFamily::ExpBand: return "exp_band";
    case KernelFamily::Gaussian: return "gaussian";
    }
    return "unknown";
}

KernelFamily
kernelFamilyFromName(std::string_view name) {
    for (auto f : {KernelFamily::Cauchy,
                   KernelFamily::EpanechnikovPow,
                   KernelFamily::Triangular,
                   KernelFamily::ExpBand,
                   KernelFamily::Gaussian}) {
        if (kernelFamilyName(f) == name) {
            return f;
        }
    }
    throw InvalidParameter("unknown kernel family '" + std::string(name) + "'");
}

KernelSpec
KernelSpec::cauchy(double bandwidth) {
    return {KernelFamily::Cauchy, {bandwidth, 0.0}};
}
KernelSpec
KernelSpec::epanechnikovPow(double exponent, double radius) {
    return {KernelFamily::EpanechnikovPow, {exponent, radius}};
}
KernelSpec
KernelSpec::triangular(double radius) {
    return {KernelFamily::Triangular, {radius, 0.0}};
}
KernelSpec
KernelSpec::expBand(double center, double width) {
    return {KernelFamily::ExpBand, {center, width}};
}
KernelSpec
KernelSpec::gaussian(double sigma) {
    return {KernelFamily::Gaussian, {sigma, 0.0}};
}

std::size_t
KernelSpec::paramCount() const {
    switch (family) {
    case KernelFamily::EpanechnikovPow:
    case KernelFamily::ExpBand: return 2;
    default: return 1;
    }
}

std::array<std::string_view, 2>
KernelSpec::paramNames() const {
    switch (family) {
    case KernelFamily::Cauchy: return {"bandwidth", ""};
    case KernelFamily::EpanechnikovPow: return {"exponent", "radius"};
    case KernelFamily::Triangular: return {"radius", ""};
    case KernelFamily::ExpBand: return {"center", "width"};
    case KernelFamily::Gaussian: return {"sigma", ""};
    }
    return {"", ""};
}

void
KernelSpec::validate() const {
    const auto name = std::string(kernelFamilyName(family));
    for (std::size_t i = 0; i < paramCount(); ++i) {
        if (!std::isfinite(params[i])) {
            throw InvalidParameter(name + ": non-finite parameter");
        }
    }
    switch (family) {
    case KernelFamily::Cauchy:
        if (!(params[0] > 0.0)) throw InvalidParameter(name + ": bandwidth must be > 0");
        break;
    case KernelFamily::EpanechnikovPow:
        if (!(params[0] >= 1.0)) throw InvalidParameter(name + ": exponent must be >= 1");
        if (!(params[1] > 0.0)) throw InvalidParameter(name + ": radius must be > 0");
        break;
    case KernelFamily::Triangular:
        if (!(params[0] > 0.0)) throw InvalidParameter(name + ": radius must be > 0");
        break;
    case KernelFamily::ExpBand:
        if (!(params[1] > 0.0)) throw InvalidParameter(name + ": width must be > 0");
        break;
    case KernelFamily::Gaussian:
        if (!(params[0] > 0.0)) throw InvalidParameter(name + ": sigma must be > 0");
        break;
    }
}

KernelValue
kernelEval(const KernelSpec &spec, double x) {
    KernelValue out;
    switch (spec.family) {
    case KernelFamily::Cauchy: {
        const double a = spec.params[0];
        const double t = x / a;
        const double v = 1.0 / (1.0 + t * t);
        out.value      = v;
        out.dx         = -2.0 * x / (a * a) * v * v;
        out.dparams[0] = 2.0 * x * x / (a * a * a) * v * v;
        break;
    }
    case KernelFamily::EpanechnikovPow: {
        const double alpha = spec.params[0];
        const double rho   = spec.params[1];
        const double u     = x / rho;
        const double t     = 1.0 - u * u;
        if (t < 0.0) {
            break;
        }
        const double tm1 = std::pow(t, alpha - 1.0); // pow(0, 0) == 1 keeps the alpha = 1 edge
        const double v   = tm1 * t;
        out.value        = v;
        out.dx           = alpha * tm1 * (-2.0 * x / (rho * rho));
        out.dparams[0]   = t > 0.0 ? v * std::log(t) : 0.0;
        out.dparams[1]   = alpha * tm1 * (2.0 * x * x / (rho * rho * rho));
        break;
    }
    case KernelFamily::Triangular: {
        const double rho = spec.params[0];
        const double a   = std::abs(x);
        if (a > rho) {
            break;
        }
        const double sgn = x < 0.0 ? -1.0 : 1.0;
        out.value        = 1.0 - a / rho;
        out.dx           = -sgn / rho;
        out.dparams[0]   = a / (rho * rho);
        break;
    }
    case KernelFamily::ExpBand: {
        const double mu    = spec.params[0];
        const double sigma = spec.params[1];
        const double d     = x - mu;
        const double v     = std::exp(-std::abs(d) / sigma);
        const double sgn   = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        out.value          = v;
        out.dx             = -sgn / sigma * v;
        out.dparams[0]     = sgn / sigma * v;
        out.dparams[1]     = std::abs(d) / (sigma * sigma) * v;
        break;
    }
    case KernelFamily::Gaussian: {
        const double sigma = spec.params[0];
        const double s2    = sigma * sigma;
        const double v     = std::exp(-x * x / (2.0 * s2));
        out.value          = v;
        out.dx             = -x / s2 * v;
        out.dparams[0]     = x * x / (s2 * sigma) * v;
        break;
    }
    }
    return out;
}

double
kernelValue(const KernelSpec &spec, double x) {
    switch (spec.family) {
    case KernelFamily::Cauchy: {
        const double t = x / spec.params[0];
        return 1.0 / (1.0 + t * t);
    }
    case KernelFamily::EpanechnikovPow: {
        const double u = x / spec.params[1];
        const double t = 1.0 - u * u;
        return t < 0.0 ? 0.0 : std::pow(t, spec.params[0] - 1.0) * t;
    }
    case KernelFamily::Triangular: {
        const double a = std::abs(x);
        return a > spec.params[0] ? 0.0 : 1.0 - a / spec.params[0];
    }
    case KernelFamily::ExpBand: return std::exp(-std::abs(x - spec.params[0]) / spec.params[1]);
    case KernelFamily::Gaussian: {
        const double s = spec.params[0];
        return std::exp(-x * x / (2.0 * s * s));
    }
    }
    return 0.0;
}

std::optional<double>
supportRadius(const KernelSpec &spec) {
    switch (spec.family) {
    case KernelFamily::EpanechnikovPow: return spec.params[1];
    case KernelFamily::Triangular: return spec.params[0];
    default: return std::nullopt;
    }
}

Eigen::Matrix3d
ViewTransform::matrix() const {
    Eigen::Matrix3d a = rotation.toRotationMatrix();
    a.row(2) *= elongation;
    return a;
}

void
ViewTransform::validate() const {
    if (!(elongation > 0.0) || !std::isfinite(elongation)) {
        throw InvalidParameter("ViewTransform: elongation must be finite and > 0");
    }
}

MahalanobisValue
mahalanobis(const ViewTransform &view, const Eigen::Vector3d &offset) {
    if (!offset.allFinite()) {
        throw InvalidParameter("mahalanobis: non-finite offset");
    }
    view.validate();
    const double          s  = view.elongation;
    const Eigen::Matrix3d R  = view.rotation.toRotationMatrix();
    const Eigen::Vector3d rd = R * offset;
    const Eigen::Vector3d r(rd.x(), rd.y(), s * rd.z());

    MahalanobisValue out;
    out.value = r.norm();
    out.dOffset.setZero();
    out.dRotation.setZero();
    if (out.value == 0.0) {
        return out;
    }
    const Eigen::Vector3d gr = r / out.value;
    const Eigen::Vector3d gv(gr.x(), gr.y(), s * gr.z()); // d value / d (R offset)
    out.dOffset     = R.transpose() * gv;
    out.dElongation = gr.z() * rd.z();

    const auto      dR = rotationMatrixDerivatives(view.rotation);
    Eigen::Vector4d g;
    for (int k = 0; k < 4; ++k) {
        g(k) = gv.dot(dR[k] * offset);
    }
    out.dRotation = projectQuaternionGradient(view.rotation.coeffs(), g);
    return out;
}

CompressedValue
logCompress(double x, double beta) {
    if (!(beta > 0.0) || !std::isfinite(beta)) {
        throw InvalidParameter("logCompress: beta must be finite and > 0");
    }
    if (x < 0.0 || std::isnan(x)) {
        throw DomainError("logCompress: x must be >= 0");
    }
    return {std::log1p(beta * x), beta / (1.0 + beta * x)};
}

} // namespace cellrender
