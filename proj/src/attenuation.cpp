// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#include "cellrender/attenuation.hpp"

#include "cellrender/error.hpp"

#include <cmath>
#include <string>

namespace cellrender {

std::string_view
squashName(Squash squash) {
    return squash == Squash::Tanh ? "tanh" : "softsign";
}

Squash
squashFromName(std::string_view name) {
    if (name == "tanh") {
        return Squash::Tanh;
    }
    if (name == "softsign") {
        return Squash::Softsign;
    }
    throw InvalidParameter("unknown squash function '" + std::string(name) + "'");
}

double
softsign(double x) {
    return x / (1.0 + std::abs(x));
}

AttenuationField
AttenuationField::neutral(int n, double near, double far, double width, Squash squash) {
    if (n < 1) {
        throw InvalidParameter("AttenuationField: need at least one component");
    }
    AttenuationField field;
    field.squash = squash;
    for (int i = 0; i < n; ++i) {
        const double t = n == 1 ? 0.5 : static_cast<double>(i) / (n - 1);
        field.components.push_back({0.0, near + t * (far - near), width});
    }
    field.validate();
    return field;
}

void
AttenuationField::validate() const {
    if (components.empty()) {
        throw InvalidParameter("AttenuationField: need at least one component");
    }
    for (const auto &c : components) {
        if (!std::isfinite(c.amplitude) || !std::isfinite(c.center) || !std::isfinite(c.width)) {
            throw InvalidParameter("AttenuationField: non-finite parameter");
        }
        if (!(c.width > 0.0)) {
            throw InvalidParameter("AttenuationField: component width must be > 0");
        }
    }
}

namespace {

// h(chi) and h'(chi)
inline void
squashEval(Squash squash, double chi, double &h, double &dh) {
    if (squash == Squash::Tanh) {
        h  = std::tanh(chi);
        dh = 1.0 - h * h;
    } else {
        const double d = 1.0 + std::abs(chi);
        h              = chi / d;
        dh             = 1.0 / (d * d);
    }
}

} // namespace

double
attenuationEval(const AttenuationField &field, double z, double &dz, std::span<double> dparams) {
    double chi   = 0.0;
    double dchiz = 0.0;
    for (std::size_t i = 0; i < field.components.size(); ++i) {
        const auto  &c = field.components[i];
        const double u = (z - c.center) / c.width;
        const double e = std::exp(-u * u);
        const double g = c.amplitude * e * 2.0 * u / c.width; // -(d/dz) of a e
        chi += c.amplitude * e;
        dchiz -= g;
        dparams[3 * i]     = e;
        dparams[3 * i + 1] = g;
        dparams[3 * i + 2] = g * u;
    }
    double h = 0.0, dh = 0.0;
    squashEval(field.squash, chi, h, dh);
    double omega = 1.0 - h;
    double scale = -dh;
    if (field.clamp && omega > 1.0) {
        omega = 1.0;
        scale = 0.0;
    }
    dz = scale * dchiz;
    for (auto &d : dparams.first(field.paramCount())) {
        d *= scale;
    }
    return omega;
}

double
attenuationValue(const AttenuationField &field, double z) {
    double chi = 0.0;
    for (const auto &c : field.components) {
        const double u = (z - c.center) / c.width;
        chi += c.amplitude * std::exp(-u * u);
    }
    const double h     = field.squash == Squash::Tanh ? std::tanh(chi) : softsign(chi);
    const double omega = 1.0 - h;
    return field.clamp && omega > 1.0 ? 1.0 : omega;
}

AttenuationValue
attenuationEval(const AttenuationField &field, double z) {
    field.validate();
    if (!std::isfinite(z)) {
        throw InvalidParameter("attenuationEval: non-finite depth");
    }
    AttenuationValue out;
    out.dparams.resize(field.paramCount());
    out.omega = attenuationEval(field, z, out.dz, out.dparams);
    return out;
}

} // namespace cellrender
