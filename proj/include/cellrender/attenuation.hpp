// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string_view>
#include <vector>

namespace cellrender {

enum class Squash { Tanh, Softsign };

std::string_view squashName(Squash squash);
Squash           squashFromName(std::string_view name);

/// x / (1 + |x|)
double softsign(double x);

struct GaussianComponent {
    double amplitude = 0.0;
    double center    = 0.0;
    double width     = 1.0;

    bool operator==(const GaussianComponent &) const = default;
};

/// Depth attenuation w(z) = 1 - squash(sum_i a_i exp(-((z - c_i) / sigma_i)^2)).
///
/// Amplitudes are unconstrained: negative values enhance (w > 1). With `clamp` the result
/// is limited to [0, 1] and the gradient vanishes where the clamp is active.
struct AttenuationField {
    std::vector<GaussianComponent> components;
    Squash                         squash = Squash::Softsign;
    bool                           clamp  = false;

    /// n zero-amplitude components with centers spread evenly over [near, far].
    static AttenuationField neutral(int n, double near, double far, double width,
                                    Squash squash = Squash::Softsign);

    std::size_t
    paramCount() const {
        return 3 * components.size();
    }
    void validate() const;

    bool operator==(const AttenuationField &) const = default;
};

struct AttenuationValue {
    double              omega = 1.0;
    double              dz    = 0.0;
    std::vector<double> dparams; // (d a_i, d c_i, d sigma_i) per component
};

AttenuationValue attenuationEval(const AttenuationField &field, double z);

/// Allocation-free variant for inner loops; `dparams` must hold paramCount() entries.
double attenuationEval(const AttenuationField &field, double z, double &dz,
                       std::span<double> dparams);
double attenuationValue(const AttenuationField &field, double z);

} // namespace cellrender
