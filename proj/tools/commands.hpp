// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "config.hpp"

#include <iosfwd>
#include <string>

namespace cellrender::cli {

enum ExitCode : int {
    kOk             = 0,
    kUnexpected     = 1,
    kConfigError    = 2,
    kNumericalError = 3,
};

/// Runs one subcommand with a validated config, writing artifacts under config.output and a
/// human-readable report to `out`. Returns the process exit code.
int runSynth(const RunConfig &config, std::ostream &out);
int runRender(const RunConfig &config, std::ostream &out);
int runGradCheck(const RunConfig &config, std::ostream &out);
int runOptimize(const RunConfig &config, std::ostream &out);
int runBench(const RunConfig &config, std::ostream &out);

} // namespace cellrender::cli
