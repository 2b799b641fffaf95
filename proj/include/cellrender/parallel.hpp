// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace cellrender {

/// Caps the worker pool used by render/backward/binning. 0 restores the default, which is
/// read from the CELLRENDER_THREADS environment variable (falling back to the hardware count).
void setThreadCount(int threads);
int  threadCount();

/// Runs body(i) for i in [0, count). Work items must write to disjoint outputs.
void parallelFor(std::size_t count, const std::function<void(std::size_t)> &body);

} // namespace cellrender
