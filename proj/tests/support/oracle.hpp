// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

// Brute-force render oracle shared by the renderer and command-line tests.

#pragma once

#include "cellrender/renderer.hpp"

#include <cmath>
#include <vector>

namespace cellrender::fixtures {

// Straight transcription of the cell response, one pixel at a time, in point-index order.
inline RenderedImage
naiveRender(const SensorGrid &grid, const PointCloud &cloud) {
    RenderedImage img(grid.rows, grid.cols, static_cast<int>(grid.channels.size()));
    for (int i = 0; i < grid.rows; ++i) {
        for (int j = 0; j < grid.cols; ++j) {
            const SensorCell &cell = grid.cell(i, j);
            const Eigen::Matrix3d A = cell.view.matrix();
            double best = 0.0, bestDepth = grid.farValue;
            std::vector<double> sums(grid.channels.size(), 0.0);
            for (std::size_t p = 0; p < cloud.size(); ++p) {
                Eigen::Vector3d r = A * (cloud[p] - cell.position);
                r.x() -= cell.shift.x();
                r.y() -= cell.shift.y();
                const double rho = cell.radial ? r.norm() : std::hypot(r.x(), r.y());
                const double f   = kernelEval(cell.lateral, rho).value;
                const double w   = cell.attenuation ? attenuationEval(*cell.attenuation, r.z()).omega : 1.0;
                const double g   = cell.depth ? kernelEval(*cell.depth, r.z()).value : 1.0;
                const double psi = f * w * cell.sensitivity * g;
                if (psi > best) {
                    best      = psi;
                    bestDepth = r.z() / cell.view.elongation;
                }
                for (std::size_t k = 0; k < grid.channels.size(); ++k) {
                    const auto &ch = grid.channels[k];
                    if (ch.kind != ChannelKind::Density) {
                        continue;
                    }
                    double band = ch.lateralOnly ? 1.0 : ch.depthKernel ? kernelEval(*ch.depthKernel, r.z()).value : g;
                    sums[k] += f * w * cell.sensitivity * band;
                }
            }
            for (std::size_t k = 0; k < grid.channels.size(); ++k) {
                const auto &ch = grid.channels[k];
                double      v  = 0.0;
                switch (ch.kind) {
                case ChannelKind::Range: v = best; break;
                case ChannelKind::Depth: v = bestDepth; break;
                case ChannelKind::Density: v = ch.compressBeta ? std::log(1.0 + *ch.compressBeta * sums[k]) : sums[k];
                }
                img.at(static_cast<int>(k), i, j) = v;
            }
        }
    }
    return img;
}

} // namespace cellrender::fixtures
