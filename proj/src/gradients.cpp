// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#include "cellrender/gradients.hpp"

#include "cell_eval.hpp"
#include "cellrender/accel.hpp"
#include "cellrender/error.hpp"
#include "cellrender/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>

namespace cellrender {

double
weightedImageSum(const RenderedImage &upstream, const RenderedImage &image) {
    if (!upstream.sameShape(image)) {
        throw InvalidParameter("weightedImageSum: image shapes differ");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < image.data().size(); ++i) {
        s += upstream.data()[i] * image.data()[i];
    }
    return s;
}

namespace {

using PointGrad = std::pair<std::uint32_t, Eigen::Vector3d>;

// Gradient of one cell's weighted channel values w.r.t. its own parameters (written into
// `g`, laid out like the cell block) and the (transformed) points it touches.
void
cellBackward(const SensorGrid &grid, std::size_t k, const PointCloud &cloud,
             const CandidateProvider &provider, std::span<const double> upstream,
             std::span<const double> rawQuaternion, std::span<double> g,
             std::vector<PointGrad> &pointGrads) {
    const SensorCell       &cell     = grid.cells[k];
    const auto             &channels = grid.channels;
    const std::size_t       nCh      = channels.size();
    const detail::CellFrame frame(cell);
    const auto             &pts = cloud.points();

    std::vector<std::uint32_t> cand;
    const bool                 subset = provider.candidates(k, cand);
    const std::size_t          count  = subset ? cand.size() : pts.size();
    auto                       index  = [&](std::size_t n) -> std::size_t { return subset ? cand[n] : n; };

    // Forward pass for the argmax and raw density sums.
    detail::CellAccumulator acc;
    acc.reset(nCh);
    detail::Interaction it;
    for (std::size_t n = 0; n < count; ++n) {
        if (detail::interact(frame, pts[index(n)], it)) {
            acc.add(cell, channels, index(n), it);
        }
    }
    std::vector<double> values(nCh), density(nCh, 0.0);
    acc.finish(channels, grid.farValue, values, density);

    double              wRange = 0.0, wDepth = 0.0;
    std::vector<double> wDensity(nCh, 0.0);
    for (std::size_t c = 0; c < nCh; ++c) {
        switch (channels[c].kind) {
        case ChannelKind::Range: wRange += upstream[c]; break;
        case ChannelKind::Depth: wDepth += upstream[c]; break;
        case ChannelKind::Density: {
            const double beta = channels[c].compressBeta.value_or(0.0);
            wDensity[c]       = channels[c].compressBeta ? upstream[c] * beta / (1.0 + beta * density[c])
                                                         : upstream[c];
            break;
        }
        }
    }

    const std::size_t nLat   = cell.lateral.paramCount();
    const std::size_t nDepth = cell.depth ? cell.depth->paramCount() : 0;
    const std::size_t nAtt   = cell.attenuation ? cell.attenuation->paramCount() : 0;
    const std::size_t oLat = 10, oDepth = oLat + nLat, oAtt = oDepth + nDepth, oSens = oAtt + nAtt;

    const auto          dR   = rotationMatrixDerivatives(cell.view.rotation);
    const double        s    = cell.view.elongation;
    const double        kap  = cell.sensitivity;
    const KernelSpec   *own  = cell.depth ? &*cell.depth : nullptr;
    std::vector<double> dAtt(nAtt, 0.0);
    Eigen::Vector3d     gPos  = Eigen::Vector3d::Zero();
    Eigen::Vector4d     gQuat = Eigen::Vector4d::Zero();

    for (std::size_t n = 0; n < count; ++n) {
        const std::size_t idx = index(n);
        if (!detail::interact(frame, pts[idx], it)) {
            continue;
        }
        const bool isBest = static_cast<std::int64_t>(idx) == acc.bestIndex;
        const double z    = it.r.z();

        // A = sum_ch w_ch d_ch(z), B = sum_ch w_ch d_ch'(z), P = sum over own-kernel channels.
        double                A = 0.0, B = 0.0;
        std::array<double, 2> P{0.0, 0.0};
        auto                  addFactor = [&](double w, const KernelSpec *kernel) {
            if (w == 0.0) {
                return;
            }
            if (!kernel) {
                A += w;
                return;
            }
            const KernelValue kv = kernelEval(*kernel, z);
            A += w * kv.value;
            B += w * kv.dx;
            if (kernel == own) {
                P[0] += w * kv.dparams[0];
                P[1] += w * kv.dparams[1];
            }
        };
        if (isBest) {
            addFactor(wRange, own);
        }
        for (std::size_t c = 0; c < nCh; ++c) {
            if (channels[c].kind == ChannelKind::Density) {
                addFactor(wDensity[c], detail::channelDepthKernel(channels[c], cell));
            }
        }
        const bool depthTerm = isBest && wDepth != 0.0;
        if (A == 0.0 && B == 0.0 && P[0] == 0.0 && P[1] == 0.0 && !depthTerm) {
            continue;
        }

        const KernelValue fl = kernelEval(cell.lateral, it.rho);
        double            omega = 1.0, dOmega = 0.0;
        if (cell.attenuation) {
            omega = attenuationEval(*cell.attenuation, z, dOmega, dAtt);
        }
        const double f   = fl.value;
        const double gRho = fl.dx * A * omega * kap;
        const double gRz  = f * (B * omega + A * dOmega) * kap;

        g[oSens] += f * A * omega;
        for (std::size_t i = 0; i < nLat; ++i) {
            g[oLat + i] += fl.dparams[i] * A * omega * kap;
        }
        for (std::size_t i = 0; i < nDepth; ++i) {
            g[oDepth + i] += f * omega * kap * P[i];
        }
        for (std::size_t i = 0; i < nAtt; ++i) {
            g[oAtt + i] += f * A * kap * dAtt[i];
        }

        Eigen::Vector3d gr = Eigen::Vector3d::Zero();
        if (it.rho > 0.0) {
            if (cell.radial) {
                gr = gRho / it.rho * it.r;
            } else {
                gr.x() = gRho * it.r.x() / it.rho;
                gr.y() = gRho * it.r.y() / it.rho;
            }
        }
        gr.z() += gRz;

        g[3] -= gr.x();
        g[4] -= gr.y();
        g[9] += gr.z() * it.v.z();
        Eigen::Vector3d gv(gr.x(), gr.y(), s * gr.z());
        if (depthTerm) {
            gv.z() += wDepth;
        }
        const Eigen::Vector3d gu = frame.R.transpose() * gv;
        gPos -= gu;
        for (int q = 0; q < 4; ++q) {
            gQuat(q) += gv.dot(dR[q] * it.u);
        }
        pointGrads.emplace_back(static_cast<std::uint32_t>(idx), gu);
    }

    g[0] += gPos.x();
    g[1] += gPos.y();
    g[2] += gPos.z();
    const Eigen::Vector4d raw(rawQuaternion[0], rawQuaternion[1], rawQuaternion[2], rawQuaternion[3]);
    const Eigen::Vector4d gq = projectQuaternionGradient(raw, gQuat);
    for (int q = 0; q < 4; ++q) {
        g[5 + q] += gq(q);
    }
}

} // namespace

ParamGradients
renderBackward(const SensorGrid &grid0, const PointCloud &cloud0, const RenderParams &params,
               const RenderedImage &upstream, const RenderOptions &options) {
    const SensorGrid         grid  = params.applyTo(grid0);
    const GeometricTransform geo   = params.geometric();
    const PointCloud         cloud = applyGeometric(geo, cloud0);
    if (upstream.height() != grid.rows || upstream.width() != grid.cols ||
        upstream.channels() != static_cast<int>(grid.channels.size())) {
        throw InvalidParameter("renderBackward: upstream gradient shape does not match the grid");
    }
    for (double u : upstream.data()) {
        if (!std::isfinite(u)) {
            throw InvalidParameter("renderBackward: non-finite upstream gradient");
        }
    }

    const CandidateProvider provider(grid, cloud, options);
    const auto              nCells = grid.cellCount();
    const auto              nCh    = grid.channels.size();
    const auto             &L      = params.layout;

    ParamGradients out;
    out.params.assign(L.size(), 0.0);
    std::vector<std::vector<PointGrad>> pointGrads(nCells);

    parallelFor(nCells, [&](std::size_t k) {
        std::vector<double> up(nCh);
        bool                any = false;
        for (std::size_t c = 0; c < nCh; ++c) {
            up[c] = upstream.data()[c * nCells + k];
            any   = any || up[c] != 0.0;
        }
        if (!any) {
            return;
        }
        const std::size_t off = L.cellOffsets[k];
        std::span<double> g(out.params.data() + off, L.cellOffsets[k + 1] - off);
        std::span<const double> raw(params.values.data() + off + 5, 4);
        cellBackward(grid, k, cloud, provider, up, raw, g, pointGrads[k]);
    });

    // Deterministic accumulation in cell order.
    std::vector<Eigen::Vector3d> gTransformed(cloud.size(), Eigen::Vector3d::Zero());
    for (const auto &list : pointGrads) {
        for (const auto &[idx, gu] : list) {
            gTransformed[idx] += gu;
        }
    }

    out.points.assign(cloud.size(), Eigen::Vector3d::Zero());
    const std::size_t go = L.geometricOffset();
    if (const auto *q = std::get_if<Quaternion>(&geo)) {
        const Eigen::Matrix3d R  = q->toRotationMatrix();
        const auto            dR = rotationMatrixDerivatives(*q);
        Eigen::Vector4d       gq = Eigen::Vector4d::Zero();
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const Point3 &p = cloud0[i];
            for (int k = 0; k < 4; ++k) {
                gq(k) += gTransformed[i].dot(dR[k] * p);
            }
            out.points[i] = R.transpose() * gTransformed[i];
        }
        const Eigen::Vector4d raw(params.values[go], params.values[go + 1], params.values[go + 2],
                                  params.values[go + 3]);
        const Eigen::Vector4d proj = projectQuaternionGradient(raw, gq);
        for (int k = 0; k < 4; ++k) {
            out.params[go + k] = proj(k);
        }
    } else if (const auto *w = std::get_if<TpsWarp>(&geo)) {
        const std::size_t nControls = w->controls().size();
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const Vec2            p    = cloud0[i].head<2>();
            const Eigen::Vector3d &gp  = gTransformed[i];
            const Eigen::VectorXd beta = w->influence(p);
            for (std::size_t k = 0; k < nControls; ++k) {
                out.params[go + 2 * k] += beta(static_cast<Eigen::Index>(k)) * gp.x();
                out.params[go + 2 * k + 1] += beta(static_cast<Eigen::Index>(k)) * gp.y();
            }
            const Eigen::Matrix2d J   = w->jacobian(p);
            const Vec2            gxy = gp.head<2>() + J.transpose() * gp.head<2>();
            out.points[i]             = {gxy.x(), gxy.y(), gp.z()};
        }
    } else {
        out.points = std::move(gTransformed);
    }
    return out;
}

FiniteDiffReport
finiteDiffCheck(const ScalarClosure &f, std::span<const double> x0, std::span<const double> analytic,
                const FiniteDiffOptions &options, const SignatureClosure &signature) {
    if (!(options.step > 0.0)) {
        throw InvalidParameter("finiteDiffCheck: step must be > 0");
    }
    if (analytic.size() != x0.size()) {
        throw InvalidParameter("finiteDiffCheck: gradient size does not match the point");
    }
    std::vector<std::size_t> coords = options.coordinates;
    if (coords.empty()) {
        coords.resize(x0.size());
        for (std::size_t i = 0; i < coords.size(); ++i) {
            coords[i] = i;
        }
    }
    FiniteDiffReport    report;
    std::vector<double> x(x0.begin(), x0.end());
    const double        h = options.step;
    for (std::size_t i : coords) {
        if (i >= x.size()) {
            throw InvalidParameter("finiteDiffCheck: coordinate out of range");
        }
        const double xi = x[i];
        if (signature) {
            const auto base = signature(x, i);
            x[i]            = xi + options.kinkFactor * h;
            const auto up   = signature(x, i);
            x[i]            = xi - options.kinkFactor * h;
            const auto down = signature(x, i);
            x[i]            = xi;
            if (up != base || down != base) {
                report.excluded.push_back(i);
                continue;
            }
        }
        const double f0 = f(x, i);
        x[i]            = xi + h;
        const double fp = f(x, i);
        x[i]            = xi - h;
        const double fm = f(x, i);
        x[i]            = xi;

        CoordinateCheck c;
        c.index     = i;
        c.analytic  = analytic[i];
        c.numeric   = (fp - fm) / (2.0 * h);
        c.curvature = (fp - 2.0 * f0 + fm) / (h * h);
        // Near an extremum the derivative itself vanishes while the truncation error does
        // not; measure against the largest slope reachable within the probe window.
        c.scale    = std::max({std::abs(c.analytic), std::abs(c.numeric),
                               options.kinkFactor * h * std::abs(c.curvature), options.floor});
        c.relError = std::abs(c.analytic - c.numeric) / c.scale;
        if (!std::isfinite(c.relError)) {
            c.relError = std::numeric_limits<double>::infinity();
        }
        report.maxRelError = std::max(report.maxRelError, c.relError);
        report.checked.push_back(c);
        if (!(c.relError < options.tolerance)) {
            report.offending.push_back(c);
        }
    }
    return report;
}

namespace {

// Coordinates [params..., points...] evaluated against the render loss. A coordinate owned by
// one cell re-renders that cell only; a point coordinate replays every cell's cached per-point
// terms with just the moved point re-evaluated, through the same accumulator as render().
class RenderClosure {
  public:
    RenderClosure(const SensorGrid &grid, const PointCloud &cloud, const RenderParams &params,
                  const RenderedImage &upstream, const RenderOptions &options)
        : grid_(grid), params_(params), work_(params), upstream_(upstream), options_(options),
          labels_(cloud.hasLabels() ? std::optional(cloud.labels()) : std::nullopt) {
        base_.assign(params.values.begin(), params.values.end());
        for (const auto &p : cloud.points()) {
            base_.insert(base_.end(), {p.x(), p.y(), p.z()});
        }
        nParams_   = params.values.size();
        geometric_ = params.geometric();
        baseGrid_  = params.applyTo(grid);
        scratch_   = baseGrid_;
        baseCloud_ = applyGeometric(geometric_, cloud);
        baseImage_ = render(grid, cloud, params, options);
    }

    const std::vector<double> &
    base() const {
        return base_;
    }

    // Weighted sum of (image - base image). The constant offset drops out of central
    // differences, and pixels the coordinate cannot reach contribute exactly zero.
    double
    value(std::span<const double> x, std::size_t changed) const {
        if (std::equal(x.begin(), x.end(), base_.begin())) {
            return 0.0;
        }
        const std::int64_t cell = localCell(changed);
        if (cell >= 0) {
            const auto  k     = static_cast<std::size_t>(cell);
            const auto  pixel = renderPixel(withCell(x, k), k, baseCloud_);
            restoreCell(k);
            return weighted(k, pixel);
        }
        if (changed >= nParams_) {
            return pointValue(x, (changed - nParams_) / 3);
        }
        RenderParams p = params_;
        std::copy(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(nParams_), p.values.begin());
        const RenderedImage img = render(grid_, unpackCloud(x), p, options_);
        double              s   = 0.0;
        for (std::size_t i = 0; i < img.data().size(); ++i) {
            s += upstream_.data()[i] * (img.data()[i] - baseImage_.data()[i]);
        }
        return s;
    }

    std::vector<std::int64_t>
    signature(std::span<const double> x, std::size_t changed) const {
        const std::int64_t cell = localCell(changed);
        if (cell >= 0) {
            const auto k   = static_cast<std::size_t>(cell);
            auto       sig = interactionSignature(withCell(x, k), k, baseCloud_);
            restoreCell(k);
            return sig;
        }
        if (changed >= nParams_) {
            return pointSignature(x, (changed - nParams_) / 3);
        }
        const bool atBase = std::equal(x.begin(), x.end(), base_.begin());
        if (atBase && fullBaseSignature_) {
            return *fullBaseSignature_;
        }
        RenderParams p = params_;
        std::copy(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(nParams_), p.values.begin());
        const SensorGrid          g           = p.applyTo(grid_);
        const PointCloud          transformed = applyGeometric(p.geometric(), unpackCloud(x));
        std::vector<std::int64_t> sig;
        for (std::size_t k = 0; k < g.cellCount(); ++k) {
            const auto part = interactionSignature(g, k, transformed);
            sig.insert(sig.end(), part.begin(), part.end());
        }
        if (atBase) {
            fullBaseSignature_ = sig;
        }
        return sig;
    }

  private:
    // Cached interactions of every (cell, point) pair at the base parameters.
    struct PointCache {
        std::vector<std::uint8_t> live;
        std::vector<double>       psi, depth, terms;
        std::vector<std::int64_t> code;
    };

    std::int64_t
    localCell(std::size_t changed) const {
        return changed < nParams_ ? params_.layout.cellOf(changed) : -1;
    }

    // scratch_ with cell k rebuilt from x
    const SensorGrid &
    withCell(std::span<const double> x, std::size_t k) const {
        const std::size_t b = params_.layout.cellOffsets[k], e = params_.layout.cellOffsets[k + 1];
        std::copy(x.begin() + static_cast<std::ptrdiff_t>(b), x.begin() + static_cast<std::ptrdiff_t>(e),
                  work_.values.begin() + static_cast<std::ptrdiff_t>(b));
        scratch_.cells[k] = work_.applyToCell(grid_, k);
        return scratch_;
    }

    void
    restoreCell(std::size_t k) const {
        const std::size_t b = params_.layout.cellOffsets[k], e = params_.layout.cellOffsets[k + 1];
        std::copy(params_.values.begin() + static_cast<std::ptrdiff_t>(b),
                  params_.values.begin() + static_cast<std::ptrdiff_t>(e),
                  work_.values.begin() + static_cast<std::ptrdiff_t>(b));
        scratch_.cells[k] = baseGrid_.cells[k];
    }

    double
    weighted(std::size_t k, const std::vector<double> &pixel) const {
        const std::size_t nCells = grid_.cellCount();
        double            s      = 0.0;
        for (std::size_t c = 0; c < pixel.size(); ++c) {
            const std::size_t at = c * nCells + k;
            s += upstream_.data()[at] * (pixel[c] - baseImage_.data()[at]);
        }
        return s;
    }

    const PointCache &
    pointCache() const {
        if (cache_) {
            return *cache_;
        }
        const std::size_t n = baseCloud_.size(), nCells = baseGrid_.cellCount(), nCh = baseGrid_.channels.size();
        PointCache        c;
        c.live.assign(nCells * n, 0);
        c.psi.assign(nCells * n, 0.0);
        c.depth.assign(nCells * n, 0.0);
        c.terms.assign(nCells * n * nCh, 0.0);
        c.code.assign(nCells * n, 0);
        detail::Interaction it;
        for (std::size_t k = 0; k < nCells; ++k) {
            const SensorCell       &cell = baseGrid_.cells[k];
            const detail::CellFrame frame(cell);
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t at = k * n + i;
                const bool        live = detail::interact(frame, baseCloud_[i], it);
                c.code[at]             = detail::interactionCode(cell, baseGrid_.channels, it, live);
                if (live) {
                    c.live[at]  = 1;
                    c.psi[at]   = detail::CellAccumulator::contributions(
                        cell, baseGrid_.channels, it, std::span<double>(c.terms.data() + at * nCh, nCh));
                    c.depth[at] = it.v.z();
                }
            }
        }
        cache_ = std::move(c);
        return *cache_;
    }

    Point3
    movedPoint(std::span<const double> x, std::size_t j) const {
        const Point3 p(x[nParams_ + 3 * j], x[nParams_ + 3 * j + 1], x[nParams_ + 3 * j + 2]);
        return applyGeometric(geometric_, PointCloud({p}))[0];
    }

    // Replays cell k with point j re-evaluated at q. `channels` may be empty for the argmax only.
    void
    replay(std::size_t k, std::size_t j, const Point3 &q, const std::vector<ChannelSpec> &channels,
           detail::CellAccumulator &acc, std::int64_t *code) const {
        const PointCache       &c    = pointCache();
        const SensorCell       &cell = baseGrid_.cells[k];
        const std::size_t       n = baseCloud_.size(), nCh = baseGrid_.channels.size();
        const detail::CellFrame frame(cell);
        detail::Interaction     it;
        const bool              live = detail::interact(frame, q, it);
        if (code) {
            *code = detail::interactionCode(cell, baseGrid_.channels, it, live);
        }
        acc.reset(channels.size());
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t at = k * n + i;
            if (i == j) {
                if (live) {
                    acc.add(cell, channels, i, it);
                }
            } else if (c.live[at]) {
                acc.addTerms(channels, i, c.psi[at], c.depth[at],
                             std::span<const double>(c.terms.data() + at * nCh, channels.size()));
            }
        }
    }

    double
    pointValue(std::span<const double> x, std::size_t j) const {
        const Point3            q = movedPoint(x, j);
        detail::CellAccumulator acc;
        std::vector<double>     pixel(baseGrid_.channels.size());
        double                  s = 0.0;
        for (std::size_t k = 0; k < baseGrid_.cellCount(); ++k) {
            replay(k, j, q, baseGrid_.channels, acc, nullptr);
            acc.finish(baseGrid_.channels, baseGrid_.farValue, pixel, {});
            s += weighted(k, pixel);
        }
        return s;
    }

    // Codes of the other points cannot change; the moved point's codes and each argmax can.
    std::vector<std::int64_t>
    pointSignature(std::span<const double> x, std::size_t j) const {
        static const std::vector<ChannelSpec> rangeOnly;
        const Point3                          q = movedPoint(x, j);
        detail::CellAccumulator               acc;
        std::vector<std::int64_t>             sig;
        for (std::size_t k = 0; k < baseGrid_.cellCount(); ++k) {
            std::int64_t code = 0;
            replay(k, j, q, rangeOnly, acc, &code);
            sig.push_back(code);
            sig.push_back(acc.bestIndex);
        }
        return sig;
    }

    PointCloud
    unpackCloud(std::span<const double> x) const {
        std::vector<Point3> pts((x.size() - nParams_) / 3);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            pts[i] = {x[nParams_ + 3 * i], x[nParams_ + 3 * i + 1], x[nParams_ + 3 * i + 2]};
        }
        return labels_ ? PointCloud(std::move(pts), *labels_) : PointCloud(std::move(pts));
    }

    const SensorGrid                                 &grid_;
    const RenderParams                               &params_;
    mutable RenderParams                              work_;
    const RenderedImage                              &upstream_;
    RenderOptions                                     options_;
    std::optional<std::vector<PointLabel>>            labels_;
    std::vector<double>                               base_;
    std::size_t                                       nParams_ = 0;
    GeometricTransform                                geometric_;
    SensorGrid                                        baseGrid_;
    mutable SensorGrid                                scratch_;
    PointCloud                                        baseCloud_;
    RenderedImage                                     baseImage_;
    mutable std::optional<PointCache>                 cache_;
    mutable std::optional<std::vector<std::int64_t>>  fullBaseSignature_;
};

} // namespace

FiniteDiffReport
checkRenderGradients(const SensorGrid &grid, const PointCloud &cloud, const RenderParams &params,
                     const RenderedImage &upstream, const FiniteDiffOptions &options,
                     const RenderOptions &renderOptions) {
    const ParamGradients grads = renderBackward(grid, cloud, params, upstream, renderOptions);
    std::vector<double>  analytic(grads.params);
    for (const auto &g : grads.points) {
        analytic.insert(analytic.end(), {g.x(), g.y(), g.z()});
    }
    const RenderClosure closure(grid, cloud, params, upstream, renderOptions);
    FiniteDiffReport    report = finiteDiffCheck(
        [&](std::span<const double> x, std::size_t changed) { return closure.value(x, changed); },
        closure.base(), analytic, options,
        [&](std::span<const double> x, std::size_t changed) { return closure.signature(x, changed); });
    report.classes = params.layout.classes;
    report.classes.insert(report.classes.end(), 3 * cloud.size(), ParamClass::PointCoordinate);
    return report;
}

} // namespace cellrender
