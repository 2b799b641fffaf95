// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#include "cellrender/io.hpp"

#include "cellrender/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

namespace cellrender {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

std::uint32_t
toLittle(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    }
    return v;
}

void
putU32(std::ostream &os, std::uint32_t v) {
    v = toLittle(v);
    os.write(reinterpret_cast<const char *>(&v), 4);
}

void
putF32(std::ostream &os, double value) {
    putU32(os, std::bit_cast<std::uint32_t>(static_cast<float>(value)));
}

std::uint32_t
getU32(std::istream &is, const std::filesystem::path &path) {
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char *>(&v), 4)) {
        throw InvalidInput("truncated file " + path.string());
    }
    return toLittle(v);
}

double
getF32(std::istream &is, const std::filesystem::path &path) {
    return static_cast<double>(std::bit_cast<float>(getU32(is, path)));
}

std::ifstream
openIn(const std::filesystem::path &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw InvalidInput("cannot open " + path.string());
    }
    return is;
}

std::ofstream
openOut(const std::filesystem::path &path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw InvalidInput("cannot write " + path.string());
    }
    return os;
}

void
expectMagic(std::istream &is, const char *magic, const std::filesystem::path &path) {
    std::array<char, 4> m{};
    if (!is.read(m.data(), 4) || std::memcmp(m.data(), magic, 4) != 0) {
        throw InvalidInput(path.string() + ": missing " + magic + " header");
    }
}

} // namespace

PointCloud
readCloudText(const std::filesystem::path &path) {
    std::ifstream           is = openIn(path);
    std::vector<Point3>     pts;
    std::vector<PointLabel> labels;
    std::string             line;
    int                     lineNo    = 0;
    int                     withLabel = -1;
    while (std::getline(is, line)) {
        ++lineNo;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.resize(hash);
        }
        std::istringstream ls(line);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) {
            tok.push_back(t);
        }
        if (tok.empty()) {
            continue;
        }
        const auto where = path.string() + ":" + std::to_string(lineNo);
        if (tok.size() != 3 && tok.size() != 4) {
            throw InvalidInput(where + ": expected 'x y z [label]'");
        }
        const int hasLabel = tok.size() == 4 ? 1 : 0;
        if (withLabel >= 0 && hasLabel != withLabel) {
            throw InvalidInput(where + ": label column present on some lines only");
        }
        withLabel = hasLabel;
        Point3 p;
        for (int k = 0; k < 3; ++k) {
            std::size_t used = 0;
            try {
                p[k] = std::stod(tok[k], &used);
            } catch (const std::exception &) {
                used = 0;
            }
            if (used != tok[k].size() || !std::isfinite(p[k])) {
                throw InvalidInput(where + ": bad coordinate '" + tok[k] + "'");
            }
        }
        pts.push_back(p);
        if (hasLabel) {
            const auto &l = tok[3];
            if (l == "0" || l == "object") {
                labels.push_back(PointLabel::Object);
            } else if (l == "1" || l == "clutter") {
                labels.push_back(PointLabel::Clutter);
            } else {
                throw InvalidInput(where + ": bad label '" + l + "'");
            }
        }
    }
    return withLabel == 1 ? PointCloud(std::move(pts), std::move(labels)) : PointCloud(std::move(pts));
}

void
writeCloudText(const std::filesystem::path &path, const PointCloud &cloud) {
    std::ofstream os = openOut(path);
    char          buf[128];
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto &p = cloud[i];
        int         n = std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g", p.x(), p.y(), p.z());
        os.write(buf, n);
        if (cloud.hasLabels()) {
            os << ' ' << static_cast<int>(cloud.label(i));
        }
        os << '\n';
    }
}

PointCloud
readCloudBinary(const std::filesystem::path &path) {
    std::ifstream is = openIn(path);
    expectMagic(is, "CPTS", path);
    const std::uint32_t count = getU32(is, path);
    char                flag  = 0;
    if (!is.get(flag) || (flag != 0 && flag != 1)) {
        throw InvalidInput(path.string() + ": bad has_labels byte");
    }
    std::vector<Point3> pts(count);
    for (auto &p : pts) {
        for (int k = 0; k < 3; ++k) {
            p[k] = getF32(is, path);
        }
    }
    if (!flag) {
        return PointCloud(std::move(pts));
    }
    std::vector<PointLabel> labels(count);
    for (auto &l : labels) {
        char b = 0;
        if (!is.get(b) || (b != 0 && b != 1)) {
            throw InvalidInput(path.string() + ": bad or truncated label byte");
        }
        l = static_cast<PointLabel>(b);
    }
    return PointCloud(std::move(pts), std::move(labels));
}

void
writeCloudBinary(const std::filesystem::path &path, const PointCloud &cloud) {
    std::ofstream os = openOut(path);
    os.write("CPTS", 4);
    putU32(os, static_cast<std::uint32_t>(cloud.size()));
    os.put(cloud.hasLabels() ? 1 : 0);
    for (const auto &p : cloud.points()) {
        putF32(os, p.x());
        putF32(os, p.y());
        putF32(os, p.z());
    }
    if (cloud.hasLabels()) {
        for (auto l : cloud.labels()) {
            os.put(static_cast<char>(l));
        }
    }
}

PointCloud
readCloud(const std::filesystem::path &path) {
    std::ifstream       is = openIn(path);
    std::array<char, 4> m{};
    is.read(m.data(), 4);
    if (is.gcount() == 4 && std::memcmp(m.data(), "CPTS", 4) == 0) {
        return readCloudBinary(path);
    }
    return readCloudText(path);
}

RenderedImage
readImageRaw(const std::filesystem::path &path) {
    std::ifstream is = openIn(path);
    expectMagic(is, "CRND", path);
    const std::uint32_t w = getU32(is, path), h = getU32(is, path), c = getU32(is, path);
    if (w == 0 || h == 0 || c == 0) {
        throw InvalidInput(path.string() + ": zero image dimension");
    }
    RenderedImage img(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    for (auto &v : img.data()) {
        v = getF32(is, path);
    }
    return img;
}

void
writeImageRaw(const std::filesystem::path &path, const RenderedImage &image) {
    std::ofstream os = openOut(path);
    os.write("CRND", 4);
    putU32(os, static_cast<std::uint32_t>(image.width()));
    putU32(os, static_cast<std::uint32_t>(image.height()));
    putU32(os, static_cast<std::uint32_t>(image.channels()));
    for (double v : image.data()) {
        putF32(os, v);
    }
}

void
writeImagePgm(const std::filesystem::path &path, const RenderedImage &image, int channel) {
    if (channel < 0 || channel >= image.channels()) {
        throw InvalidParameter("writeImagePgm: channel out of range");
    }
    const auto px = image.channel(channel);
    double     lo = 0.0, hi = 0.0;
    if (!px.empty()) {
        const auto [mn, mx] = std::minmax_element(px.begin(), px.end());
        lo = *mn;
        hi = *mx;
    }
    std::ofstream os = openOut(path);
    os << "P5\n" << image.width() << ' ' << image.height() << "\n255\n";
    for (double v : px) {
        const double t = hi > lo ? (v - lo) / (hi - lo) : 0.0;
        os.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0))));
    }
}

void
writeImageSet(const std::filesystem::path &stem, const RenderedImage &image) {
    auto raw = stem;
    raw += ".crnd";
    writeImageRaw(raw, image);
    for (int c = 0; c < image.channels(); ++c) {
        auto pgm = stem;
        pgm += "_c" + std::to_string(c) + ".pgm";
        writeImagePgm(pgm, image, c);
    }
}

} // namespace cellrender
