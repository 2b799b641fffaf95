// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cellrender/geometry.hpp"
#include "cellrender/renderer.hpp"

#include <filesystem>

namespace cellrender {

// Point clouds. Text: one "x y z [label]" line per point, label 0 = object, 1 = clutter;
// blank lines and '#' comments are skipped. Binary: "CPTS", u32 count, u8 has_labels, then
// count * 3 little-endian float32, then count label bytes when present.

PointCloud readCloudText(const std::filesystem::path &path);
void       writeCloudText(const std::filesystem::path &path, const PointCloud &cloud);
PointCloud readCloudBinary(const std::filesystem::path &path);
void       writeCloudBinary(const std::filesystem::path &path, const PointCloud &cloud);
/// Binary when the file starts with the "CPTS" magic, text otherwise.
PointCloud readCloud(const std::filesystem::path &path);

// Images. Raw: "CRND", u32 width, u32 height, u32 channels, then channel-major rows of
// little-endian float32. PGM: 8-bit binary graymap of one channel, min-max normalized.

RenderedImage readImageRaw(const std::filesystem::path &path);
void          writeImageRaw(const std::filesystem::path &path, const RenderedImage &image);
void          writeImagePgm(const std::filesystem::path &path, const RenderedImage &image, int channel);
/// `<stem>.crnd` plus `<stem>_c<k>.pgm` per channel.
void writeImageSet(const std::filesystem::path &stem, const RenderedImage &image);

} // namespace cellrender
