#pragma once

#include <filesystem>
#include <iosfwd>

#include "dsr/feature_map.hpp"

namespace dsr {

// .fmap layout: "FMAP", u16 version (1), u16 reserved (0), u16 width,
// u16 height, u32 channels, then width*height*channels float32 values in
// (row, col, channel-fastest) order. All integers and floats little-endian.
inline constexpr std::uint16_t kFmapVersion = 1;
inline constexpr std::size_t kFmapHeaderBytes = 16;

/// Values are narrowed to float32 on write.
void write_fmap(std::ostream& out, const FeatureMapd& fm);
void write_fmap(const std::filesystem::path& path, const FeatureMapd& fm);

/// Throws FormatError on a bad magic, version, size or truncated payload.
FeatureMapd read_fmap(std::istream& in);
FeatureMapd read_fmap(const std::filesystem::path& path);

}  // namespace dsr
