#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace transnet {

/// 8-bit image in interleaved (row-major, channel-last) byte order.
struct ImageU8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;  // 1 (PGM) or 3 (PPM)
  std::vector<std::uint8_t> pixels;
};

/// Binary netpbm, maxval 255: P6 for RGB, P5 for grayscale.
void write_netpbm(const std::filesystem::path& path, const ImageU8& image);
/// Reads P5/P6 (maxval 255 only); LoadError naming the file on any defect.
ImageU8 read_netpbm(const std::filesystem::path& path);

}  // namespace transnet
