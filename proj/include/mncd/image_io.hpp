#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mncd {

// 8-bit image with interleaved channels (1 = gray, 3 = RGB).
struct Image8 {
  std::int64_t height = 0;
  std::int64_t width = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

// Color PNGs decode to RGB, everything else to gray. Throws MissingFileError
// or ImageDecodeError.
Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);

}  // namespace mncd
