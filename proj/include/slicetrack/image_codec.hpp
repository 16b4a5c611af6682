#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace slicetrack::codec {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

void write_png(const std::filesystem::path& path, const GrayImage& img);
void write_jpeg(const std::filesystem::path& path, const GrayImage& img, int quality);
/// Dispatches on the file extension; color files are converted to gray.
GrayImage read_image(const std::filesystem::path& path);

}  // namespace slicetrack::codec
