#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slicetrack/core.hpp"

namespace slicetrack {

/// Display window in Hounsfield units.  The defaults are the abdominal
/// soft-tissue window.
struct WindowSpec {
  double level = 50.0;
  double width = 400.0;

  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

struct StackProvenance {
  std::string source_id;
  WindowSpec window;
};

/// Stack of 8-bit axial slices.  Slice z occupies pixels[z*nx*ny, (z+1)*nx*ny).
struct ImageStack {
  Dims dims;
  std::vector<std::uint8_t> pixels;
  StackProvenance provenance;

  [[nodiscard]] std::span<const std::uint8_t> slice(int z) const {
    return std::span(pixels).subspan(dims.slice_pixels() * static_cast<std::size_t>(z), dims.slice_pixels());
  }
  [[nodiscard]] std::uint8_t at(int x, int y, int z) const { return pixels[dims.index(x, y, z)]; }
};

ImageStack window_to_u8(const Volume& volume, const WindowSpec& spec = {});

class EmptyRangeError : public Error {
 public:
  using Error::Error;
};

struct CroppedStack {
  ImageStack stack;
  int z_offset = 0;  // volume z = cropped z + z_offset
};

/// Keeps the contiguous z range covering every occupied voxel of `masks`,
/// widened by `margin` slices on both sides and clamped to the stack.
CroppedStack crop_to_organ_range(const ImageStack& stack, std::span<const LabelMask> masks, int margin = 0);
CroppedStack crop_to_organ_range(const ImageStack& stack, std::span<const LabelMask* const> masks, int margin = 0);

/// Embeds a mask computed on a cropped stack back into the full volume grid.
BinaryGrid uncrop(const BinaryGrid& cropped, const Dims& full, int z_offset);

// ---------------------------------------------------------------------------
// Slice export

enum class SliceFormat { png, jpeg };

std::string_view to_string(SliceFormat f);
SliceFormat parse_slice_format(std::string_view s);
std::string_view file_extension(SliceFormat f);

struct SliceManifest {
  int count = 0;
  int width = 0;
  int height = 0;
  SliceFormat format = SliceFormat::png;
  int z_offset = 0;
  WindowSpec window;
};

nlohmann::json to_json(const SliceManifest& m);
SliceManifest slice_manifest_from_json(const nlohmann::json& j);

inline constexpr const char* kSliceManifestName = "manifest.json";

struct ExportOptions {
  SliceFormat format = SliceFormat::png;
  int jpeg_quality = 95;
  int z_offset = 0;
};

/// "00000.png", "00001.png", ... ascending in z, plus manifest.json.
SliceManifest export_slices(const ImageStack& stack, const std::filesystem::path& dir, const ExportOptions& options = {});

std::filesystem::path slice_path(const std::filesystem::path& dir, int index, SliceFormat format);

/// Re-reads an exported directory into a stack.
ImageStack read_slices(const std::filesystem::path& dir);

}  // namespace slicetrack
