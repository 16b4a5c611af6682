#include "slicetrack/preprocess.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <optional>

#include "slicetrack/image_codec.hpp"
#include "slicetrack/kernels.hpp"

namespace slicetrack {

ImageStack window_to_u8(const Volume& volume, const WindowSpec& spec) {
  if (!(spec.width > 0.0)) throw PreconditionError("window width must be positive");
  if (volume.data.size() != volume.dims.voxels())
    throw PreconditionError("volume data length does not match dims " + to_string(volume.dims));
  ImageStack stack;
  stack.dims = volume.dims;
  stack.pixels.resize(volume.data.size());
  kernels::parallel::window_u8(volume.data, spec.level, spec.width, stack.pixels);
  stack.provenance = StackProvenance{volume.id, spec};
  return stack;
}

namespace {

CroppedStack crop_impl(const ImageStack& stack, const std::vector<const BinaryGrid*>& masks, int margin) {
  int lo = stack.dims.nz;
  int hi = -1;
  for (const BinaryGrid* m : masks) {
    if (m->dims != stack.dims)
      throw DimensionMismatch("mask dims " + to_string(m->dims) + " differ from stack " + to_string(stack.dims));
    const auto counts = m->slice_counts();
    for (int z = 0; z < static_cast<int>(counts.size()); ++z) {
      if (counts[static_cast<std::size_t>(z)] == 0) continue;
      lo = std::min(lo, z);
      hi = std::max(hi, z);
    }
  }
  if (hi < 0) throw EmptyRangeError("no mask has any occupied voxel");
  margin = std::max(0, margin);
  lo = std::max(0, lo - margin);
  hi = std::min(stack.dims.nz - 1, hi + margin);

  CroppedStack out;
  out.z_offset = lo;
  out.stack.dims = Dims{stack.dims.nx, stack.dims.ny, hi - lo + 1};
  out.stack.provenance = stack.provenance;
  const std::size_t n = stack.dims.slice_pixels();
  out.stack.pixels.assign(stack.pixels.begin() + static_cast<std::ptrdiff_t>(n * lo),
                          stack.pixels.begin() + static_cast<std::ptrdiff_t>(n * (hi + 1)));
  return out;
}

}  // namespace

CroppedStack crop_to_organ_range(const ImageStack& stack, std::span<const LabelMask> masks, int margin) {
  std::vector<const BinaryGrid*> ptrs;
  for (const auto& m : masks) ptrs.push_back(&m);
  return crop_impl(stack, ptrs, margin);
}

CroppedStack crop_to_organ_range(const ImageStack& stack, std::span<const LabelMask* const> masks, int margin) {
  std::vector<const BinaryGrid*> ptrs(masks.begin(), masks.end());
  return crop_impl(stack, ptrs, margin);
}

BinaryGrid uncrop(const BinaryGrid& cropped, const Dims& full, int z_offset) {
  if (cropped.dims.nx != full.nx || cropped.dims.ny != full.ny || z_offset < 0 ||
      z_offset + cropped.dims.nz > full.nz)
    throw DimensionMismatch("cropped grid " + to_string(cropped.dims) + " at offset " + std::to_string(z_offset) +
                            " does not fit " + to_string(full));
  BinaryGrid out(full);
  std::copy(cropped.voxels.begin(), cropped.voxels.end(),
            out.voxels.begin() + static_cast<std::ptrdiff_t>(full.slice_pixels() * z_offset));
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(SliceFormat f) { return f == SliceFormat::png ? "png" : "jpeg"; }

SliceFormat parse_slice_format(std::string_view s) {
  if (s == "png") return SliceFormat::png;
  if (s == "jpeg" || s == "jpg") return SliceFormat::jpeg;
  throw SchemaError("unknown slice format '" + std::string(s) + "'");
}

std::string_view file_extension(SliceFormat f) { return f == SliceFormat::png ? ".png" : ".jpg"; }

nlohmann::json to_json(const SliceManifest& m) {
  return {
      {"count", m.count},
      {"width", m.width},
      {"height", m.height},
      {"format", std::string(to_string(m.format))},
      {"z_offset", m.z_offset},
      {"window", {{"level", m.window.level}, {"width", m.window.width}}},
  };
}

SliceManifest slice_manifest_from_json(const nlohmann::json& j) {
  try {
    SliceManifest m;
    m.count = j.at("count").get<int>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.format = parse_slice_format(j.at("format").get<std::string>());
    m.z_offset = j.at("z_offset").get<int>();
    m.window.level = j.at("window").at("level").get<double>();
    m.window.width = j.at("window").at("width").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("slice manifest: ") + e.what());
  }
}

std::filesystem::path slice_path(const std::filesystem::path& dir, int index, SliceFormat format) {
  char name[32];
  std::snprintf(name, sizeof(name), "%05d", index);
  return dir / (std::string(name) + std::string(file_extension(format)));
}

SliceManifest export_slices(const ImageStack& stack, const std::filesystem::path& dir, const ExportOptions& options) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  const int nz = stack.dims.nz;
  std::optional<std::string> failure;
  std::mutex failure_mutex;
#pragma omp parallel for schedule(dynamic)
  for (int z = 0; z < nz; ++z) {
    const auto path = slice_path(dir, z, options.format);
    try {
      codec::GrayImage img;
      img.width = stack.dims.nx;
      img.height = stack.dims.ny;
      const auto s = stack.slice(z);
      img.pixels.assign(s.begin(), s.end());
      if (options.format == SliceFormat::png)
        codec::write_png(path, img);
      else
        codec::write_jpeg(path, img, options.jpeg_quality);
    } catch (const std::exception& e) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = e.what();
    }
  }
  if (failure) throw IoError(*failure);

  SliceManifest m;
  m.count = nz;
  m.width = stack.dims.nx;
  m.height = stack.dims.ny;
  m.format = options.format;
  m.z_offset = options.z_offset;
  m.window = stack.provenance.window;
  const auto manifest_path = dir / kSliceManifestName;
  std::ofstream out(manifest_path);
  if (!out) throw IoError("cannot write " + manifest_path.string());
  out << to_json(m).dump(2) << "\n";
  if (!out) throw IoError("write failed: " + manifest_path.string());
  return m;
}

ImageStack read_slices(const std::filesystem::path& dir) {
  std::ifstream in(dir / kSliceManifestName);
  if (!in) throw IoError("missing " + (dir / kSliceManifestName).string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("slice manifest: ") + e.what());
  }
  const SliceManifest m = slice_manifest_from_json(j);
  ImageStack stack;
  stack.dims = Dims{m.width, m.height, m.count};
  stack.pixels.resize(stack.dims.voxels());
  stack.provenance.window = m.window;
  stack.provenance.source_id = dir.string();
  for (int z = 0; z < m.count; ++z) {
    const auto path = slice_path(dir, z, m.format);
    const auto img = codec::read_image(path);
    if (img.width != m.width || img.height != m.height)
      throw DimensionMismatch(path.string() + " has size " + std::to_string(img.width) + "x" +
                              std::to_string(img.height));
    std::copy(img.pixels.begin(), img.pixels.end(),
              stack.pixels.begin() + static_cast<std::ptrdiff_t>(stack.dims.slice_pixels() * z));
  }
  return stack;
}

}  // namespace slicetrack
