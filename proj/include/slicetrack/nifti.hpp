#pragma once

// NIfTI-1 reader/writer.  Single-file (.nii, magic "n+1") and concatenated
// header+image (magic "ni1") layouts, either byte order, optional gzip.
// Volumes come back on a canonical grid whose third axis is the
// cranio-caudal one with z increasing cranially.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "slicetrack/core.hpp"

namespace slicetrack::nifti {

enum class DataType : std::int16_t {
  uint8 = 2,
  int16 = 4,
  int32 = 8,
  float32 = 16,
};

enum class ByteOrder { little, big };

/// Decoded fixed header fields, as stored on disk (no canonicalization).
struct Header {
  ByteOrder byte_order = ByteOrder::little;
  std::array<std::int16_t, 8> dim{};
  std::array<float, 8> pixdim{};
  DataType datatype = DataType::uint8;
  std::int16_t bitpix = 0;
  float vox_offset = 0.0f;
  float scl_slope = 0.0f;
  float scl_inter = 0.0f;
  std::uint8_t xyzt_units = 0;
  float toffset = 0.0f;
  std::int16_t qform_code = 0;
  std::int16_t sform_code = 0;
  std::array<float, 6> quatern{};  // b, c, d, qoffset_x, qoffset_y, qoffset_z
  std::array<std::array<float, 4>, 3> srow{};
  std::array<char, 4> magic{};
};

struct WriteOptions {
  /// Defaults: uint8 for masks; int16 for volumes whose values all fit it, else float32.
  std::optional<DataType> datatype;
  bool gzip = false;
  ByteOrder byte_order = ByteOrder::little;
};

inline constexpr std::size_t kHeaderSize = 348;

/// Decodes and validates the 348-byte header (gzip already removed).
Header decode_header(std::span<const std::uint8_t> bytes);

Volume parse_nifti(std::span<const std::uint8_t> bytes);

/// Nonzero raw voxels become occupied.  Float datatypes are rejected.
LabelMask load_mask(std::span<const std::uint8_t> bytes, Organ organ);

std::vector<std::uint8_t> write_nifti(const Volume& volume, const WriteOptions& options = {});
std::vector<std::uint8_t> write_nifti(const LabelMask& mask, const WriteOptions& options = {});
/// Writes any binary grid with the spatial metadata of a reference image.
std::vector<std::uint8_t> write_nifti(const BinaryGrid& grid, const SpatialInfo& space,
                                      const WriteOptions& options = {});

/// Canonical-orientation choice for a voxel-to-world transform.
Orientation orientation_from_affine(const Affine& affine);

bool is_gzip(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> gzip(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

Volume read_volume(const std::filesystem::path& path);
LabelMask read_mask(const std::filesystem::path& path, Organ organ);
/// Gzip is chosen by a ".gz" suffix.
void save(const std::filesystem::path& path, const Volume& volume);
void save(const std::filesystem::path& path, const LabelMask& mask);

}  // namespace slicetrack::nifti
