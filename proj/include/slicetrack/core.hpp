#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace slicetrack {

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input bytes (bad magic, wrong header size, non-integer mask...).
class FormatError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Payload shorter than the header promises.
class LengthError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Grid geometry

struct Dims {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  [[nodiscard]] std::size_t slice_pixels() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
  }
  [[nodiscard]] std::size_t voxels() const { return slice_pixels() * static_cast<std::size_t>(nz); }
  [[nodiscard]] bool valid() const { return nx >= 1 && ny >= 1 && nz >= 1; }
  // x fastest, then y, then z
  [[nodiscard]] std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(nx) * (static_cast<std::size_t>(y) +
                                           static_cast<std::size_t>(ny) * static_cast<std::size_t>(z));
  }

  friend bool operator==(const Dims&, const Dims&) = default;
};

std::string to_string(const Dims& d);

struct Spacing {
  double dx = 1.0;
  double dy = 1.0;
  double dz = 1.0;

  friend bool operator==(const Spacing&, const Spacing&) = default;
};

/// Row-major 4x4 voxel-to-world (RAS+) transform.
using Affine = std::array<std::array<double, 4>, 4>;

Affine identity_affine(const Spacing& spacing);

/// How the stored grid relates to the on-disk voxel order.  Canonical axis i
/// is read from on-disk axis source_axis[i], reversed when flipped[i].
struct Orientation {
  std::array<int, 3> source_axis{0, 1, 2};
  std::array<bool, 3> flipped{false, false, false};

  [[nodiscard]] bool is_identity() const {
    return source_axis == std::array<int, 3>{0, 1, 2} && flipped == std::array<bool, 3>{false, false, false};
  }
  friend bool operator==(const Orientation&, const Orientation&) = default;
};

/// One NIfTI header extension block; the payload is kept opaque.
struct NiftiExtension {
  std::int32_t code = 0;
  std::vector<std::uint8_t> data;

  friend bool operator==(const NiftiExtension&, const NiftiExtension&) = default;
};

/// Spatial metadata shared by a volume and the masks drawn on it.
struct SpatialInfo {
  Spacing spacing;
  Affine affine = identity_affine(Spacing{});
  short qform_code = 0;
  short sform_code = 0;
  Orientation orientation;  // permutation applied while loading
  float toffset = 0.0f;
  std::uint8_t xyzt_units = 2;  // mm
  std::vector<NiftiExtension> extensions;
};

// ---------------------------------------------------------------------------
// Voxel containers

/// CT intensities in Hounsfield units on a canonical grid (z increases cranially).
struct Volume {
  Dims dims;
  std::vector<float> data;
  SpatialInfo space;
  std::string id;

  [[nodiscard]] float at(int x, int y, int z) const { return data[dims.index(x, y, z)]; }
};

/// One axial plane of a binary mask, row-major with x fastest.
struct Mask2D {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Mask2D() = default;
  Mask2D(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0) {}

  [[nodiscard]] bool get(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v = true) { pixels[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  [[nodiscard]] bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  [[nodiscard]] std::size_t count() const;
  [[nodiscard]] bool empty() const { return count() == 0; }

  friend bool operator==(const Mask2D&, const Mask2D&) = default;
};

/// Binary occupancy grid, one byte per voxel holding 0 or 1.
struct BinaryGrid {
  Dims dims;
  std::vector<std::uint8_t> voxels;

  BinaryGrid() = default;
  explicit BinaryGrid(Dims d) : dims(d), voxels(d.voxels(), 0) {}

  [[nodiscard]] bool get(int x, int y, int z) const { return voxels[dims.index(x, y, z)] != 0; }
  void set(int x, int y, int z, bool v = true) { voxels[dims.index(x, y, z)] = v ? 1 : 0; }
  [[nodiscard]] std::size_t count() const;
  [[nodiscard]] Mask2D slice(int z) const;
  void set_slice(int z, const Mask2D& m);
  /// Occupied voxel count per z slice.
  [[nodiscard]] std::vector<std::size_t> slice_counts() const;

  friend bool operator==(const BinaryGrid&, const BinaryGrid&) = default;
};

// ---------------------------------------------------------------------------
// Organs

enum class Organ : std::uint8_t {
  liver,
  kidney_right,
  kidney_left,
  spleen,
  gallbladder,
  pancreas,
  adrenal_gland_right,
  adrenal_gland_left,
};

inline constexpr std::array<Organ, 8> kAllOrgans{
    Organ::liver,    Organ::kidney_right, Organ::kidney_left,         Organ::spleen,
    Organ::gallbladder, Organ::pancreas,  Organ::adrenal_gland_right, Organ::adrenal_gland_left};

/// TotalSegmentator file stem, e.g. "kidney_right".
std::string_view organ_name(Organ organ);
/// Human-readable label used in reports, e.g. "Right Kidney".
std::string_view organ_label(Organ organ);
Organ parse_organ(std::string_view name);

struct LabelMask : BinaryGrid {
  Organ organ = Organ::liver;
  SpatialInfo space;

  LabelMask() = default;
  LabelMask(Dims d, Organ o) : BinaryGrid(d), organ(o) {}
};

}  // namespace slicetrack
