#include "slicetrack/core.hpp"

#include <algorithm>
#include <cstring>

#include "slicetrack/kernels.hpp"

namespace slicetrack {

std::string to_string(const Dims& d) {
  return "(" + std::to_string(d.nx) + ", " + std::to_string(d.ny) + ", " + std::to_string(d.nz) + ")";
}

Affine identity_affine(const Spacing& spacing) {
  Affine a{};
  a[0][0] = spacing.dx;
  a[1][1] = spacing.dy;
  a[2][2] = spacing.dz;
  a[3][3] = 1.0;
  return a;
}

std::size_t Mask2D::count() const { return kernels::serial::count_nonzero(pixels); }

std::size_t BinaryGrid::count() const { return kernels::parallel::count_nonzero(voxels); }

Mask2D BinaryGrid::slice(int z) const {
  Mask2D m(dims.nx, dims.ny);
  const auto n = dims.slice_pixels();
  std::memcpy(m.pixels.data(), voxels.data() + n * static_cast<std::size_t>(z), n);
  return m;
}

void BinaryGrid::set_slice(int z, const Mask2D& m) {
  if (m.width != dims.nx || m.height != dims.ny)
    throw DimensionMismatch("slice " + std::to_string(m.width) + "x" + std::to_string(m.height) +
                            " does not fit grid " + to_string(dims));
  const auto n = dims.slice_pixels();
  std::memcpy(voxels.data() + n * static_cast<std::size_t>(z), m.pixels.data(), n);
}

std::vector<std::size_t> BinaryGrid::slice_counts() const {
  return kernels::parallel::slice_counts(voxels, dims.slice_pixels());
}

namespace {

struct OrganNames {
  Organ organ;
  std::string_view stem;
  std::string_view label;
};

constexpr std::array<OrganNames, 8> kOrganNames{{
    {Organ::liver, "liver", "Liver"},
    {Organ::kidney_right, "kidney_right", "Right Kidney"},
    {Organ::kidney_left, "kidney_left", "Left Kidney"},
    {Organ::spleen, "spleen", "Spleen"},
    {Organ::gallbladder, "gallbladder", "Gallbladder"},
    {Organ::pancreas, "pancreas", "Pancreas"},
    {Organ::adrenal_gland_right, "adrenal_gland_right", "Right Adrenal Gland"},
    {Organ::adrenal_gland_left, "adrenal_gland_left", "Left Adrenal Gland"},
}};

}  // namespace

std::string_view organ_name(Organ organ) { return kOrganNames[static_cast<std::size_t>(organ)].stem; }

std::string_view organ_label(Organ organ) { return kOrganNames[static_cast<std::size_t>(organ)].label; }

Organ parse_organ(std::string_view name) {
  for (const auto& n : kOrganNames)
    if (n.stem == name || n.label == name) return n.organ;
  throw SchemaError("unknown organ '" + std::string(name) + "'");
}

}  // namespace slicetrack
