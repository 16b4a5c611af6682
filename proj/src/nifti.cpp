#include "slicetrack/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace slicetrack::nifti {

namespace {

// Header field offsets (NIfTI-1).
constexpr std::size_t kOffSizeofHdr = 0;
constexpr std::size_t kOffDimInfo = 39;
constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffSclSlope = 112;
constexpr std::size_t kOffSclInter = 116;
constexpr std::size_t kOffXyztUnits = 123;
constexpr std::size_t kOffToffset = 136;
constexpr std::size_t kOffQformCode = 252;
constexpr std::size_t kOffSformCode = 254;
constexpr std::size_t kOffQuatern = 256;
constexpr std::size_t kOffSrow = 280;
constexpr std::size_t kOffMagic = 344;
constexpr std::size_t kOffExtension = 348;
constexpr std::size_t kSingleFileDataStart = 352;

template <typename T>
T byteswap_value(T v) {
  std::array<std::uint8_t, sizeof(T)> b;
  std::memcpy(b.data(), &v, sizeof(T));
  std::reverse(b.begin(), b.end());
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

bool host_is_little() { return std::endian::native == std::endian::little; }

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename T>
  T get(std::size_t offset) const {
    T v;
    std::memcpy(&v, bytes_.data() + offset, sizeof(T));
    return swap_ ? byteswap_value(v) : v;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  bool swap_;
};

class Writer {
 public:
  Writer(std::vector<std::uint8_t>& out, bool swap) : out_(out), swap_(swap) {}

  template <typename T>
  void put(std::size_t offset, T v) {
    if (swap_) v = byteswap_value(v);
    std::memcpy(out_.data() + offset, &v, sizeof(T));
  }

 private:
  std::vector<std::uint8_t>& out_;
  bool swap_;
};

std::size_t bytes_per_voxel(DataType t) {
  switch (t) {
    case DataType::uint8: return 1;
    case DataType::int16: return 2;
    case DataType::int32: return 4;
    case DataType::float32: return 4;
  }
  return 0;
}

bool is_supported(std::int16_t code) {
  return code == 2 || code == 4 || code == 8 || code == 16;
}

// Everything the loaders need once the header and payload are located.
struct Decoded {
  Header header;
  Dims disk_dims;
  std::span<const std::uint8_t> payload;
  SpatialInfo space;  // on-disk affine, not yet canonicalized
};

Affine affine_from_quatern(const Header& h, const Spacing& sp) {
  const double b = h.quatern[0], c = h.quatern[1], d = h.quatern[2];
  double a = 1.0 - (b * b + c * c + d * d);
  a = a < 1e-7 ? 0.0 : std::sqrt(a);
  const double qfac = h.pixdim[0] < 0.0f ? -1.0 : 1.0;
  const double r[3][3] = {
      {a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
      {2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)},
      {2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b},
  };
  const double scale[3] = {sp.dx, sp.dy, sp.dz * qfac};
  Affine m{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m[i][j] = r[i][j] * scale[j];
    m[i][3] = h.quatern[3 + i];
  }
  m[3][3] = 1.0;
  return m;
}

double positive_or_one(float v) {
  const double a = std::fabs(static_cast<double>(v));
  return (std::isfinite(a) && a > 0.0) ? a : 1.0;
}

Decoded decode(std::span<const std::uint8_t> raw, std::vector<std::uint8_t>& inflated) {
  std::span<const std::uint8_t> bytes = raw;
  if (is_gzip(raw)) {
    inflated = gunzip(raw);
    bytes = inflated;
  }
  Decoded out;
  out.header = decode_header(bytes);
  const Header& h = out.header;

  const int ndim = h.dim[0];
  for (int i = 4; i <= ndim; ++i) {
    if (h.dim[i] > 1) throw UnsupportedError("only 3D images are supported (dim[" + std::to_string(i) + "] = " +
                                             std::to_string(h.dim[i]) + ")");
  }
  out.disk_dims = Dims{ndim >= 1 ? h.dim[1] : 1, ndim >= 2 ? h.dim[2] : 1, ndim >= 3 ? h.dim[3] : 1};
  if (!out.disk_dims.valid()) throw FormatError("invalid dimensions " + to_string(out.disk_dims));

  std::size_t data_start = 0;
  if (h.magic[1] == '+') {
    data_start = std::max<std::size_t>(kSingleFileDataStart, static_cast<std::size_t>(h.vox_offset));
  } else {
    data_start = kHeaderSize;  // "ni1": header immediately followed by the .img contents
  }
  const std::size_t need = out.disk_dims.voxels() * bytes_per_voxel(h.datatype);
  if (bytes.size() < data_start || bytes.size() - data_start < need) {
    throw LengthError("payload truncated: need " + std::to_string(need) + " bytes at offset " +
                      std::to_string(data_start) + ", file has " + std::to_string(bytes.size()));
  }
  out.payload = bytes.subspan(data_start, need);

  // Extension blocks live between byte 352 and vox_offset.
  if (h.magic[1] == '+' && bytes.size() > kOffExtension && bytes[kOffExtension] != 0) {
    const Reader rd(bytes, h.byte_order == ByteOrder::big ? host_is_little() : !host_is_little());
    std::size_t pos = kSingleFileDataStart;
    while (pos + 8 <= data_start) {
      const auto esize = rd.get<std::int32_t>(pos);
      const auto ecode = rd.get<std::int32_t>(pos + 4);
      if (esize < 8 || pos + static_cast<std::size_t>(esize) > data_start) break;
      NiftiExtension ext;
      ext.code = ecode;
      ext.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos + 8),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + esize));
      out.space.extensions.push_back(std::move(ext));
      pos += static_cast<std::size_t>(esize);
    }
  }

  SpatialInfo& sp = out.space;
  sp.spacing = Spacing{positive_or_one(h.pixdim[1]), positive_or_one(h.pixdim[2]), positive_or_one(h.pixdim[3])};
  sp.qform_code = h.qform_code;
  sp.sform_code = h.sform_code;
  sp.toffset = h.toffset;
  sp.xyzt_units = h.xyzt_units;
  if (h.sform_code > 0) {
    Affine m{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) m[i][j] = h.srow[i][j];
    m[3][3] = 1.0;
    sp.affine = m;
  } else if (h.qform_code > 0) {
    sp.affine = affine_from_quatern(h, sp.spacing);
  } else {
    sp.affine = identity_affine(sp.spacing);
  }
  return out;
}

template <typename T>
double raw_at(std::span<const std::uint8_t> payload, std::size_t i, bool swap) {
  T v;
  std::memcpy(&v, payload.data() + i * sizeof(T), sizeof(T));
  if (swap) v = byteswap_value(v);
  return static_cast<double>(v);
}

// Reads voxel i of the payload in on-disk order.
double raw_value(const Decoded& d, std::size_t i) {
  const bool swap = (d.header.byte_order == ByteOrder::little) != host_is_little();
  switch (d.header.datatype) {
    case DataType::uint8: return d.payload[i];
    case DataType::int16: return raw_at<std::int16_t>(d.payload, i, swap);
    case DataType::int32: return raw_at<std::int32_t>(d.payload, i, swap);
    case DataType::float32: return raw_at<float>(d.payload, i, swap);
  }
  return 0.0;
}

// Visits canonical voxels in storage order and hands each one the matching
// on-disk linear index.
template <typename Fn>
Dims for_each_canonical(const Dims& disk, const Orientation& o, Fn&& fn) {
  const std::array<int, 3> disk_n{disk.nx, disk.ny, disk.nz};
  const std::array<std::size_t, 3> disk_stride{1, static_cast<std::size_t>(disk.nx), disk.slice_pixels()};
  const Dims canon{disk_n[o.source_axis[0]], disk_n[o.source_axis[1]], disk_n[o.source_axis[2]]};
  std::size_t out = 0;
  for (int z = 0; z < canon.nz; ++z) {
    for (int y = 0; y < canon.ny; ++y) {
      for (int x = 0; x < canon.nx; ++x, ++out) {
        const std::array<int, 3> c{x, y, z};
        const std::array<int, 3> n{canon.nx, canon.ny, canon.nz};
        std::size_t src = 0;
        for (int a = 0; a < 3; ++a) {
          const int idx = o.flipped[a] ? n[a] - 1 - c[a] : c[a];
          src += static_cast<std::size_t>(idx) * disk_stride[o.source_axis[a]];
        }
        fn(out, src);
      }
    }
  }
  return canon;
}

SpatialInfo canonical_space(const SpatialInfo& disk_space, const Dims& disk, const Orientation& o) {
  SpatialInfo sp = disk_space;
  sp.orientation = o;
  const std::array<double, 3> spacing{disk_space.spacing.dx, disk_space.spacing.dy, disk_space.spacing.dz};
  const std::array<int, 3> disk_n{disk.nx, disk.ny, disk.nz};
  sp.spacing = Spacing{spacing[o.source_axis[0]], spacing[o.source_axis[1]], spacing[o.source_axis[2]]};
  const Affine& a = disk_space.affine;
  Affine m{};
  for (int r = 0; r < 3; ++r) m[r][3] = a[r][3];
  for (int i = 0; i < 3; ++i) {
    const int s = o.source_axis[i];
    const double sign = o.flipped[i] ? -1.0 : 1.0;
    for (int r = 0; r < 3; ++r) {
      m[r][i] = sign * a[r][s];
      if (o.flipped[i]) m[r][3] += a[r][s] * (disk_n[s] - 1);
    }
  }
  m[3][3] = 1.0;
  sp.affine = m;
  return sp;
}

// Quaternion parameters for the rotation part of an affine.
std::array<float, 6> quatern_from_affine(const Affine& m, float& qfac) {
  double r[3][3];
  for (int j = 0; j < 3; ++j) {
    const double len = std::sqrt(m[0][j] * m[0][j] + m[1][j] * m[1][j] + m[2][j] * m[2][j]);
    for (int i = 0; i < 3; ++i) r[i][j] = len > 0 ? m[i][j] / len : (i == j ? 1.0 : 0.0);
  }
  const double det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) -
                     r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0]) +
                     r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
  qfac = 1.0f;
  if (det < 0) {
    qfac = -1.0f;
    for (auto& row : r) row[2] = -row[2];
  }
  double a = r[0][0] + r[1][1] + r[2][2] + 1.0;
  double b, c, d;
  if (a > 0.5) {
    a = 0.5 * std::sqrt(a);
    b = 0.25 * (r[2][1] - r[1][2]) / a;
    c = 0.25 * (r[0][2] - r[2][0]) / a;
    d = 0.25 * (r[1][0] - r[0][1]) / a;
  } else {
    const double xd = 1.0 + r[0][0] - (r[1][1] + r[2][2]);
    const double yd = 1.0 + r[1][1] - (r[0][0] + r[2][2]);
    const double zd = 1.0 + r[2][2] - (r[0][0] + r[1][1]);
    if (xd > 1.0) {
      b = 0.5 * std::sqrt(xd);
      c = 0.25 * (r[0][1] + r[1][0]) / b;
      d = 0.25 * (r[0][2] + r[2][0]) / b;
      a = 0.25 * (r[2][1] - r[1][2]) / b;
    } else if (yd > 1.0) {
      c = 0.5 * std::sqrt(yd);
      b = 0.25 * (r[0][1] + r[1][0]) / c;
      d = 0.25 * (r[1][2] + r[2][1]) / c;
      a = 0.25 * (r[0][2] - r[2][0]) / c;
    } else {
      d = 0.5 * std::sqrt(zd);
      b = 0.25 * (r[0][2] + r[2][0]) / d;
      c = 0.25 * (r[1][2] + r[2][1]) / d;
      a = 0.25 * (r[1][0] - r[0][1]) / d;
    }
    if (a < 0.0) {
      b = -b;
      c = -c;
      d = -d;
    }
  }
  return {static_cast<float>(b), static_cast<float>(c), static_cast<float>(d),
          static_cast<float>(m[0][3]), static_cast<float>(m[1][3]), static_cast<float>(m[2][3])};
}

// Serializes header + extensions + payload.  `payload` is in host byte order
// and gets swapped here when the target order differs.
std::vector<std::uint8_t> assemble(const Dims& dims, const SpatialInfo& sp, DataType dtype,
                                   std::span<const std::uint8_t> payload, const WriteOptions& opt) {
  const bool swap = (opt.byte_order == ByteOrder::little) != host_is_little();
  std::size_t ext_bytes = 0;
  for (const auto& e : sp.extensions) ext_bytes += 8 + ((e.data.size() + 8 + 15) / 16 * 16 - 8);
  const std::size_t vox_offset = kSingleFileDataStart + ext_bytes;

  std::vector<std::uint8_t> out(vox_offset + payload.size(), 0);
  Writer w(out, swap);
  w.put<std::int32_t>(kOffSizeofHdr, 348);
  out[kOffDimInfo] = 0;
  const std::array<std::int16_t, 8> dim{3, static_cast<std::int16_t>(dims.nx), static_cast<std::int16_t>(dims.ny),
                                        static_cast<std::int16_t>(dims.nz), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) w.put<std::int16_t>(kOffDim + 2 * i, dim[i]);
  w.put<std::int16_t>(kOffDatatype, static_cast<std::int16_t>(dtype));
  w.put<std::int16_t>(kOffBitpix, static_cast<std::int16_t>(8 * bytes_per_voxel(dtype)));

  float qfac = 1.0f;
  std::array<float, 6> quat{};
  const bool has_transform = sp.sform_code > 0 || sp.qform_code > 0;
  if (has_transform) quat = quatern_from_affine(sp.affine, qfac);
  const std::array<float, 8> pixdim{qfac,
                                    static_cast<float>(sp.spacing.dx),
                                    static_cast<float>(sp.spacing.dy),
                                    static_cast<float>(sp.spacing.dz),
                                    0.0f, 0.0f, 0.0f, 0.0f};
  for (int i = 0; i < 8; ++i) w.put<float>(kOffPixdim + 4 * i, pixdim[i]);
  w.put<float>(kOffVoxOffset, static_cast<float>(vox_offset));
  w.put<float>(kOffSclSlope, 1.0f);
  w.put<float>(kOffSclInter, 0.0f);
  out[kOffXyztUnits] = sp.xyzt_units;
  w.put<float>(kOffToffset, sp.toffset);
  if (has_transform) {
    const std::int16_t code = sp.sform_code > 0 ? sp.sform_code : sp.qform_code;
    w.put<std::int16_t>(kOffQformCode, code);
    w.put<std::int16_t>(kOffSformCode, code);
    for (int i = 0; i < 6; ++i) w.put<float>(kOffQuatern + 4 * i, quat[i]);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) w.put<float>(kOffSrow + 16 * r + 4 * c, static_cast<float>(sp.affine[r][c]));
  }
  std::memcpy(out.data() + kOffMagic, "n+1\0", 4);

  out[kOffExtension] = sp.extensions.empty() ? 0 : 1;
  std::size_t pos = kSingleFileDataStart;
  for (const auto& e : sp.extensions) {
    const std::size_t esize = (e.data.size() + 8 + 15) / 16 * 16;
    w.put<std::int32_t>(pos, static_cast<std::int32_t>(esize));
    w.put<std::int32_t>(pos + 4, e.code);
    std::copy(e.data.begin(), e.data.end(), out.begin() + static_cast<std::ptrdiff_t>(pos + 8));
    pos += esize;
  }

  std::copy(payload.begin(), payload.end(), out.begin() + static_cast<std::ptrdiff_t>(vox_offset));
  const std::size_t width = bytes_per_voxel(dtype);
  if (swap && width > 1) {
    for (std::size_t i = vox_offset; i < out.size(); i += width)
      std::reverse(out.begin() + static_cast<std::ptrdiff_t>(i), out.begin() + static_cast<std::ptrdiff_t>(i + width));
  }
  return opt.gzip ? gzip(out) : out;
}

template <typename T>
void append_as(std::vector<std::uint8_t>& payload, double v) {
  const T t = static_cast<T>(v);
  const auto* p = reinterpret_cast<const std::uint8_t*>(&t);
  payload.insert(payload.end(), p, p + sizeof(T));
}

template <typename T>
bool representable(double v) {
  return std::nearbyint(v) == v && v >= static_cast<double>(std::numeric_limits<T>::lowest()) &&
         v <= static_cast<double>(std::numeric_limits<T>::max());
}

bool fits(DataType t, double v) {
  switch (t) {
    case DataType::uint8: return representable<std::uint8_t>(v);
    case DataType::int16: return representable<std::int16_t>(v);
    case DataType::int32: return representable<std::int32_t>(v);
    case DataType::float32: return true;
  }
  return false;
}

std::vector<std::uint8_t> encode_payload(std::span<const float> values, DataType t) {
  std::vector<std::uint8_t> payload;
  payload.reserve(values.size() * bytes_per_voxel(t));
  for (float f : values) {
    const double v = f;
    if (!fits(t, v))
      throw PreconditionError("value " + std::to_string(v) + " not representable as datatype " +
                              std::to_string(static_cast<int>(t)));
    switch (t) {
      case DataType::uint8: append_as<std::uint8_t>(payload, v); break;
      case DataType::int16: append_as<std::int16_t>(payload, v); break;
      case DataType::int32: append_as<std::int32_t>(payload, v); break;
      case DataType::float32: append_as<float>(payload, v); break;
    }
  }
  return payload;
}

}  // namespace

// ---------------------------------------------------------------------------

Header decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize)
    throw LengthError("header truncated: " + std::to_string(bytes.size()) + " bytes, need 348");

  std::int32_t sizeof_hdr;
  std::memcpy(&sizeof_hdr, bytes.data(), 4);
  bool swap = false;
  if (sizeof_hdr == 348) {
    swap = false;
  } else if (byteswap_value(sizeof_hdr) == 348) {
    swap = true;
  } else if (sizeof_hdr == 540 || byteswap_value(sizeof_hdr) == 540) {
    throw UnsupportedError("NIfTI-2 files are not supported");
  } else {
    throw FormatError("sizeof_hdr is " + std::to_string(sizeof_hdr) + ", expected 348");
  }

  Header h;
  h.byte_order = (host_is_little() != swap) ? ByteOrder::little : ByteOrder::big;
  std::memcpy(h.magic.data(), bytes.data() + kOffMagic, 4);
  const bool single = std::memcmp(h.magic.data(), "n+1\0", 4) == 0;
  const bool paired = std::memcmp(h.magic.data(), "ni1\0", 4) == 0;
  if (!single && !paired) {
    if (std::memcmp(h.magic.data(), "n+2", 3) == 0 || std::memcmp(h.magic.data(), "ni2", 3) == 0)
      throw UnsupportedError("NIfTI-2 files are not supported");
    throw FormatError("bad magic, expected \"n+1\" or \"ni1\"");
  }

  const Reader rd(bytes, swap);
  for (int i = 0; i < 8; ++i) h.dim[i] = rd.get<std::int16_t>(kOffDim + 2 * i);
  for (int i = 0; i < 8; ++i) h.pixdim[i] = rd.get<float>(kOffPixdim + 4 * i);
  if (h.dim[0] < 1 || h.dim[0] > 7) throw FormatError("dim[0] = " + std::to_string(h.dim[0]) + " out of range");
  const auto datatype = rd.get<std::int16_t>(kOffDatatype);
  if (!is_supported(datatype))
    throw UnsupportedError("unsupported datatype code " + std::to_string(datatype) +
                           " (supported: uint8, int16, int32, float32)");
  h.datatype = static_cast<DataType>(datatype);
  h.bitpix = rd.get<std::int16_t>(kOffBitpix);
  h.vox_offset = rd.get<float>(kOffVoxOffset);
  h.scl_slope = rd.get<float>(kOffSclSlope);
  h.scl_inter = rd.get<float>(kOffSclInter);
  h.xyzt_units = bytes[kOffXyztUnits];
  h.toffset = rd.get<float>(kOffToffset);
  h.qform_code = rd.get<std::int16_t>(kOffQformCode);
  h.sform_code = rd.get<std::int16_t>(kOffSformCode);
  for (int i = 0; i < 6; ++i) h.quatern[i] = rd.get<float>(kOffQuatern + 4 * i);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) h.srow[r][c] = rd.get<float>(kOffSrow + 16 * r + 4 * c);
  return h;
}

Orientation orientation_from_affine(const Affine& m) {
  std::array<double, 3> norm{};
  for (int j = 0; j < 3; ++j)
    norm[j] = std::sqrt(m[0][j] * m[0][j] + m[1][j] * m[1][j] + m[2][j] * m[2][j]);

  std::array<int, 3> perm{0, 1, 2};
  std::array<int, 3> best = perm;
  double best_score = -1.0;
  do {
    double score = 0.0;
    for (int w = 0; w < 3; ++w) {
      const int s = perm[w];
      score += norm[s] > 0 ? std::fabs(m[w][s]) / norm[s] : 0.0;
    }
    if (score > best_score + 1e-9) {
      best_score = score;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  Orientation o;
  o.source_axis = best;
  // World +z is superior; only the axial axis is flipped so that z grows cranially.
  o.flipped = {false, false, m[2][best[2]] < 0.0};
  return o;
}

Volume parse_nifti(std::span<const std::uint8_t> bytes) {
  std::vector<std::uint8_t> inflated;
  const Decoded d = decode(bytes, inflated);
  double slope = d.header.scl_slope;
  double inter = d.header.scl_inter;
  if (slope == 0.0 || !std::isfinite(slope)) slope = 1.0;
  if (!std::isfinite(inter)) inter = 0.0;

  const Orientation o = orientation_from_affine(d.space.affine);
  Volume v;
  v.data.resize(d.disk_dims.voxels());
  v.dims = for_each_canonical(d.disk_dims, o, [&](std::size_t out, std::size_t src) {
    v.data[out] = static_cast<float>(slope * raw_value(d, src) + inter);
  });
  v.space = canonical_space(d.space, d.disk_dims, o);
  return v;
}

LabelMask load_mask(std::span<const std::uint8_t> bytes, Organ organ) {
  std::vector<std::uint8_t> inflated;
  const Decoded d = decode(bytes, inflated);
  if (d.header.datatype == DataType::float32)
    throw FormatError("mask datatype must be integer, got float32");

  const Orientation o = orientation_from_affine(d.space.affine);
  LabelMask m;
  m.organ = organ;
  m.voxels.resize(d.disk_dims.voxels());
  m.dims = for_each_canonical(d.disk_dims, o, [&](std::size_t out, std::size_t src) {
    m.voxels[out] = raw_value(d, src) != 0.0 ? 1 : 0;
  });
  m.space = canonical_space(d.space, d.disk_dims, o);
  return m;
}

std::vector<std::uint8_t> write_nifti(const Volume& volume, const WriteOptions& options) {
  if (!volume.dims.valid() || volume.data.size() != volume.dims.voxels())
    throw PreconditionError("volume dims " + to_string(volume.dims) + " do not match data length");
  DataType t = DataType::float32;
  if (options.datatype) {
    t = *options.datatype;
  } else if (std::all_of(volume.data.begin(), volume.data.end(),
                         [](float f) { return fits(DataType::int16, f); })) {
    t = DataType::int16;
  }
  const auto payload = encode_payload(volume.data, t);
  return assemble(volume.dims, volume.space, t, payload, options);
}

std::vector<std::uint8_t> write_nifti(const BinaryGrid& grid, const SpatialInfo& space, const WriteOptions& options) {
  if (!grid.dims.valid() || grid.voxels.size() != grid.dims.voxels())
    throw PreconditionError("mask dims " + to_string(grid.dims) + " do not match voxel count");
  const DataType t = options.datatype.value_or(DataType::uint8);
  if (t == DataType::uint8) {
    std::vector<std::uint8_t> payload(grid.voxels.size());
    std::transform(grid.voxels.begin(), grid.voxels.end(), payload.begin(),
                   [](std::uint8_t b) -> std::uint8_t { return b ? 1 : 0; });
    return assemble(grid.dims, space, t, payload, options);
  }
  std::vector<float> values(grid.voxels.begin(), grid.voxels.end());
  return assemble(grid.dims, space, t, encode_payload(values, t), options);
}

std::vector<std::uint8_t> write_nifti(const LabelMask& mask, const WriteOptions& options) {
  return write_nifti(static_cast<const BinaryGrid&>(mask), mask.space, options);
}

// ---------------------------------------------------------------------------

bool is_gzip(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw FormatError("zlib init failed");
  std::vector<std::uint8_t> out;
  std::array<std::uint8_t, 1 << 16> chunk;
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  int rc = Z_OK;
  while (true) {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
    if (rc == Z_STREAM_END) {
      // concatenated gzip members
      if (zs.avail_in > 0 && is_gzip(std::span(zs.next_in, zs.avail_in))) {
        inflateReset(&zs);
        continue;
      }
      break;
    }
    if (rc != Z_OK) {
      inflateEnd(&zs);
      if (rc == Z_BUF_ERROR) throw LengthError("gzip stream truncated");
      throw FormatError("gzip stream corrupt");
    }
  }
  inflateEnd(&zs);
  return out;
}

std::vector<std::uint8_t> gzip(std::span<const std::uint8_t> bytes) {
  z_stream zs{};
  if (deflateInit2(&zs, 6, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) throw Error("zlib init failed");
  std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(bytes.size())) + 32);
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error("gzip compression failed");
  out.resize(zs.total_out);
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

// A ".hdr" path pairs with a sibling ".img"; the two are concatenated.
std::vector<std::uint8_t> read_image_bytes(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  if (path.extension() == ".hdr") {
    auto img_path = path;
    img_path.replace_extension(".img");
    auto img = read_file(img_path);
    if (is_gzip(img)) img = gunzip(img);
    if (is_gzip(bytes)) bytes = gunzip(bytes);
    bytes.resize(std::min(bytes.size(), kHeaderSize));
    bytes.insert(bytes.end(), img.begin(), img.end());
  }
  return bytes;
}

bool wants_gzip(const std::filesystem::path& path) { return path.extension() == ".gz"; }

}  // namespace

Volume read_volume(const std::filesystem::path& path) {
  Volume v = parse_nifti(read_image_bytes(path));
  v.id = path.string();
  return v;
}

LabelMask read_mask(const std::filesystem::path& path, Organ organ) { return load_mask(read_image_bytes(path), organ); }

void save(const std::filesystem::path& path, const Volume& volume) {
  WriteOptions opt;
  opt.gzip = wants_gzip(path);
  write_file(path, write_nifti(volume, opt));
}

void save(const std::filesystem::path& path, const LabelMask& mask) {
  WriteOptions opt;
  opt.gzip = wants_gzip(path);
  write_file(path, write_nifti(mask, opt));
}

}  // namespace slicetrack::nifti
