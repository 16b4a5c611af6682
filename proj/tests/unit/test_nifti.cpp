#include "slicetrack/nifti.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "oracles.hpp"

using namespace slicetrack;

namespace {

// Hand-assembled little-endian NIfTI-1 single file, independent of the writer.
struct RawFile {
  std::vector<std::uint8_t> bytes = std::vector<std::uint8_t>(352, 0);

  template <typename T>
  void put(std::size_t off, T v) {
    std::memcpy(bytes.data() + off, &v, sizeof(T));
  }

  RawFile(std::array<std::int16_t, 3> dims, std::int16_t datatype, std::int16_t bitpix) {
    put<std::int32_t>(0, 348);
    put<std::int16_t>(40, 3);
    for (int i = 0; i < 3; ++i) put<std::int16_t>(42 + 2 * i, dims[static_cast<std::size_t>(i)]);
    for (int i = 3; i < 7; ++i) put<std::int16_t>(42 + 2 * i, 1);
    put<std::int16_t>(70, datatype);
    put<std::int16_t>(72, bitpix);
    for (int i = 0; i < 4; ++i) put<float>(76 + 4 * i, 1.0f);
    put<float>(108, 352.0f);
    std::memcpy(bytes.data() + 344, "n+1\0", 4);
  }

  template <typename T>
  void append(T v) {
    const auto off = bytes.size();
    bytes.resize(off + sizeof(T));
    std::memcpy(bytes.data() + off, &v, sizeof(T));
  }
};

}  // namespace

TEST(slicetrack_nifti, decodes_hand_built_int16) {
  RawFile f({4, 4, 2}, 4, 16);
  for (int i = 0; i < 32; ++i) f.append<std::int16_t>(static_cast<std::int16_t>(i * 10 - 100));
  const auto v = nifti::parse_nifti(f.bytes);
  EXPECT_EQ(v.dims, (Dims{4, 4, 2}));
  ASSERT_EQ(v.data.size(), 32u);
  for (int i = 0; i < 32; ++i) EXPECT_EQ(v.data[static_cast<std::size_t>(i)], static_cast<float>(i * 10 - 100));
}

TEST(slicetrack_nifti, slope_zero_is_identity) {
  RawFile f({1, 1, 1}, 4, 16);
  f.append<std::int16_t>(100);
  EXPECT_EQ(nifti::parse_nifti(f.bytes).data[0], 100.0f);
}

TEST(slicetrack_nifti, applies_slope_and_intercept) {
  RawFile f({2, 1, 1}, 4, 16);
  f.put<float>(112, 2.0f);
  f.put<float>(116, -1024.0f);
  f.append<std::int16_t>(0);
  f.append<std::int16_t>(600);
  const auto v = nifti::parse_nifti(f.bytes);
  EXPECT_EQ(v.data[0], -1024.0f);
  EXPECT_EQ(v.data[1], 176.0f);
}

TEST(slicetrack_nifti, big_endian_file_matches_little_endian) {
  Xoshiro256 rng(3);
  const auto vol = oracle::random_volume({5, 4, 3}, rng, true);
  nifti::WriteOptions le, be;
  be.byte_order = nifti::ByteOrder::big;
  const auto a = nifti::write_nifti(vol, le);
  const auto b = nifti::write_nifti(vol, be);
  EXPECT_NE(a, b);
  EXPECT_EQ(nifti::decode_header(b).byte_order, nifti::ByteOrder::big);
  EXPECT_EQ(nifti::parse_nifti(a).data, nifti::parse_nifti(b).data);
}

TEST(slicetrack_nifti, errors) {
  RawFile f({2, 2, 2}, 4, 16);
  for (int i = 0; i < 8; ++i) f.append<std::int16_t>(1);

  auto bad_magic = f.bytes;
  std::memcpy(bad_magic.data() + 344, "xyz\0", 4);
  EXPECT_THROW(nifti::parse_nifti(bad_magic), FormatError);

  auto bad_type = f.bytes;
  std::int16_t dt = 64;  // float64
  std::memcpy(bad_type.data() + 70, &dt, 2);
  EXPECT_THROW(nifti::parse_nifti(bad_type), UnsupportedError);

  auto truncated = f.bytes;
  truncated.resize(truncated.size() - 1);
  EXPECT_THROW(nifti::parse_nifti(truncated), LengthError);

  EXPECT_THROW(nifti::parse_nifti(std::span(f.bytes).first(100)), LengthError);

  auto nifti2 = f.bytes;
  std::int32_t size2 = 540;
  std::memcpy(nifti2.data(), &size2, 4);
  EXPECT_THROW(nifti::parse_nifti(nifti2), UnsupportedError);
}

TEST(slicetrack_nifti, float_mask_is_rejected) {
  RawFile f({1, 1, 1}, 16, 32);
  f.append<float>(1.0f);
  EXPECT_THROW(nifti::load_mask(f.bytes, Organ::liver), FormatError);
}

TEST(slicetrack_nifti, mask_nonzero_convention) {
  RawFile f({3, 1, 1}, 2, 8);
  f.append<std::uint8_t>(0);
  f.append<std::uint8_t>(2);
  f.append<std::uint8_t>(1);
  const auto m = nifti::load_mask(f.bytes, Organ::spleen);
  EXPECT_EQ(m.count(), 2u);
  EXPECT_FALSE(m.get(0, 0, 0));
  EXPECT_TRUE(m.get(1, 0, 0));
  EXPECT_EQ(m.organ, Organ::spleen);
}

TEST(slicetrack_nifti, all_zero_mask_and_216_voxel_mask) {
  LabelMask empty(Dims{6, 6, 6}, Organ::kidney_right);
  EXPECT_EQ(nifti::load_mask(nifti::write_nifti(empty), Organ::kidney_right).count(), 0u);

  LabelMask cube(Dims{10, 10, 10}, Organ::kidney_right);
  for (int z = 2; z < 8; ++z)
    for (int y = 2; y < 8; ++y)
      for (int x = 2; x < 8; ++x) cube.set(x, y, z);
  EXPECT_EQ(nifti::load_mask(nifti::write_nifti(cube), Organ::kidney_right).count(), 216u);
}

TEST(slicetrack_nifti, minimal_volume) {
  Volume v;
  v.dims = {1, 1, 1};
  v.data = {0.0f};
  const auto back = nifti::parse_nifti(nifti::write_nifti(v));
  EXPECT_EQ(back.dims, v.dims);
  EXPECT_EQ(back.data, v.data);
}

TEST(slicetrack_nifti, int16_chosen_when_values_fit) {
  Xoshiro256 rng(5);
  const auto ints = oracle::random_volume({8, 8, 8}, rng, true);
  EXPECT_EQ(nifti::decode_header(nifti::write_nifti(ints)).datatype, nifti::DataType::int16);
  const auto floats = oracle::random_volume({8, 8, 8}, rng, false);
  EXPECT_EQ(nifti::decode_header(nifti::write_nifti(floats)).datatype, nifti::DataType::float32);
  EXPECT_EQ(nifti::parse_nifti(nifti::write_nifti(floats)).data, floats.data);
}

TEST(slicetrack_nifti, gzip_transparent) {
  Xoshiro256 rng(6);
  const auto vol = oracle::random_volume({7, 5, 3}, rng, true);
  nifti::WriteOptions gz;
  gz.gzip = true;
  const auto bytes = nifti::write_nifti(vol, gz);
  EXPECT_TRUE(nifti::is_gzip(bytes));
  EXPECT_EQ(nifti::parse_nifti(bytes).data, vol.data);

  auto corrupt = bytes;
  corrupt.resize(corrupt.size() / 2);
  EXPECT_THROW(nifti::parse_nifti(corrupt), Error);
}

TEST(slicetrack_nifti, sform_flip_puts_z_cranial) {
  RawFile f({1, 1, 3}, 4, 16);
  f.put<std::int16_t>(254, 1);  // sform_code
  const float srow[3][4] = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, -2, 10}};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) f.put<float>(280 + 16 * static_cast<std::size_t>(r) + 4 * static_cast<std::size_t>(c), srow[r][c]);
  f.append<std::int16_t>(1);
  f.append<std::int16_t>(2);
  f.append<std::int16_t>(3);
  const auto v = nifti::parse_nifti(f.bytes);
  EXPECT_EQ(v.data, (std::vector<float>{3, 2, 1}));
  EXPECT_TRUE(v.space.orientation.flipped[2]);

  // Writing the canonical volume and reading it back keeps the canonical order.
  EXPECT_EQ(nifti::parse_nifti(nifti::write_nifti(v)).data, v.data);
}

TEST(slicetrack_nifti, axis_permutation_is_canonicalized) {
  // On-disk axis 0 points superior: it must become canonical z.
  RawFile f({3, 1, 1}, 4, 16);
  f.put<std::int16_t>(254, 1);
  const float srow[3][4] = {{0, 1, 0, 0}, {0, 0, 1, 0}, {1, 0, 0, 0}};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) f.put<float>(280 + 16 * static_cast<std::size_t>(r) + 4 * static_cast<std::size_t>(c), srow[r][c]);
  f.append<std::int16_t>(7);
  f.append<std::int16_t>(8);
  f.append<std::int16_t>(9);
  const auto v = nifti::parse_nifti(f.bytes);
  EXPECT_EQ(v.dims, (Dims{1, 1, 3}));
  EXPECT_EQ(v.data, (std::vector<float>{7, 8, 9}));
}

TEST(slicetrack_nifti, extensions_survive_round_trip) {
  Volume v;
  v.dims = {2, 2, 1};
  v.data = {1, 2, 3, 4};
  v.space.extensions.push_back({6, std::vector<std::uint8_t>{'h', 'e', 'l', 'l', 'o', 0, 0, 0}});
  const auto back = nifti::parse_nifti(nifti::write_nifti(v));
  ASSERT_EQ(back.space.extensions.size(), 1u);
  EXPECT_EQ(back.space.extensions[0].code, 6);
  EXPECT_EQ(back.data, v.data);
}

TEST(slicetrack_nifti, file_io_round_trip) {
  const auto dir = std::filesystem::temp_directory_path() / "slicetrack_nifti_io";
  std::filesystem::create_directories(dir);
  Xoshiro256 rng(9);
  const auto vol = oracle::random_volume({6, 5, 4}, rng, true);
  nifti::save(dir / "v.nii.gz", vol);
  EXPECT_TRUE(nifti::is_gzip(nifti::read_file(dir / "v.nii.gz")));
  EXPECT_EQ(nifti::read_volume(dir / "v.nii.gz").data, vol.data);
  nifti::save(dir / "v.nii", vol);
  EXPECT_FALSE(nifti::is_gzip(nifti::read_file(dir / "v.nii")));
  EXPECT_THROW(nifti::read_volume(dir / "missing.nii"), IoError);
  std::filesystem::remove_all(dir);
}

TEST(slicetrack_nifti, random_round_trips_both_orders_and_gzip) {
  Xoshiro256 rng(42);
  for (int i = 0; i < 40; ++i) {
    const Dims d{1 + static_cast<int>(rng.uniform(9)), 1 + static_cast<int>(rng.uniform(9)),
                 1 + static_cast<int>(rng.uniform(9))};
    nifti::WriteOptions opt;
    opt.byte_order = i % 2 ? nifti::ByteOrder::big : nifti::ByteOrder::little;
    opt.gzip = (i / 2) % 2 == 1;
    const auto vol = oracle::random_volume(d, rng, i % 3 != 0);
    const auto back = nifti::parse_nifti(nifti::write_nifti(vol, opt));
    EXPECT_EQ(back.dims, vol.dims);
    EXPECT_EQ(back.data, vol.data);

    LabelMask m(d, Organ::pancreas);
    m.voxels = oracle::random_grid(d, 0.4, rng).voxels;
    const auto mb = nifti::load_mask(nifti::write_nifti(m, opt), Organ::pancreas);
    EXPECT_EQ(mb.voxels, m.voxels);
  }
}
