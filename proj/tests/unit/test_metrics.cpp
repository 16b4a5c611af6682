#include "slicetrack/metrics.hpp"

#include <gtest/gtest.h>

#include <filesystem>

#include "oracles.hpp"
#include "slicetrack/csv.hpp"

using namespace slicetrack;

TEST(slicetrack_metrics, dice_examples) {
  const Dims d{10, 1, 1};
  BinaryGrid a(d), b(d);
  for (int x = 0; x < 5; ++x) a.set(x, 0, 0);
  for (int x = 2; x < 7; ++x) b.set(x, 0, 0);
  EXPECT_DOUBLE_EQ(dice(a, b), 0.6);
  EXPECT_EQ(dice(a, a), 1.0);

  BinaryGrid c(d);
  c.set(9, 0, 0);
  EXPECT_EQ(dice(c, a), 0.0);
  EXPECT_EQ(dice(BinaryGrid(d), a), 0.0);
  EXPECT_THROW(dice(a, BinaryGrid(d)), PreconditionError);
  EXPECT_THROW(dice(a, BinaryGrid(Dims{10, 1, 2})), DimensionMismatch);
}

TEST(slicetrack_metrics, dice_matches_set_oracle) {
  Xoshiro256 rng(31);
  for (int i = 0; i < 300; ++i) {
    const Dims d{1 + static_cast<int>(rng.uniform(12)), 1 + static_cast<int>(rng.uniform(12)),
                 1 + static_cast<int>(rng.uniform(12))};
    const auto gt = oracle::random_blob_mask(d, rng);
    const auto pred = oracle::random_grid(d, rng.uniform01(), rng);
    const double v = dice(pred, gt);
    EXPECT_NEAR(v, oracle::dice(pred, gt), 1e-12);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    if (pred.count() > 0) EXPECT_NEAR(v, dice(gt, pred), 1e-12);
  }
}

TEST(slicetrack_metrics, exclusion_threshold) {
  EXPECT_TRUE(is_excluded(100));
  EXPECT_FALSE(is_excluded(101));
  EXPECT_TRUE(is_excluded(0));

  const Dims d{20, 20, 1};
  auto mask_with = [&](Organ o, int n) {
    LabelMask m(d, o);
    for (int i = 0; i < n; ++i) m.set(i % 20, i / 20, 0);
    return m;
  };
  const auto r = exclude_small({mask_with(Organ::liver, 101), mask_with(Organ::spleen, 100),
                                mask_with(Organ::pancreas, 0)},
                               "s0001");
  ASSERT_EQ(r.kept.size(), 1u);
  EXPECT_EQ(r.kept[0].organ, Organ::liver);
  ASSERT_EQ(r.excluded.size(), 2u);
  EXPECT_EQ(r.excluded[0].organ, Organ::spleen);
  EXPECT_EQ(r.excluded[0].volume, 100u);
  EXPECT_EQ(r.excluded[1].scan_id, "s0001");
}

TEST(slicetrack_metrics, exclusion_conserves_mask_count) {
  // 903 candidate masks with 12 at or below the threshold leave 891.
  Xoshiro256 rng(32);
  const Dims d{16, 16, 1};
  std::size_t kept = 0, excluded = 0;
  int small_left = 12;
  for (int scan = 0; scan < 129; ++scan) {
    std::vector<LabelMask> masks;
    for (int k = 0; k < 7; ++k) {
      const bool small = small_left > 0 && rng.uniform(8) == 0;
      if (small) --small_left;
      const int n = small ? static_cast<int>(rng.uniform(101)) : 101 + static_cast<int>(rng.uniform(150));
      LabelMask m(d, kAllOrgans[static_cast<std::size_t>(k)]);
      for (int i = 0; i < n; ++i) m.set(i % 16, i / 16, 0);
      masks.push_back(std::move(m));
    }
    const auto r = exclude_small(std::move(masks), "scan");
    kept += r.kept.size();
    excluded += r.excluded.size();
  }
  ASSERT_EQ(small_left, 0);
  EXPECT_EQ(kept + excluded, 903u);
  EXPECT_EQ(kept, 891u);
}

TEST(slicetrack_metrics, area_at_levels_reads_slice_counts) {
  BinaryGrid g(Dims{10, 10, 4});
  for (int z = 0; z < 4; ++z)
    for (int i = 0; i < (z + 1) * 10; ++i) g.set(i % 10, i / 10, z);
  // Voxels per slice 10, 20, 30, 40: percentile slices 1, 2, 3.
  EXPECT_EQ(area_at_levels(g), (LevelAreas{20, 30, 40}));
}

TEST(slicetrack_metrics, csv_row_round_trip) {
  Xoshiro256 rng(33);
  for (int i = 0; i < 100; ++i) {
    DiceRecord r;
    r.scan_id = i % 7 == 0 ? "s,quoted\"id" : "s" + std::to_string(i);
    r.institution = "inst" + std::to_string(i % 3);
    r.organ = kAllOrgans[rng.uniform(8)];
    r.approach = kAllLevels[rng.uniform(3)];
    r.negatives_used = rng.uniform(2) == 1;
    r.seed = rng.next();
    r.dsc = rng.uniform01();
    r.gt_volume = rng.uniform(1000000);
    r.status = static_cast<CellStatus>(rng.uniform(4));
    const auto back = parse_csv_row(csv::split_line(to_csv_row(r), ','));
    EXPECT_EQ(back.scan_id, r.scan_id);
    EXPECT_EQ(back.institution, r.institution);
    EXPECT_EQ(back.organ, r.organ);
    EXPECT_EQ(back.approach, r.approach);
    EXPECT_EQ(back.negatives_used, r.negatives_used);
    EXPECT_EQ(back.seed, r.seed);
    EXPECT_EQ(back.dsc, r.dsc);
    EXPECT_EQ(back.gt_volume, r.gt_volume);
    EXPECT_EQ(back.status, r.status);
  }
}

TEST(slicetrack_metrics, results_file_and_schema_errors) {
  const auto path = std::filesystem::temp_directory_path() / "slicetrack_metrics_results.csv";
  DiceRecord r;
  r.scan_id = "a";
  r.dsc = 0.25;
  write_results(path, {r, r});
  const auto rows = read_results(path);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].dsc, 0.25);
  std::filesystem::remove(path);

  EXPECT_THROW(parse_csv_row({"a", "b"}), SchemaError);
  EXPECT_THROW(parse_csv_row({"a", "i", "liver", "mid", "2", "1", "0.5", "10", "ok"}), SchemaError);
  EXPECT_THROW(parse_csv_row({"a", "i", "heart", "mid", "1", "1", "0.5", "10", "ok"}), SchemaError);
  EXPECT_THROW(parse_csv_row({"a", "i", "liver", "mid", "1", "x", "0.5", "10", "ok"}), SchemaError);
  EXPECT_THROW(parse_status("fine"), SchemaError);
  for (auto s : {CellStatus::ok, CellStatus::band_empty, CellStatus::propagator_error, CellStatus::missing_input})
    EXPECT_EQ(parse_status(to_string(s)), s);
}
