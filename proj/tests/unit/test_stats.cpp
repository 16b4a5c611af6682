#include "slicetrack/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

using namespace slicetrack;

namespace {

std::vector<double> zeros(std::size_t n) { return std::vector<double>(n, 0.0); }

}  // namespace

TEST(slicetrack_stats, average_ranks_with_ties) {
  const std::vector<double> v{10, 20, 20, 5, 20};
  EXPECT_EQ(stats::average_ranks(v), (std::vector<double>{2, 4, 4, 1, 4}));
  Xoshiro256 rng(41);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> w(1 + rng.uniform(20));
    for (auto& x : w) x = static_cast<double>(rng.uniform(6));
    EXPECT_EQ(stats::average_ranks(w), oracle::ranks(w));
  }
}

TEST(slicetrack_stats, wilcoxon_smallest_case) {
  const std::vector<double> a{1, 2, 3};
  const auto r = stats::wilcoxon_signed_rank(a, zeros(3));
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_DOUBLE_EQ(r.p_value, 0.25);
  EXPECT_EQ(r.method, stats::Method::exact);
  EXPECT_EQ(r.n_effective, 3);
}

TEST(slicetrack_stats, wilcoxon_reference_values) {
  // Values from an established statistics package.
  const std::vector<double> d{15, 50, -10, 70, 20, 40, -5, 55, 60, -30};
  const auto r = stats::wilcoxon_signed_rank(d, zeros(d.size()));
  EXPECT_EQ(r.statistic, 8.0);
  EXPECT_NEAR(r.p_value, 0.048828125, 1e-15);

  const std::vector<double> big{0.42573,   0.167895,  0.940423,  0.4049,    -0.235669, 0.661595,  1.604,
                                1.247081,  -0.403735, -0.965421, -0.323274, 0.341326,  -2.025031, 0.081208,
                                -0.945911, -0.432267, -0.244259, -0.0163,   0.711631,  1.342513,  0.171465,
                                1.666463,  -0.365195, 0.65151,   1.20347,   0.394012,  -0.443499, -0.621725,
                                -0.157726, 0.520195,  -0.709618, 0.090824,  0.140775,  0.840846,  0.514659,
                                0.655373,  -0.353829, 0.170386,  1.083975,  1.793431};
  const auto n = stats::wilcoxon_signed_rank(big, zeros(big.size()));
  EXPECT_EQ(n.method, stats::Method::normal_approx);
  EXPECT_EQ(n.statistic, 271.0);
  EXPECT_NEAR(n.p_value, 0.06265671766832528, 1e-12);
}

TEST(slicetrack_stats, wilcoxon_exact_matches_enumeration) {
  Xoshiro256 rng(42);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 1 + rng.uniform(12);
    std::vector<double> a(n), b(n);
    for (std::size_t k = 0; k < n; ++k) {
      // Small integer grid: ties and zero differences are common.
      a[k] = static_cast<double>(rng.uniform(7));
      b[k] = static_cast<double>(rng.uniform(7));
    }
    const auto r = stats::wilcoxon_signed_rank(a, b);
    EXPECT_NEAR(r.p_value, oracle::wilcoxon_enumerated_p(a, b), 1e-12);
    EXPECT_GE(r.p_value, 0.0);
    EXPECT_LE(r.p_value, 1.0);
  }
}

TEST(slicetrack_stats, wilcoxon_swap_symmetry_and_degenerate) {
  Xoshiro256 rng(43);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> a(15), b(15);
    for (auto& x : a) x = rng.uniform01();
    for (auto& x : b) x = rng.uniform01();
    EXPECT_DOUBLE_EQ(stats::wilcoxon_signed_rank(a, b).p_value, stats::wilcoxon_signed_rank(b, a).p_value);
  }
  const std::vector<double> same{0.5, 0.7, 0.9};
  const auto d = stats::wilcoxon_signed_rank(same, same);
  EXPECT_TRUE(d.degenerate);
  EXPECT_EQ(d.p_value, 1.0);
  EXPECT_EQ(d.n_effective, 0);
  EXPECT_THROW(stats::wilcoxon_signed_rank(same, zeros(2)), PreconditionError);
}

TEST(slicetrack_stats, normal_approximation_close_to_exact_at_25) {
  Xoshiro256 rng(44);
  for (int i = 0; i < 30; ++i) {
    std::vector<double> d(25);
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = (static_cast<double>(k) + 1.0) * (rng.uniform(3) == 0 ? -1 : 1);
    const auto exact = stats::wilcoxon_signed_rank(d, zeros(25));
    ASSERT_EQ(exact.method, stats::Method::exact);
    const double mn = 25.0 * 26.0 / 4.0, se = std::sqrt(25.0 * 26.0 * 51.0 / 24.0);
    const double w = exact.statistic;
    const double corr = w > mn ? 0.5 : (w < mn ? -0.5 : 0.0);
    const double p_normal = std::min(1.0, std::erfc(std::fabs((w - mn - corr) / se) / std::sqrt(2.0)));
    EXPECT_NEAR(exact.p_value, p_normal, 0.02);
  }
  std::vector<double> d26(26);
  for (std::size_t k = 0; k < d26.size(); ++k) d26[k] = static_cast<double>(k + 1);
  EXPECT_EQ(stats::wilcoxon_signed_rank(d26, zeros(26)).method, stats::Method::normal_approx);
}

TEST(slicetrack_stats, paired_sample_validation) {
  EXPECT_THROW(stats::make_paired_sample({"a", "a"}, {1, 2}, {3, 4}), PreconditionError);
  EXPECT_THROW(stats::make_paired_sample({"a"}, {1, 2}, {3, 4}), PreconditionError);
  const auto p = stats::make_paired_sample({"a", "b", "c"}, {1, 2, 3}, {0, 0, 0});
  EXPECT_DOUBLE_EQ(stats::wilcoxon_signed_rank(p).p_value, 0.25);
}

TEST(slicetrack_stats, spearman_reference_values) {
  const std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, y{2, 1, 4, 3, 7, 5, 6, 9, 8, 10};
  const auto r = stats::spearman(x, y);
  EXPECT_NEAR(r.statistic, 0.9272727272727272, 1e-12);
  EXPECT_NEAR(r.p_value, 0.00011203450639397582, 1e-12);

  const std::vector<double> tx{1, 2, 2, 3, 4, 5, 5, 5, 6, 7, 8, 9}, ty{3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5, 8};
  const auto t = stats::spearman(tx, ty);
  EXPECT_NEAR(t.statistic, 0.5294126057889786, 1e-12);
  EXPECT_NEAR(t.p_value, 0.07671172445149976, 1e-10);
}

TEST(slicetrack_stats, spearman_matches_brute_force) {
  Xoshiro256 rng(45);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 3 + rng.uniform(30);
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = static_cast<double>(rng.uniform(10));
    for (auto& v : y) v = static_cast<double>(rng.uniform(10));
    try {
      const auto r = stats::spearman(x, y);
      EXPECT_NEAR(r.statistic, oracle::spearman_r(x, y), 1e-12);
      EXPECT_GE(r.p_value, 0.0);
      EXPECT_LE(r.p_value, 1.0);
    } catch (const PreconditionError&) {
      EXPECT_TRUE(std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }) ||
                  std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; }));
    }
  }
}

TEST(slicetrack_stats, spearman_monotone_and_errors) {
  const std::vector<double> x{1, 5, 9, 20, 21}, up{0.1, 0.2, 0.5, 0.6, 3}, down{3, 2, 1, 0, -8};
  EXPECT_NEAR(stats::spearman(x, up).statistic, 1.0, 1e-15);
  EXPECT_NEAR(stats::spearman(x, down).statistic, -1.0, 1e-15);
  EXPECT_EQ(stats::spearman(x, up).p_value, 0.0);
  const std::vector<double> flat{1, 1, 1, 1, 1};
  EXPECT_THROW(stats::spearman(x, flat), PreconditionError);
  const std::vector<double> two{1, 2};
  EXPECT_THROW(stats::spearman(two, two), PreconditionError);
  EXPECT_THROW(stats::spearman(x, two), PreconditionError);
}

TEST(slicetrack_stats, bonferroni_gate) {
  EXPECT_TRUE(stats::bonferroni_gate(0.0166));
  EXPECT_FALSE(stats::bonferroni_gate(0.017));
  EXPECT_FALSE(stats::bonferroni_gate(0.05 / 3.0));
  EXPECT_FALSE(stats::bonferroni_gate(0.05, 1));
  EXPECT_TRUE(stats::bonferroni_gate(0.049, 1));
  EXPECT_THROW(stats::bonferroni_gate(0.01, 0), PreconditionError);
}

TEST(slicetrack_stats, descriptive_helpers) {
  const std::vector<double> v{3, 1, 4, 1, 5, 9, 2, 6};
  EXPECT_DOUBLE_EQ(stats::mean(v), 31.0 / 8.0);
  EXPECT_DOUBLE_EQ(stats::median(v), 3.5);
  EXPECT_DOUBLE_EQ(stats::quantile(v, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(stats::quantile(v, 0.75), 5.25);
  EXPECT_DOUBLE_EQ(stats::quantile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(stats::quantile(v, 1.0), 9.0);
  EXPECT_NEAR(stats::stddev(v), 2.748376143938713, 1e-14);
  const std::vector<double> one{7};
  EXPECT_EQ(stats::stddev(one), 0.0);
  EXPECT_EQ(stats::median(one), 7.0);
}
