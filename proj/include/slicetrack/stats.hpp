#pragma once

#include <span>
#include <string>
#include <vector>

#include "slicetrack/core.hpp"

namespace slicetrack::stats {

enum class Method { exact, normal_approx };

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  Method method = Method::exact;
  int n_effective = 0;
  /// Set when the test has no information (all paired differences zero).
  bool degenerate = false;
};

/// Two equal-length samples aligned by a unique key per pair.
struct PairedSample {
  std::vector<std::string> keys;
  std::vector<double> a;
  std::vector<double> b;
};

/// Validates lengths and key uniqueness.
PairedSample make_paired_sample(std::vector<std::string> keys, std::vector<double> a, std::vector<double> b);

/// Average (mid) ranks, 1-based; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> v);

inline constexpr int kExactMaxN = 25;

/// Two-sided Wilcoxon signed-rank test on d = a - b.  Zero differences are
/// dropped; |d| gets average ranks; statistic W = min(W+, W-).  For n <= 25
/// the p-value is exact over all 2^n sign assignments of the (tied) ranks:
/// p = min(1, 2 P(T+ <= W)).  Above that, the normal approximation with tie
/// and continuity corrections.
TestResult wilcoxon_signed_rank(const PairedSample& pairs);
TestResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

/// Spearman's rank correlation (Pearson on average ranks) with a two-sided
/// Student-t p-value on n-2 degrees of freedom; statistic holds r_s.
/// Throws PreconditionError for n < 3, unequal lengths or a constant input.
TestResult spearman(std::span<const double> x, std::span<const double> y);

/// p < alpha / m.
bool bonferroni_gate(double p, int m = 3, double alpha = 0.05);

// Descriptive helpers used by the report tables.
double mean(std::span<const double> v);
double median(std::span<const double> v);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> v);
/// Linear-interpolation quantile on the sorted sample (the numpy default).
double quantile(std::span<const double> v, double q);

}  // namespace slicetrack::stats
