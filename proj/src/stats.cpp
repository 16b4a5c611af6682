#include "slicetrack/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <boost/math/distributions/students_t.hpp>

namespace slicetrack::stats {

PairedSample make_paired_sample(std::vector<std::string> keys, std::vector<double> a, std::vector<double> b) {
  if (a.size() != b.size() || keys.size() != a.size())
    throw PreconditionError("paired sample lengths differ: keys " + std::to_string(keys.size()) + ", a " +
                            std::to_string(a.size()) + ", b " + std::to_string(b.size()));
  std::set<std::string> seen;
  for (const auto& k : keys)
    if (!seen.insert(k).second) throw PreconditionError("duplicate pair key '" + k + "'");
  return PairedSample{std::move(keys), std::move(a), std::move(b)};
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

namespace {

// Tie-group sizes of a sorted-or-not sample.
std::vector<std::size_t> tie_groups(std::span<const double> v) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  std::vector<std::size_t> groups;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t j = i;
    while (j + 1 < s.size() && s[j + 1] == s[i]) ++j;
    groups.push_back(j - i + 1);
    i = j + 1;
  }
  return groups;
}

double normal_two_sided(double z) { return std::min(1.0, std::erfc(std::fabs(z) / std::sqrt(2.0))); }

}  // namespace

TestResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw PreconditionError("wilcoxon: samples differ in length");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  TestResult res;
  res.n_effective = static_cast<int>(diffs.size());
  if (diffs.empty()) {
    res.degenerate = true;
    res.p_value = 1.0;
    res.statistic = 0.0;
    return res;
  }

  std::vector<double> abs_d(diffs.size());
  std::transform(diffs.begin(), diffs.end(), abs_d.begin(), [](double d) { return std::fabs(d); });
  const auto ranks = average_ranks(abs_d);

  // Doubled ranks are integers, which keeps the exact distribution discrete.
  std::vector<long> doubled(ranks.size());
  long doubled_plus = 0, doubled_total = 0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    doubled[i] = std::lround(2.0 * ranks[i]);
    doubled_total += doubled[i];
    if (diffs[i] > 0) doubled_plus += doubled[i];
  }
  const long doubled_minus = doubled_total - doubled_plus;
  const long doubled_w = std::min(doubled_plus, doubled_minus);
  res.statistic = static_cast<double>(doubled_w) / 2.0;

  const int n = res.n_effective;
  if (n <= kExactMaxN) {
    res.method = Method::exact;
    // counts[s] = number of sign assignments whose doubled positive-rank sum is s
    std::vector<double> counts(static_cast<std::size_t>(doubled_total) + 1, 0.0);
    counts[0] = 1.0;
    long reach = 0;
    for (long r : doubled) {
      for (long s = reach; s >= 0; --s)
        if (counts[static_cast<std::size_t>(s)] != 0.0) counts[static_cast<std::size_t>(s + r)] += counts[static_cast<std::size_t>(s)];
      reach += r;
    }
    double tail = 0.0;
    for (long s = 0; s <= doubled_w; ++s) tail += counts[static_cast<std::size_t>(s)];
    res.p_value = std::min(1.0, 2.0 * tail / std::ldexp(1.0, n));
    return res;
  }

  res.method = Method::normal_approx;
  const double nn = n;
  const double mn = nn * (nn + 1.0) / 4.0;
  double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
  for (auto t : tie_groups(abs_d)) {
    const double tt = static_cast<double>(t);
    var -= (tt * tt * tt - tt) / 48.0;
  }
  const double se = std::sqrt(var);
  const double w = res.statistic;
  const double correction = w > mn ? 0.5 : (w < mn ? -0.5 : 0.0);
  const double z = se > 0 ? (w - mn - correction) / se : 0.0;
  res.p_value = normal_two_sided(z);
  return res;
}

TestResult wilcoxon_signed_rank(const PairedSample& pairs) {
  if (pairs.a.size() != pairs.b.size()) throw PreconditionError("wilcoxon: samples differ in length");
  return wilcoxon_signed_rank(pairs.a, pairs.b);
}

TestResult spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw PreconditionError("spearman: samples differ in length");
  const std::size_t n = x.size();
  if (n < 3) throw PreconditionError("spearman: need at least 3 pairs");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mx = mean(rx);
  const double my = mean(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw PreconditionError("spearman: correlation undefined for a constant input");
  const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);

  TestResult res;
  res.statistic = r;
  res.n_effective = static_cast<int>(n);
  res.method = Method::exact;
  if (std::fabs(r) >= 1.0) {
    res.p_value = 0.0;
    return res;
  }
  const double dof = static_cast<double>(n - 2);
  const double t = r * std::sqrt(dof / ((1.0 - r) * (1.0 + r)));
  const boost::math::students_t_distribution<double> dist(dof);
  res.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t))));
  return res;
}

bool bonferroni_gate(double p, int m, double alpha) {
  if (m < 1) throw PreconditionError("bonferroni: m must be >= 1");
  return p < alpha / static_cast<double>(m);
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double quantile(std::span<const double> v, double q) {
  if (v.empty()) return 0.0;
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return s[lo] + (s[hi] - s[lo]) * frac;
}

double median(std::span<const double> v) { return quantile(v, 0.5); }

double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace slicetrack::stats
