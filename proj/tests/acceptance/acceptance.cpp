// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "slicetrack/experiment.hpp"
#include "slicetrack/metrics.hpp"
#include "slicetrack/nifti.hpp"
#include "slicetrack/preprocess.hpp"
#include "slicetrack/prompts.hpp"
#include "slicetrack/stats.hpp"

using namespace slicetrack;
namespace fs = std::filesystem;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

int failures = 0;

void run(const char* name, const std::function<void(Check&)>& body) {
  Check c;
  try {
    body(c);
  } catch (const std::exception& e) {
    c.ok = false;
    c.detail = std::string("exception: ") + e.what();
  }
  if (!c.ok) ++failures;
  std::printf("%s  %-22s %s\n", c.ok ? "PASS" : "FAIL", name, c.detail.c_str());
  std::fflush(stdout);
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("slicetrack_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void windowing(Check& c) {
  Volume v;
  v.dims = {3, 1, 1};
  v.data = {-150.0f, 250.0f, 50.0f};
  const auto s = window_to_u8(v);
  c.require(s.pixels[0] == 0 && s.pixels[1] == 255 && s.pixels[2] == 128, "endpoint values");

  Volume sweep;
  sweep.dims = {4096, 1, 1};
  for (int hu = -1024; hu <= 3071; ++hu) sweep.data.push_back(static_cast<float>(hu));
  const auto w = window_to_u8(sweep);
  for (std::size_t i = 1; i < w.pixels.size(); ++i) c.require(w.pixels[i - 1] <= w.pixels[i], "not monotone");

  Volume big;
  big.dims = {512, 512, 100};
  big.data.resize(big.dims.voxels());
  Xoshiro256 rng(1);
  for (auto& x : big.data) x = static_cast<float>(static_cast<int>(rng.uniform(4096)) - 1024);
  const auto t0 = std::chrono::steady_clock::now();
  const auto out = window_to_u8(big);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.require(out.pixels.size() == big.data.size(), "size");
  c.require(secs < 1.0, "512x512x100 took " + std::to_string(secs) + " s");
  if (c.ok) c.detail = "512x512x100 in " + std::to_string(secs) + " s";
}

void nifti_round_trip(Check& c) {
  Xoshiro256 rng(2);
  int n = 0;
  for (int i = 0; i < 100; ++i) {
    const Dims d{1 + static_cast<int>(rng.uniform(12)), 1 + static_cast<int>(rng.uniform(12)),
                 1 + static_cast<int>(rng.uniform(12))};
    nifti::WriteOptions opt;
    opt.byte_order = i % 2 ? nifti::ByteOrder::big : nifti::ByteOrder::little;
    opt.gzip = (i / 2) % 2 == 1;
    const auto vol = oracle::random_volume(d, rng, i % 3 != 0);
    const auto back = nifti::parse_nifti(nifti::write_nifti(vol, opt));
    c.require(back.dims == vol.dims && back.data == vol.data, "volume " + std::to_string(i));
    LabelMask m(d, Organ::liver);
    m.voxels = oracle::random_grid(d, 0.3, rng).voxels;
    c.require(nifti::load_mask(nifti::write_nifti(m, opt), Organ::liver).voxels == m.voxels,
              "mask " + std::to_string(i));
    ++n;
  }
  c.detail = std::to_string(n) + " volumes and masks";
}

void prompt_geometry(Check& c) {
  Xoshiro256 rng(3);
  int built = 0, band_empty = 0;
  for (int i = 0; i < 500; ++i) {
    const Dims d{10 + static_cast<int>(rng.uniform(30)), 10 + static_cast<int>(rng.uniform(30)),
                 2 + static_cast<int>(rng.uniform(15))};
    const auto g = oracle::random_blob_mask(d, rng);
    const auto level = kAllLevels[static_cast<std::size_t>(i % 3)];
    const std::uint64_t seed = rng.next();
    PromptSet p;
    try {
      p = build_prompt_set(g, level, kDefaultPositives, kDefaultNegatives, seed);
    } catch (const BandEmptyError&) {
      ++band_empty;
      continue;
    }
    ++built;
    const auto slice = g.slice(p.start_z);
    for (const auto& q : p.positives) c.require(slice.get(q.x, q.y), "positive outside mask");
    for (const auto& q : p.negatives) {
      const int dist = oracle::chebyshev_distance(slice, q.x, q.y);
      c.require(dist == 2 || dist == 3, "negative at distance " + std::to_string(dist));
    }
    const auto again = build_prompt_set(g, level, kDefaultPositives, kDefaultNegatives, seed);
    c.require(to_json(p).dump() == to_json(again).dump(), "serialization differs across runs");
  }
  c.require(built > 400, "too few prompt sets built");
  if (c.ok) c.detail = std::to_string(built) + " prompt sets, " + std::to_string(band_empty) + " band-empty";
}

void percentiles(Check& c) {
  Xoshiro256 rng(4);
  for (int i = 0; i < 200; ++i) {
    const Dims d{2 + static_cast<int>(rng.uniform(8)), 2 + static_cast<int>(rng.uniform(8)),
                 1 + static_cast<int>(rng.uniform(60))};
    const auto g = oracle::random_blob_mask(d, rng);
    c.require(percentile_slices(g) == oracle::percentile_slices(g), "mask " + std::to_string(i));
  }
  BinaryGrid single(Dims{5, 5, 9});
  single.set(2, 2, 6);
  single.set(3, 2, 6);
  c.require(percentile_slices(single) == PercentileSlices{6, 6, 6}, "single-slice organ");
  c.detail = "200 masks + single slice";
}

experiment::Manifest phantom_manifest(const fs::path& root, int scans) {
  experiment::PhantomDatasetOptions opt;
  opt.scans = scans;
  opt.institutions = 1;
  experiment::write_phantom_dataset(root, opt, 5);
  return experiment::build_manifest(root, root / "meta.csv", 20, 1);
}

void replay_end_to_end(Check& c) {
  const auto root = scratch("replay");
  const auto manifest = phantom_manifest(root / "data", 1);
  experiment::RunConfig cfg;
  cfg.propagator = experiment::PropagatorKind::replay;
  cfg.output_dir = root / "out";
  experiment::run_experiment(manifest, cfg);
  const auto rows = read_results(cfg.output_dir / experiment::kResultsFile);
  std::size_t exact = 0;
  for (const auto& r : rows)
    if (r.status == CellStatus::ok && r.dsc == 1.0) ++exact;
  c.require(rows.size() == 48 && exact == 48, std::to_string(exact) + "/" + std::to_string(rows.size()));
  if (c.ok) c.detail = "48/48 cells at DSC 1.0";
  fs::remove_all(root);
}

void reference_tracker(Check& c) {
  const auto spec = experiment::default_phantom_spec();
  for (const auto& s : spec.shapes)
    c.require(std::abs(s.hu - spec.background_hu) >= 200.0f, "HU gap below 200");

  const auto root = scratch("reference");
  const auto manifest = phantom_manifest(root / "data", 1);
  std::string first;
  double worst = 1.0;
  for (int pass = 0; pass < 2; ++pass) {
    experiment::RunConfig cfg;
    cfg.propagator = experiment::PropagatorKind::reference;
    cfg.output_dir = root / ("out" + std::to_string(pass));
    experiment::run_experiment(manifest, cfg);
    std::ifstream in(cfg.output_dir / experiment::kResultsFile);
    std::stringstream ss;
    ss << in.rdbuf();
    if (pass == 0) {
      first = ss.str();
      const auto rows = read_results(cfg.output_dir / experiment::kResultsFile);
      c.require(rows.size() == 48, "expected 48 cells");
      for (const auto& r : rows) {
        c.require(r.status == CellStatus::ok, "cell failed");
        worst = std::min(worst, r.dsc);
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%s %s DSC %.4f", std::string(organ_name(r.organ)).c_str(),
                      std::string(to_string(r.approach)).c_str(), r.dsc);
        c.require(r.dsc >= 0.95, buf);
      }
    } else {
      c.require(ss.str() == first, "results differ between runs");
    }
  }
  if (c.ok) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "min DSC %.4f over 8 organs x 6 cells", worst);
    c.detail = buf;
  }
  fs::remove_all(root);
}

void dice_oracle(Check& c) {
  Xoshiro256 rng(6);
  for (int i = 0; i < 1000; ++i) {
    const Dims d{1 + static_cast<int>(rng.uniform(16)), 1 + static_cast<int>(rng.uniform(16)),
                 1 + static_cast<int>(rng.uniform(8))};
    const auto gt = oracle::random_blob_mask(d, rng);
    const auto pred = oracle::random_grid(d, rng.uniform01(), rng);
    c.require(dice(pred, gt) == oracle::dice(pred, gt), "pair " + std::to_string(i));
    c.require(dice(gt, gt) == 1.0, "dice(a,a) != 1");
    BinaryGrid complement(d);
    for (std::size_t k = 0; k < gt.voxels.size(); ++k) complement.voxels[k] = gt.voxels[k] ? 0 : 1;
    c.require(dice(complement, gt) == 0.0, "disjoint != 0");
  }
  c.detail = "1000 pairs";
}

void wilcoxon(Check& c) {
  Xoshiro256 rng(7);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 1 + rng.uniform(12);
    std::vector<double> a(n), b(n);
    for (std::size_t k = 0; k < n; ++k) {
      a[k] = static_cast<double>(rng.uniform(9)) / 8.0;
      b[k] = static_cast<double>(rng.uniform(9)) / 8.0;
    }
    const double p = stats::wilcoxon_signed_rank(a, b).p_value;
    c.require(std::abs(p - oracle::wilcoxon_enumerated_p(a, b)) <= 1e-12, "sample " + std::to_string(i));
  }
  const std::vector<double> d{1, 2, 3}, z{0, 0, 0};
  c.require(std::abs(stats::wilcoxon_signed_rank(d, z).p_value - 0.25) <= 1e-15, "{1,2,3} p != 0.25");
  c.require(stats::bonferroni_gate(0.0166) && !stats::bonferroni_gate(0.017) &&
                !stats::bonferroni_gate(0.05 / 3.0),
            "Bonferroni gate");
  c.detail = "200 samples, n <= 12";
}

void spearman(Check& c) {
  Xoshiro256 rng(8);
  int tested = 0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 3 + rng.uniform(40);
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = static_cast<double>(rng.uniform(12));
    for (auto& v : y) v = static_cast<double>(rng.uniform(12));
    try {
      c.require(std::abs(stats::spearman(x, y).statistic - oracle::spearman_r(x, y)) <= 1e-12,
                "sample " + std::to_string(i));
      ++tested;
    } catch (const PreconditionError&) {
    }
  }
  const std::vector<double> x{1, 2, 3, 4, 5, 6}, up{2, 4, 8, 16, 32, 64}, down{9, 7, 5, 3, 1, -1};
  c.require(stats::spearman(x, up).statistic == 1.0, "monotone increasing");
  c.require(stats::spearman(x, down).statistic == -1.0, "monotone decreasing");
  c.detail = std::to_string(tested) + " samples with ties";
}

void exclusion(Check& c) {
  const Dims d{12, 12, 1};
  Xoshiro256 rng(9);
  std::vector<std::size_t> sizes(903);
  for (std::size_t i = 0; i < sizes.size(); ++i) sizes[i] = 101 + rng.uniform(44);
  std::set<std::size_t> small;
  while (small.size() < 12) small.insert(rng.uniform(903));
  for (auto i : small) sizes[i] = rng.uniform(101);

  std::size_t kept = 0, excluded = 0;
  for (std::size_t start = 0; start < sizes.size(); start += 7) {
    std::vector<LabelMask> masks;
    for (std::size_t k = start; k < std::min(start + 7, sizes.size()); ++k) {
      LabelMask m(d, kAllOrgans[k - start]);
      for (std::size_t v = 0; v < sizes[k]; ++v) m.voxels[v] = 1;
      masks.push_back(std::move(m));
    }
    const auto r = exclude_small(std::move(masks), "scan" + std::to_string(start / 7));
    kept += r.kept.size();
    excluded += r.excluded.size();
  }
  c.require(kept == 891 && excluded == 12, std::to_string(kept) + " kept, " + std::to_string(excluded) + " excluded");
  if (c.ok) c.detail = "903 -> 891";
}

}  // namespace

int main() {
  run("windowing", windowing);
  run("nifti-round-trip", nifti_round_trip);
  run("prompt-geometry", prompt_geometry);
  run("percentile-slices", percentiles);
  run("replay-end-to-end", replay_end_to_end);
  run("reference-propagator", reference_tracker);
  run("dice-oracle", dice_oracle);
  run("wilcoxon", wilcoxon);
  run("spearman", spearman);
  run("volume-exclusion", exclusion);
  std::printf("%d failed\n", failures);
  return failures == 0 ? 0 : 1;
}
