#include "slicetrack/prompts.hpp"

#include <algorithm>

#include "slicetrack/kernels.hpp"
#include "slicetrack/rng.hpp"

namespace slicetrack {

std::string_view to_string(ApproachLevel level) {
  switch (level) {
    case ApproachLevel::caudal: return "caudal";
    case ApproachLevel::mid: return "mid";
    case ApproachLevel::cranial: return "cranial";
  }
  return "?";
}

ApproachLevel parse_level(std::string_view s) {
  if (s == "caudal") return ApproachLevel::caudal;
  if (s == "mid") return ApproachLevel::mid;
  if (s == "cranial") return ApproachLevel::cranial;
  throw SchemaError("unknown approach level '" + std::string(s) + "'");
}

PromptSet PromptSet::without_negatives() const {
  PromptSet p = *this;
  p.negatives.clear();
  p.negative_shortfall = 0;
  return p;
}

namespace {

nlohmann::json points_json(const std::vector<Point>& pts) {
  auto arr = nlohmann::json::array();
  for (const auto& p : pts) arr.push_back({p.x, p.y});
  return arr;
}

std::vector<Point> points_from_json(const nlohmann::json& arr) {
  std::vector<Point> pts;
  for (const auto& p : arr) {
    if (!p.is_array() || p.size() != 2) throw SchemaError("prompt point must be [x, y]");
    pts.push_back({p[0].get<int>(), p[1].get<int>()});
  }
  return pts;
}

}  // namespace

nlohmann::json to_json(const PromptSet& p) {
  nlohmann::json j;
  j["start_z"] = p.start_z;
  j["level"] = std::string(to_string(p.level));
  j["positives"] = points_json(p.positives);
  j["negatives"] = points_json(p.negatives);
  j["seed"] = p.seed;
  return j;
}

PromptSet prompt_set_from_json(const nlohmann::json& j) {
  try {
    PromptSet p;
    p.start_z = j.at("start_z").get<int>();
    p.level = parse_level(j.at("level").get<std::string>());
    p.positives = points_from_json(j.at("positives"));
    p.negatives = points_from_json(j.at("negatives"));
    p.seed = j.at("seed").get<std::uint64_t>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("prompt set: ") + e.what());
  }
}

int PercentileSlices::at(ApproachLevel level) const {
  switch (level) {
    case ApproachLevel::caudal: return caudal;
    case ApproachLevel::mid: return mid;
    case ApproachLevel::cranial: return cranial;
  }
  return mid;
}

PercentileSlices percentile_slices(const BinaryGrid& mask) {
  const auto counts = mask.slice_counts();
  std::size_t n = 0;
  for (auto c : counts) n += c;
  if (n == 0) throw PreconditionError("percentile_slices: mask is empty");

  // rank k = ceil(q/4 * n), 1-based, for q = 1, 2, 3
  auto z_at_rank = [&](std::size_t k) {
    std::size_t seen = 0;
    for (std::size_t z = 0; z < counts.size(); ++z) {
      seen += counts[z];
      if (seen >= k) return static_cast<int>(z);
    }
    return static_cast<int>(counts.size()) - 1;
  };
  auto rank = [n](std::size_t quarters) { return (quarters * n + 3) / 4; };
  return PercentileSlices{z_at_rank(rank(1)), z_at_rank(rank(2)), z_at_rank(rank(3))};
}

Mask2D dilate(const Mask2D& mask, int radius) {
  if (radius < 0) throw PreconditionError("dilation radius must be >= 0");
  Mask2D out(mask.width, mask.height);
  kernels::parallel::dilate_chebyshev(mask.pixels, mask.width, mask.height, radius, out.pixels);
  return out;
}

Mask2D erode(const Mask2D& mask, int radius) {
  if (radius < 0) throw PreconditionError("erosion radius must be >= 0");
  // erosion = complement of the dilated complement, with the outside as background
  Mask2D inv(mask.width, mask.height);
  for (std::size_t i = 0; i < inv.pixels.size(); ++i) inv.pixels[i] = mask.pixels[i] ? 0 : 1;
  Mask2D grown = dilate(inv, radius);
  Mask2D out(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const bool near_edge = x < radius || y < radius || x >= mask.width - radius || y >= mask.height - radius;
      out.set(x, y, !grown.get(x, y) && !near_edge);
    }
  }
  return out;
}

Mask2D negative_band(const Mask2D& mask) {
  const Mask2D outer = dilate(mask, 3);
  const Mask2D inner = dilate(mask, 1);
  Mask2D band(mask.width, mask.height);
  for (std::size_t i = 0; i < band.pixels.size(); ++i) band.pixels[i] = (outer.pixels[i] && !inner.pixels[i]) ? 1 : 0;
  return band;
}

namespace {

std::vector<Point> pixels_of(const Mask2D& m) {
  std::vector<Point> pts;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.get(x, y)) pts.push_back({x, y});
  return pts;
}

std::vector<Point> sample(std::vector<Point> pool, int k, Xoshiro256& rng) {
  const auto take = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(std::max(0, k)));
  partial_shuffle(std::span<Point>(pool), take, rng);
  pool.resize(take);
  return pool;
}

}  // namespace

PromptSet build_prompt_set(const BinaryGrid& mask, ApproachLevel level, int n_pos, int n_neg, std::uint64_t seed) {
  if (n_pos < 1) throw PreconditionError("at least one positive prompt is required");
  if (n_neg < 0) throw PreconditionError("negative prompt count must be >= 0");
  const PercentileSlices slices = percentile_slices(mask);

  PromptSet p;
  p.level = level;
  p.seed = seed;
  p.start_z = slices.at(level);

  const Mask2D cross_section = mask.slice(p.start_z);
  Xoshiro256 rng(seed);
  p.positives = sample(pixels_of(cross_section), n_pos, rng);
  p.positive_shortfall = n_pos - static_cast<int>(p.positives.size());

  if (n_neg > 0) {
    auto band = pixels_of(negative_band(cross_section));
    if (band.empty())
      throw BandEmptyError("negative band is empty on slice " + std::to_string(p.start_z));
    p.negatives = sample(std::move(band), n_neg, rng);
    p.negative_shortfall = n_neg - static_cast<int>(p.negatives.size());
  }
  return p;
}

}  // namespace slicetrack
