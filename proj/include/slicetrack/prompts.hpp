#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "slicetrack/core.hpp"

namespace slicetrack {

/// Start-slice choice: the 25th, 50th or 75th percentile of the organ's
/// occupied-voxel z coordinates.
enum class ApproachLevel : std::uint8_t { caudal, mid, cranial };

inline constexpr std::array<ApproachLevel, 3> kAllLevels{ApproachLevel::caudal, ApproachLevel::mid,
                                                         ApproachLevel::cranial};

std::string_view to_string(ApproachLevel level);
ApproachLevel parse_level(std::string_view s);

struct Point {
  int x = 0;
  int y = 0;

  friend bool operator==(const Point&, const Point&) = default;
  friend auto operator<=>(const Point&, const Point&) = default;
};

struct PromptSet {
  int start_z = 0;
  ApproachLevel level = ApproachLevel::caudal;
  std::vector<Point> positives;
  std::vector<Point> negatives;
  std::uint64_t seed = 0;
  // Requested minus delivered, when the region had too few pixels.
  int positive_shortfall = 0;
  int negative_shortfall = 0;

  /// Same start slice and positives, no negatives.
  [[nodiscard]] PromptSet without_negatives() const;
};

/// Wire form: {start_z, level, positives [[x,y]...], negatives [[x,y]...], seed}.
nlohmann::json to_json(const PromptSet& p);
PromptSet prompt_set_from_json(const nlohmann::json& j);

struct PercentileSlices {
  int caudal = 0;
  int mid = 0;
  int cranial = 0;

  [[nodiscard]] int at(ApproachLevel level) const;
  friend bool operator==(const PercentileSlices&, const PercentileSlices&) = default;
};

/// Nearest-rank percentiles (the ceil(p*n)-th smallest) over the multiset of
/// occupied-voxel z coordinates.  Throws PreconditionError on an empty mask.
PercentileSlices percentile_slices(const BinaryGrid& mask);

/// Chebyshev (square structuring element) dilation, clipped to the image.
Mask2D dilate(const Mask2D& mask, int radius);
/// Chebyshev erosion; pixels outside the image count as background.
Mask2D erode(const Mask2D& mask, int radius);

/// Pixels at Chebyshev distance 2 or 3 from the mask: dilate(m,3) minus dilate(m,1).
Mask2D negative_band(const Mask2D& mask);

class BandEmptyError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kDefaultPositives = 5;
inline constexpr int kDefaultNegatives = 5;

/// Positives are drawn first, uniformly without replacement from the start
/// slice cross-section, then negatives from its negative band, all from one
/// xoshiro256** stream seeded with `seed`.
PromptSet build_prompt_set(const BinaryGrid& mask, ApproachLevel level, int n_pos, int n_neg, std::uint64_t seed);

}  // namespace slicetrack
