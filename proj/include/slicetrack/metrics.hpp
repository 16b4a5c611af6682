#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "slicetrack/core.hpp"
#include "slicetrack/prompts.hpp"

namespace slicetrack {

/// 2|A∩B| / (|A|+|B|).  An empty prediction scores 0.  Throws
/// DimensionMismatch on differing dims and PreconditionError on an empty
/// ground truth.
double dice(const BinaryGrid& pred, const BinaryGrid& gt);

std::size_t volume_voxels(const BinaryGrid& mask);

inline constexpr std::size_t kMinOrganVoxels = 100;

struct ExclusionEntry {
  std::string scan_id;
  Organ organ = Organ::liver;
  std::size_t volume = 0;
};

template <typename M>
struct ExclusionResult {
  std::vector<M> kept;
  std::vector<ExclusionEntry> excluded;
};

/// True when a mask is too small to score (volume <= threshold).
inline bool is_excluded(std::size_t volume, std::size_t threshold = kMinOrganVoxels) { return volume <= threshold; }

ExclusionResult<LabelMask> exclude_small(std::vector<LabelMask> masks, const std::string& scan_id,
                                         std::size_t threshold = kMinOrganVoxels);

struct LevelAreas {
  std::size_t caudal = 0;
  std::size_t mid = 0;
  std::size_t cranial = 0;

  friend bool operator==(const LevelAreas&, const LevelAreas&) = default;
};

/// Cross-section pixel counts at the three percentile start slices.
LevelAreas area_at_levels(const BinaryGrid& mask);

// ---------------------------------------------------------------------------
// Result rows

enum class CellStatus { ok, band_empty, propagator_error, missing_input };

std::string_view to_string(CellStatus s);
CellStatus parse_status(std::string_view s);

struct DiceRecord {
  std::string scan_id;
  std::string institution;
  Organ organ = Organ::liver;
  ApproachLevel approach = ApproachLevel::caudal;
  bool negatives_used = true;
  std::uint64_t seed = 0;
  double dsc = 0.0;
  std::size_t gt_volume = 0;
  CellStatus status = CellStatus::ok;
};

inline constexpr const char* kResultsHeader =
    "scan_id,institution,organ,approach,negatives_used,seed,dsc,gt_volume,status";

/// One CSV line (no newline).  DSC uses 17 significant digits so rows
/// round-trip exactly.
std::string to_csv_row(const DiceRecord& r);
DiceRecord parse_csv_row(const std::vector<std::string>& fields);

std::vector<DiceRecord> read_results(const std::filesystem::path& path);
void write_results(const std::filesystem::path& path, const std::vector<DiceRecord>& rows);

}  // namespace slicetrack
