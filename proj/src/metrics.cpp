#include "slicetrack/metrics.hpp"

#include <cstdio>
#include <fstream>

#include "slicetrack/csv.hpp"
#include "slicetrack/kernels.hpp"

namespace slicetrack {

double dice(const BinaryGrid& pred, const BinaryGrid& gt) {
  if (pred.dims != gt.dims)
    throw DimensionMismatch("dice: prediction " + to_string(pred.dims) + " vs ground truth " + to_string(gt.dims));
  const auto c = kernels::parallel::overlap(pred.voxels, gt.voxels);
  if (c.b == 0) throw PreconditionError("dice: ground truth is empty");
  if (c.a == 0) return 0.0;
  return 2.0 * static_cast<double>(c.both) / static_cast<double>(c.a + c.b);
}

std::size_t volume_voxels(const BinaryGrid& mask) { return mask.count(); }

ExclusionResult<LabelMask> exclude_small(std::vector<LabelMask> masks, const std::string& scan_id,
                                         std::size_t threshold) {
  ExclusionResult<LabelMask> out;
  for (auto& m : masks) {
    const std::size_t v = volume_voxels(m);
    if (is_excluded(v, threshold))
      out.excluded.push_back({scan_id, m.organ, v});
    else
      out.kept.push_back(std::move(m));
  }
  return out;
}

LevelAreas area_at_levels(const BinaryGrid& mask) {
  const auto levels = percentile_slices(mask);
  const auto counts = mask.slice_counts();
  return LevelAreas{counts[static_cast<std::size_t>(levels.caudal)], counts[static_cast<std::size_t>(levels.mid)],
                    counts[static_cast<std::size_t>(levels.cranial)]};
}

// ---------------------------------------------------------------------------

std::string_view to_string(CellStatus s) {
  switch (s) {
    case CellStatus::ok: return "ok";
    case CellStatus::band_empty: return "band_empty";
    case CellStatus::propagator_error: return "propagator_error";
    case CellStatus::missing_input: return "missing_input";
  }
  return "?";
}

CellStatus parse_status(std::string_view s) {
  if (s == "ok") return CellStatus::ok;
  if (s == "band_empty") return CellStatus::band_empty;
  if (s == "propagator_error") return CellStatus::propagator_error;
  if (s == "missing_input") return CellStatus::missing_input;
  throw SchemaError("unknown status '" + std::string(s) + "'");
}

std::string to_csv_row(const DiceRecord& r) {
  char dsc[64];
  std::snprintf(dsc, sizeof(dsc), "%.17g", r.dsc);
  std::string row;
  row += csv::escape(r.scan_id) + ',';
  row += csv::escape(r.institution) + ',';
  row += std::string(organ_name(r.organ)) + ',';
  row += std::string(to_string(r.approach)) + ',';
  row += (r.negatives_used ? "1," : "0,");
  row += std::to_string(r.seed) + ',';
  row += std::string(dsc) + ',';
  row += std::to_string(r.gt_volume) + ',';
  row += std::string(to_string(r.status));
  return row;
}

DiceRecord parse_csv_row(const std::vector<std::string>& f) {
  if (f.size() != 9) throw SchemaError("results row has " + std::to_string(f.size()) + " fields, expected 9");
  try {
    DiceRecord r;
    r.scan_id = f[0];
    r.institution = f[1];
    r.organ = parse_organ(f[2]);
    r.approach = parse_level(f[3]);
    if (f[4] != "0" && f[4] != "1") throw SchemaError("negatives_used must be 0 or 1");
    r.negatives_used = f[4] == "1";
    r.seed = std::stoull(f[5]);
    r.dsc = std::stod(f[6]);
    r.gt_volume = std::stoull(f[7]);
    r.status = parse_status(f[8]);
    return r;
  } catch (const std::logic_error& e) {
    throw SchemaError(std::string("results row: ") + e.what());
  }
}

std::vector<DiceRecord> read_results(const std::filesystem::path& path) {
  const auto table = csv::read_table(path, ',');
  std::vector<DiceRecord> rows;
  rows.reserve(table.rows.size());
  for (const auto& r : table.rows) rows.push_back(parse_csv_row(r));
  return rows;
}

void write_results(const std::filesystem::path& path, const std::vector<DiceRecord>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << kResultsHeader << '\n';
  for (const auto& r : rows) out << to_csv_row(r) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace slicetrack
