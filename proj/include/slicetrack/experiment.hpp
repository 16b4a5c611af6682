#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slicetrack/bridge.hpp"
#include "slicetrack/core.hpp"
#include "slicetrack/metrics.hpp"
#include "slicetrack/preprocess.hpp"
#include "slicetrack/propagation.hpp"

namespace slicetrack::experiment {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Manifest

struct ScanEntry {
  std::string scan_id;
  std::string institution;
  std::string study_type;
  std::string age;
  std::string gender;
  fs::path ct;
  std::map<Organ, fs::path> masks;

  friend bool operator==(const ScanEntry&, const ScanEntry&) = default;
};

struct InstitutionSample {
  std::string institution;
  std::size_t available = 0;
  std::size_t kept = 0;

  friend bool operator==(const InstitutionSample&, const InstitutionSample&) = default;
};

struct Manifest {
  fs::path root;
  std::uint64_t seed = 0;
  std::size_t max_per_institution = 20;
  std::vector<ScanEntry> scans;  // sorted by scan id
  std::vector<InstitutionSample> sampling;
  std::vector<std::string> excluded_angiography;
  std::vector<std::string> missing_volume;  // listed in the metadata but without ct.nii.gz

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

inline constexpr std::size_t kMaxPerInstitution = 20;

/// CT angiography by study type: "angio" anywhere, or a "cta" word.
bool is_ct_angiography(std::string_view study_type);

/// Dataset layout: <root>/<image_id>/ct.nii.gz and
/// <root>/<image_id>/segmentations/<organ>.nii.gz.
fs::path ct_path(const fs::path& root, const std::string& scan_id);
fs::path mask_path(const fs::path& root, const std::string& scan_id, Organ organ);

/// Reads the metadata table (columns image_id, institute, study_type, age,
/// gender; ',' or ';' separated), drops CT angiography rows and rows without a
/// volume on disk, then keeps a uniform random sample of at most `cap` scans
/// per institution.  Deterministic in `seed`.
Manifest build_manifest(const fs::path& root, const fs::path& metadata, std::size_t cap = kMaxPerInstitution,
                        std::uint64_t seed = 0);

nlohmann::json to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const fs::path& path, const Manifest& m);
Manifest read_manifest(const fs::path& path);

// ---------------------------------------------------------------------------
// Phantoms

enum class ShapeKind { ellipsoid, cylinder };

/// Ellipsoid: ((x-cx)/a)^2 + ((y-cy)/b)^2 + ((z-cz)/c)^2 <= 1 at voxel centres.
/// Cylinder: elliptic cross-section (a, b) in the axial plane, |z-cz| <= c.
struct ShapeSpec {
  Organ organ = Organ::liver;
  ShapeKind kind = ShapeKind::ellipsoid;
  std::array<double, 3> center{};
  std::array<double, 3> semi_axes{};
  float hu = 150.0f;
};

struct PhantomSpec {
  Dims dims{128, 96, 48};
  Spacing spacing{1.5, 1.5, 2.0};
  float background_hu = -50.0f;
  /// Uniform noise amplitude added to every voxel, in HU.
  float noise_hu = 0.0f;
  std::vector<ShapeSpec> shapes;
};

struct Phantom {
  Volume volume;
  std::vector<LabelMask> masks;  // one per shape, in spec order
};

bool inside(const ShapeSpec& shape, double x, double y, double z);

/// Paints the shapes (later shapes win where they overlap) over the
/// background and emits the exact per-shape masks.  Throws PreconditionError
/// on an empty shape list or invalid dims.
Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed);

/// Eight separated organ shapes, every organ at least 200 HU above the background.
PhantomSpec default_phantom_spec();

struct PhantomDatasetOptions {
  int scans = 4;
  int institutions = 2;
  /// Per-scan random shift of every shape centre, in voxels.
  double jitter = 2.0;
  PhantomSpec base = default_phantom_spec();
};

/// Writes phantom scans in the dataset layout plus meta.csv; returns the ids.
std::vector<std::string> write_phantom_dataset(const fs::path& root, const PhantomDatasetOptions& options,
                                               std::uint64_t seed);

// ---------------------------------------------------------------------------
// Runs

enum class PropagatorKind { replay, reference, bridge };

std::string_view to_string(PropagatorKind k);
PropagatorKind parse_propagator_kind(std::string_view s);

/// Builds the propagator for one cell.  `cropped_gt` is the ground truth on
/// the cropped stack (only the replay propagator looks at it).
using PropagatorFactory = std::function<std::unique_ptr<Propagator>(const BinaryGrid& cropped_gt)>;

struct RunConfig {
  WindowSpec window;
  std::vector<ApproachLevel> levels{kAllLevels.begin(), kAllLevels.end()};
  int n_pos = kDefaultPositives;
  int n_neg = kDefaultNegatives;
  /// Also run every cell without negative prompts.
  bool ablation = true;
  PropagatorKind propagator = PropagatorKind::reference;
  ReferenceTrackerConfig reference;
  bridge::BridgeConfig bridge;
  std::uint64_t master_seed = 0;
  fs::path output_dir = "results";
  /// 0 uses the OpenMP default.
  int workers = 0;
  /// Extra slices kept on each side of the organ's z range.
  int crop_margin = 2;
  std::size_t min_voxels = kMinOrganVoxels;
  /// Stop after this many new cells (simulates an interrupted run).
  std::optional<std::size_t> max_new_cells;
  /// Overrides `propagator` when set.
  PropagatorFactory factory;
};

nlohmann::json to_json(const RunConfig& c);

inline constexpr const char* kResultsFile = "results.csv";
inline constexpr const char* kExclusionsFile = "exclusions.csv";
inline constexpr const char* kAreasFile = "areas.csv";
inline constexpr const char* kRunConfigFile = "run_config.json";

/// Per-cell prompt seed.  The key covers (scan, organ, level) but not the
/// negatives arm, so both arms share their positive points.
std::uint64_t cell_seed(std::uint64_t master, const std::string& scan_id, Organ organ, ApproachLevel level);

struct RunSummary {
  std::size_t rows = 0;       // rows in the final results file
  std::size_t new_cells = 0;  // computed by this invocation
  std::size_t skipped = 0;    // already present
  std::size_t failed = 0;     // rows with a non-ok status
  std::size_t excluded = 0;   // masks below the volume threshold
  bool complete = false;
};

/// Runs every (scan, organ, level, arm) cell not yet in
/// <output_dir>/results.csv.  Cell failures are recorded as statuses; the
/// batch continues.  A complete run rewrites the file in canonical order
/// (scan, organ, level, negatives-first), so resumed and uninterrupted runs
/// end byte-identical.
RunSummary run_experiment(const Manifest& manifest, const RunConfig& config);

/// Canonical row order.
void sort_records(std::vector<DiceRecord>& rows);

/// Reads results, tolerating a truncated last line from an interrupted run.
std::vector<DiceRecord> load_partial_results(const fs::path& path);

// ---------------------------------------------------------------------------
// Reports

struct Describe {
  std::size_t n = 0;
  double mean = 0, median = 0, std = 0, min = 0, max = 0;
};

Describe describe(std::span<const double> v);

struct VolumeRow {
  Organ organ;
  Describe volume;
};

struct DscRow {
  Organ organ;
  ApproachLevel approach;
  Describe dsc;
};

struct WilcoxonRow {
  std::string scope;  // organ name
  ApproachLevel first;
  ApproachLevel second;
  std::size_t n_pairs = 0;
  double statistic = 0;
  double p_value = 1;
  bool exact = true;
  bool degenerate = false;
  bool significant = false;  // Bonferroni over the three comparisons
};

struct SpearmanRow {
  std::string scope;  // organ name or "pooled"
  ApproachLevel approach;
  std::size_t n = 0;
  std::optional<double> r_s;
  std::optional<double> p_value;
};

struct NegativesRow {
  Organ organ;
  ApproachLevel approach;
  Describe with_neg;
  Describe without_neg;
  double mean_diff = 0;    // with - without
  double median_diff = 0;  // median of paired differences
  std::size_t n_pairs = 0;
  double p_value = 1;
  bool degenerate = false;
};

struct BoxRow {
  Organ organ;
  ApproachLevel approach;
  bool negatives_used = true;
  std::size_t n = 0;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

struct AreaRow {
  Organ organ;
  std::size_t n = 0;
  double caudal = 0, mid = 0, cranial = 0;
};

struct ReportBundle {
  std::vector<VolumeRow> volumes;
  std::vector<DscRow> dsc;
  std::vector<WilcoxonRow> wilcoxon;
  std::vector<SpearmanRow> spearman;
  std::vector<NegativesRow> negatives;
  std::vector<BoxRow> boxplot;
  std::vector<AreaRow> areas;
  std::size_t failed_cells = 0;
};

/// Pure function of the rows.  Statistics use ok rows only; the approach
/// tables and correlations use the with-negatives arm.
ReportBundle summarize(const std::vector<DiceRecord>& rows, const std::vector<std::vector<std::string>>& area_rows = {});

/// Reads results.csv (and areas.csv beside it when present), writes
/// table1_volumes.csv, table2_dsc.csv, table2_wilcoxon.csv,
/// table3_spearman.csv, table4_negatives.csv, boxplot.csv, [areas.csv
/// summary] and report.md into `out_dir`.
ReportBundle summarize_files(const fs::path& results_csv, const fs::path& out_dir);

void write_report(const ReportBundle& bundle, const fs::path& out_dir);

}  // namespace slicetrack::experiment
