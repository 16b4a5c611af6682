#include "slicetrack/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <omp.h>

#include "slicetrack/csv.hpp"
#include "slicetrack/nifti.hpp"
#include "slicetrack/rng.hpp"
#include "slicetrack/stats.hpp"

namespace slicetrack::experiment {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string s) {
  s.erase(0, s.find_first_not_of(" \t\r"));
  s.erase(s.find_last_not_of(" \t\r") + 1);
  return s;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifest

bool is_ct_angiography(std::string_view study_type) {
  const std::string s = lower(study_type);
  if (s.find("angio") != std::string::npos) return true;
  std::size_t pos = 0;
  while ((pos = s.find("cta", pos)) != std::string::npos) {
    const bool left = pos == 0 || !std::isalnum(static_cast<unsigned char>(s[pos - 1]));
    const bool right = pos + 3 >= s.size() || !std::isalnum(static_cast<unsigned char>(s[pos + 3]));
    if (left && right) return true;
    pos += 3;
  }
  return false;
}

fs::path ct_path(const fs::path& root, const std::string& scan_id) { return root / scan_id / "ct.nii.gz"; }

fs::path mask_path(const fs::path& root, const std::string& scan_id, Organ organ) {
  return root / scan_id / "segmentations" / (std::string(organ_name(organ)) + ".nii.gz");
}

Manifest build_manifest(const fs::path& root, const fs::path& metadata, std::size_t cap, std::uint64_t seed) {
  const auto table = csv::read_table(metadata);
  const std::size_t c_id = table.column("image_id");
  const std::size_t c_inst = table.column("institute");
  const std::size_t c_study = table.column("study_type");
  const std::size_t c_age = table.column("age");
  const std::size_t c_gender = table.column("gender");
  const std::size_t width = std::max({c_id, c_inst, c_study, c_age, c_gender}) + 1;

  Manifest m;
  m.root = root;
  m.seed = seed;
  m.max_per_institution = cap;

  std::map<std::string, std::vector<ScanEntry>> by_institution;
  std::set<std::string> seen;
  for (const auto& row : table.rows) {
    if (row.size() < width) throw SchemaError("metadata row has " + std::to_string(row.size()) + " fields");
    ScanEntry e;
    e.scan_id = trim(row[c_id]);
    if (e.scan_id.empty()) throw SchemaError("metadata row without image_id");
    if (!seen.insert(e.scan_id).second) throw SchemaError("duplicate image_id '" + e.scan_id + "'");
    e.institution = trim(row[c_inst]);
    e.study_type = trim(row[c_study]);
    e.age = trim(row[c_age]);
    e.gender = trim(row[c_gender]);
    if (is_ct_angiography(e.study_type)) {
      m.excluded_angiography.push_back(e.scan_id);
      continue;
    }
    e.ct = ct_path(root, e.scan_id);
    if (!fs::exists(e.ct)) {
      m.missing_volume.push_back(e.scan_id);
      continue;
    }
    for (Organ o : kAllOrgans) e.masks[o] = mask_path(root, e.scan_id, o);
    by_institution[e.institution].push_back(std::move(e));
  }

  for (auto& [inst, scans] : by_institution) {
    std::sort(scans.begin(), scans.end(), [](const auto& a, const auto& b) { return a.scan_id < b.scan_id; });
    Xoshiro256 rng(derive_seed(seed, "institution:" + inst));
    const std::size_t keep = std::min(cap, scans.size());
    partial_shuffle(std::span(scans), keep, rng);
    m.sampling.push_back({inst, scans.size(), keep});
    for (std::size_t i = 0; i < keep; ++i) m.scans.push_back(std::move(scans[i]));
  }
  std::sort(m.scans.begin(), m.scans.end(), [](const auto& a, const auto& b) { return a.scan_id < b.scan_id; });
  std::sort(m.excluded_angiography.begin(), m.excluded_angiography.end());
  std::sort(m.missing_volume.begin(), m.missing_volume.end());
  return m;
}

nlohmann::json to_json(const Manifest& m) {
  nlohmann::json scans = nlohmann::json::array();
  for (const auto& s : m.scans) {
    nlohmann::json masks = nlohmann::json::object();
    for (const auto& [organ, path] : s.masks) masks[std::string(organ_name(organ))] = path.string();
    scans.push_back({{"scan_id", s.scan_id},
                     {"institution", s.institution},
                     {"study_type", s.study_type},
                     {"age", s.age},
                     {"gender", s.gender},
                     {"ct", s.ct.string()},
                     {"masks", masks}});
  }
  nlohmann::json sampling = nlohmann::json::array();
  for (const auto& s : m.sampling)
    sampling.push_back({{"institution", s.institution}, {"available", s.available}, {"kept", s.kept}});
  return {{"root", m.root.string()},
          {"seed", m.seed},
          {"max_per_institution", m.max_per_institution},
          {"scans", scans},
          {"sampling", sampling},
          {"excluded_angiography", m.excluded_angiography},
          {"missing_volume", m.missing_volume}};
}

Manifest manifest_from_json(const nlohmann::json& j) {
  try {
    Manifest m;
    m.root = j.at("root").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.max_per_institution = j.at("max_per_institution").get<std::size_t>();
    for (const auto& s : j.at("scans")) {
      ScanEntry e;
      e.scan_id = s.at("scan_id").get<std::string>();
      e.institution = s.at("institution").get<std::string>();
      e.study_type = s.value("study_type", "");
      e.age = s.value("age", "");
      e.gender = s.value("gender", "");
      e.ct = s.at("ct").get<std::string>();
      for (const auto& [name, path] : s.at("masks").items()) e.masks[parse_organ(name)] = path.get<std::string>();
      m.scans.push_back(std::move(e));
    }
    for (const auto& s : j.at("sampling"))
      m.sampling.push_back({s.at("institution").get<std::string>(), s.at("available").get<std::size_t>(),
                            s.at("kept").get<std::size_t>()});
    m.excluded_angiography = j.value("excluded_angiography", std::vector<std::string>{});
    m.missing_volume = j.value("missing_volume", std::vector<std::string>{});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("manifest: ") + e.what());
  }
}

void write_manifest(const fs::path& path, const Manifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(m).dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return manifest_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Phantoms

bool inside(const ShapeSpec& s, double x, double y, double z) {
  const double dx = (x - s.center[0]) / s.semi_axes[0];
  const double dy = (y - s.center[1]) / s.semi_axes[1];
  const double dz = (z - s.center[2]) / s.semi_axes[2];
  if (s.kind == ShapeKind::ellipsoid) return dx * dx + dy * dy + dz * dz <= 1.0;
  return dx * dx + dy * dy <= 1.0 && std::fabs(dz) <= 1.0;
}

Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed) {
  if (spec.shapes.empty()) throw PreconditionError("phantom: no shapes");
  if (!spec.dims.valid()) throw PreconditionError("phantom: invalid dims " + to_string(spec.dims));
  for (const auto& s : spec.shapes)
    for (double a : s.semi_axes)
      if (!(a > 0)) throw PreconditionError("phantom: semi-axes must be positive");

  Phantom p;
  p.volume.dims = spec.dims;
  p.volume.data.assign(spec.dims.voxels(), spec.background_hu);
  p.volume.space.spacing = spec.spacing;
  p.volume.space.affine = identity_affine(spec.spacing);
  p.volume.space.qform_code = 1;
  p.volume.space.sform_code = 1;
  p.volume.id = "phantom";

  for (const auto& s : spec.shapes) {
    LabelMask m(spec.dims, s.organ);
    m.space = p.volume.space;
    const int z0 = std::max(0, static_cast<int>(std::floor(s.center[2] - s.semi_axes[2])));
    const int z1 = std::min(spec.dims.nz - 1, static_cast<int>(std::ceil(s.center[2] + s.semi_axes[2])));
    for (int z = z0; z <= z1; ++z)
      for (int y = 0; y < spec.dims.ny; ++y)
        for (int x = 0; x < spec.dims.nx; ++x)
          if (inside(s, x, y, z)) {
            m.set(x, y, z, true);
            p.volume.data[spec.dims.index(x, y, z)] = s.hu;
          }
    p.masks.push_back(std::move(m));
  }

  if (spec.noise_hu > 0) {
    Xoshiro256 rng(seed);
    for (auto& v : p.volume.data)
      v += static_cast<float>((2.0 * rng.uniform01() - 1.0) * spec.noise_hu);
  }
  return p;
}

PhantomSpec default_phantom_spec() {
  PhantomSpec s;
  using enum Organ;
  s.shapes = {
      {liver, ShapeKind::ellipsoid, {30, 40, 24}, {20, 16, 14}, 160.0f},
      {spleen, ShapeKind::ellipsoid, {100, 40, 26}, {12, 10, 10}, 170.0f},
      {kidney_right, ShapeKind::ellipsoid, {30, 78, 20}, {8, 6, 10}, 200.0f},
      {kidney_left, ShapeKind::ellipsoid, {100, 78, 20}, {8, 6, 10}, 200.0f},
      {gallbladder, ShapeKind::cylinder, {62, 20, 26}, {5, 5, 6}, 150.0f},
      {pancreas, ShapeKind::ellipsoid, {68, 60, 22}, {14, 5, 4}, 155.0f},
      {adrenal_gland_right, ShapeKind::ellipsoid, {45, 84, 30}, {4, 3, 5}, 180.0f},
      {adrenal_gland_left, ShapeKind::ellipsoid, {85, 84, 30}, {4, 3, 5}, 180.0f},
  };
  return s;
}

std::vector<std::string> write_phantom_dataset(const fs::path& root, const PhantomDatasetOptions& options,
                                               std::uint64_t seed) {
  if (options.scans < 1 || options.institutions < 1) throw PreconditionError("phantom dataset: need scans and institutions");
  fs::create_directories(root);
  std::vector<std::string> ids;
  std::ostringstream meta;
  meta << "image_id;institute;study_type;age;gender\n";
  for (int i = 0; i < options.scans; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "s%04d", i);
    ids.emplace_back(id);
    Xoshiro256 rng(derive_seed(seed, std::string("phantom:") + id));
    PhantomSpec spec = options.base;
    for (auto& shape : spec.shapes)
      for (int k = 0; k < 3; ++k) shape.center[k] += options.jitter * (2.0 * rng.uniform01() - 1.0);
    const auto phantom = generate_phantom(spec, rng.next());
    Volume vol = phantom.volume;
    vol.id = id;
    fs::create_directories(root / id / "segmentations");
    nifti::save(ct_path(root, id), vol);
    for (const auto& m : phantom.masks) nifti::save(mask_path(root, id, m.organ), m);
    const char inst = static_cast<char>('A' + i % options.institutions);
    meta << id << ';' << inst << ";ct abdomen-pelvis;" << 40 + i % 40 << ';' << (i % 2 ? 'f' : 'm') << '\n';
  }
  std::ofstream out(root / "meta.csv", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (root / "meta.csv").string());
  out << meta.str();
  return ids;
}

// ---------------------------------------------------------------------------
// Runs

std::string_view to_string(PropagatorKind k) {
  switch (k) {
    case PropagatorKind::replay: return "replay";
    case PropagatorKind::reference: return "reference";
    case PropagatorKind::bridge: return "bridge";
  }
  return "?";
}

PropagatorKind parse_propagator_kind(std::string_view s) {
  if (s == "replay") return PropagatorKind::replay;
  if (s == "reference") return PropagatorKind::reference;
  if (s == "bridge") return PropagatorKind::bridge;
  throw PreconditionError("unknown propagator '" + std::string(s) + "'");
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json levels = nlohmann::json::array();
  for (auto l : c.levels) levels.push_back(std::string(to_string(l)));
  return {{"window", {{"level", c.window.level}, {"width", c.window.width}}},
          {"levels", levels},
          {"n_pos", c.n_pos},
          {"n_neg", c.n_neg},
          {"ablation", c.ablation},
          {"propagator", c.factory ? std::string("custom") : std::string(to_string(c.propagator))},
          {"reference", {{"tau", c.reference.tau}, {"erosion_radius", c.reference.erosion_radius},
                         {"bar_radius", c.reference.bar_radius}}},
          {"master_seed", c.master_seed},
          {"crop_margin", c.crop_margin},
          {"min_voxels", c.min_voxels}};
}

std::uint64_t cell_seed(std::uint64_t master, const std::string& scan_id, Organ organ, ApproachLevel level) {
  return derive_seed(master, scan_id + "|" + std::string(organ_name(organ)) + "|" + std::string(to_string(level)));
}

namespace {

using CellKey = std::tuple<std::string, Organ, ApproachLevel, bool>;

CellKey key_of(const DiceRecord& r) { return {r.scan_id, r.organ, r.approach, r.negatives_used}; }

struct LoadedScan {
  std::optional<ImageStack> stack;
  std::map<Organ, LabelMask> masks;
  std::set<Organ> missing;
};

LoadedScan load_scan(const ScanEntry& scan, const WindowSpec& window) {
  LoadedScan out;
  Volume vol;
  try {
    vol = nifti::read_volume(scan.ct);
  } catch (const Error&) {
    for (Organ o : kAllOrgans) out.missing.insert(o);
    return out;
  }
  out.stack = window_to_u8(vol, window);
  for (Organ o : kAllOrgans) {
    const auto it = scan.masks.find(o);
    if (it == scan.masks.end()) {
      out.missing.insert(o);
      continue;
    }
    try {
      auto m = nifti::read_mask(it->second, o);
      if (m.dims != vol.dims) throw DimensionMismatch("mask and volume dims differ");
      out.masks.emplace(o, std::move(m));
    } catch (const Error&) {
      out.missing.insert(o);
    }
  }
  return out;
}

struct CellTask {
  const ScanEntry* scan;
  Organ organ;
  ApproachLevel level;
  bool negatives;
};

std::unique_ptr<Propagator> make_propagator(const RunConfig& c, const BinaryGrid& cropped_gt) {
  if (c.factory) return c.factory(cropped_gt);
  switch (c.propagator) {
    case PropagatorKind::replay: return replay_propagator(cropped_gt);
    case PropagatorKind::reference: return reference_propagator(c.reference);
    case PropagatorKind::bridge: return bridge_propagator(c.bridge);
  }
  throw PreconditionError("no propagator");
}

DiceRecord run_cell(const CellTask& t, const ImageStack& stack, const LabelMask& gt, const RunConfig& c) {
  DiceRecord r;
  r.scan_id = t.scan->scan_id;
  r.institution = t.scan->institution;
  r.organ = t.organ;
  r.approach = t.level;
  r.negatives_used = t.negatives;
  r.seed = cell_seed(c.master_seed, r.scan_id, t.organ, t.level);
  r.gt_volume = volume_voxels(gt);
  try {
    const LabelMask* only[] = {&gt};
    const auto cropped = crop_to_organ_range(stack, std::span<const LabelMask* const>(only), c.crop_margin);
    const int nz = cropped.stack.dims.nz;
    BinaryGrid gt_cropped(cropped.stack.dims);
    const std::size_t plane = gt.dims.slice_pixels();
    std::copy_n(gt.voxels.begin() + static_cast<std::ptrdiff_t>(plane * static_cast<std::size_t>(cropped.z_offset)),
                plane * static_cast<std::size_t>(nz), gt_cropped.voxels.begin());
    const auto prompts =
        build_prompt_set(gt_cropped, t.level, c.n_pos, t.negatives ? c.n_neg : 0, r.seed);
    auto propagator = make_propagator(c, gt_cropped);
    const auto pred = propagate_bidirectional(*propagator, cropped.stack, prompts);
    const auto full = uncrop(pred, gt.dims, cropped.z_offset);
    r.dsc = dice(full, gt);
    r.status = CellStatus::ok;
  } catch (const BandEmptyError&) {
    r.status = CellStatus::band_empty;
  } catch (const std::exception&) {
    r.status = CellStatus::propagator_error;
  }
  return r;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

void sort_records(std::vector<DiceRecord>& rows) {
  std::sort(rows.begin(), rows.end(), [](const DiceRecord& a, const DiceRecord& b) {
    return std::make_tuple(std::cref(a.scan_id), a.organ, a.approach, !a.negatives_used) <
           std::make_tuple(std::cref(b.scan_id), b.organ, b.approach, !b.negatives_used);
  });
}

std::vector<DiceRecord> load_partial_results(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!text.empty() && text.back() != '\n') text.erase(text.rfind('\n') == std::string::npos ? 0 : text.rfind('\n') + 1);
  std::istringstream lines(text);
  std::string line;
  std::vector<DiceRecord> rows;
  if (!std::getline(lines, line)) return rows;
  if (line != kResultsHeader) throw SchemaError(path.string() + ": unexpected header '" + line + "'");
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    rows.push_back(parse_csv_row(csv::split_line(line)));
  }
  return rows;
}

RunSummary run_experiment(const Manifest& manifest, const RunConfig& c) {
  if (c.levels.empty()) throw PreconditionError("run: no approach levels");
  if (c.n_pos < 1) throw PreconditionError("run: n_pos must be >= 1");
  if (c.n_neg < 0) throw PreconditionError("run: n_neg must be >= 0");
  fs::create_directories(c.output_dir);
  write_text(c.output_dir / kRunConfigFile, to_json(c).dump(2) + "\n");

  const fs::path results_path = c.output_dir / kResultsFile;
  std::vector<DiceRecord> rows;
  if (fs::exists(results_path)) rows = load_partial_results(results_path);
  std::set<CellKey> done;
  for (const auto& r : rows) done.insert(key_of(r));
  write_results(results_path, rows);  // drops any torn trailing line

  std::ofstream out(results_path, std::ios::app);
  if (!out) throw IoError("cannot append to " + results_path.string());

  std::vector<bool> arms{true};
  if (c.n_neg == 0)
    arms = {false};
  else if (c.ablation)
    arms.push_back(false);

  RunSummary summary;
  std::vector<ExclusionEntry> exclusions;
  std::vector<std::string> area_lines;
  std::atomic<std::size_t> claimed{0};
  bool interrupted = false;
  const int workers = c.workers > 0 ? c.workers : omp_get_max_threads();

  for (const auto& scan : manifest.scans) {
    const auto loaded = load_scan(scan, c.window);

    std::vector<CellTask> tasks;
    for (Organ o : kAllOrgans) {
      const bool missing = loaded.missing.count(o) > 0;
      if (!missing) {
        const auto& m = loaded.masks.at(o);
        const std::size_t v = volume_voxels(m);
        if (is_excluded(v, c.min_voxels)) {
          exclusions.push_back({scan.scan_id, o, v});
          continue;
        }
        const auto z = percentile_slices(m);
        const auto a = area_at_levels(m);
        area_lines.push_back(csv::escape(scan.scan_id) + ',' + std::string(organ_name(o)) + ',' + std::to_string(v) +
                             ',' + std::to_string(z.caudal) + ',' + std::to_string(z.mid) + ',' +
                             std::to_string(z.cranial) + ',' + std::to_string(a.caudal) + ',' + std::to_string(a.mid) +
                             ',' + std::to_string(a.cranial));
      }
      for (auto level : c.levels)
        for (bool neg : arms) {
          const CellTask t{&scan, o, level, neg};
          if (done.count(CellKey{scan.scan_id, o, level, neg})) {
            ++summary.skipped;
            continue;
          }
          if (missing) {
            if (c.max_new_cells && claimed.load() >= *c.max_new_cells) {
              interrupted = true;
              continue;
            }
            ++claimed;
            DiceRecord r;
            r.scan_id = scan.scan_id;
            r.institution = scan.institution;
            r.organ = o;
            r.approach = level;
            r.negatives_used = neg;
            r.seed = cell_seed(c.master_seed, scan.scan_id, o, level);
            r.status = CellStatus::missing_input;
            out << to_csv_row(r) << '\n' << std::flush;
            rows.push_back(std::move(r));
            ++summary.new_cells;
            continue;
          }
          tasks.push_back(t);
        }
    }

    std::vector<DiceRecord> produced;
    bool scan_interrupted = false;
#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (c.max_new_cells && claimed.fetch_add(1) >= *c.max_new_cells) {
#pragma omp critical(slicetrack_writer)
        scan_interrupted = true;
        continue;
      }
      const auto& t = tasks[i];
      auto r = run_cell(t, *loaded.stack, loaded.masks.at(t.organ), c);
#pragma omp critical(slicetrack_writer)
      {
        out << to_csv_row(r) << '\n' << std::flush;
        produced.push_back(std::move(r));
      }
    }
    interrupted = interrupted || scan_interrupted;
    summary.new_cells += produced.size();
    for (auto& r : produced) rows.push_back(std::move(r));
  }
  out.close();
  if (!out) throw IoError("write failed: " + results_path.string());

  sort_records(rows);
  summary.complete = !interrupted;
  if (summary.complete) write_results(results_path, rows);

  summary.rows = rows.size();
  summary.failed = static_cast<std::size_t>(
      std::count_if(rows.begin(), rows.end(), [](const DiceRecord& r) { return r.status != CellStatus::ok; }));
  summary.excluded = exclusions.size();

  std::string ex = "scan_id,organ,volume\n";
  for (const auto& e : exclusions)
    ex += csv::escape(e.scan_id) + ',' + std::string(organ_name(e.organ)) + ',' + std::to_string(e.volume) + '\n';
  write_text(c.output_dir / kExclusionsFile, ex);

  std::string areas = "scan_id,organ,volume,caudal_z,mid_z,cranial_z,caudal_area,mid_area,cranial_area\n";
  for (const auto& l : area_lines) areas += l + '\n';
  write_text(c.output_dir / kAreasFile, areas);
  return summary;
}

// ---------------------------------------------------------------------------
// Reports

Describe describe(std::span<const double> v) {
  Describe d;
  d.n = v.size();
  if (v.empty()) return d;
  d.mean = stats::mean(v);
  d.median = stats::median(v);
  d.std = stats::stddev(v);
  d.min = *std::min_element(v.begin(), v.end());
  d.max = *std::max_element(v.begin(), v.end());
  return d;
}

namespace {

using ScanValues = std::map<std::string, double>;  // scan id -> value

struct Paired {
  std::vector<std::string> keys;
  std::vector<double> a, b;
};

Paired pair_up(const ScanValues& a, const ScanValues& b) {
  Paired p;
  for (const auto& [k, v] : a) {
    const auto it = b.find(k);
    if (it == b.end()) continue;
    p.keys.push_back(k);
    p.a.push_back(v);
    p.b.push_back(it->second);
  }
  return p;
}

std::vector<double> values(const ScanValues& m) {
  std::vector<double> v;
  v.reserve(m.size());
  for (const auto& [k, x] : m) v.push_back(x);
  return v;
}

}  // namespace

ReportBundle summarize(const std::vector<DiceRecord>& rows, const std::vector<std::vector<std::string>>& area_rows) {
  ReportBundle b;
  // dsc[organ][level][arm] = scan -> dsc
  std::map<Organ, std::map<ApproachLevel, std::map<bool, ScanValues>>> dsc;
  std::map<Organ, ScanValues> volume;
  bool any_with_negatives = false;
  for (const auto& r : rows) {
    if (r.status != CellStatus::ok) {
      ++b.failed_cells;
      if (r.gt_volume > 0) volume[r.organ][r.scan_id] = static_cast<double>(r.gt_volume);
      continue;
    }
    dsc[r.organ][r.approach][r.negatives_used][r.scan_id] = r.dsc;
    volume[r.organ][r.scan_id] = static_cast<double>(r.gt_volume);
    any_with_negatives = any_with_negatives || r.negatives_used;
  }
  const bool main_arm = any_with_negatives;

  for (Organ o : kAllOrgans) {
    const auto vit = volume.find(o);
    if (vit != volume.end()) b.volumes.push_back({o, describe(values(vit->second))});
  }

  for (Organ o : kAllOrgans) {
    const auto oit = dsc.find(o);
    if (oit == dsc.end()) continue;
    auto arm_values = [&](ApproachLevel l, bool arm) -> ScanValues {
      const auto lit = oit->second.find(l);
      if (lit == oit->second.end()) return {};
      const auto ait = lit->second.find(arm);
      return ait == lit->second.end() ? ScanValues{} : ait->second;
    };

    for (auto l : kAllLevels) {
      const auto v = arm_values(l, main_arm);
      if (!v.empty()) b.dsc.push_back({o, l, describe(values(v))});
    }

    const std::pair<ApproachLevel, ApproachLevel> comparisons[] = {
        {ApproachLevel::caudal, ApproachLevel::mid},
        {ApproachLevel::caudal, ApproachLevel::cranial},
        {ApproachLevel::mid, ApproachLevel::cranial}};
    for (const auto& [first, second] : comparisons) {
      const auto p = pair_up(arm_values(first, main_arm), arm_values(second, main_arm));
      WilcoxonRow w{std::string(organ_name(o)), first, second};
      w.n_pairs = p.keys.size();
      if (p.keys.empty()) {
        w.degenerate = true;
      } else {
        const auto t = stats::wilcoxon_signed_rank(p.a, p.b);
        w.statistic = t.statistic;
        w.p_value = t.p_value;
        w.exact = t.method == stats::Method::exact;
        w.degenerate = t.degenerate;
        w.significant = !t.degenerate && stats::bonferroni_gate(t.p_value, 3);
      }
      b.wilcoxon.push_back(std::move(w));
    }

    for (auto l : kAllLevels) {
      const auto with = arm_values(l, true);
      const auto without = arm_values(l, false);
      const auto p = pair_up(with, without);
      if (p.keys.empty()) continue;
      NegativesRow n;
      n.organ = o;
      n.approach = l;
      n.n_pairs = p.keys.size();
      n.with_neg = describe(p.a);
      n.without_neg = describe(p.b);
      std::vector<double> diff(p.a.size());
      for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = p.a[i] - p.b[i];
      n.mean_diff = n.with_neg.mean - n.without_neg.mean;
      n.median_diff = stats::median(diff);
      const auto t = stats::wilcoxon_signed_rank(p.a, p.b);
      n.p_value = t.p_value;
      n.degenerate = t.degenerate;
      b.negatives.push_back(std::move(n));
    }

    for (auto l : kAllLevels)
      for (bool arm : {true, false}) {
        const auto v = values(arm_values(l, arm));
        if (v.empty()) continue;
        BoxRow box{o, l, arm, v.size()};
        box.min = *std::min_element(v.begin(), v.end());
        box.q1 = stats::quantile(v, 0.25);
        box.median = stats::quantile(v, 0.5);
        box.q3 = stats::quantile(v, 0.75);
        box.max = *std::max_element(v.begin(), v.end());
        b.boxplot.push_back(box);
      }
  }

  auto correlate = [](const std::string& scope, ApproachLevel l, const std::vector<double>& x,
                      const std::vector<double>& y) {
    SpearmanRow s;
    s.scope = scope;
    s.approach = l;
    s.n = x.size();
    try {
      const auto t = stats::spearman(x, y);
      s.r_s = t.statistic;
      s.p_value = t.p_value;
    } catch (const PreconditionError&) {
    }
    return s;
  };
  for (auto l : kAllLevels) {
    std::vector<double> px, py;
    bool any = false;
    for (Organ o : kAllOrgans) {
      const auto oit = dsc.find(o);
      if (oit == dsc.end()) continue;
      const auto lit = oit->second.find(l);
      if (lit == oit->second.end()) continue;
      const auto ait = lit->second.find(main_arm);
      if (ait == lit->second.end()) continue;
      std::vector<double> x, y;
      for (const auto& [scan, d] : ait->second) {
        x.push_back(volume.at(o).at(scan));
        y.push_back(d);
      }
      px.insert(px.end(), x.begin(), x.end());
      py.insert(py.end(), y.begin(), y.end());
      any = true;
      b.spearman.push_back(correlate(std::string(organ_name(o)), l, x, y));
    }
    if (any) b.spearman.push_back(correlate("pooled", l, px, py));
  }

  std::map<Organ, std::array<std::vector<double>, 3>> areas;
  for (const auto& r : area_rows) {
    if (r.size() != 9) throw SchemaError("areas row has " + std::to_string(r.size()) + " fields, expected 9");
    try {
      auto& a = areas[parse_organ(r[1])];
      for (int k = 0; k < 3; ++k) a[static_cast<std::size_t>(k)].push_back(std::stod(r[6 + static_cast<std::size_t>(k)]));
    } catch (const std::logic_error& e) {
      throw SchemaError(std::string("areas row: ") + e.what());
    }
  }
  for (Organ o : kAllOrgans) {
    const auto it = areas.find(o);
    if (it == areas.end()) continue;
    b.areas.push_back({o, it->second[0].size(), stats::mean(it->second[0]), stats::mean(it->second[1]),
                       stats::mean(it->second[2])});
  }
  return b;
}

namespace {

std::string describe_cells(const Describe& d) {
  return std::to_string(d.n) + ',' + fmt(d.mean) + ',' + fmt(d.median) + ',' + fmt(d.std) + ',' + fmt(d.min) + ',' +
         fmt(d.max);
}

std::string opt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

std::string comparison_name(ApproachLevel a, ApproachLevel b) {
  return std::string(to_string(a)) + "_vs_" + std::string(to_string(b));
}

}  // namespace

void write_report(const ReportBundle& b, const fs::path& dir) {
  fs::create_directories(dir);
  std::string t1 = "organ,n,mean,median,std,min,max\n";
  for (const auto& r : b.volumes) t1 += std::string(organ_name(r.organ)) + ',' + describe_cells(r.volume) + '\n';
  write_text(dir / "table1_volumes.csv", t1);

  std::string t2 = "organ,approach,n,mean,median,std,min,max\n";
  for (const auto& r : b.dsc)
    t2 += std::string(organ_name(r.organ)) + ',' + std::string(to_string(r.approach)) + ',' + describe_cells(r.dsc) + '\n';
  write_text(dir / "table2_dsc.csv", t2);

  std::string t2w = "organ,comparison,n_pairs,statistic,p_value,method,degenerate,significant\n";
  for (const auto& r : b.wilcoxon)
    t2w += r.scope + ',' + comparison_name(r.first, r.second) + ',' + std::to_string(r.n_pairs) + ',' +
           fmt(r.statistic) + ',' + fmt(r.p_value) + ',' + (r.exact ? "exact" : "normal") + ',' +
           (r.degenerate ? "1" : "0") + ',' + (r.significant ? "1" : "0") + '\n';
  write_text(dir / "table2_wilcoxon.csv", t2w);

  std::string t3 = "scope,approach,n,r_s,p_value\n";
  for (const auto& r : b.spearman)
    t3 += r.scope + ',' + std::string(to_string(r.approach)) + ',' + std::to_string(r.n) + ',' + opt(r.r_s) + ',' +
          opt(r.p_value) + '\n';
  write_text(dir / "table3_spearman.csv", t3);

  std::string t4 =
      "organ,approach,n_pairs,mean_with,mean_without,median_with,median_without,std_with,std_without,mean_diff,"
      "median_diff,p_value,degenerate\n";
  for (const auto& r : b.negatives)
    t4 += std::string(organ_name(r.organ)) + ',' + std::string(to_string(r.approach)) + ',' +
          std::to_string(r.n_pairs) + ',' + fmt(r.with_neg.mean) + ',' + fmt(r.without_neg.mean) + ',' +
          fmt(r.with_neg.median) + ',' + fmt(r.without_neg.median) + ',' + fmt(r.with_neg.std) + ',' +
          fmt(r.without_neg.std) + ',' + fmt(r.mean_diff) + ',' + fmt(r.median_diff) + ',' + fmt(r.p_value) + ',' +
          (r.degenerate ? "1" : "0") + '\n';
  write_text(dir / "table4_negatives.csv", t4);

  std::string box = "organ,approach,negatives_used,n,min,q1,median,q3,max\n";
  for (const auto& r : b.boxplot)
    box += std::string(organ_name(r.organ)) + ',' + std::string(to_string(r.approach)) + ',' +
           (r.negatives_used ? "1" : "0") + ',' + std::to_string(r.n) + ',' + fmt(r.min) + ',' + fmt(r.q1) + ',' +
           fmt(r.median) + ',' + fmt(r.q3) + ',' + fmt(r.max) + '\n';
  write_text(dir / "boxplot.csv", box);

  if (!b.areas.empty()) {
    std::string a = "organ,n,mean_area_caudal,mean_area_mid,mean_area_cranial\n";
    for (const auto& r : b.areas)
      a += std::string(organ_name(r.organ)) + ',' + std::to_string(r.n) + ',' + fmt(r.caudal) + ',' + fmt(r.mid) +
           ',' + fmt(r.cranial) + '\n';
    write_text(dir / "area_summary.csv", a);
  }

  std::ostringstream md;
  md << "# Segmentation report\n\n";
  if (b.failed_cells) md << "Failed cells (excluded from statistics): " << b.failed_cells << "\n\n";
  md << "## Organ volumes (voxels)\n\n| Organ | n | Mean | Median | SD | Min | Max |\n|---|---|---|---|---|---|---|\n";
  for (const auto& r : b.volumes)
    md << "| " << organ_label(r.organ) << " | " << r.volume.n << " | " << fmt(r.volume.mean) << " | "
       << fmt(r.volume.median) << " | " << fmt(r.volume.std) << " | " << fmt(r.volume.min) << " | "
       << fmt(r.volume.max) << " |\n";
  md << "\n## DSC by start slice\n\n| Organ | Approach | n | Mean | Median | SD |\n|---|---|---|---|---|---|\n";
  for (const auto& r : b.dsc)
    md << "| " << organ_label(r.organ) << " | " << to_string(r.approach) << " | " << r.dsc.n << " | "
       << fmt(r.dsc.mean) << " | " << fmt(r.dsc.median) << " | " << fmt(r.dsc.std) << " |\n";
  md << "\n## Pairwise Wilcoxon signed-rank (significant at p < 0.05/3)\n\n"
        "| Organ | Comparison | Pairs | W | p | Significant |\n|---|---|---|---|---|---|\n";
  for (const auto& r : b.wilcoxon)
    md << "| " << r.scope << " | " << comparison_name(r.first, r.second) << " | " << r.n_pairs << " | "
       << fmt(r.statistic) << " | " << (r.degenerate ? std::string("n/a") : fmt(r.p_value)) << " | "
       << (r.significant ? "yes" : "no") << " |\n";
  md << "\n## Spearman correlation, volume vs DSC\n\n| Scope | Approach | n | r_s | p |\n|---|---|---|---|---|\n";
  for (const auto& r : b.spearman)
    md << "| " << r.scope << " | " << to_string(r.approach) << " | " << r.n << " | " << opt(r.r_s) << " | "
       << opt(r.p_value) << " |\n";
  if (!b.negatives.empty()) {
    md << "\n## With vs without negative prompts\n\n"
          "| Organ | Approach | Pairs | Mean with | Mean without | Mean diff | Median diff | p |\n"
          "|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : b.negatives)
      md << "| " << organ_label(r.organ) << " | " << to_string(r.approach) << " | " << r.n_pairs << " | "
         << fmt(r.with_neg.mean) << " | " << fmt(r.without_neg.mean) << " | " << fmt(r.mean_diff) << " | "
         << fmt(r.median_diff) << " | " << (r.degenerate ? std::string("n/a") : fmt(r.p_value)) << " |\n";
  }
  if (!b.areas.empty()) {
    md << "\n## Mean cross-section area at the start slices (pixels)\n\n"
          "| Organ | n | Caudal | Mid | Cranial |\n|---|---|---|---|---|\n";
    for (const auto& r : b.areas)
      md << "| " << organ_label(r.organ) << " | " << r.n << " | " << fmt(r.caudal) << " | " << fmt(r.mid) << " | "
         << fmt(r.cranial) << " |\n";
  }
  write_text(dir / "report.md", md.str());
}

ReportBundle summarize_files(const fs::path& results_csv, const fs::path& out_dir) {
  const auto rows = read_results(results_csv);
  std::vector<std::vector<std::string>> area_rows;
  const auto areas_path = results_csv.parent_path() / kAreasFile;
  if (fs::exists(areas_path)) area_rows = csv::read_table(areas_path, ',').rows;
  auto bundle = summarize(rows, area_rows);
  write_report(bundle, out_dir);
  return bundle;
}

}  // namespace slicetrack::experiment
