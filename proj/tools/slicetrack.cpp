#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slicetrack/experiment.hpp"

namespace ex = slicetrack::experiment;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot 3D CT organ segmentation by bidirectional slice propagation"};
  app.require_subcommand(1);

  // manifest
  auto* manifest_cmd = app.add_subcommand("manifest", "Sample a dataset manifest from metadata");
  fs::path m_root, m_meta, m_out = "manifest.json";
  std::size_t m_cap = ex::kMaxPerInstitution;
  std::uint64_t m_seed = 0;
  manifest_cmd->add_option("--root", m_root, "Dataset root (<root>/<id>/ct.nii.gz)")->required();
  manifest_cmd->add_option("--metadata", m_meta, "Metadata CSV; defaults to <root>/meta.csv");
  manifest_cmd->add_option("--max-per-institution", m_cap, "Scans kept per institution")->capture_default_str();
  manifest_cmd->add_option("--seed", m_seed, "Sampling seed")->capture_default_str();
  manifest_cmd->add_option("-o,--out", m_out, "Output manifest JSON")->capture_default_str();

  // phantom
  auto* phantom_cmd = app.add_subcommand("phantom", "Write a synthetic phantom dataset");
  fs::path p_root;
  ex::PhantomDatasetOptions p_opts;
  std::uint64_t p_seed = 0;
  phantom_cmd->add_option("--root", p_root, "Output dataset root")->required();
  phantom_cmd->add_option("--scans", p_opts.scans, "Number of scans")->capture_default_str();
  phantom_cmd->add_option("--institutions", p_opts.institutions, "Number of institutions")->capture_default_str();
  phantom_cmd->add_option("--jitter", p_opts.jitter, "Shape centre jitter in voxels")->capture_default_str();
  phantom_cmd->add_option("--noise", p_opts.base.noise_hu, "Uniform noise amplitude (HU)")->capture_default_str();
  phantom_cmd->add_option("--background", p_opts.base.background_hu, "Background HU")->capture_default_str();
  phantom_cmd->add_option("--seed", p_seed, "Seed")->capture_default_str();

  // run
  auto* run_cmd = app.add_subcommand("run", "Run the segmentation matrix over a manifest");
  fs::path r_manifest;
  ex::RunConfig cfg;
  std::string r_levels = "caudal,mid,cranial";
  std::string r_propagator = "reference";
  bool r_no_ablation = false;
  std::string r_endpoint = slicetrack::bridge::endpoint_from_env();
  std::string r_format = "jpeg";
  long r_timeout_s = 600;
  std::size_t r_max_cells = 0;
  run_cmd->add_option("--manifest", r_manifest, "Manifest JSON")->required();
  run_cmd->add_option("-o,--out", cfg.output_dir, "Output directory")->capture_default_str();
  run_cmd->add_option("--window-level", cfg.window.level, "Window level (HU)")->capture_default_str();
  run_cmd->add_option("--window-width", cfg.window.width, "Window width (HU)")->capture_default_str();
  run_cmd->add_option("--levels", r_levels, "Comma-separated start levels")->capture_default_str();
  run_cmd->add_option("--n-pos", cfg.n_pos, "Positive prompts")->capture_default_str();
  run_cmd->add_option("--n-neg", cfg.n_neg, "Negative prompts")->capture_default_str();
  run_cmd->add_flag("--no-ablation", r_no_ablation, "Skip the arm without negative prompts");
  run_cmd->add_option("--propagator", r_propagator, "replay | reference | bridge")
      ->check(CLI::IsMember({"replay", "reference", "bridge"}))
      ->capture_default_str();
  run_cmd->add_option("--seed", cfg.master_seed, "Master seed")->capture_default_str();
  run_cmd->add_option("-j,--workers", cfg.workers, "Parallel cells (0 = all cores)")->capture_default_str();
  run_cmd->add_option("--crop-margin", cfg.crop_margin, "Slices kept beyond the organ range")->capture_default_str();
  run_cmd->add_option("--min-voxels", cfg.min_voxels, "Exclude masks at or below this volume")->capture_default_str();
  run_cmd->add_option("--max-cells", r_max_cells, "Stop after this many new cells (0 = no limit)");
  run_cmd->add_option("--tau", cfg.reference.tau, "Reference tracker intensity tolerance")->capture_default_str();
  run_cmd->add_option("--erosion", cfg.reference.erosion_radius, "Reference tracker seed erosion")->capture_default_str();
  run_cmd->add_option("--bar-radius", cfg.reference.bar_radius, "Reference tracker negative bar radius")
      ->capture_default_str();
  run_cmd->add_option("--bridge", r_endpoint, "Bridge endpoint (unix:/path or host:port); env SLICETRACK_BRIDGE");
  run_cmd->add_option("--bridge-timeout", r_timeout_s, "Bridge timeout in seconds")->capture_default_str();
  run_cmd->add_option("--bridge-workdir", cfg.bridge.work_dir, "Slice export directory for bridge sessions");
  run_cmd->add_option("--bridge-format", r_format, "jpeg | png")
      ->check(CLI::IsMember({"jpeg", "png"}))
      ->capture_default_str();
  run_cmd->add_option("--jpeg-quality", cfg.bridge.jpeg_quality, "JPEG quality")->capture_default_str();
  run_cmd->add_flag("--keep-slices", cfg.bridge.keep_slices, "Keep exported bridge slices");

  // summarize
  auto* sum_cmd = app.add_subcommand("summarize", "Build report tables from a results CSV");
  fs::path s_results, s_out = "report";
  sum_cmd->add_option("--results", s_results, "results.csv")->required();
  sum_cmd->add_option("-o,--out", s_out, "Report directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*manifest_cmd) {
      const auto meta = m_meta.empty() ? m_root / "meta.csv" : m_meta;
      const auto m = ex::build_manifest(m_root, meta, m_cap, m_seed);
      ex::write_manifest(m_out, m);
      std::printf("%zu scans kept, %zu CT angiography excluded, %zu without a volume\n", m.scans.size(),
                  m.excluded_angiography.size(), m.missing_volume.size());
      for (const auto& s : m.sampling)
        std::printf("  %s: %zu of %zu\n", s.institution.c_str(), s.kept, s.available);
      return 0;
    }
    if (*phantom_cmd) {
      const auto ids = ex::write_phantom_dataset(p_root, p_opts, p_seed);
      std::printf("wrote %zu phantom scans to %s\n", ids.size(), p_root.string().c_str());
      return 0;
    }
    if (*run_cmd) {
      cfg.levels.clear();
      std::size_t pos = 0;
      while (pos <= r_levels.size()) {
        const auto next = r_levels.find(',', pos);
        const auto tok = r_levels.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
        if (!tok.empty()) cfg.levels.push_back(slicetrack::parse_level(tok));
        if (next == std::string::npos) break;
        pos = next + 1;
      }
      cfg.ablation = !r_no_ablation;
      cfg.propagator = ex::parse_propagator_kind(r_propagator);
      if (r_max_cells > 0) cfg.max_new_cells = r_max_cells;
      cfg.bridge.endpoint = r_endpoint;
      cfg.bridge.timeout = std::chrono::seconds(r_timeout_s);
      cfg.bridge.format = slicetrack::parse_slice_format(r_format);
      if (cfg.propagator == ex::PropagatorKind::bridge && cfg.bridge.endpoint.empty()) {
        std::fprintf(stderr, "error: bridge propagator needs --bridge or %s\n", slicetrack::bridge::kEndpointEnv);
        return 2;
      }
      const auto manifest = ex::read_manifest(r_manifest);
      const auto s = ex::run_experiment(manifest, cfg);
      std::printf("%zu rows (%zu new, %zu skipped), %zu failed, %zu masks excluded%s\n", s.rows, s.new_cells,
                  s.skipped, s.failed, s.excluded, s.complete ? "" : ", incomplete");
      return s.failed > 0 ? 1 : 0;
    }
    if (*sum_cmd) {
      const auto b = ex::summarize_files(s_results, s_out);
      std::printf("report written to %s (%zu failed cells ignored)\n", s_out.string().c_str(), b.failed_cells);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
