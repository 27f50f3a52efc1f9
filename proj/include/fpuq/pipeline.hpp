#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpuq/config.hpp"
#include "fpuq/molefrac.hpp"
#include "fpuq/train.hpp"

namespace fpuq {

namespace fs = std::filesystem;

/// Output layout of a run directory.
struct RunLayout {
    fs::path root;
    PathsConfig paths;

    fs::path met() const { return root / paths.met; }
    fs::path dataset() const { return root / paths.dataset; }
    fs::path manifest() const { return dataset() / "manifest.json"; }
    fs::path models() const { return root / paths.models; }
    fs::path checkpoint(std::uint64_t seed) const { return models() / ("seed_" + std::to_string(seed) + ".ckpt"); }
    fs::path ensemble() const { return root / paths.ensemble; }
    fs::path ensemble_index() const { return ensemble() / "ensemble.json"; }
    fs::path molefrac() const { return root / paths.molefrac; }
    fs::path molefrac_csv() const { return molefrac() / "molefrac.csv"; }
    fs::path analysis() const { return root / paths.analysis; }
    fs::path report() const { return root / paths.report; }
};

/// <ckpt>.epochs.csv
fs::path epoch_log_path(const fs::path& ckpt);

MetField stage_gen_met(const PipelineConfig& cfg, const fs::path& out_file);
/// Uses met_file when non-empty, otherwise regenerates the field from cfg.
DatasetManifest stage_gen_data(const PipelineConfig& cfg, const fs::path& out_dir, const fs::path& met_file = {});
/// Writes <ckpt>, <ckpt>.post.json and <ckpt>.epochs.csv for each seed.
/// Up to jobs trainings run concurrently and share the loaded data.
std::vector<TrainResult> stage_train(const PipelineConfig& cfg, const fs::path& manifest, const std::vector<std::uint64_t>& seeds,
                                     const std::vector<fs::path>& out_ckpts, unsigned jobs = 1);
EnsembleIndex stage_ensemble(const PipelineConfig& cfg, const std::vector<fs::path>& ckpts, const fs::path& manifest,
                             const fs::path& out_dir, const std::string& split = "test");
std::vector<MoleFractionRecord> stage_molefrac(const PipelineConfig& cfg, const fs::path& manifest, const fs::path& ensemble_index,
                                               const fs::path& out_dir);
/// Writes every analysis product under out_dir and returns the JSON summary.
nlohmann::json stage_analyze(const PipelineConfig& cfg, const fs::path& manifest, const fs::path& ensemble_index,
                             const fs::path& molefrac_csv, const fs::path& out_dir, const fs::path& met_file = {});
void stage_report(const PipelineConfig& cfg, const fs::path& analysis_dir, const fs::path& out_dir);

struct BenchReport {
    std::size_t n = 0;
    double oracle_median_s = 0.0;
    double emulator_median_s = 0.0;
    double ratio() const { return oracle_median_s / emulator_median_s; }
    nlohmann::json to_json() const;
};

/// Median wall-clock per footprint of the LPDM oracle and of one emulator
/// member (feature extraction, normalization, forward pass, post-processing).
BenchReport bench(const PipelineConfig& cfg, const fs::path& manifest, const fs::path& ckpt, std::size_t n,
                  const fs::path& met_file = {});

/// gen-met, gen-data, train (all seeds), ensemble, molefrac, analyze, report.
void reproduce(const PipelineConfig& cfg, const fs::path& out, unsigned jobs = 1, bool verbose = true);

}  // namespace fpuq
