#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpuq/domain.hpp"
#include "fpuq/ensemble.hpp"
#include "fpuq/features.hpp"
#include "fpuq/gnn.hpp"
#include "fpuq/lpdm.hpp"
#include "fpuq/molefrac.hpp"
#include "fpuq/postprocess.hpp"
#include "fpuq/synthmet.hpp"
#include "fpuq/train.hpp"

namespace fpuq {

/// Release sampling and split sizes.
struct DatasetConfig {
    std::uint64_t seed = 5;
    double t_start = 96.0;  // h
    double t_end = 840.0;
    double altitude = 50.0;  // m
    SplitCounts splits;
    std::size_t patch_side = kDefaultPatchSide;

    void validate() const;
};

struct EnsembleConfig {
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4};
    CvSpace cv_space = CvSpace::linear;

    void validate() const;
};

struct AnalysisConfig {
    std::size_t coarse_factor = 4;  // mole-fraction maps merge factor x factor cells
};

/// Locations of each stage's outputs, relative to the run directory.
struct PathsConfig {
    std::string met = "met/met.bin";
    std::string dataset = "dataset";
    std::string models = "models";
    std::string ensemble = "ensemble";
    std::string molefrac = "molefrac";
    std::string analysis = "analysis";
    std::string report = "report";
};

struct PipelineConfig {
    GridSpec grid;
    MetConfig met;
    SimConfig sim;
    DatasetConfig dataset;
    FeatureSpec features;
    Hyperparams model;  // in_channels and side are derived from features and dataset.patch_side
    TrainConfig train;
    EnsembleConfig ensemble;
    PostprocessConfig postprocess;
    FluxConfig flux;
    AnalysisConfig analysis;
    PathsConfig paths;

    void validate() const;
    /// Every field, defaults included.
    nlohmann::json to_json() const;
    /// FNV-1a of the canonical dump of to_json(); stamped into output headers.
    std::uint64_t hash() const;
    /// Met time span covering every release, its backward integration and feature lags.
    TimeRange met_range() const;
};

/// Parses and validates. Errors carry "<source>:<line>:" and the key path;
/// unknown keys are rejected.
PipelineConfig config_from_json_text(const std::string& text, const std::string& source = "<config>");
PipelineConfig load_config(const std::filesystem::path& path);

std::string hex_hash(std::uint64_t h);

}  // namespace fpuq
