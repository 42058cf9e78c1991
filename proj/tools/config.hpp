#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "retloc/experiments.hpp"

namespace retloc::cli {

/// Everything a run needs besides file paths. Read from a JSON document;
/// omitted keys keep their defaults, unknown keys are rejected.
struct PipelineConfig {
  WorldConfig world;
  SensorNoise noise = noise_profile("moderate");
  std::string noise_profile_name = "moderate";
  MappingConfig mapping;
  KMeansConfig kmeans;
  std::size_t knn_k = kDefaultKnnK;
  HypothesisConfig hypothesis;
  EpisodeConfig episode;
  AugmentationConfig augmentation;
  std::uint64_t seed = 1;
};

/// Throws ConfigError on unknown keys, wrong types or invalid values.
PipelineConfig parse_config(const nlohmann::json& doc);
PipelineConfig load_config(const std::string& path);

/// The effective configuration, for the run metadata.
nlohmann::json to_json(const PipelineConfig& c);

/// Applies the single run seed to every seeded component.
void apply_seed(PipelineConfig& c, std::uint64_t seed);

nlohmann::json gmm_to_json(const GmmParams& p);
GmmParams gmm_from_json(const nlohmann::json& doc);

}  // namespace retloc::cli
