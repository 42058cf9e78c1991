#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "retloc/fusion.hpp"
#include "retloc/mapdb.hpp"
#include "retloc/posest.hpp"
#include "retloc/vocabulary.hpp"

namespace retloc {

/// Vocabulary from the descriptors of `frames`, subsampled with a fixed
/// stride to at most `max_descriptors`.
KMeansResult train_vocabulary(std::span<const LabeledFrame> frames, const KMeansConfig& config,
                              std::size_t max_descriptors = 20000);

/// Map from geo-tagged frames with depth. Frames without any usable 3D
/// feature are skipped. Throws EmptyDatabase when nothing remains.
MapDatabase build_map(std::span<const LabeledFrame> frames, const Vocabulary& vocab, const MapMetadata& metadata,
                      std::size_t knn_k = kDefaultKnnK, std::size_t max_features = kDefaultMaxFeatures);

/// Map entries for `frames` built under db's vocabulary, ready for augment().
std::vector<MapEntry> build_entries(std::span<const LabeledFrame> frames, const MapDatabase& db,
                                    std::size_t max_features = kDefaultMaxFeatures);

struct LocalizerConfig {
  std::size_t knn_k = kDefaultKnnK;
  HypothesisConfig hypothesis;
  RobustAverageConfig average;
  std::size_t particle_count = 500;
  /// Euler steps per frame when propagating the odometry.
  int motion_substeps = 10;
  UpdateConfig update;
  std::uint64_t seed = 0;
};

struct FrameDiagnostics {
  std::size_t feature_count = 0;
  std::size_t retrieved = 0;
  std::size_t hypothesis_count = 0;
  std::size_t inlier_count = 0;
  HypothesisStats hypothesis_stats;
  std::optional<PlanarPose> consensus;
  bool dead_reckoning = true;
  bool initialized_now = false;
  bool likelihood_underflow = false;
  bool resampled = false;
  double ess = 0.0;
  double step_ms = 0.0;
};

struct LocalizationStep {
  PlanarPose estimate;
  FrameDiagnostics diagnostics;
};

/// Per-run localization state: the map, the measurement model and the
/// particle set. The map is only read; it must outlive the localizer.
class Localizer {
 public:
  Localizer() = default;
  Localizer(const MapDatabase& db, const GmmParams& params, const LocalizerConfig& config = {});

  /// compute_vlad, knn_query, hypothesize, robust_average, propagate,
  /// update, estimate. Frames without features or hypotheses only
  /// propagate. The first frame initializes the particles instead of
  /// propagating them. Throws NotInitialized on a default-constructed
  /// localizer.
  LocalizationStep localize_frame(const FeatureSet& fs, const OdometryInput& odom);

  bool initialized() const { return initialized_; }
  const ParticleSet& particles() const { return particles_; }
  const LocalizerConfig& config() const { return config_; }
  /// Bounding box of the map poses grown by one meter; used when the first
  /// frame carries no measurement.
  const Rect& map_bounds() const { return map_bounds_; }

  /// Drops the particles so the next frame initializes again.
  void reset();

 private:
  const MapDatabase* db_ = nullptr;
  std::optional<GmmModel> model_;
  LocalizerConfig config_;
  ParticleSet particles_;
  bool initialized_ = false;
  std::uint64_t frame_ = 0;
  Rect map_bounds_;
};

}  // namespace retloc
