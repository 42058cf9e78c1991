#include "retloc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <limits>

#include "retloc/errors.hpp"
#include "retloc/random.hpp"

namespace retloc {

KMeansResult train_vocabulary(std::span<const LabeledFrame> frames, const KMeansConfig& config,
                              std::size_t max_descriptors) {
  std::size_t total = 0;
  for (const LabeledFrame& f : frames) total += f.features.size();
  const std::size_t stride = max_descriptors == 0 ? 1 : std::max<std::size_t>(1, (total + max_descriptors - 1) / max_descriptors);
  std::vector<Descriptor> sample;
  sample.reserve(total / stride + 1);
  std::size_t i = 0;
  for (const LabeledFrame& f : frames) {
    for (const Descriptor& d : f.features.descriptors) {
      if (i++ % stride == 0) sample.push_back(d);
    }
  }
  return kmeans_fit(sample, config);
}

MapDatabase build_map(std::span<const LabeledFrame> frames, const Vocabulary& vocab, const MapMetadata& metadata,
                      std::size_t knn_k, std::size_t max_features) {
  MapDatabase db(vocab, metadata, knn_k);
  for (const LabeledFrame& f : frames) {
    if (!f.features.has_points3d()) continue;
    try {
      db.add(build_entry(f.features, f.pose, vocab, max_features).entry);
    } catch (const NoUsableFeatures&) {
    }
  }
  if (db.empty()) throw EmptyDatabase("no mapping frame produced a usable map entry");
  return db;
}

std::vector<MapEntry> build_entries(std::span<const LabeledFrame> frames, const MapDatabase& db,
                                    std::size_t max_features) {
  std::vector<MapEntry> entries;
  for (const LabeledFrame& f : frames) {
    if (!f.features.has_points3d()) continue;
    try {
      entries.push_back(build_entry(f.features, f.pose, db.vocabulary(), max_features).entry);
    } catch (const NoUsableFeatures&) {
    }
  }
  return entries;
}

Localizer::Localizer(const MapDatabase& db, const GmmParams& params, const LocalizerConfig& config)
    : db_(&db), model_(std::in_place, params), config_(config) {
  if (db.empty()) throw EmptyDatabase("localizer needs a non-empty map");
  if (config.particle_count == 0 || config.knn_k == 0) {
    throw ConfigError("particle count and knn k must be at least 1");
  }
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = min_x;
  double max_x = -min_x;
  double max_y = -min_x;
  for (const MapEntry& e : db.entries()) {
    min_x = std::min(min_x, e.pose.x());
    min_y = std::min(min_y, e.pose.y());
    max_x = std::max(max_x, e.pose.x());
    max_y = std::max(max_y, e.pose.y());
  }
  map_bounds_ = {min_x - 1.0, min_y - 1.0, max_x + 1.0, max_y + 1.0};
}

void Localizer::reset() {
  particles_ = {};
  initialized_ = false;
}

LocalizationStep Localizer::localize_frame(const FeatureSet& fs, const OdometryInput& odom) {
  if (db_ == nullptr || !model_) throw NotInitialized("localizer has no map or measurement model");
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t frame = frame_++;
  LocalizationStep out;
  FrameDiagnostics& diag = out.diagnostics;
  diag.feature_count = fs.size();

  std::optional<Measurement> measurement;
  if (!fs.empty()) {
    const VladMatrix vlad = compute_vlad(db_->vocabulary(), fs);
    const std::vector<Neighbor> retrieved = knn_query(*db_, vlad, config_.knn_k);
    diag.retrieved = retrieved.size();
    std::vector<PoseHypothesis> hyps = hypothesize(*db_, fs, retrieved, db_->metadata().intrinsics,
                                                   db_->metadata().mounting, config_.hypothesis,
                                                   &diag.hypothesis_stats);
    diag.hypothesis_count = hyps.size();
    diag.inlier_count = diag.hypothesis_stats.total_inliers;
    if (auto z = robust_average(hyps, config_.average)) {
      diag.consensus = z;
      Measurement m;
      m.z = *z;
      m.e_vlads.reserve(hyps.size());
      for (const PoseHypothesis& h : hyps) m.e_vlads.push_back(h.vlad_distance);
      m.hypotheses = std::move(hyps);
      measurement = std::move(m);
    }
  }
  diag.dead_reckoning = !measurement.has_value();

  if (!initialized_) {
    const std::uint64_t init_seed = mix_seed(config_.seed, 0xA11CE);
    particles_ = measurement ? initialize_gaussian(measurement->z, model_->params().sigma1, config_.particle_count,
                                                   init_seed)
                             : initialize_uniform(map_bounds_, config_.particle_count, init_seed);
    initialized_ = true;
    diag.initialized_now = true;
  } else {
    particles_ = propagate(particles_, odom, mix_seed(config_.seed, 2 * frame), config_.motion_substeps);
  }

  UpdateResult r = update(particles_, *model_, measurement, mix_seed(config_.seed, 2 * frame + 1), config_.update);
  particles_ = std::move(r.particles);
  diag.likelihood_underflow = r.likelihood_underflow;
  diag.resampled = r.resampled;
  diag.ess = r.ess;
  out.estimate = estimate(particles_);
  diag.step_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace retloc
