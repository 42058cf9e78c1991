#include "retloc/errors.hpp"
#include "retloc/fusion.hpp"

namespace retloc {

TrainingErrors collect_training_errors(std::span<const LabeledFrame> frames, const MapDatabase& db, std::size_t k,
                                       const HypothesisConfig& config) {
  TrainingErrors out;
  const MapMetadata& meta = db.metadata();
  for (const LabeledFrame& f : frames) {
    if (f.features.empty()) continue;
    const VladMatrix vlad = compute_vlad(db.vocabulary(), f.features);
    const std::vector<Neighbor> retrieved = knn_query(db, vlad, k);
    const std::vector<PoseHypothesis> hyps =
        hypothesize(db, f.features, retrieved, meta.intrinsics, meta.mounting, config);
    for (const PoseHypothesis& h : hyps) {
      const Eigen::Vector3d e = f.pose - h.pose;
      out.errors3.push_back(e);
      out.errors4.emplace_back(h.vlad_distance, -e.x(), -e.y(), wrap_angle(-e.z()));
    }
  }
  return out;
}

GmmParams train_from_dataset(std::span<const LabeledFrame> frames, const MapDatabase& db, std::size_t k,
                             const HypothesisConfig& config, bool centered) {
  const TrainingErrors errors = collect_training_errors(frames, db, k, config);
  if (errors.errors3.size() < 2) {
    throw InsufficientSamples("training produced " + std::to_string(errors.errors3.size()) +
                              " hypothesis errors; at least two are needed");
  }
  return mle_fit(errors.errors3, errors.errors4, centered);
}

}  // namespace retloc
