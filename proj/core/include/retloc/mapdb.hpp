#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "retloc/features.hpp"
#include "retloc/geometry.hpp"
#include "retloc/vocabulary.hpp"

namespace retloc {

inline constexpr std::size_t kDefaultKnnK = 10;

/// One geo-tagged reference image: its features with 3D coordinates, its
/// VLAD, and its global pose.
struct MapEntry {
  std::uint32_t entry_id = 0;
  PlanarPose pose;
  VladMatrix vlad;
  FeatureSet features;
  /// Fingerprint of the vocabulary the VLAD was computed with.
  std::uint64_t vocabulary_fingerprint = 0;

  bool operator==(const MapEntry&) const = default;
};

struct BuiltEntry {
  MapEntry entry;
  /// Features dropped for lacking a 3D coordinate or exceeding the cap.
  std::size_t dropped = 0;
};

/// Keeps only features with a 3D coordinate (first `max_features` of them)
/// and computes the VLAD of the kept set. The VLAD is stored rounded to
/// single precision, which is what the map file holds. Throws
/// NoUsableFeatures when no feature has a 3D coordinate.
BuiltEntry build_entry(const FeatureSet& fs, const PlanarPose& pose, const Vocabulary& vocab,
                       std::size_t max_features = kDefaultMaxFeatures);

struct MapMetadata {
  CameraIntrinsics intrinsics;
  MountingTransform mounting;
  std::uint64_t seed = 0;

  bool operator==(const MapMetadata& other) const;
};

struct Neighbor {
  std::uint32_t entry_id = 0;
  double distance = 0.0;

  bool operator==(const Neighbor&) const = default;
};

/// Searchable collection of map entries sharing one vocabulary. Entry ids
/// are dense, 0..size()-1, in insertion order.
class MapDatabase {
 public:
  MapDatabase() = default;
  explicit MapDatabase(Vocabulary vocabulary, MapMetadata metadata = {}, std::size_t knn_k = kDefaultKnnK);

  /// Appends an entry, assigning it the next id. Throws VocabularyMismatch
  /// if the entry was built under another vocabulary.
  std::uint32_t add(MapEntry entry);

  const Vocabulary& vocabulary() const { return vocabulary_; }
  const MapMetadata& metadata() const { return metadata_; }
  std::size_t knn_k() const { return knn_k_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const MapEntry& entry(std::uint32_t id) const { return entries_.at(id); }
  std::span<const MapEntry> entries() const { return entries_; }

  /// Frobenius distance between entry `id`'s VLAD and `query`.
  double vlad_distance(std::uint32_t id, const Eigen::VectorXd& flat_query) const;

  bool operator==(const MapDatabase& other) const;

 private:
  Vocabulary vocabulary_;
  MapMetadata metadata_;
  std::size_t knn_k_ = kDefaultKnnK;
  std::vector<MapEntry> entries_;
  /// Row i holds entry i's VLAD flattened row-major.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> flat_vlads_;
};

/// Exact k-nearest-neighbour search over VLADs (Frobenius distance).
/// Returns min(k, size) neighbours sorted by distance, ties by lowest id.
/// Throws EmptyDatabase on an empty map.
std::vector<Neighbor> knn_query(const MapDatabase& db, const VladMatrix& query, std::size_t k);

/// New database holding db's entries followed by `new_entries` (fresh ids).
MapDatabase augment(const MapDatabase& db, std::span<const MapEntry> new_entries);

inline constexpr std::uint16_t kMapFormatVersion = 1;

/// Map file: header (magic, u16 version, u32 entry count, u32 CRC32 of the
/// body), then the body: vocabulary centers as f64, then per entry id u32,
/// pose x y psi f64, VLAD f32 row-major, feature count u32 and per feature
/// u v f32, 32 descriptor bytes, x y z f32. A "META" trailer closes the body:
/// knn_k u32, intrinsics, mounting rotation and translation f64, seed u64.
std::vector<std::uint8_t> serialize(const MapDatabase& db);
MapDatabase deserialize_map(std::span<const std::uint8_t> bytes);

void save(const MapDatabase& db, const std::string& path);
MapDatabase load_map(const std::string& path);

}  // namespace retloc
