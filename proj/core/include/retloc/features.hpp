#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

namespace retloc {

inline constexpr std::size_t kDescriptorBytes = 32;
inline constexpr std::size_t kDescriptorBits = kDescriptorBytes * 8;
inline constexpr std::size_t kDefaultMaxFeatures = 1000;

/// 256-bit binary descriptor. Matching treats it as a bit string (Hamming),
/// the vocabulary treats it as a 32-d vector of byte values.
struct Descriptor {
  std::array<std::uint8_t, kDescriptorBytes> bytes{};

  auto operator<=>(const Descriptor&) const = default;

  static Descriptor zeros() { return {}; }
  static Descriptor ones();
  Descriptor complement() const;
  bool bit(std::size_t i) const { return (bytes[i / 8] >> (i % 8)) & 1U; }
  void flip_bit(std::size_t i) { bytes[i / 8] ^= static_cast<std::uint8_t>(1U << (i % 8)); }
};

int hamming(const Descriptor& a, const Descriptor& b);

struct Keypoint {
  float u = 0.0F;
  float v = 0.0F;

  bool operator==(const Keypoint&) const = default;
};

/// Features extracted from one frame. `points3d`, when present, is parallel
/// to `keypoints` and holds camera-frame (optical) coordinates; a feature
/// without a depth reading carries a NaN point.
struct FeatureSet {
  std::uint32_t frame_id = 0;
  double timestamp = 0.0;
  std::vector<Keypoint> keypoints;
  std::vector<Descriptor> descriptors;
  std::optional<std::vector<Eigen::Vector3f>> points3d;

  std::size_t size() const { return keypoints.size(); }
  bool empty() const { return keypoints.empty(); }
  bool has_points3d() const { return points3d.has_value(); }
  /// True when feature `i` carries a usable 3D coordinate.
  bool has_point3d(std::size_t i) const;

  /// Throws DataError on non-parallel lists or invalid 3D points.
  void validate() const;

  bool operator==(const FeatureSet& other) const;
};

struct Match {
  std::uint32_t query_idx = 0;
  std::uint32_t ref_idx = 0;
  int distance = 0;

  bool operator==(const Match&) const = default;
};

struct MatchConfig {
  int max_distance = 64;
  bool cross_check = true;
};

/// Exhaustive nearest-neighbour matching under Hamming distance. Each query
/// descriptor is paired with its closest reference descriptor (lowest index
/// on ties). Output is sorted by distance, then reference index. An empty
/// input on either side yields no matches.
std::vector<Match> match_bruteforce(const FeatureSet& query, const FeatureSet& reference,
                                    const MatchConfig& config = {});

}  // namespace retloc
