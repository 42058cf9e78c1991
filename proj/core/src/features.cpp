#include "retloc/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "retloc/errors.hpp"

namespace retloc {

Descriptor Descriptor::ones() {
  Descriptor d;
  d.bytes.fill(0xFF);
  return d;
}

Descriptor Descriptor::complement() const {
  Descriptor d;
  for (std::size_t i = 0; i < kDescriptorBytes; ++i) {
    d.bytes[i] = static_cast<std::uint8_t>(~bytes[i]);
  }
  return d;
}

int hamming(const Descriptor& a, const Descriptor& b) {
  std::uint64_t wa[4];
  std::uint64_t wb[4];
  std::memcpy(wa, a.bytes.data(), sizeof(wa));
  std::memcpy(wb, b.bytes.data(), sizeof(wb));
  return std::popcount(wa[0] ^ wb[0]) + std::popcount(wa[1] ^ wb[1]) + std::popcount(wa[2] ^ wb[2]) +
         std::popcount(wa[3] ^ wb[3]);
}

bool FeatureSet::has_point3d(std::size_t i) const {
  if (!points3d) {
    return false;
  }
  const Eigen::Vector3f& p = (*points3d)[i];
  return p.allFinite() && p.z() > 0.0F;
}

void FeatureSet::validate() const {
  if (descriptors.size() != keypoints.size()) {
    throw DataError("feature set: keypoints and descriptors differ in length");
  }
  for (const Keypoint& k : keypoints) {
    if (!std::isfinite(k.u) || !std::isfinite(k.v)) {
      throw DataError("feature set: non-finite keypoint");
    }
  }
  if (points3d) {
    if (points3d->size() != keypoints.size()) {
      throw DataError("feature set: points3d length differs from keypoints");
    }
    for (const Eigen::Vector3f& p : *points3d) {
      if (p.allFinite() && !(p.z() > 0.0F)) {
        throw DataError("feature set: 3D point behind the camera");
      }
    }
  }
}

bool FeatureSet::operator==(const FeatureSet& other) const {
  if (frame_id != other.frame_id || timestamp != other.timestamp || keypoints != other.keypoints ||
      descriptors != other.descriptors || points3d.has_value() != other.points3d.has_value()) {
    return false;
  }
  if (!points3d) {
    return true;
  }
  // Bitwise comparison so that NaN placeholders compare equal.
  return points3d->size() == other.points3d->size() &&
         std::memcmp(points3d->data(), other.points3d->data(), points3d->size() * sizeof(Eigen::Vector3f)) == 0;
}

std::vector<Match> match_bruteforce(const FeatureSet& query, const FeatureSet& reference,
                                    const MatchConfig& config) {
  const std::size_t nq = query.descriptors.size();
  const std::size_t nr = reference.descriptors.size();
  if (nq == 0 || nr == 0) {
    return {};
  }

  // Full distance table, reused by the cross check.
  std::vector<std::uint16_t> table(nq * nr);
  for (std::size_t q = 0; q < nq; ++q) {
    const Descriptor& dq = query.descriptors[q];
    std::uint16_t* row = table.data() + q * nr;
    for (std::size_t r = 0; r < nr; ++r) {
      row[r] = static_cast<std::uint16_t>(hamming(dq, reference.descriptors[r]));
    }
  }

  std::vector<std::uint32_t> best_query_for_ref;
  if (config.cross_check) {
    best_query_for_ref.assign(nr, 0);
    std::vector<std::uint16_t> best(nr, std::numeric_limits<std::uint16_t>::max());
    for (std::size_t q = 0; q < nq; ++q) {
      const std::uint16_t* row = table.data() + q * nr;
      for (std::size_t r = 0; r < nr; ++r) {
        if (row[r] < best[r]) {
          best[r] = row[r];
          best_query_for_ref[r] = static_cast<std::uint32_t>(q);
        }
      }
    }
  }

  std::vector<Match> matches;
  matches.reserve(nq);
  for (std::size_t q = 0; q < nq; ++q) {
    const std::uint16_t* row = table.data() + q * nr;
    const auto best = std::min_element(row, row + nr);
    const auto r = static_cast<std::uint32_t>(best - row);
    if (*best > config.max_distance) {
      continue;
    }
    if (config.cross_check && best_query_for_ref[r] != q) {
      continue;
    }
    matches.push_back({static_cast<std::uint32_t>(q), r, *best});
  }
  std::sort(matches.begin(), matches.end(), [](const Match& a, const Match& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.ref_idx != b.ref_idx) return a.ref_idx < b.ref_idx;
    return a.query_idx < b.query_idx;
  });
  return matches;
}

}  // namespace retloc
