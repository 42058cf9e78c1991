#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "retloc/features.hpp"

namespace retloc {

inline constexpr std::size_t kDefaultVocabularySize = 64;

using DescriptorVector = Eigen::Matrix<double, static_cast<int>(kDescriptorBytes), 1>;
using CenterMatrix = Eigen::Matrix<double, Eigen::Dynamic, static_cast<int>(kDescriptorBytes), Eigen::RowMajor>;

/// Byte embedding: each of the 32 bytes becomes a real in [0, 255].
DescriptorVector embed(const Descriptor& d);

/// Visual vocabulary: k cluster centers in the byte-embedded descriptor space.
class Vocabulary {
 public:
  Vocabulary() = default;
  /// Throws DataError when `centers` is empty or non-finite.
  explicit Vocabulary(CenterMatrix centers);

  std::size_t k() const { return static_cast<std::size_t>(centers_.rows()); }
  const CenterMatrix& centers() const { return centers_; }

  /// Content hash of the centers; entries built under different vocabularies
  /// carry different fingerprints.
  std::uint64_t fingerprint() const { return fingerprint_; }

  bool operator==(const Vocabulary& other) const { return centers_ == other.centers_; }

 private:
  CenterMatrix centers_;
  std::uint64_t fingerprint_ = 0;
};

struct KMeansConfig {
  std::size_t k = kDefaultVocabularySize;
  std::size_t max_iter = 100;
  std::uint64_t seed = 0;
};

struct KMeansResult {
  Vocabulary vocabulary;
  /// Inertia after each assignment step; non-increasing.
  std::vector<double> inertia_history;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Lloyd's algorithm with greedy k-means++ seeding on byte-embedded descriptors.
/// Stops when no assignment changes or after max_iter iterations. Empty
/// clusters are re-seeded at the point farthest from its current center.
/// Throws InsufficientData when there are fewer than k distinct descriptors.
KMeansResult kmeans_fit(std::span<const Descriptor> descriptors, const KMeansConfig& config);

/// Nearest center by Euclidean distance; ties go to the lowest index.
std::size_t assign(const Vocabulary& vocab, const Descriptor& d);

/// Squared distance between an embedded descriptor and center `j`.
double center_distance2(const Vocabulary& vocab, const DescriptorVector& x, std::size_t j);

/// k x 32 VLAD image descriptor (rows are clusters).
class VladMatrix {
 public:
  VladMatrix() = default;
  explicit VladMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {}

  const Eigen::MatrixXd& matrix() const { return m_; }
  std::size_t rows() const { return static_cast<std::size_t>(m_.rows()); }
  bool is_zero() const { return m_.isZero(0.0); }

  /// Frobenius distance.
  double distance(const VladMatrix& other) const { return (m_ - other.m_).norm(); }

  /// Copy with every entry rounded to single precision (the persisted form).
  VladMatrix rounded_to_float() const;

  bool operator==(const VladMatrix& other) const {
    return m_.rows() == other.m_.rows() && m_.cols() == other.m_.cols() && m_ == other.m_;
  }

 private:
  Eigen::MatrixXd m_;
};

/// Sums per-cluster residuals, L2-normalizes each non-zero row, then
/// normalizes the whole matrix to unit Frobenius norm (a zero matrix stays
/// zero). Residual sums are accumulated exactly, so the result does not
/// depend on descriptor order. Throws EmptyFeatureSet on an empty set.
VladMatrix compute_vlad(const Vocabulary& vocab, std::span<const Descriptor> descriptors);
VladMatrix compute_vlad(const Vocabulary& vocab, const FeatureSet& fs);

}  // namespace retloc
