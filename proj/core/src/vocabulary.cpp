#include "retloc/vocabulary.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <set>

#include "retloc/errors.hpp"
#include "retloc/parallel.hpp"

namespace retloc {

namespace {

std::uint64_t fnv1a(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

double squared_distance(const double* a, const double* b) {
  double s = 0.0;
  for (std::size_t i = 0; i < kDescriptorBytes; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Nearest center for one embedded point; ties go to the lowest index.
std::pair<std::size_t, double> nearest_center(const CenterMatrix& centers, const double* x) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < centers.rows(); ++j) {
    const double d = squared_distance(centers.row(j).data(), x);
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::size_t>(j);
    }
  }
  return {best, best_d};
}

}  // namespace

DescriptorVector embed(const Descriptor& d) {
  DescriptorVector v;
  for (std::size_t i = 0; i < kDescriptorBytes; ++i) {
    v[static_cast<Eigen::Index>(i)] = static_cast<double>(d.bytes[i]);
  }
  return v;
}

Vocabulary::Vocabulary(CenterMatrix centers) : centers_(std::move(centers)) {
  if (centers_.rows() == 0) {
    throw DataError("vocabulary: no centers");
  }
  if (!centers_.allFinite()) {
    throw DataError("vocabulary: non-finite center");
  }
  fingerprint_ = fnv1a(centers_.data(), static_cast<std::size_t>(centers_.size()) * sizeof(double));
}

std::size_t assign(const Vocabulary& vocab, const Descriptor& d) {
  const DescriptorVector x = embed(d);
  return nearest_center(vocab.centers(), x.data()).first;
}

double center_distance2(const Vocabulary& vocab, const DescriptorVector& x, std::size_t j) {
  return squared_distance(vocab.centers().row(static_cast<Eigen::Index>(j)).data(), x.data());
}

KMeansResult kmeans_fit(std::span<const Descriptor> descriptors, const KMeansConfig& config) {
  if (config.k == 0) {
    throw InsufficientData("kmeans: k must be at least 1");
  }
  {
    std::set<Descriptor> distinct;
    for (const Descriptor& d : descriptors) {
      distinct.insert(d);
      if (distinct.size() >= config.k) break;
    }
    if (distinct.size() < config.k) {
      throw InsufficientData("kmeans: fewer distinct descriptors (" + std::to_string(distinct.size()) +
                             ") than clusters (" + std::to_string(config.k) + ")");
    }
  }

  const std::size_t n = descriptors.size();
  const std::size_t k = config.k;
  CenterMatrix points(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kDescriptorBytes));
  for (std::size_t i = 0; i < n; ++i) {
    points.row(static_cast<Eigen::Index>(i)) = embed(descriptors[i]).transpose();
  }
  auto point = [&points](std::size_t i) { return points.row(static_cast<Eigen::Index>(i)).data(); };

  // Greedy k-means++ seeding: each step draws a few candidates with
  // probability proportional to d^2 and keeps the one that lowers the
  // potential most.
  std::mt19937_64 rng(config.seed);
  CenterMatrix centers(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(kDescriptorBytes));
  {
    const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    centers.row(0) = points.row(static_cast<Eigen::Index>(first(rng)));
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = squared_distance(point(i), centers.row(0).data());
    }
    std::vector<double> trial(n);
    std::vector<double> best_d2(n);
    for (std::size_t c = 1; c < k; ++c) {
      std::discrete_distribution<std::size_t> pick(d2.begin(), d2.end());
      std::size_t best = 0;
      double best_potential = std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t cand = pick(rng);
        parallel_for(n, 4096, [&](std::size_t begin, std::size_t end) {
          for (std::size_t i = begin; i < end; ++i) trial[i] = std::min(d2[i], squared_distance(point(i), point(cand)));
        });
        double potential = 0.0;
        for (double v : trial) potential += v;
        if (potential < best_potential) {
          best_potential = potential;
          best = cand;
          best_d2.swap(trial);
        }
      }
      centers.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(best));
      d2.swap(best_d2);
      best_d2.resize(n);
    }
  }

  KMeansResult result;
  std::vector<std::size_t> labels(n, std::numeric_limits<std::size_t>::max());
  std::vector<std::size_t> next_labels(n);
  std::vector<double> dist(n);

  for (std::size_t iter = 0; iter < config.max_iter; ++iter) {
    parallel_for(n, 4096, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const auto [j, d] = nearest_center(centers, point(i));
        next_labels[i] = j;
        dist[i] = d;
      }
    });
    double inertia = 0.0;
    for (double d : dist) inertia += d;
    result.inertia_history.push_back(inertia);
    result.iterations = iter + 1;

    const bool changed = next_labels != labels;
    labels.swap(next_labels);
    if (!changed) {
      result.converged = true;
      break;
    }

    // Mean update.
    CenterMatrix sums = CenterMatrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(kDescriptorBytes));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(static_cast<Eigen::Index>(labels[i])) += points.row(static_cast<Eigen::Index>(i));
      ++counts[labels[i]];
    }
    std::vector<std::size_t> empty;
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] == 0) {
        empty.push_back(j);
      } else {
        centers.row(static_cast<Eigen::Index>(j)) = sums.row(static_cast<Eigen::Index>(j)) / static_cast<double>(counts[j]);
      }
    }

    // Empty-cluster repair: move each empty center onto the point farthest
    // from its (updated) center. That point then sits at distance zero.
    if (!empty.empty()) {
      for (std::size_t i = 0; i < n; ++i) {
        dist[i] = squared_distance(point(i), centers.row(static_cast<Eigen::Index>(labels[i])).data());
      }
      for (std::size_t j : empty) {
        const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        centers.row(static_cast<Eigen::Index>(j)) = points.row(static_cast<Eigen::Index>(far));
        dist[far] = -1.0;
      }
    }
  }

  result.vocabulary = Vocabulary(std::move(centers));
  return result;
}

VladMatrix VladMatrix::rounded_to_float() const {
  return VladMatrix(m_.cast<float>().cast<double>());
}

VladMatrix compute_vlad(const Vocabulary& vocab, std::span<const Descriptor> descriptors) {
  if (descriptors.empty()) {
    throw EmptyFeatureSet("compute_vlad: feature set has no descriptors");
  }
  const std::size_t k = vocab.k();
  // Integer byte sums per cluster are exact, so accumulation order is irrelevant.
  std::vector<std::array<std::int64_t, kDescriptorBytes>> byte_sums(k);
  std::vector<std::int64_t> counts(k, 0);
  for (auto& s : byte_sums) s.fill(0);
  for (const Descriptor& d : descriptors) {
    const std::size_t j = assign(vocab, d);
    for (std::size_t b = 0; b < kDescriptorBytes; ++b) {
      byte_sums[j][b] += d.bytes[b];
    }
    ++counts[j];
  }

  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(kDescriptorBytes));
  for (std::size_t j = 0; j < k; ++j) {
    if (counts[j] == 0) continue;
    const auto row = static_cast<Eigen::Index>(j);
    for (std::size_t b = 0; b < kDescriptorBytes; ++b) {
      const auto col = static_cast<Eigen::Index>(b);
      m(row, col) = static_cast<double>(byte_sums[j][b]) - static_cast<double>(counts[j]) * vocab.centers()(row, col);
    }
  }
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double norm = m.row(r).norm();
    if (norm > 0.0) m.row(r) /= norm;
  }
  const double total = m.norm();
  if (total > 0.0) m /= total;
  return VladMatrix(std::move(m));
}

VladMatrix compute_vlad(const Vocabulary& vocab, const FeatureSet& fs) {
  return compute_vlad(vocab, std::span<const Descriptor>(fs.descriptors));
}

}  // namespace retloc
