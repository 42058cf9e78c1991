#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "retloc/errors.hpp"
#include "retloc/features.hpp"

namespace retloc {
namespace {

FeatureSet with_descriptors(std::vector<Descriptor> d) {
  FeatureSet fs;
  fs.descriptors = std::move(d);
  fs.keypoints.resize(fs.descriptors.size());
  return fs;
}

TEST(Hamming, Extremes) {
  std::mt19937_64 rng(1);
  const Descriptor d = oracle::random_descriptor(rng);
  EXPECT_EQ(hamming(d, d), 0);
  EXPECT_EQ(hamming(Descriptor::zeros(), Descriptor::ones()), 256);
  EXPECT_EQ(hamming(d, d.complement()), 256);
}

TEST(Hamming, MatchesPerBitLoop) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const Descriptor a = oracle::random_descriptor(rng);
    const Descriptor b = oracle::random_descriptor(rng);
    ASSERT_EQ(hamming(a, b), oracle::hamming_bits(a, b));
  }
}

TEST(Match, IdenticalSetsGiveIdentity) {
  std::mt19937_64 rng(3);
  std::vector<Descriptor> d;
  for (int i = 0; i < 50; ++i) d.push_back(oracle::random_descriptor(rng));
  const FeatureSet fs = with_descriptors(d);
  const auto m = match_bruteforce(fs, fs, {256, true});
  ASSERT_EQ(m.size(), d.size());
  for (const Match& x : m) {
    EXPECT_EQ(x.query_idx, x.ref_idx);
    EXPECT_EQ(x.distance, 0);
  }
}

TEST(Match, PrefersExactOverComplement) {
  std::mt19937_64 rng(4);
  const Descriptor d = oracle::random_descriptor(rng);
  const auto m = match_bruteforce(with_descriptors({d}), with_descriptors({d.complement(), d}));
  ASSERT_EQ(m.size(), 1U);
  EXPECT_EQ(m[0].ref_idx, 1U);
  EXPECT_EQ(m[0].distance, 0);
}

TEST(Match, EmptySideGivesNothing) {
  std::mt19937_64 rng(5);
  const FeatureSet one = with_descriptors({oracle::random_descriptor(rng)});
  EXPECT_TRUE(match_bruteforce(one, FeatureSet{}).empty());
  EXPECT_TRUE(match_bruteforce(FeatureSet{}, one).empty());
}

TEST(Match, AgreesWithDoubleLoop) {
  std::mt19937_64 rng(6);
  // Correlated sets so that some pairs fall under the distance limit.
  std::vector<Descriptor> q;
  std::vector<Descriptor> r;
  std::uniform_int_distribution<std::size_t> bit(0, kDescriptorBits - 1);
  for (int i = 0; i < 200; ++i) {
    Descriptor d = oracle::random_descriptor(rng);
    r.push_back(d);
    for (int f = 0; f < i % 80; ++f) d.flip_bit(bit(rng));
    q.push_back(d);
  }
  std::shuffle(r.begin(), r.end(), rng);
  const FeatureSet fq = with_descriptors(q);
  const FeatureSet fr = with_descriptors(r);
  for (bool cross : {true, false}) {
    for (int limit : {40, 64, 256}) {
      const MatchConfig cfg{limit, cross};
      EXPECT_EQ(match_bruteforce(fq, fr, cfg), oracle::match_double_loop(fq, fr, cfg));
    }
  }
}

TEST(FeatureSet, ValidateChecksParallelLists) {
  FeatureSet fs;
  fs.keypoints.resize(2);
  fs.descriptors.resize(1);
  EXPECT_THROW(fs.validate(), DataError);
  fs.descriptors.resize(2);
  EXPECT_NO_THROW(fs.validate());
  fs.points3d = std::vector<Eigen::Vector3f>(1);
  EXPECT_THROW(fs.validate(), DataError);
  fs.points3d = std::vector<Eigen::Vector3f>{{0, 0, 1}, Eigen::Vector3f::Constant(NAN)};
  EXPECT_NO_THROW(fs.validate());
  EXPECT_TRUE(fs.has_point3d(0));
  EXPECT_FALSE(fs.has_point3d(1));
}

}  // namespace
}  // namespace retloc
