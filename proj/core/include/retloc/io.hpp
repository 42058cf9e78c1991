#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "retloc/features.hpp"
#include "retloc/vocabulary.hpp"

namespace retloc {

inline constexpr std::uint16_t kFeatureLogVersion = 1;
inline constexpr std::uint16_t kVocabularyFileVersion = 1;

/// Feature log: header (magic "FEATS\x01", u16 version, u32 frame count,
/// u32 CRC32 of the body) followed by one block per frame: frame_id u32,
/// timestamp f64, 3D-presence flag u8, feature count u32, then per feature
/// u f32, v f32, 32 descriptor bytes and, when the flag is set, x y z f32.
std::vector<std::uint8_t> serialize_feature_log(std::span<const FeatureSet> frames);
std::vector<FeatureSet> deserialize_feature_log(std::span<const std::uint8_t> bytes);
void save_feature_log(std::span<const FeatureSet> frames, const std::string& path);
std::vector<FeatureSet> load_feature_log(const std::string& path);

/// Standalone vocabulary: header (magic "VOCAB\x01", u16 version, u32 k,
/// u32 CRC32 of the body) followed by k x 32 f64 centers, row-major.
std::vector<std::uint8_t> serialize_vocabulary(const Vocabulary& vocab);
Vocabulary deserialize_vocabulary(std::span<const std::uint8_t> bytes);
void save_vocabulary(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocabulary(const std::string& path);

}  // namespace retloc
