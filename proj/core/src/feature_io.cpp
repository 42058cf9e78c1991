#include <fstream>
#include <iterator>

#include <zlib.h>

#include "binary_io.hpp"
#include "retloc/errors.hpp"
#include "retloc/io.hpp"

namespace retloc {

namespace detail {

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1U << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open '" + path + "' for reading");
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DataError("cannot open '" + path + "' for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw DataError("failed writing '" + path + "'");
  }
}

}  // namespace detail

namespace {

constexpr std::string_view kFeatureMagic{"FEATS\x01", 6};
constexpr std::string_view kVocabMagic{"VOCAB\x01", 6};
constexpr std::size_t kHeaderSize = 6 + 2 + 4 + 4;

struct Header {
  std::uint32_t count = 0;
  std::uint32_t crc = 0;
};

std::vector<std::uint8_t> wrap(std::string_view magic, std::uint16_t version, std::uint32_t count,
                               detail::ByteWriter& body) {
  detail::ByteWriter out;
  out.put_tag(magic);
  out.put<std::uint16_t>(version);
  out.put<std::uint32_t>(count);
  out.put<std::uint32_t>(detail::crc32_of(body.bytes().data(), body.size()));
  out.put_bytes(body.bytes().data(), body.size());
  return std::move(out.bytes());
}

Header read_header(std::span<const std::uint8_t> bytes, std::string_view magic, std::uint16_t expected_version,
                   const char* what) {
  detail::ByteReader in(bytes.data(), std::min(bytes.size(), kHeaderSize));
  in.expect_tag(magic, what);
  const auto version = in.get<std::uint16_t>("version");
  if (version != expected_version) {
    throw VersionMismatch(std::string(what) + " version " + std::to_string(version) + " is not supported");
  }
  Header h;
  h.count = in.get<std::uint32_t>("count");
  h.crc = in.get<std::uint32_t>("checksum");
  return h;
}

void check_crc(std::span<const std::uint8_t> bytes, const Header& h, const char* what) {
  if (detail::crc32_of(bytes.data() + kHeaderSize, bytes.size() - kHeaderSize) != h.crc) {
    throw CorruptFile(std::string(what) + " checksum mismatch", kHeaderSize);
  }
}

}  // namespace

std::vector<std::uint8_t> serialize_feature_log(std::span<const FeatureSet> frames) {
  detail::ByteWriter body;
  for (const FeatureSet& fs : frames) {
    fs.validate();
    body.put<std::uint32_t>(fs.frame_id);
    body.put<double>(fs.timestamp);
    body.put<std::uint8_t>(fs.has_points3d() ? 1 : 0);
    body.put<std::uint32_t>(static_cast<std::uint32_t>(fs.size()));
    for (std::size_t i = 0; i < fs.size(); ++i) {
      body.put<float>(fs.keypoints[i].u);
      body.put<float>(fs.keypoints[i].v);
      body.put_bytes(fs.descriptors[i].bytes.data(), kDescriptorBytes);
      if (fs.has_points3d()) {
        const Eigen::Vector3f& p = (*fs.points3d)[i];
        body.put<float>(p.x());
        body.put<float>(p.y());
        body.put<float>(p.z());
      }
    }
  }
  return wrap(kFeatureMagic, kFeatureLogVersion, static_cast<std::uint32_t>(frames.size()), body);
}

std::vector<FeatureSet> deserialize_feature_log(std::span<const std::uint8_t> bytes) {
  const Header h = read_header(bytes, kFeatureMagic, kFeatureLogVersion, "feature log");
  detail::ByteReader in(bytes.data() + kHeaderSize, bytes.size() - kHeaderSize, kHeaderSize);
  std::vector<FeatureSet> frames;
  frames.reserve(h.count);
  for (std::uint32_t f = 0; f < h.count; ++f) {
    FeatureSet fs;
    fs.frame_id = in.get<std::uint32_t>("frame id");
    fs.timestamp = in.get<double>("timestamp");
    const auto flag = in.get<std::uint8_t>("3D flag");
    if (flag > 1) {
      throw CorruptFile("invalid 3D-presence flag", in.offset() - 1);
    }
    const auto n = in.get<std::uint32_t>("feature count");
    const std::size_t per_feature = 2 * sizeof(float) + kDescriptorBytes + (flag ? 3 * sizeof(float) : 0);
    in.require(static_cast<std::size_t>(n) * per_feature, "features");
    fs.keypoints.resize(n);
    fs.descriptors.resize(n);
    if (flag) fs.points3d.emplace(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      fs.keypoints[i].u = in.get<float>("keypoint");
      fs.keypoints[i].v = in.get<float>("keypoint");
      in.get_bytes(fs.descriptors[i].bytes.data(), kDescriptorBytes, "descriptor");
      if (flag) {
        Eigen::Vector3f& p = (*fs.points3d)[i];
        p.x() = in.get<float>("3D point");
        p.y() = in.get<float>("3D point");
        p.z() = in.get<float>("3D point");
      }
    }
    frames.push_back(std::move(fs));
  }
  if (!in.at_end()) {
    throw CorruptFile("trailing bytes after last frame", in.offset());
  }
  check_crc(bytes, h, "feature log");
  return frames;
}

void save_feature_log(std::span<const FeatureSet> frames, const std::string& path) {
  detail::write_file(path, serialize_feature_log(frames));
}

std::vector<FeatureSet> load_feature_log(const std::string& path) {
  return deserialize_feature_log(detail::read_file(path));
}

std::vector<std::uint8_t> serialize_vocabulary(const Vocabulary& vocab) {
  detail::ByteWriter body;
  const CenterMatrix& c = vocab.centers();
  for (Eigen::Index r = 0; r < c.rows(); ++r) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) body.put<double>(c(r, j));
  }
  return wrap(kVocabMagic, kVocabularyFileVersion, static_cast<std::uint32_t>(vocab.k()), body);
}

Vocabulary deserialize_vocabulary(std::span<const std::uint8_t> bytes) {
  const Header h = read_header(bytes, kVocabMagic, kVocabularyFileVersion, "vocabulary file");
  if (h.count == 0) {
    throw CorruptFile("vocabulary file declares zero centers", 8);
  }
  detail::ByteReader in(bytes.data() + kHeaderSize, bytes.size() - kHeaderSize, kHeaderSize);
  CenterMatrix centers(static_cast<Eigen::Index>(h.count), static_cast<Eigen::Index>(kDescriptorBytes));
  in.require(static_cast<std::size_t>(centers.size()) * sizeof(double), "centers");
  for (Eigen::Index r = 0; r < centers.rows(); ++r) {
    for (Eigen::Index j = 0; j < centers.cols(); ++j) centers(r, j) = in.get<double>("center");
  }
  if (!in.at_end()) {
    throw CorruptFile("trailing bytes after centers", in.offset());
  }
  check_crc(bytes, h, "vocabulary file");
  return Vocabulary(std::move(centers));
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  detail::write_file(path, serialize_vocabulary(vocab));
}

Vocabulary load_vocabulary(const std::string& path) { return deserialize_vocabulary(detail::read_file(path)); }

}  // namespace retloc
