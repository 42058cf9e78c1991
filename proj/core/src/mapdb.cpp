#include "retloc/mapdb.hpp"

#include <algorithm>
#include <numeric>

#include "binary_io.hpp"
#include "retloc/errors.hpp"

namespace retloc {

namespace {

constexpr std::string_view kMagic{"MAPDB\x01", 6};
constexpr std::string_view kMetadataTag{"META", 4};
constexpr std::size_t kHeaderSize = 6 + 2 + 4 + 4;

Eigen::VectorXd flatten(const VladMatrix& v) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = v.matrix();
  return Eigen::Map<const Eigen::VectorXd>(rm.data(), rm.size());
}

}  // namespace

BuiltEntry build_entry(const FeatureSet& fs, const PlanarPose& pose, const Vocabulary& vocab,
                       std::size_t max_features) {
  fs.validate();
  BuiltEntry out;
  FeatureSet& kept = out.entry.features;
  kept.frame_id = fs.frame_id;
  kept.timestamp = fs.timestamp;
  kept.points3d.emplace();
  for (std::size_t i = 0; i < fs.size() && kept.size() < max_features; ++i) {
    if (!fs.has_point3d(i)) continue;
    kept.keypoints.push_back(fs.keypoints[i]);
    kept.descriptors.push_back(fs.descriptors[i]);
    kept.points3d->push_back((*fs.points3d)[i]);
  }
  if (kept.empty()) {
    throw NoUsableFeatures("build_entry: no feature of frame " + std::to_string(fs.frame_id) +
                           " has a 3D coordinate");
  }
  out.dropped = fs.size() - kept.size();
  out.entry.pose = pose;
  out.entry.vlad = compute_vlad(vocab, kept).rounded_to_float();
  out.entry.vocabulary_fingerprint = vocab.fingerprint();
  return out;
}

bool MapMetadata::operator==(const MapMetadata& other) const {
  const auto& a = intrinsics;
  const auto& b = other.intrinsics;
  return a.fx == b.fx && a.fy == b.fy && a.cx == b.cx && a.cy == b.cy && a.width == b.width &&
         a.height == b.height && mounting.vehicle_to_camera.rotation() == other.mounting.vehicle_to_camera.rotation() &&
         mounting.vehicle_to_camera.translation() == other.mounting.vehicle_to_camera.translation() &&
         seed == other.seed;
}

MapDatabase::MapDatabase(Vocabulary vocabulary, MapMetadata metadata, std::size_t knn_k)
    : vocabulary_(std::move(vocabulary)), metadata_(std::move(metadata)), knn_k_(knn_k) {
  if (knn_k_ < 1) {
    throw ConfigError("map database: knn_k must be at least 1");
  }
}

std::uint32_t MapDatabase::add(MapEntry entry) {
  if (entry.vocabulary_fingerprint != vocabulary_.fingerprint()) {
    throw VocabularyMismatch("map database: entry built under a different vocabulary");
  }
  if (entry.vlad.rows() != vocabulary_.k() || !entry.features.has_points3d()) {
    throw DataError("map database: malformed entry");
  }
  const auto id = static_cast<std::uint32_t>(entries_.size());
  entry.entry_id = id;
  // The map file does not carry source frame ids or timestamps.
  entry.features.frame_id = id;
  entry.features.timestamp = 0.0;
  const Eigen::VectorXd flat = flatten(entry.vlad);
  if (flat_vlads_.rows() == 0) {
    flat_vlads_.resize(0, flat.size());
  }
  // Grow geometrically to keep appends amortized O(1).
  if (static_cast<Eigen::Index>(entries_.size()) == flat_vlads_.rows()) {
    const Eigen::Index new_rows = std::max<Eigen::Index>(16, flat_vlads_.rows() * 2);
    flat_vlads_.conservativeResize(new_rows, flat.size());
  }
  flat_vlads_.row(id) = flat.transpose();
  entries_.push_back(std::move(entry));
  return id;
}

double MapDatabase::vlad_distance(std::uint32_t id, const Eigen::VectorXd& flat_query) const {
  return (flat_vlads_.row(id).transpose() - flat_query).norm();
}

bool MapDatabase::operator==(const MapDatabase& other) const {
  return vocabulary_ == other.vocabulary_ && metadata_ == other.metadata_ && knn_k_ == other.knn_k_ &&
         entries_ == other.entries_;
}

std::vector<Neighbor> knn_query(const MapDatabase& db, const VladMatrix& query, std::size_t k) {
  if (db.empty()) {
    throw EmptyDatabase("knn_query: map database is empty");
  }
  if (k < 1) {
    throw ConfigError("knn_query: k must be at least 1");
  }
  if (query.rows() != db.vocabulary().k()) {
    throw DataError("knn_query: query VLAD shape does not match the vocabulary");
  }
  const Eigen::VectorXd flat = flatten(query);
  std::vector<Neighbor> all(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) {
    const auto id = static_cast<std::uint32_t>(i);
    all[i] = {id, db.vlad_distance(id, flat)};
  }
  const std::size_t n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(),
                    [](const Neighbor& a, const Neighbor& b) {
                      return a.distance != b.distance ? a.distance < b.distance : a.entry_id < b.entry_id;
                    });
  all.resize(n);
  return all;
}

MapDatabase augment(const MapDatabase& db, std::span<const MapEntry> new_entries) {
  MapDatabase out = db;
  for (const MapEntry& e : new_entries) {
    out.add(e);
  }
  return out;
}

std::vector<std::uint8_t> serialize(const MapDatabase& db) {
  const std::size_t k = db.vocabulary().k();
  if (k != kDefaultVocabularySize) {
    throw DataError("map file format requires a " + std::to_string(kDefaultVocabularySize) + "-word vocabulary");
  }
  detail::ByteWriter body;
  const CenterMatrix& centers = db.vocabulary().centers();
  for (Eigen::Index r = 0; r < centers.rows(); ++r) {
    for (Eigen::Index c = 0; c < centers.cols(); ++c) body.put<double>(centers(r, c));
  }
  for (const MapEntry& e : db.entries()) {
    body.put<std::uint32_t>(e.entry_id);
    body.put<double>(e.pose.x());
    body.put<double>(e.pose.y());
    body.put<double>(e.pose.psi());
    const Eigen::MatrixXd& v = e.vlad.matrix();
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      for (Eigen::Index c = 0; c < v.cols(); ++c) body.put<float>(static_cast<float>(v(r, c)));
    }
    body.put<std::uint32_t>(static_cast<std::uint32_t>(e.features.size()));
    for (std::size_t i = 0; i < e.features.size(); ++i) {
      body.put<float>(e.features.keypoints[i].u);
      body.put<float>(e.features.keypoints[i].v);
      body.put_bytes(e.features.descriptors[i].bytes.data(), kDescriptorBytes);
      const Eigen::Vector3f& p = (*e.features.points3d)[i];
      body.put<float>(p.x());
      body.put<float>(p.y());
      body.put<float>(p.z());
    }
  }
  // Trailing metadata block (retrieval parameter, camera model, provenance).
  const MapMetadata& md = db.metadata();
  body.put_tag(kMetadataTag);
  body.put<std::uint32_t>(static_cast<std::uint32_t>(db.knn_k()));
  body.put<double>(md.intrinsics.fx);
  body.put<double>(md.intrinsics.fy);
  body.put<double>(md.intrinsics.cx);
  body.put<double>(md.intrinsics.cy);
  body.put<std::uint32_t>(static_cast<std::uint32_t>(md.intrinsics.width));
  body.put<std::uint32_t>(static_cast<std::uint32_t>(md.intrinsics.height));
  const RigidTransform3& m = md.mounting.vehicle_to_camera;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) body.put<double>(m.rotation()(r, c));
  }
  for (int i = 0; i < 3; ++i) body.put<double>(m.translation()(i));
  body.put<std::uint64_t>(md.seed);

  detail::ByteWriter out;
  out.put_tag(kMagic);
  out.put<std::uint16_t>(kMapFormatVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(db.size()));
  out.put<std::uint32_t>(detail::crc32_of(body.bytes().data(), body.size()));
  out.put_bytes(body.bytes().data(), body.size());
  return std::move(out.bytes());
}

MapDatabase deserialize_map(std::span<const std::uint8_t> bytes) {
  detail::ByteReader header(bytes.data(), std::min(bytes.size(), kHeaderSize));
  header.expect_tag(kMagic, "map file magic");
  const auto version = header.get<std::uint16_t>("map file version");
  if (version != kMapFormatVersion) {
    throw VersionMismatch("map file version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kMapFormatVersion) + ")");
  }
  const auto count = header.get<std::uint32_t>("entry count");
  const auto crc = header.get<std::uint32_t>("body checksum");

  const std::uint8_t* body_data = bytes.data() + kHeaderSize;
  const std::size_t body_size = bytes.size() - kHeaderSize;
  detail::ByteReader in(body_data, body_size, kHeaderSize);

  const std::size_t k = kDefaultVocabularySize;
  CenterMatrix centers(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(kDescriptorBytes));
  in.require(k * kDescriptorBytes * sizeof(double), "vocabulary section");
  for (Eigen::Index r = 0; r < centers.rows(); ++r) {
    for (Eigen::Index c = 0; c < centers.cols(); ++c) centers(r, c) = in.get<double>("vocabulary");
  }
  Vocabulary vocab(std::move(centers));

  std::vector<MapEntry> entries;
  entries.reserve(count);
  for (std::uint32_t n = 0; n < count; ++n) {
    MapEntry e;
    e.entry_id = in.get<std::uint32_t>("entry id");
    const double x = in.get<double>("entry pose");
    const double y = in.get<double>("entry pose");
    const double psi = in.get<double>("entry pose");
    e.pose = PlanarPose(x, y, psi);
    in.require(k * kDescriptorBytes * sizeof(float), "entry VLAD");
    Eigen::MatrixXd v(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(kDescriptorBytes));
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      for (Eigen::Index c = 0; c < v.cols(); ++c) v(r, c) = in.get<float>("entry VLAD");
    }
    e.vlad = VladMatrix(std::move(v));
    const auto nf = in.get<std::uint32_t>("feature count");
    constexpr std::size_t kFeatureBytes = 2 * sizeof(float) + kDescriptorBytes + 3 * sizeof(float);
    in.require(static_cast<std::size_t>(nf) * kFeatureBytes, "entry features");
    e.features.frame_id = e.entry_id;
    e.features.keypoints.resize(nf);
    e.features.descriptors.resize(nf);
    e.features.points3d.emplace(nf);
    for (std::uint32_t i = 0; i < nf; ++i) {
      e.features.keypoints[i].u = in.get<float>("keypoint");
      e.features.keypoints[i].v = in.get<float>("keypoint");
      in.get_bytes(e.features.descriptors[i].bytes.data(), kDescriptorBytes, "descriptor");
      Eigen::Vector3f& p = (*e.features.points3d)[i];
      p.x() = in.get<float>("3D point");
      p.y() = in.get<float>("3D point");
      p.z() = in.get<float>("3D point");
    }
    e.vocabulary_fingerprint = vocab.fingerprint();
    entries.push_back(std::move(e));
  }

  in.expect_tag(kMetadataTag, "metadata tag");
  const auto knn_k = in.get<std::uint32_t>("knn k");
  MapMetadata md;
  md.intrinsics.fx = in.get<double>("intrinsics");
  md.intrinsics.fy = in.get<double>("intrinsics");
  md.intrinsics.cx = in.get<double>("intrinsics");
  md.intrinsics.cy = in.get<double>("intrinsics");
  md.intrinsics.width = static_cast<int>(in.get<std::uint32_t>("intrinsics"));
  md.intrinsics.height = static_cast<int>(in.get<std::uint32_t>("intrinsics"));
  Eigen::Matrix3d rot;
  Eigen::Vector3d trans;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rot(r, c) = in.get<double>("mounting");
  }
  for (int i = 0; i < 3; ++i) trans(i) = in.get<double>("mounting");
  md.mounting.vehicle_to_camera = RigidTransform3(rot, trans);
  md.seed = in.get<std::uint64_t>("seed");
  if (!in.at_end()) {
    throw CorruptFile("trailing bytes after map metadata", in.offset());
  }
  if (detail::crc32_of(body_data, body_size) != crc) {
    throw CorruptFile("map body checksum mismatch", kHeaderSize);
  }

  MapDatabase db(std::move(vocab), md, knn_k == 0 ? kDefaultKnnK : knn_k);
  for (std::uint32_t n = 0; n < entries.size(); ++n) {
    if (entries[n].entry_id != n) {
      throw CorruptFile("entry ids are not dense", kHeaderSize);
    }
    db.add(std::move(entries[n]));
  }
  return db;
}

void save(const MapDatabase& db, const std::string& path) { detail::write_file(path, serialize(db)); }

MapDatabase load_map(const std::string& path) { return deserialize_map(detail::read_file(path)); }

}  // namespace retloc
