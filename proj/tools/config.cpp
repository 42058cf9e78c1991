#include "config.hpp"

#include <exception>
#include <fstream>
#include <set>

#include "retloc/errors.hpp"

namespace retloc::cli {

namespace {

using nlohmann::json;

// Reads the keys of one JSON object into fields, rejecting any key no field
// claims.
class Section {
 public:
  Section(const json& doc, std::string name) : name_(std::move(name)) {
    if (doc.is_null()) return;
    if (!doc.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
    obj_ = &doc;
  }

  ~Section() noexcept(false) {
    if (!obj_ || std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : obj_->items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown config key '" + name_ + "." + key + "'");
    }
  }

  template <typename T>
  Section& get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!obj_ || !obj_->contains(key)) return *this;
    try {
      out = obj_->at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + name_ + "." + key + "': " + e.what());
    }
    return *this;
  }

  const json& sub(const std::string& key) {
    seen_.insert(key);
    static const json null;
    return obj_ && obj_->contains(key) ? obj_->at(key) : null;
  }

 private:
  std::string name_;
  const json* obj_ = nullptr;
  std::set<std::string> seen_;
};

void positive(double v, const char* what) {
  if (!(v > 0.0)) throw ConfigError(std::string(what) + " must be positive");
}

void at_least_one(std::size_t v, const char* what) {
  if (v < 1) throw ConfigError(std::string(what) + " must be at least 1");
}

}  // namespace

PipelineConfig parse_config(const json& doc) {
  PipelineConfig c;
  Section root(doc, "config");
  root.get("seed", c.seed);

  {
    Section w(root.sub("world"), "world");
    WorldConfig& wc = c.world;
    w.get("straight_x", wc.straight_x).get("straight_y", wc.straight_y).get("corner_radius", wc.corner_radius);
    w.get("room_margin", wc.room_margin).get("infield_margin", wc.infield_margin);
    w.get("landmark_count", wc.landmark_count).get("min_height", wc.min_height).get("max_height", wc.max_height);
    w.get("featureless", wc.featureless).get("max_range", wc.max_range).get("min_depth", wc.min_depth);
    w.get("max_view_angle_deg", wc.max_view_angle_deg).get("max_features", wc.max_features);
    Section a(w.sub("appearance"), "world.appearance");
    a.get("view_sensitive_bits", wc.appearance.view_sensitive_bits);
    a.get("view_bits_per_degree", wc.appearance.view_bits_per_degree);
    a.get("image_sensitive_bits", wc.appearance.image_sensitive_bits);
    a.get("image_bits_per_degree", wc.appearance.image_bits_per_degree);
  }
  {
    Section n(root.sub("noise"), "noise");
    n.get("profile", c.noise_profile_name);
    c.noise = noise_profile(c.noise_profile_name);
    SensorNoise& s = c.noise;
    n.get("pixel_sigma", s.pixel_sigma).get("descriptor_flip_bits", s.descriptor_flip_bits);
    n.get("depth_sigma", s.depth_sigma).get("dropout_prob", s.dropout_prob);
    n.get("v_lo", s.v_lo).get("v_hi", s.v_hi).get("g_lo", s.g_lo).get("g_hi", s.g_hi);
    n.get("v_bias", s.v_bias).get("g_bias", s.g_bias);
    s.validate();
  }
  {
    Section m(root.sub("mapping"), "mapping");
    m.get("laps", c.mapping.laps).get("spacing", c.mapping.spacing).get("training_ratio", c.mapping.training_ratio);
    positive(c.mapping.laps, "mapping.laps");
    positive(c.mapping.spacing, "mapping.spacing");
  }
  {
    Section k(root.sub("kmeans"), "kmeans");
    k.get("k", c.kmeans.k).get("max_iter", c.kmeans.max_iter);
    at_least_one(c.kmeans.k, "kmeans.k");
  }
  {
    Section r(root.sub("retrieval"), "retrieval");
    r.get("knn_k", c.knn_k);
    at_least_one(c.knn_k, "retrieval.knn_k");
    HypothesisConfig& h = c.hypothesis;
    r.get("max_match_distance", h.match.max_distance).get("cross_check", h.match.cross_check);
    r.get("fov_gate", h.fov_gate);
    r.get("reprojection_threshold_px", h.ransac.reprojection_threshold_px);
    r.get("min_inliers", h.ransac.min_inliers).get("max_iterations", h.ransac.max_iterations);
    r.get("confidence", h.ransac.confidence).get("refine_iterations", h.ransac.refine_iterations);
    RobustAverageConfig& a = c.episode.localizer.average;
    r.get("inlier_radius", a.inlier_radius).get("inlier_angle", a.inlier_angle);
  }
  {
    Section f(root.sub("filter"), "filter");
    LocalizerConfig& l = c.episode.localizer;
    f.get("particles", l.particle_count).get("motion_substeps", l.motion_substeps);
    f.get("resample_fraction", l.update.resample_fraction);
    f.get("min_v_noise", c.episode.filter_min_v_noise).get("min_g_noise", c.episode.filter_min_g_noise);
    at_least_one(l.particle_count, "filter.particles");
  }
  {
    Section e(root.sub("controller"), "controller");
    PidGains& g = c.episode.gains;
    e.get("kp", g.kp).get("ki", g.ki).get("kd", g.kd).get("heading_weight", g.heading_weight);
    e.get("max_steer", g.max_steer).get("v_ref", c.episode.v_ref).get("dt", c.episode.dt);
    e.get("wheelbase", c.episode.vehicle.wheelbase);
    g.wheelbase = c.episode.vehicle.wheelbase;
    c.episode.vehicle.max_steer = g.max_steer;
    positive(c.episode.v_ref, "controller.v_ref");
    positive(c.episode.dt, "controller.dt");
  }
  {
    Section e(root.sub("episode"), "episode");
    e.get("laps", c.episode.laps);
    e.get("disturbance_amplitude", c.episode.disturbance.amplitude);
    e.get("disturbance_period", c.episode.disturbance.period);
    positive(c.episode.laps, "episode.laps");
    positive(c.episode.disturbance.period, "episode.disturbance_period");
  }
  {
    Section a(root.sub("augmentation"), "augmentation");
    a.get("amplitude", c.augmentation.disturbance.amplitude).get("period", c.augmentation.disturbance.period);
    a.get("record_laps", c.augmentation.record_laps);
    positive(c.augmentation.disturbance.period, "augmentation.period");
  }
  c.episode.localizer.knn_k = c.knn_k;
  c.episode.localizer.hypothesis = c.hypothesis;
  apply_seed(c, c.seed);
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return parse_config(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

void apply_seed(PipelineConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.world.seed = seed;
  c.kmeans.seed = seed;
  c.episode.seed = seed;
  c.augmentation.episode = c.episode;
}

json to_json(const PipelineConfig& c) {
  const SensorNoise& n = c.noise;
  const EpisodeConfig& e = c.episode;
  return {
      {"seed", c.seed},
      {"world",
       {{"straight_x", c.world.straight_x},
        {"straight_y", c.world.straight_y},
        {"corner_radius", c.world.corner_radius},
        {"landmark_count", c.world.landmark_count},
        {"featureless", c.world.featureless},
        {"max_range", c.world.max_range},
        {"max_features", c.world.max_features}}},
      {"noise",
       {{"profile", c.noise_profile_name},
        {"pixel_sigma", n.pixel_sigma},
        {"descriptor_flip_bits", n.descriptor_flip_bits},
        {"depth_sigma", n.depth_sigma},
        {"dropout_prob", n.dropout_prob},
        {"v_lo", n.v_lo},
        {"v_hi", n.v_hi},
        {"g_lo", n.g_lo},
        {"g_hi", n.g_hi},
        {"v_bias", n.v_bias},
        {"g_bias", n.g_bias}}},
      {"mapping",
       {{"laps", c.mapping.laps}, {"spacing", c.mapping.spacing}, {"training_ratio", c.mapping.training_ratio}}},
      {"kmeans", {{"k", c.kmeans.k}, {"max_iter", c.kmeans.max_iter}}},
      {"retrieval", {{"knn_k", c.knn_k}}},
      {"filter", {{"particles", e.localizer.particle_count}, {"motion_substeps", e.localizer.motion_substeps}}},
      {"controller",
       {{"kp", e.gains.kp}, {"ki", e.gains.ki}, {"kd", e.gains.kd}, {"v_ref", e.v_ref}, {"dt", e.dt}}},
      {"episode",
       {{"laps", e.laps},
        {"disturbance_amplitude", e.disturbance.amplitude},
        {"disturbance_period", e.disturbance.period}}},
      {"augmentation",
       {{"amplitude", c.augmentation.disturbance.amplitude},
        {"period", c.augmentation.disturbance.period},
        {"record_laps", c.augmentation.record_laps}}},
  };
}

namespace {

template <int R, int C>
json matrix_json(const Eigen::Matrix<double, R, C>& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int k = 0; k < m.cols(); ++k) row.push_back(m(r, k));
    rows.push_back(row);
  }
  return rows;
}

template <int R, int C>
void matrix_from(const json& doc, const char* key, Eigen::Matrix<double, R, C>& m) {
  try {
    const json& rows = doc.at(key);
    if (C == 1) {
      if (rows.size() != static_cast<std::size_t>(R)) throw ConfigError(std::string("gmm '") + key + "' has wrong length");
      for (int r = 0; r < R; ++r) m(r, 0) = rows.at(static_cast<std::size_t>(r)).get<double>();
      return;
    }
    if (rows.size() != static_cast<std::size_t>(R)) throw ConfigError(std::string("gmm '") + key + "' has wrong shape");
    for (int r = 0; r < R; ++r) {
      const json& row = rows.at(static_cast<std::size_t>(r));
      if (row.size() != static_cast<std::size_t>(C)) throw ConfigError(std::string("gmm '") + key + "' has wrong shape");
      for (int k = 0; k < C; ++k) m(r, k) = row.at(static_cast<std::size_t>(k)).get<double>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("gmm '") + key + "': " + e.what());
  }
}

}  // namespace

json gmm_to_json(const GmmParams& p) {
  return {{"mu1", std::vector<double>(p.mu1.data(), p.mu1.data() + 3)},
          {"sigma1", matrix_json(p.sigma1)},
          {"mu2", std::vector<double>(p.mu2.data(), p.mu2.data() + 4)},
          {"sigma2", matrix_json(p.sigma2)}};
}

GmmParams gmm_from_json(const json& doc) {
  GmmParams p;
  matrix_from(doc, "mu1", p.mu1);
  matrix_from(doc, "sigma1", p.sigma1);
  matrix_from(doc, "mu2", p.mu2);
  matrix_from(doc, "sigma2", p.sigma2);
  p.validate();
  return p;
}

}  // namespace retloc::cli
