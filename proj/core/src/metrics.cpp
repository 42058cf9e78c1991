#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "retloc/errors.hpp"
#include "retloc/experiments.hpp"

namespace retloc {

namespace {

constexpr const char* kCsvHeader = "t,gt_x,gt_y,gt_psi,est_x,est_y,est_psi,n_hyps,n_inliers,step_ms";

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& field, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw DataError("episode CSV line " + std::to_string(line) + ": bad number '" + field + "'");
  }
}

}  // namespace

std::vector<double> position_errors(const EpisodeLog& log) {
  std::vector<double> errors;
  errors.reserve(log.frames.size());
  for (const EpisodeFrame& f : log.frames) {
    errors.push_back((f.estimate.position() - f.ground_truth.position()).norm());
  }
  return errors;
}

MetricsReport eval_metrics(const EpisodeLog& log, std::span<const double> thresholds) {
  if (log.frames.empty()) throw EmptyLog("cannot evaluate an empty episode log");
  MetricsReport r;
  const std::vector<double> errors = position_errors(log);
  const auto n = static_cast<double>(errors.size());
  r.frames = errors.size();
  double sq = 0.0;
  double sq_heading = 0.0;
  double ms = 0.0;
  std::vector<double> steps;
  steps.reserve(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) {
    const EpisodeFrame& f = log.frames[i];
    sq += errors[i] * errors[i];
    const double dh = wrap_angle(f.estimate.psi() - f.ground_truth.psi());
    sq_heading += dh * dh;
    r.max_error = std::max(r.max_error, errors[i]);
    ms += f.step_ms;
    steps.push_back(f.step_ms);
  }
  r.rmse_position = std::sqrt(sq / n);
  r.rmse_heading = std::sqrt(sq_heading / n);
  r.mean_step_ms = ms / n;
  std::sort(steps.begin(), steps.end());
  // Nearest-rank percentile.
  const auto rank = static_cast<std::size_t>(std::ceil(0.99 * n));
  r.p99_step_ms = steps[std::clamp<std::size_t>(rank, 1, steps.size()) - 1];

  std::vector<double> thresholds_sorted(thresholds.begin(), thresholds.end());
  std::sort(thresholds_sorted.begin(), thresholds_sorted.end());
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  for (double t : thresholds_sorted) {
    const auto below = std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
    r.error_cdf.emplace_back(t, static_cast<double>(below) / n);
  }
  return r;
}

void write_episode_csv(const EpisodeLog& log, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const EpisodeFrame& f : log.frames) {
    out << format_double(f.t) << ',' << format_double(f.ground_truth.x()) << ','
        << format_double(f.ground_truth.y()) << ',' << format_double(f.ground_truth.psi()) << ','
        << format_double(f.estimate.x()) << ',' << format_double(f.estimate.y()) << ','
        << format_double(f.estimate.psi()) << ',' << f.n_hyps << ',' << f.n_inliers << ','
        << format_double(f.step_ms) << '\n';
  }
}

void save_episode_csv(const EpisodeLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  write_episode_csv(log, out);
  if (!out) throw DataError("failed writing '" + path + "'");
}

EpisodeLog read_episode_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw DataError("episode CSV: missing or unexpected header");
  }
  EpisodeLog log;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 10) {
      throw DataError("episode CSV line " + std::to_string(line_no) + ": expected 10 fields");
    }
    double v[10];
    for (int i = 0; i < 10; ++i) v[i] = parse_double(fields[static_cast<std::size_t>(i)], line_no);
    if (v[7] < 0.0 || v[8] < 0.0) {
      throw DataError("episode CSV line " + std::to_string(line_no) + ": negative count");
    }
    EpisodeFrame f;
    f.index = static_cast<std::uint32_t>(log.frames.size());
    f.t = v[0];
    f.ground_truth = PlanarPose(v[1], v[2], v[3]);
    f.estimate = PlanarPose(v[4], v[5], v[6]);
    f.n_hyps = static_cast<std::size_t>(v[7]);
    f.n_inliers = static_cast<std::size_t>(v[8]);
    f.dead_reckoning = f.n_hyps == 0;
    f.step_ms = v[9];
    if (!log.frames.empty() && !(f.t > log.frames.back().t)) {
      throw DataError("episode CSV line " + std::to_string(line_no) + ": timestamps must increase");
    }
    log.frames.push_back(f);
  }
  return log;
}

EpisodeLog load_episode_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  return read_episode_csv(in);
}

}  // namespace retloc
