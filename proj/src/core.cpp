#include "vstab/core.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

namespace vstab {

std::string_view to_string(PoseMode mode) {
  return mode == PoseMode::turntable ? "turntable" : "full6dof";
}

PoseMode parse_pose_mode(std::string_view text) {
  if (text == "turntable") return PoseMode::turntable;
  if (text == "full6dof") return PoseMode::full6dof;
  throw ValidationError(fmt::format("unknown pose mode '{}'", text));
}

double normalize_azimuth(double degrees) {
  double wrapped = std::fmod(degrees, 360.0);
  if (wrapped < 0.0) wrapped += 360.0;
  // fmod of a tiny negative value can round back up to exactly 360
  if (wrapped >= 360.0) wrapped = 0.0;
  return wrapped;
}

double wrapped_angle_difference(double a_deg, double b_deg) {
  const double diff = std::fabs(normalize_azimuth(a_deg) - normalize_azimuth(b_deg));
  return std::min(diff, 360.0 - diff);
}

namespace {

void check_elevation(double elevation_deg) {
  if (!std::isfinite(elevation_deg) || elevation_deg < -90.0 || elevation_deg > 90.0) {
    throw ValidationError(fmt::format("elevation {} outside [-90, 90]", elevation_deg));
  }
}

}  // namespace

Pose Pose::turntable(double azimuth_deg, double elevation_deg) {
  if (!std::isfinite(azimuth_deg)) throw ValidationError("non-finite azimuth");
  check_elevation(elevation_deg);
  return Pose{{0.0, 0.0, 0.0}, normalize_azimuth(azimuth_deg), elevation_deg,
              PoseMode::turntable};
}

Pose Pose::full6dof(const std::array<double, 3>& position, double azimuth_deg,
                    double elevation_deg) {
  if (!std::isfinite(azimuth_deg)) throw ValidationError("non-finite azimuth");
  check_elevation(elevation_deg);
  for (double p : position) {
    if (!std::isfinite(p)) throw ValidationError("non-finite position");
  }
  return Pose{position, normalize_azimuth(azimuth_deg), elevation_deg, PoseMode::full6dof};
}

double pose_distance(const Pose& a, const Pose& b, double angle_weight) {
  if (a.mode != b.mode) throw ValidationError("incomparable poses");
  if (angle_weight < 0.0) throw ValidationError("angle_weight must be nonnegative");
  const double daz = wrapped_angle_difference(a.azimuth, b.azimuth);
  const double del = a.elevation - b.elevation;
  const double angular_sq = daz * daz + del * del;
  if (a.mode == PoseMode::turntable) return std::sqrt(angular_sq);
  double positional_sq = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double dp = a.position[k] - b.position[k];
    positional_sq += dp * dp;
  }
  return std::sqrt(positional_sq + angle_weight * angular_sq);
}

double feature_distance(const Eigen::Ref<const Eigen::VectorXd>& x,
                        const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (x.size() != y.size()) throw ValidationError("embedding dimension mismatch");
  const double nx = x.norm();
  const double ny = y.norm();
  if (!(nx > 0.0) || !(ny > 0.0) || !std::isfinite(nx) || !std::isfinite(ny)) {
    throw ValidationError("degenerate embedding");
  }
  if (x == y) return 0.0;
  const double cosine = x.dot(y) / (nx * ny);
  return std::clamp(1.0 - cosine, 0.0, 2.0);
}

void EmbeddingMatrix::normalize_rows() {
  raw_norms.assign(static_cast<std::size_t>(rows.rows()), 0.0);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const double n = rows.row(i).norm();
    if (!(n > 0.0)) {
      throw ValidationError(
          fmt::format("featurizer '{}': row {} has zero norm", featurizer_id, i));
    }
    raw_norms[static_cast<std::size_t>(i)] = n;
    rows.row(i) /= n;
  }
  normalized = true;
}

void EmbeddingMatrix::validate(std::string_view context) const {
  if (rows.cols() <= 0) {
    throw ValidationError(fmt::format("{}: featurizer '{}' has zero dims", context, featurizer_id));
  }
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    if (!rows.row(i).allFinite()) {
      throw ValidationError(fmt::format("{}: featurizer '{}' row {} has a non-finite value",
                                        context, featurizer_id, i));
    }
    if (normalized && std::fabs(rows.row(i).norm() - 1.0) > 1e-6) {
      throw ValidationError(fmt::format("{}: featurizer '{}' row {} is not unit norm", context,
                                        featurizer_id, i));
    }
  }
}

const EmbeddingMatrix& SceneCapture::embedding(const std::string& featurizer_id) const {
  auto it = embeddings.find(featurizer_id);
  if (it == embeddings.end()) {
    throw ValidationError(
        fmt::format("scene '{}': unknown featurizer '{}'", scene_id, featurizer_id));
  }
  return it->second;
}

void SceneCapture::validate() const {
  std::set<std::string> ids;
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (views[i].ordinal != i) {
      throw ValidationError(fmt::format("scene '{}': ordinals not contiguous at {}", scene_id, i));
    }
    if (!ids.insert(views[i].view_id).second) {
      throw ValidationError(
          fmt::format("scene '{}': duplicate view id '{}'", scene_id, views[i].view_id));
    }
    if (views[i].pose.mode != views.front().pose.mode) {
      throw ValidationError(fmt::format("scene '{}': mixed pose modes", scene_id));
    }
  }
  for (const auto& [fid, emb] : embeddings) {
    if (emb.count() != static_cast<Eigen::Index>(views.size())) {
      throw ValidationError(fmt::format("scene '{}': featurizer '{}' has {} rows for {} views",
                                        scene_id, fid, emb.count(), views.size()));
    }
    emb.validate(fmt::format("scene '{}'", scene_id));
  }
}

std::vector<std::string> Dataset::featurizer_ids() const {
  if (scenes.empty()) return {};
  std::vector<std::string> ids;
  for (const auto& [fid, emb] : scenes.front().embeddings) {
    const bool everywhere = std::all_of(scenes.begin(), scenes.end(), [&](const SceneCapture& s) {
      return s.embeddings.count(fid) > 0;
    });
    if (everywhere) ids.push_back(fid);
  }
  return ids;
}

std::size_t Dataset::view_count() const {
  std::size_t n = 0;
  for (const auto& s : scenes) n += s.views.size();
  return n;
}

const SceneCapture& Dataset::scene(const std::string& scene_id) const {
  for (const auto& s : scenes) {
    if (s.scene_id == scene_id) return s;
  }
  throw ValidationError(fmt::format("unknown scene '{}'", scene_id));
}

void Dataset::validate() const {
  std::set<std::string> ids;
  for (const auto& s : scenes) {
    if (!ids.insert(s.scene_id).second) {
      throw ValidationError(fmt::format("duplicate scene id '{}'", s.scene_id));
    }
    s.validate();
  }
  if (scenes.empty()) return;
  const auto& first = scenes.front().embeddings;
  for (const auto& s : scenes) {
    if (s.embeddings.size() != first.size()) {
      throw ValidationError(
          fmt::format("scene '{}': featurizer set differs from scene '{}'", s.scene_id,
                      scenes.front().scene_id));
    }
    for (const auto& [fid, emb] : s.embeddings) {
      auto it = first.find(fid);
      if (it == first.end()) {
        throw ValidationError(
            fmt::format("scene '{}': featurizer '{}' missing elsewhere", s.scene_id, fid));
      }
      if (it->second.dims() != emb.dims()) {
        throw ValidationError(fmt::format("scene '{}': featurizer '{}' has dims {} (expected {})",
                                          s.scene_id, fid, emb.dims(), it->second.dims()));
      }
    }
  }
}

std::string_view to_string(Category category) {
  switch (category) {
    case Category::stable: return "stable";
    case Category::accidental: return "accidental";
    case Category::ood: return "ood";
  }
  return "?";
}

Category parse_category(std::string_view text) {
  if (text == "stable") return Category::stable;
  if (text == "accidental") return Category::accidental;
  if (text == "ood") return Category::ood;
  throw ValidationError(fmt::format("unknown category '{}'", text));
}

const ViewSet& ViewLabelSet::of(Category category) const {
  switch (category) {
    case Category::stable: return stable;
    case Category::accidental: return accidental;
    case Category::ood: return ood;
  }
  throw std::logic_error("bad category");
}

ViewSet& ViewLabelSet::of(Category category) {
  return const_cast<ViewSet&>(std::as_const(*this).of(category));
}

ViewSet ViewLabelSet::labeled() const {
  ViewSet all = stable;
  all.insert(accidental.begin(), accidental.end());
  all.insert(ood.begin(), ood.end());
  return all;
}

void ViewLabelSet::validate() const {
  if (labeled().size() != stable.size() + accidental.size() + ood.size()) {
    throw ValidationError(
        fmt::format("featurizer '{}': label categories overlap", featurizer_id));
  }
}

}  // namespace vstab
