#include "vstab/instability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/core.h>

#include "vstab/parallel.hpp"

namespace vstab {

void ScoringConfig::validate() const {
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw ValidationError(fmt::format("radius must be positive (got {})", radius));
  }
  if (!(percentile > 0.0 && percentile <= 100.0)) {
    throw ValidationError(fmt::format("percentile must be in (0, 100] (got {})", percentile));
  }
  if (nms_radius && !(*nms_radius > 0.0)) {
    throw ValidationError(fmt::format("nms radius must be positive (got {})", *nms_radius));
  }
  if (angle_weight < 0.0) throw ValidationError("angle weight must be nonnegative");
}

std::vector<std::size_t> neighbors_within(const SceneCapture& scene, std::size_t i, double radius,
                                          double angle_weight) {
  if (i >= scene.views.size()) {
    throw ValidationError(fmt::format("view index {} out of range for scene '{}'", i,
                                      scene.scene_id));
  }
  std::vector<std::size_t> out;
  const Pose& center = scene.views[i].pose;
  for (std::size_t u = 0; u < scene.views.size(); ++u) {
    if (u == i) continue;
    if (pose_distance(center, scene.views[u].pose, angle_weight) <= radius) out.push_back(u);
  }
  return out;
}

std::vector<Score> instability_scores(const SceneCapture& scene, const std::string& featurizer_id,
                                      const ScoringConfig& cfg) {
  cfg.validate();
  const EmbeddingMatrix& emb = scene.embedding(featurizer_id);
  const std::size_t n = scene.views.size();
  if (static_cast<std::size_t>(emb.count()) != n) {
    throw ValidationError(fmt::format("scene '{}': row count mismatch", scene.scene_id));
  }

  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = emb.rows.row(static_cast<Eigen::Index>(i)).norm();
    if (!(norms[i] > 0.0)) {
      throw ValidationError(fmt::format("scene '{}': degenerate embedding at view {}",
                                        scene.scene_id, i));
    }
  }

  std::vector<Score> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto neighbors = neighbors_within(scene, i, cfg.radius, cfg.angle_weight);
    if (neighbors.empty()) continue;
    double sum = 0.0;
    const auto xi = emb.rows.row(static_cast<Eigen::Index>(i));
    for (std::size_t u : neighbors) {
      const auto xu = emb.rows.row(static_cast<Eigen::Index>(u));
      if (xi == xu) continue;  // exact zero, not rounding noise
      const double cosine = xi.dot(xu) / (norms[i] * norms[u]);
      sum += std::clamp(1.0 - cosine, 0.0, 2.0);
    }
    scores[i] = sum / static_cast<double>(neighbors.size());
  }
  return scores;
}

double default_radius(const Dataset& dataset, double angle_weight) {
  std::vector<double> nearest;
  for (const auto& scene : dataset.scenes) {
    for (std::size_t i = 0; i < scene.views.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t u = 0; u < scene.views.size(); ++u) {
        if (u == i) continue;
        best = std::min(best, pose_distance(scene.views[i].pose, scene.views[u].pose,
                                            angle_weight));
      }
      if (std::isfinite(best)) nearest.push_back(best);
    }
  }
  if (nearest.empty()) throw ValidationError("no scene has two or more views");
  const auto mid = nearest.begin() + static_cast<std::ptrdiff_t>(nearest.size() / 2);
  std::nth_element(nearest.begin(), mid, nearest.end());
  double median = *mid;
  if (nearest.size() % 2 == 0) {
    const double lower = *std::max_element(nearest.begin(), mid);
    median = 0.5 * (median + lower);
  }
  const double radius = 1.5 * median;
  if (!(radius > 0.0)) throw ValidationError("views coincide; cannot derive a radius");
  return radius;
}

double nearest_rank_percentile(std::vector<double> values, double percentile) {
  if (values.empty()) throw ValidationError("no scorable views");
  if (!(percentile > 0.0 && percentile <= 100.0)) {
    throw ValidationError(fmt::format("percentile must be in (0, 100] (got {})", percentile));
  }
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  // Guard against 97/100*100 evaluating to 97.00000000000001.
  auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

Threshold label_unstable(std::span<const Score> scores, double percentile) {
  std::vector<double> pool;
  pool.reserve(scores.size());
  for (const auto& s : scores) {
    if (s) pool.push_back(*s);
  }
  if (pool.empty()) throw ValidationError("no scorable views");
  Threshold out;
  out.scored = pool.size();
  out.tau = nearest_rank_percentile(std::move(pool), percentile);
  out.unstable.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out.unstable[i] = scores[i].has_value() && *scores[i] > out.tau;
  }
  return out;
}

std::vector<bool> nms(const SceneCapture& scene, std::span<const Score> scores,
                      const std::vector<bool>& unstable, double radius, double angle_weight) {
  const std::size_t n = scene.views.size();
  if (scores.size() != n || unstable.size() != n) {
    throw ValidationError(fmt::format("scene '{}': nms input size mismatch", scene.scene_id));
  }
  std::vector<bool> kept(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (!unstable[i] || !scores[i]) continue;
    bool dominated = false;
    for (std::size_t u : neighbors_within(scene, i, radius, angle_weight)) {
      if (!unstable[u] || !scores[u]) continue;
      if (*scores[u] > *scores[i] ||
          (*scores[u] == *scores[i] && scene.views[u].ordinal < scene.views[i].ordinal)) {
        dominated = true;
        break;
      }
    }
    kept[i] = !dominated;
  }
  return kept;
}

ViewSet InstabilityTable::unstable_views() const {
  ViewSet out;
  for (const auto& r : rows) {
    if (r.unstable) out.emplace(r.scene_id, r.view_id);
  }
  return out;
}

ViewSet InstabilityTable::stable_views() const {
  ViewSet out;
  for (const auto& r : rows) {
    if (r.score && !r.unstable) out.emplace(r.scene_id, r.view_id);
  }
  return out;
}

InstabilityTable build_instability_table(const Dataset& dataset, const std::string& featurizer_id,
                                         const ScoringConfig& cfg, std::size_t workers) {
  cfg.validate();
  const std::size_t n_scenes = dataset.scenes.size();
  std::vector<std::vector<Score>> per_scene(n_scenes);
  parallel_for(n_scenes, workers, [&](std::size_t s) {
    per_scene[s] = instability_scores(dataset.scenes[s], featurizer_id, cfg);
  });

  InstabilityTable table;
  table.featurizer_id = featurizer_id;
  std::vector<Score> pooled;
  for (std::size_t s = 0; s < n_scenes; ++s) {
    const auto& scene = dataset.scenes[s];
    const std::size_t begin = table.rows.size();
    for (std::size_t i = 0; i < scene.views.size(); ++i) {
      table.rows.push_back(InstabilityRow{scene.scene_id, scene.views[i].view_id,
                                          scene.views[i].ordinal, per_scene[s][i], false, false});
      pooled.push_back(per_scene[s][i]);
    }
    table.scene_ranges.emplace_back(begin, table.rows.size());
  }

  const Threshold threshold = label_unstable(pooled, cfg.percentile);
  table.tau = threshold.tau;
  table.scored = threshold.scored;
  for (std::size_t r = 0; r < table.rows.size(); ++r) table.rows[r].unstable = threshold.unstable[r];

  for (std::size_t s = 0; s < n_scenes; ++s) {
    const auto [begin, end] = table.scene_ranges[s];
    const std::vector<bool> flags(threshold.unstable.begin() + static_cast<std::ptrdiff_t>(begin),
                                  threshold.unstable.begin() + static_cast<std::ptrdiff_t>(end));
    const auto kept = nms(dataset.scenes[s], std::span<const Score>(per_scene[s]), flags,
                          cfg.effective_nms_radius(), cfg.angle_weight);
    for (std::size_t i = 0; i < kept.size(); ++i) table.rows[begin + i].nms_kept = kept[i];
  }
  return table;
}

}  // namespace vstab
