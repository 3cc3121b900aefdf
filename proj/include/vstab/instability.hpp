#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vstab/core.hpp"

namespace vstab {

struct ScoringConfig {
  /// Pose-neighborhood radius in pose-distance units.
  double radius = 7.5;
  /// Percentile in (0, 100] used for the instability threshold.
  double percentile = 97.0;
  /// Defaults to `radius` when unset.
  std::optional<double> nms_radius;
  double angle_weight = 1.0;

  double effective_nms_radius() const { return nms_radius.value_or(radius); }
  void validate() const;
};

/// Empty optional marks a view with no pose-neighbors (UNSCORED).
using Score = std::optional<double>;

/// Indices u != i with pose_distance(v_i, v_u) <= radius, ascending.
std::vector<std::size_t> neighbors_within(const SceneCapture& scene, std::size_t i, double radius,
                                          double angle_weight = 1.0);

/// Mean cosine distance from each view's embedding to those of its
/// pose-neighbors within cfg.radius.
std::vector<Score> instability_scores(const SceneCapture& scene, const std::string& featurizer_id,
                                      const ScoringConfig& cfg);

/// 1.5x the median nearest-neighbor pose distance over all views of all scenes.
double default_radius(const Dataset& dataset, double angle_weight = 1.0);

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value (1-based).
double nearest_rank_percentile(std::vector<double> values, double percentile);

struct Threshold {
  double tau = 0.0;
  std::vector<bool> unstable;
  std::size_t scored = 0;
};

/// Pools every scored value, sets tau at the nearest-rank percentile and flags
/// views with score strictly above tau. Unscored views are never unstable.
Threshold label_unstable(std::span<const Score> scores, double percentile);

/// Keeps an unstable view iff no unstable neighbor within `radius` has a
/// higher score, or an equal score at a lower ordinal.
std::vector<bool> nms(const SceneCapture& scene, std::span<const Score> scores,
                      const std::vector<bool>& unstable, double radius,
                      double angle_weight = 1.0);

struct InstabilityRow {
  std::string scene_id;
  std::string view_id;
  std::size_t ordinal = 0;
  Score score;
  bool unstable = false;
  bool nms_kept = false;
};

struct InstabilityTable {
  std::string featurizer_id;
  double tau = 0.0;
  std::size_t scored = 0;
  /// Scene order of the dataset, views in ordinal order.
  std::vector<InstabilityRow> rows;

  /// Row range [begin, end) for each scene, in dataset order.
  std::vector<std::pair<std::size_t, std::size_t>> scene_ranges;

  ViewSet unstable_views() const;
  ViewSet stable_views() const;
};

/// Scores every scene (in parallel across scenes), thresholds the pooled
/// scores, and applies per-scene NMS.
InstabilityTable build_instability_table(const Dataset& dataset, const std::string& featurizer_id,
                                         const ScoringConfig& cfg, std::size_t workers = 1);

}  // namespace vstab
