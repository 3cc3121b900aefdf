#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>

#include "vstab/core.hpp"
#include "vstab/instability.hpp"
#include "vstab/svm.hpp"

namespace vstab {

struct SplitSpec {
  std::set<std::string> train_scene_ids;
  std::set<std::string> test_scene_ids;
  double ratio = 0.8;
  std::uint64_t seed = 0;

  bool is_train(const std::string& scene_id) const { return train_scene_ids.count(scene_id) > 0; }
  /// Throws if any scene sits on both sides.
  void check_disjoint() const;
};

/// Seeded shuffle of scene ids; the first floor(ratio * S) go to train.
SplitSpec scene_split(const Dataset& dataset, double ratio, std::uint64_t seed);

struct ConfusionCounts {
  // Positive class is "unstable".
  std::size_t true_positive = 0;
  std::size_t false_positive = 0;
  std::size_t true_negative = 0;
  std::size_t false_negative = 0;

  std::size_t total() const {
    return true_positive + false_positive + true_negative + false_negative;
  }
};

struct ClassifierReport {
  std::string featurizer_id;
  double accuracy = 0.0;  // percent
  double recall_stable = 0.0;
  double recall_unstable = 0.0;
  ConfusionCounts confusion;
  std::size_t n_train = 0;
  std::size_t n_train_unstable = 0;
  std::size_t n_test = 0;
  double majority_rate = 0.0;  // percent of test views in the larger class
  SvmTrainReport training;
};

/// Train on stable plus NMS-kept unstable views of train scenes; test on
/// every scored view of test scenes.
ClassifierReport evaluate_stability_classifier(const Dataset& dataset,
                                               const InstabilityTable& table,
                                               const SplitSpec& split, const SvmParams& params);

}  // namespace vstab
