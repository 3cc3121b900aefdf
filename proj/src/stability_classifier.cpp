#include "vstab/stability_classifier.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/core.h>

namespace vstab {

void SplitSpec::check_disjoint() const {
  for (const auto& id : train_scene_ids) {
    if (test_scene_ids.count(id)) {
      throw std::logic_error(fmt::format("scene '{}' is on both sides of the split", id));
    }
  }
}

SplitSpec scene_split(const Dataset& dataset, double ratio, std::uint64_t seed) {
  if (dataset.scenes.size() < 2) throw ValidationError("scene split needs at least 2 scenes");
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ValidationError(fmt::format("split ratio must be in (0, 1) (got {})", ratio));
  }
  std::vector<std::string> ids;
  for (const auto& s : dataset.scenes) ids.push_back(s.scene_id);
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  const auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(ids.size())));
  SplitSpec split;
  split.ratio = ratio;
  split.seed = seed;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    (i < n_train ? split.train_scene_ids : split.test_scene_ids).insert(ids[i]);
  }
  return split;
}

ClassifierReport evaluate_stability_classifier(const Dataset& dataset,
                                               const InstabilityTable& table,
                                               const SplitSpec& split, const SvmParams& params) {
  split.check_disjoint();
  const std::string& fid = table.featurizer_id;
  if (table.scene_ranges.size() != dataset.scenes.size()) {
    throw ValidationError("instability table does not match dataset");
  }

  std::vector<Eigen::RowVectorXd> train_rows;
  std::vector<int> train_labels;
  std::vector<Eigen::RowVectorXd> test_rows;
  std::vector<int> test_labels;
  for (std::size_t s = 0; s < dataset.scenes.size(); ++s) {
    const auto& scene = dataset.scenes[s];
    const bool train = split.is_train(scene.scene_id);
    if (!train && !split.test_scene_ids.count(scene.scene_id)) continue;
    const auto& emb = scene.embedding(fid);
    const auto [begin, end] = table.scene_ranges[s];
    for (std::size_t r = begin; r < end; ++r) {
      const auto& row = table.rows[r];
      if (!row.score) continue;
      const Eigen::RowVectorXd x = emb.rows.row(static_cast<Eigen::Index>(row.ordinal));
      if (train) {
        if (row.unstable && !row.nms_kept) continue;
        train_rows.push_back(x);
        train_labels.push_back(row.unstable ? 1 : -1);
      } else {
        test_rows.push_back(x);
        test_labels.push_back(row.unstable ? 1 : -1);
      }
    }
  }
  if (train_rows.empty()) throw ValidationError("empty training set");

  auto stack = [](const std::vector<Eigen::RowVectorXd>& rows, Eigen::Index d) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i];
    return m;
  };
  const Eigen::Index d = train_rows.front().size();
  const Eigen::MatrixXd x_train = stack(train_rows, d);
  const Eigen::MatrixXd x_test = stack(test_rows, d);

  ClassifierReport report;
  report.featurizer_id = fid;
  report.n_train = train_rows.size();
  report.n_train_unstable =
      static_cast<std::size_t>(std::count(train_labels.begin(), train_labels.end(), 1));
  report.n_test = test_rows.size();

  SvmFit fit = svm_train(x_train, train_labels, params);
  report.training = fit.report;
  const SvmPrediction pred = svm_predict(fit.model, x_test);

  ConfusionCounts& cm = report.confusion;
  for (std::size_t i = 0; i < test_labels.size(); ++i) {
    const bool truth = test_labels[i] == 1;
    const bool said = pred.labels[i] == 1;
    if (truth && said) ++cm.true_positive;
    else if (truth) ++cm.false_negative;
    else if (said) ++cm.false_positive;
    else ++cm.true_negative;
  }
  auto pct = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
  };
  const std::size_t positives = cm.true_positive + cm.false_negative;
  const std::size_t negatives = cm.true_negative + cm.false_positive;
  report.accuracy = pct(cm.true_positive + cm.true_negative, cm.total());
  report.recall_unstable = pct(cm.true_positive, positives);
  report.recall_stable = pct(cm.true_negative, negatives);
  report.majority_rate = pct(std::max(positives, negatives), cm.total());
  return report;
}

}  // namespace vstab
