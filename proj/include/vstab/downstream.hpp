#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "vstab/core.hpp"
#include "vstab/stability_classifier.hpp"

namespace vstab {

/// One embedding per category label, in the image-embedding space.
struct LabelEmbeddingBank {
  std::string featurizer_id;
  std::vector<std::string> labels;
  Eigen::MatrixXd vectors;  // L x d

  void validate() const;
};

/// The k labels nearest to `image` by cosine distance; equal distances are
/// ordered by label.
std::vector<std::string> zero_shot_topk(const Eigen::Ref<const Eigen::VectorXd>& image,
                                        const LabelEmbeddingBank& bank, std::size_t k);

/// Percentage of views whose ground truth is among their first k predictions.
double accuracy_at_k(const std::vector<std::vector<std::string>>& predictions,
                     const std::vector<std::string>& ground_truth, std::size_t k);

struct ProbeConfig {
  std::size_t epochs = 100;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Softmax-regression layer: logits = W x + b.
struct LinearProbe {
  std::vector<std::string> classes;  // sorted
  Eigen::MatrixXd weights;           // C x d
  Eigen::VectorXd bias;              // C

  std::vector<std::string> predict(const Eigen::MatrixXd& X) const;
};

struct ProbeTrainResult {
  LinearProbe probe;
  /// Mean cross-entropy over the full training set after each epoch.
  std::vector<double> epoch_losses;
};

/// Minimizes mean softmax cross-entropy with Adam over seeded minibatches.
ProbeTrainResult linear_probe_train(const Eigen::MatrixXd& X, const std::vector<std::string>& y,
                                    const ProbeConfig& cfg);

struct ZeroShotTask {
  const LabelEmbeddingBank* bank = nullptr;
  std::vector<std::size_t> ks{1, 5, 10};
};

struct ProbeTask {
  const SplitSpec* split = nullptr;
  ProbeConfig config;
};

using DownstreamTask = std::variant<ZeroShotTask, ProbeTask>;

struct CategoryAccuracy {
  Category category = Category::stable;
  std::size_t n = 0;
  /// (k, accuracy percent); probes report k = 1 only.
  std::vector<std::pair<std::size_t, double>> accuracy_at;
};

/// Accuracy per stability category. Zero-shot scores every labeled view; the
/// probe trains once on train-scene views and scores test-scene views.
/// Ground truth is each scene's category label.
std::vector<CategoryAccuracy> evaluate_by_stability(const Dataset& dataset,
                                                    const ViewLabelSet& labels,
                                                    const DownstreamTask& task);

}  // namespace vstab
