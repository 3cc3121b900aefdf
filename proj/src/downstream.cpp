#include "vstab/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <fmt/core.h>

namespace vstab {

void LabelEmbeddingBank::validate() const {
  if (labels.empty()) throw ValidationError("label bank is empty");
  if (static_cast<Eigen::Index>(labels.size()) != vectors.rows()) {
    throw ValidationError(fmt::format("label bank has {} labels but {} vectors", labels.size(),
                                      vectors.rows()));
  }
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (!seen.insert(l).second) throw ValidationError(fmt::format("duplicate label '{}'", l));
  }
  if (!vectors.allFinite()) throw ValidationError("label bank has non-finite values");
}

std::vector<std::string> zero_shot_topk(const Eigen::Ref<const Eigen::VectorXd>& image,
                                        const LabelEmbeddingBank& bank, std::size_t k) {
  if (k > bank.labels.size()) {
    throw ValidationError(fmt::format("k={} exceeds the {} bank labels", k, bank.labels.size()));
  }
  if (image.size() != bank.vectors.cols()) {
    throw ValidationError(fmt::format("image dims {} do not match bank dims {}", image.size(),
                                      bank.vectors.cols()));
  }
  std::vector<std::pair<double, std::size_t>> ranked;
  ranked.reserve(bank.labels.size());
  for (std::size_t l = 0; l < bank.labels.size(); ++l) {
    const Eigen::VectorXd v = bank.vectors.row(static_cast<Eigen::Index>(l)).transpose();
    ranked.emplace_back(feature_distance(image, v), l);
  }
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), ranked.end(),
                    [&](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first < b.first;
                      return bank.labels[a.second] < bank.labels[b.second];
                    });
  std::vector<std::string> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(bank.labels[ranked[i].second]);
  return out;
}

double accuracy_at_k(const std::vector<std::vector<std::string>>& predictions,
                     const std::vector<std::string>& ground_truth, std::size_t k) {
  if (k < 1) throw ValidationError("k must be at least 1");
  if (predictions.size() != ground_truth.size()) {
    throw ValidationError("prediction and ground-truth counts differ");
  }
  if (predictions.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    const auto end = p.begin() + static_cast<std::ptrdiff_t>(std::min(k, p.size()));
    if (std::find(p.begin(), end, ground_truth[i]) != end) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(predictions.size());
}

void ProbeConfig::validate() const {
  if (epochs < 1) throw ValidationError("probe needs at least one epoch");
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  if (batch_size < 1) throw ValidationError("batch size must be positive");
}

namespace {

// Row-wise softmax of logits, in place.
void softmax_rows(Eigen::MatrixXd& logits) {
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - m).exp().matrix();
    logits.row(i) /= logits.row(i).sum();
  }
}

double mean_cross_entropy(const LinearProbe& probe, const Eigen::MatrixXd& X,
                          const std::vector<std::size_t>& targets) {
  Eigen::MatrixXd logits = (X * probe.weights.transpose()).rowwise() + probe.bias.transpose();
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    total += lse - logits(i, static_cast<Eigen::Index>(targets[static_cast<std::size_t>(i)]));
  }
  return total / static_cast<double>(logits.rows());
}

}  // namespace

std::vector<std::string> LinearProbe::predict(const Eigen::MatrixXd& X) const {
  if (X.cols() != weights.cols()) {
    throw ValidationError(fmt::format("probe expects {} dims, got {}", weights.cols(), X.cols()));
  }
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(X.rows()));
  const Eigen::MatrixXd logits = (X * weights.transpose()).rowwise() + bias.transpose();
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    out.push_back(classes[static_cast<std::size_t>(arg)]);
  }
  return out;
}

ProbeTrainResult linear_probe_train(const Eigen::MatrixXd& X, const std::vector<std::string>& y,
                                    const ProbeConfig& cfg) {
  cfg.validate();
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw ValidationError("label count mismatch");
  if (!X.allFinite()) throw ValidationError("probe input has non-finite values");

  ProbeTrainResult result;
  LinearProbe& probe = result.probe;
  const std::set<std::string> distinct(y.begin(), y.end());
  probe.classes.assign(distinct.begin(), distinct.end());
  if (probe.classes.size() < 2) throw ValidationError("probe needs at least two classes");
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < probe.classes.size(); ++c) index[probe.classes[c]] = c;
  std::vector<std::size_t> targets(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) targets[i] = index.at(y[i]);

  const auto n_classes = static_cast<Eigen::Index>(probe.classes.size());
  const Eigen::Index d = X.cols();
  probe.weights = Eigen::MatrixXd::Zero(n_classes, d);
  probe.bias = Eigen::VectorXd::Zero(n_classes);

  Eigen::MatrixXd m_w = Eigen::MatrixXd::Zero(n_classes, d);
  Eigen::MatrixXd v_w = Eigen::MatrixXd::Zero(n_classes, d);
  Eigen::VectorXd m_b = Eigen::VectorXd::Zero(n_classes);
  Eigen::VectorXd v_b = Eigen::VectorXd::Zero(n_classes);
  double beta1_t = 1.0;
  double beta2_t = 1.0;

  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const auto b = static_cast<Eigen::Index>(stop - start);
      Eigen::MatrixXd xb(b, d);
      for (Eigen::Index r = 0; r < b; ++r) {
        xb.row(r) = X.row(static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(r)]));
      }
      Eigen::MatrixXd probs = (xb * probe.weights.transpose()).rowwise() + probe.bias.transpose();
      softmax_rows(probs);
      for (Eigen::Index r = 0; r < b; ++r) {
        probs(r, static_cast<Eigen::Index>(targets[order[start + static_cast<std::size_t>(r)]])) -=
            1.0;
      }
      probs /= static_cast<double>(b);
      const Eigen::MatrixXd g_w = probs.transpose() * xb;
      const Eigen::VectorXd g_b = probs.colwise().sum().transpose();

      beta1_t *= cfg.beta1;
      beta2_t *= cfg.beta2;
      m_w = cfg.beta1 * m_w + (1.0 - cfg.beta1) * g_w;
      v_w = cfg.beta2 * v_w + (1.0 - cfg.beta2) * g_w.cwiseProduct(g_w);
      m_b = cfg.beta1 * m_b + (1.0 - cfg.beta1) * g_b;
      v_b = cfg.beta2 * v_b + (1.0 - cfg.beta2) * g_b.cwiseProduct(g_b);
      const double step = cfg.learning_rate;
      probe.weights.array() -= step * (m_w.array() / (1.0 - beta1_t)) /
                               ((v_w.array() / (1.0 - beta2_t)).sqrt() + cfg.epsilon);
      probe.bias.array() -= step * (m_b.array() / (1.0 - beta1_t)) /
                            ((v_b.array() / (1.0 - beta2_t)).sqrt() + cfg.epsilon);
    }
    result.epoch_losses.push_back(mean_cross_entropy(probe, X, targets));
  }
  return result;
}

namespace {

struct LabeledView {
  const SceneCapture* scene = nullptr;
  std::size_t ordinal = 0;
  Category category = Category::stable;
};

// Labeled views in dataset order.
std::vector<LabeledView> collect_labeled(const Dataset& dataset, const ViewLabelSet& labels) {
  std::vector<LabeledView> out;
  for (const auto& scene : dataset.scenes) {
    for (const auto& view : scene.views) {
      const ViewKey key{scene.scene_id, view.view_id};
      for (Category c : all_categories) {
        if (labels.of(c).count(key)) {
          out.push_back({&scene, view.ordinal, c});
          break;
        }
      }
    }
  }
  return out;
}

Eigen::RowVectorXd embedding_row(const LabeledView& v, const std::string& fid) {
  return v.scene->embedding(fid).rows.row(static_cast<Eigen::Index>(v.ordinal));
}

std::vector<CategoryAccuracy> run_zero_shot(const Dataset& dataset, const ViewLabelSet& labels,
                                            const ZeroShotTask& task) {
  if (!task.bank) throw ValidationError("zero-shot evaluation needs a label bank");
  task.bank->validate();
  const auto views = collect_labeled(dataset, labels);
  std::vector<CategoryAccuracy> out;
  for (Category c : all_categories) {
    std::vector<std::vector<std::string>> preds;
    std::vector<std::string> truth;
    for (const auto& v : views) {
      if (v.category != c) continue;
      const Eigen::VectorXd x = embedding_row(v, labels.featurizer_id).transpose();
      preds.push_back(zero_shot_topk(x, *task.bank, task.bank->labels.size()));
      truth.push_back(v.scene->category_label);
    }
    CategoryAccuracy row{c, truth.size(), {}};
    for (std::size_t k : task.ks) row.accuracy_at.emplace_back(k, accuracy_at_k(preds, truth, k));
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<CategoryAccuracy> run_probe(const Dataset& dataset, const ViewLabelSet& labels,
                                        const ProbeTask& task) {
  if (!task.split) throw ValidationError("probe evaluation needs a scene split");
  task.split->check_disjoint();
  const auto views = collect_labeled(dataset, labels);

  std::vector<Eigen::RowVectorXd> train_x;
  std::vector<std::string> train_y;
  for (const auto& v : views) {
    if (!task.split->is_train(v.scene->scene_id)) continue;
    train_x.push_back(embedding_row(v, labels.featurizer_id));
    train_y.push_back(v.scene->category_label);
  }
  if (train_x.empty()) throw ValidationError("probe has no training views");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(train_x.size()), train_x.front().size());
  for (std::size_t i = 0; i < train_x.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = train_x[i];
  const LinearProbe probe = linear_probe_train(x, train_y, task.config).probe;

  std::vector<CategoryAccuracy> out;
  for (Category c : all_categories) {
    std::vector<std::vector<std::string>> preds;
    std::vector<std::string> truth;
    for (const auto& v : views) {
      if (v.category != c || !task.split->test_scene_ids.count(v.scene->scene_id)) continue;
      preds.push_back(probe.predict(embedding_row(v, labels.featurizer_id)));
      truth.push_back(v.scene->category_label);
    }
    out.push_back({c, truth.size(), {{1, accuracy_at_k(preds, truth, 1)}}});
  }
  return out;
}

}  // namespace

std::vector<CategoryAccuracy> evaluate_by_stability(const Dataset& dataset,
                                                    const ViewLabelSet& labels,
                                                    const DownstreamTask& task) {
  labels.validate();
  if (const auto* zs = std::get_if<ZeroShotTask>(&task)) return run_zero_shot(dataset, labels, *zs);
  return run_probe(dataset, labels, std::get<ProbeTask>(task));
}

}  // namespace vstab
