#include "vstab/agreement.hpp"

#include <algorithm>
#include <iterator>

#include <fmt/core.h>

namespace vstab {

double iou(const ViewSet& a, const ViewSet& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++inter;
      ++ia;
      ++ib;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

Eigen::MatrixXd pairwise_iou_matrix(const std::vector<ViewLabelSet>& label_sets,
                                    Category category) {
  const auto f = static_cast<Eigen::Index>(label_sets.size());
  if (f > 1) {
    const ViewSet universe = label_sets.front().labeled();
    for (const auto& ls : label_sets) {
      if (ls.labeled() != universe) {
        throw ValidationError(fmt::format(
            "featurizer '{}' labels a different view universe than '{}'", ls.featurizer_id,
            label_sets.front().featurizer_id));
      }
    }
  }
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(f, f);
  for (Eigen::Index i = 0; i < f; ++i) {
    for (Eigen::Index j = i + 1; j < f; ++j) {
      const double v = iou(label_sets[static_cast<std::size_t>(i)].of(category),
                           label_sets[static_cast<std::size_t>(j)].of(category));
      m(i, j) = v;
      m(j, i) = v;
    }
  }
  return m;
}

std::array<double, 3> mean_iou_by_category(const std::vector<ViewLabelSet>& label_sets) {
  if (label_sets.size() < 2) throw ValidationError("mean IoU needs at least two featurizers");
  std::array<double, 3> out{};
  for (std::size_t c = 0; c < all_categories.size(); ++c) {
    const Eigen::MatrixXd m = pairwise_iou_matrix(label_sets, all_categories[c]);
    const double f = static_cast<double>(m.rows());
    out[c] = (m.sum() - m.trace()) / (f * (f - 1.0));
  }
  return out;
}

double overlap_with_reference(const ViewSet& predicted, const ViewSet& positive,
                              const ViewSet& negative) {
  ViewSet common;
  std::set_intersection(positive.begin(), positive.end(), negative.begin(), negative.end(),
                        std::inserter(common, common.end()));
  if (!common.empty()) throw ValidationError("reference positive and negative sets overlap");
  const std::size_t annotated = positive.size() + negative.size();
  if (annotated == 0) throw ValidationError("reference annotation is empty");
  std::size_t correct = 0;
  for (const auto& v : positive) correct += predicted.count(v);
  for (const auto& v : negative) correct += predicted.count(v) == 0 ? 1 : 0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(annotated);
}

}  // namespace vstab
