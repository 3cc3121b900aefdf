#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "vstab/core.hpp"

namespace vstab {

/// |a ∩ b| / |a ∪ b|, and 1 when both sets are empty.
double iou(const ViewSet& a, const ViewSet& b);

/// F x F matrix of IoU between the featurizers' sets for one category.
Eigen::MatrixXd pairwise_iou_matrix(const std::vector<ViewLabelSet>& label_sets,
                                    Category category);

/// Mean off-diagonal pairwise IoU for stable, accidental and ood.
std::array<double, 3> mean_iou_by_category(const std::vector<ViewLabelSet>& label_sets);

/// Two-class accuracy (percent) of `predicted` against the annotated views:
/// hits on `positive` plus misses on `negative`, over both set sizes.
double overlap_with_reference(const ViewSet& predicted, const ViewSet& positive,
                              const ViewSet& negative);

}  // namespace vstab
