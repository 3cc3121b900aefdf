#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace vstab {

struct SvmParams {
  double c = 1.0;
  /// RBF width; <= 0 selects 1 / (d * variance of all feature entries).
  double gamma = 0.0;
  double tol = 1e-3;
  /// Iteration cap is max_passes * N pair updates.
  std::size_t max_passes = 100;
  /// Weight each class's box constraint by N / (2 * class count).
  bool balanced_class_weights = true;
  std::uint64_t seed = 0;
};

struct SvmModel {
  Eigen::MatrixXd support_vectors;  // m x d
  Eigen::VectorXd dual_coefs;       // alpha_i * y_i
  double bias = 0.0;
  double gamma = 1.0;
  double c = 1.0;
  /// Box-constraint multipliers for the negative (-1) and positive (+1) class.
  double weight_negative = 1.0;
  double weight_positive = 1.0;

  double decision(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

/// Diagnostics of one SMO run.
struct SvmTrainReport {
  std::size_t iterations = 0;
  bool converged = false;
  /// Final max violating-pair gap m(alpha) - M(alpha).
  double kkt_gap = 0.0;
  /// Largest |sum alpha_i y_i| seen after any accepted step.
  double max_equality_residual = 0.0;
  /// Largest box-constraint violation seen after any accepted step.
  double max_box_violation = 0.0;
};

struct SvmFit {
  SvmModel model;
  SvmTrainReport report;
};

/// Soft-margin RBF SVM trained by SMO. Labels are +1 / -1. Rows are put in a
/// canonical order first, so the fit does not depend on input row order.
SvmFit svm_train(const Eigen::MatrixXd& X, const std::vector<int>& y, const SvmParams& params);

struct SvmPrediction {
  std::vector<int> labels;
  std::vector<double> margins;
};

/// Label is +1 when the decision value is >= 0, else -1.
SvmPrediction svm_predict(const SvmModel& model, const Eigen::MatrixXd& X);

double rbf_kernel(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                  const Eigen::Ref<const Eigen::RowVectorXd>& b, double gamma);

/// 1 / (d * var(X)) over all entries of X; 1 / d when X has zero variance.
double scale_gamma(const Eigen::MatrixXd& X);

}  // namespace vstab
