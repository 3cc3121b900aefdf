#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "vstab/cluster.hpp"
#include "vstab/core.hpp"

namespace vstab {

PcaProjection pca_project(const Eigen::MatrixXd& X, std::size_t q) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  if (n < 2) throw ValidationError("PCA needs at least two rows");
  if (q < 1 || static_cast<Eigen::Index>(q) > std::min(n - 1, d)) {
    throw ValidationError(fmt::format("PCA: q={} must be in [1, {}]", q, std::min(n - 1, d)));
  }
  if (!X.allFinite()) throw ValidationError("PCA input has non-finite values");

  PcaProjection out;
  out.mean = X.colwise().mean().transpose();
  const Eigen::MatrixXd centered = X.rowwise() - out.mean.transpose();

  // Singular values come back sorted descending; right singular vectors are
  // the covariance eigenvectors.
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd eig = svd.singularValues().array().square() / static_cast<double>(n - 1);
  const double total = centered.squaredNorm() / static_cast<double>(n - 1);

  const auto qi = static_cast<Eigen::Index>(q);
  out.components = svd.matrixV().leftCols(qi).transpose();
  for (Eigen::Index c = 0; c < qi; ++c) {
    Eigen::Index arg = 0;
    out.components.row(c).cwiseAbs().maxCoeff(&arg);
    if (out.components(c, arg) < 0.0) out.components.row(c) *= -1.0;
  }
  out.explained_variance = eig.head(qi);
  out.explained_variance_ratio =
      total > 0.0 ? Eigen::VectorXd(out.explained_variance / total) : Eigen::VectorXd::Zero(qi);
  out.projected = centered * out.components.transpose();
  return out;
}

}  // namespace vstab
