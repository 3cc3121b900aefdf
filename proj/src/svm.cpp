#include "vstab/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/core.h>

#include "vstab/core.hpp"

namespace vstab {

double rbf_kernel(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                  const Eigen::Ref<const Eigen::RowVectorXd>& b, double gamma) {
  return std::exp(-gamma * (a - b).squaredNorm());
}

double scale_gamma(const Eigen::MatrixXd& X) {
  const double d = static_cast<double>(X.cols());
  const double mean = X.mean();
  const double var = (X.array() - mean).square().mean();
  return var > 0.0 ? 1.0 / (d * var) : 1.0 / d;
}

double SvmModel::decision(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  double sum = bias;
  for (Eigen::Index s = 0; s < support_vectors.rows(); ++s) {
    sum += dual_coefs(s) * rbf_kernel(support_vectors.row(s), x, gamma);
  }
  return sum;
}

namespace {

constexpr double kTau = 1e-12;
constexpr std::size_t kMaxCachedKernel = 5000;

// Kernel rows, either precomputed in full or evaluated on demand.
class KernelRows {
 public:
  KernelRows(const Eigen::MatrixXd& X, double gamma) : X_(X), gamma_(gamma) {
    sq_norms_ = X.rowwise().squaredNorm();
    if (static_cast<std::size_t>(X.rows()) <= kMaxCachedKernel) {
      Eigen::MatrixXd sq_dist = -2.0 * (X * X.transpose());
      sq_dist.colwise() += sq_norms_;
      sq_dist.rowwise() += sq_norms_.transpose();
      full_ = (-gamma * sq_dist.array()).min(0.0).exp().matrix();
      cached_ = true;
    }
  }

  // Row i of the kernel matrix, valid until the next call.
  const Eigen::VectorXd& row(Eigen::Index i) {
    if (cached_) {
      scratch_ = full_.col(i);  // symmetric
      return scratch_;
    }
    const Eigen::VectorXd dots = X_ * X_.row(i).transpose();
    scratch_ = (-gamma_ * (sq_norms_.array() - 2.0 * dots.array() + sq_norms_(i)))
                   .min(0.0)
                   .exp()
                   .matrix();
    return scratch_;
  }

 private:
  const Eigen::MatrixXd& X_;
  double gamma_;
  Eigen::VectorXd sq_norms_;
  Eigen::MatrixXd full_;
  Eigen::VectorXd scratch_;
  bool cached_ = false;
};

}  // namespace

namespace {

// Rows sorted lexicographically, then by label, so training does not depend on
// the caller's row order.
std::vector<Eigen::Index> canonical_order(const Eigen::MatrixXd& X, const std::vector<int>& y) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(X.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      if (X(a, c) != X(b, c)) return X(a, c) < X(b, c);
    }
    return y[static_cast<std::size_t>(a)] < y[static_cast<std::size_t>(b)];
  });
  return order;
}

}  // namespace

SvmFit svm_train(const Eigen::MatrixXd& X_in, const std::vector<int>& y_in,
                 const SvmParams& params) {
  const Eigen::Index n = X_in.rows();
  if (static_cast<std::size_t>(n) != y_in.size()) throw ValidationError("label count mismatch");
  const std::vector<Eigen::Index> canon = canonical_order(X_in, y_in);
  Eigen::MatrixXd X(n, X_in.cols());
  std::vector<int> y(y_in.size());
  for (Eigen::Index t = 0; t < n; ++t) {
    X.row(t) = X_in.row(canon[static_cast<std::size_t>(t)]);
    y[static_cast<std::size_t>(t)] = y_in[static_cast<std::size_t>(canon[static_cast<std::size_t>(t)])];
  }
  if (!X.allFinite()) throw ValidationError("SVM input has non-finite values");
  if (!(params.c > 0.0)) throw ValidationError("C must be positive");
  std::size_t n_pos = 0;
  for (int label : y) {
    if (label != 1 && label != -1) throw ValidationError("SVM labels must be +1 or -1");
    if (label == 1) ++n_pos;
  }
  const std::size_t n_neg = y.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ValidationError("degenerate training set");

  SvmFit fit;
  SvmModel& model = fit.model;
  model.c = params.c;
  model.gamma = params.gamma > 0.0 ? params.gamma : scale_gamma(X);
  if (params.balanced_class_weights) {
    model.weight_positive = static_cast<double>(n) / (2.0 * static_cast<double>(n_pos));
    model.weight_negative = static_cast<double>(n) / (2.0 * static_cast<double>(n_neg));
  }

  std::vector<double> upper(static_cast<std::size_t>(n));
  for (Eigen::Index t = 0; t < n; ++t) {
    upper[static_cast<std::size_t>(t)] =
        params.c * (y[static_cast<std::size_t>(t)] == 1 ? model.weight_positive
                                                        : model.weight_negative);
  }

  // Visiting candidates in a seeded order makes ties resolve reproducibly.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(params.seed);
  std::shuffle(order.begin(), order.end(), rng);

  KernelRows kernel(X, model.gamma);
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd grad = Eigen::VectorXd::Constant(n, -1.0);
  Eigen::VectorXd yv(n);
  for (Eigen::Index t = 0; t < n; ++t) yv(t) = y[static_cast<std::size_t>(t)];

  auto in_up = [&](Eigen::Index t) {
    return yv(t) > 0 ? alpha(t) < upper[static_cast<std::size_t>(t)] : alpha(t) > 0.0;
  };
  auto in_low = [&](Eigen::Index t) {
    return yv(t) > 0 ? alpha(t) > 0.0 : alpha(t) < upper[static_cast<std::size_t>(t)];
  };

  const std::size_t max_iter = std::max<std::size_t>(params.max_passes, 1) * static_cast<std::size_t>(n);
  SvmTrainReport& report = fit.report;
  while (true) {
    double g_max = -std::numeric_limits<double>::infinity();
    double g_min = std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    Eigen::Index j = -1;
    for (Eigen::Index t : order) {
      const double v = -yv(t) * grad(t);
      if (in_up(t) && v > g_max) {
        g_max = v;
        i = t;
      }
      if (in_low(t) && v < g_min) {
        g_min = v;
        j = t;
      }
    }
    report.kkt_gap = (i < 0 || j < 0) ? 0.0 : g_max - g_min;
    if (i < 0 || j < 0 || report.kkt_gap < params.tol) {
      report.converged = true;
      break;
    }
    if (report.iterations >= max_iter) break;
    ++report.iterations;

    const Eigen::VectorXd k_i = kernel.row(i);
    const Eigen::VectorXd& k_j = kernel.row(j);
    const double c_i = upper[static_cast<std::size_t>(i)];
    const double c_j = upper[static_cast<std::size_t>(j)];
    const double old_ai = alpha(i);
    const double old_aj = alpha(j);
    // Q_ij = y_i y_j K_ij; the diagonal of an RBF kernel is 1.
    const double q_ij = yv(i) * yv(j) * k_i(j);

    if (yv(i) != yv(j)) {
      double quad = 2.0 + 2.0 * q_ij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad(i) - grad(j)) / quad;
      const double diff = alpha(i) - alpha(j);
      alpha(i) += delta;
      alpha(j) += delta;
      if (diff > 0.0) {
        if (alpha(j) < 0.0) {
          alpha(j) = 0.0;
          alpha(i) = diff;
        }
      } else if (alpha(i) < 0.0) {
        alpha(i) = 0.0;
        alpha(j) = -diff;
      }
      if (diff > c_i - c_j) {
        if (alpha(i) > c_i) {
          alpha(i) = c_i;
          alpha(j) = c_i - diff;
        }
      } else if (alpha(j) > c_j) {
        alpha(j) = c_j;
        alpha(i) = c_j + diff;
      }
    } else {
      double quad = 2.0 - 2.0 * q_ij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad(i) - grad(j)) / quad;
      const double sum = alpha(i) + alpha(j);
      alpha(i) -= delta;
      alpha(j) += delta;
      if (sum > c_i) {
        if (alpha(i) > c_i) {
          alpha(i) = c_i;
          alpha(j) = sum - c_i;
        }
      } else if (alpha(j) < 0.0) {
        alpha(j) = 0.0;
        alpha(i) = sum;
      }
      if (sum > c_j) {
        if (alpha(j) > c_j) {
          alpha(j) = c_j;
          alpha(i) = sum - c_j;
        }
      } else if (alpha(i) < 0.0) {
        alpha(i) = 0.0;
        alpha(j) = sum;
      }
    }

    const double d_ai = alpha(i) - old_ai;
    const double d_aj = alpha(j) - old_aj;
    // G_t += Q_ti d_ai + Q_tj d_aj
    grad.array() += yv.array() * (k_i.array() * (yv(i) * d_ai) + k_j.array() * (yv(j) * d_aj));

    report.max_equality_residual =
        std::max(report.max_equality_residual, std::fabs(alpha.dot(yv)));
    for (Eigen::Index t : {i, j}) {
      const double over = std::max(-alpha(t), alpha(t) - upper[static_cast<std::size_t>(t)]);
      report.max_box_violation = std::max(report.max_box_violation, std::max(over, 0.0));
    }
  }

  // Bias from free vectors, or the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t n_free = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = yv(t) * grad(t);
    const double c_t = upper[static_cast<std::size_t>(t)];
    if (alpha(t) >= c_t) {
      if (yv(t) < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (alpha(t) <= 0.0) {
      if (yv(t) > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);
  model.bias = -rho;

  std::vector<Eigen::Index> sv;
  for (Eigen::Index t = 0; t < n; ++t) {
    if (alpha(t) > 0.0) sv.push_back(t);
  }
  model.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), X.cols());
  model.dual_coefs.resize(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t s = 0; s < sv.size(); ++s) {
    model.support_vectors.row(static_cast<Eigen::Index>(s)) = X.row(sv[s]);
    model.dual_coefs(static_cast<Eigen::Index>(s)) = alpha(sv[s]) * yv(sv[s]);
  }
  return fit;
}

SvmPrediction svm_predict(const SvmModel& model, const Eigen::MatrixXd& X) {
  SvmPrediction out;
  if (X.rows() == 0) return out;
  if (X.cols() != model.support_vectors.cols()) {
    throw ValidationError(fmt::format("SVM expects {} dims, got {}",
                                      model.support_vectors.cols(), X.cols()));
  }
  out.labels.reserve(static_cast<std::size_t>(X.rows()));
  out.margins.reserve(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double m = model.decision(X.row(i));
    out.margins.push_back(m);
    out.labels.push_back(m >= 0.0 ? 1 : -1);
  }
  return out;
}

}  // namespace vstab
