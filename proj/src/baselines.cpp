#include "xcrc/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "xcrc/errors.hpp"

namespace xcrc {

namespace {

void check_coding_inputs(const Eigen::MatrixXd& dict, const Eigen::VectorXd& y,
                         double lambda) {
  if (dict.rows() != y.size()) {
    throw DimensionError("coding: dictionary has " +
                         std::to_string(dict.rows()) + " rows but target has " +
                         std::to_string(y.size()));
  }
  if (!(lambda > 0.0)) {
    throw ConfigError("coding: lambda must be positive");
  }
}

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double t) {
  return v.array().sign() * (v.array().abs() - t).max(0.0);
}

double lasso_objective(const Eigen::MatrixXd& dict, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& alpha, double lambda) {
  return (y - dict * alpha).squaredNorm() + lambda * alpha.lpNorm<1>();
}

}  // namespace

Eigen::VectorXd crc_code(const Eigen::MatrixXd& dict, const Eigen::VectorXd& y,
                         double lambda) {
  check_coding_inputs(dict, y, lambda);
  Eigen::MatrixXd normal = dict.transpose() * dict;
  normal.diagonal().array() += lambda;
  return Eigen::LLT<Eigen::MatrixXd>(normal).solve(dict.transpose() * y);
}

double l1_optimality_residual(const Eigen::MatrixXd& dict,
                              const Eigen::VectorXd& y,
                              const Eigen::VectorXd& alpha, double lambda) {
  const Eigen::VectorXd g = dict.transpose() * (y - dict * alpha);
  const double half = lambda / 2.0;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    const double v = alpha[i] == 0.0
                         ? std::max(0.0, std::abs(g[i]) - half)
                         : std::abs(g[i] - half * (alpha[i] > 0 ? 1.0 : -1.0));
    worst = std::max(worst, v);
  }
  return worst;
}

SrcResult src_code(const Eigen::MatrixXd& dict, const Eigen::VectorXd& y,
                   const BaselineConfig& config) {
  check_coding_inputs(dict, y, config.lambda);
  if (config.l1_max_iters < 1 || !(config.l1_tolerance > 0.0)) {
    throw ConfigError("src_code: invalid iteration budget or tolerance");
  }
  const Eigen::Index n = dict.cols();
  const double lambda = config.lambda;

  // Lipschitz constant of the smooth part: 2 * sigma_max(D)^2 via the
  // smaller of the two normal matrices.
  double sigma2;
  if (dict.rows() <= n) {
    sigma2 = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(
                 dict * dict.transpose(), Eigen::EigenvaluesOnly)
                 .eigenvalues().maxCoeff();
  } else {
    sigma2 = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(
                 dict.transpose() * dict, Eigen::EigenvaluesOnly)
                 .eigenvalues().maxCoeff();
  }
  const double step = 1.0 / std::max(2.0 * sigma2, 1e-300);

  SrcResult result;
  Eigen::VectorXd x_prev = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd z = x_prev;
  double t = 1.0;
  double f_prev = lasso_objective(dict, y, x_prev, lambda);
  if (config.record_objective) result.objectives.push_back(f_prev);

  for (int it = 0; it < config.l1_max_iters; ++it) {
    Eigen::VectorXd grad = 2.0 * (dict.transpose() * (dict * z - y));
    Eigen::VectorXd x_next = soft_threshold(z - step * grad, step * lambda);
    double f_next = lasso_objective(dict, y, x_next, lambda);
    if (f_next > f_prev) {
      // Function-value restart: drop momentum and take a plain proximal
      // step from the last accepted iterate, which cannot increase f.
      t = 1.0;
      grad = 2.0 * (dict.transpose() * (dict * x_prev - y));
      x_next = soft_threshold(x_prev - step * grad, step * lambda);
      f_next = lasso_objective(dict, y, x_next, lambda);
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    z = x_next + ((t - 1.0) / t_next) * (x_next - x_prev);
    x_prev = x_next;
    f_prev = f_next;
    t = t_next;
    result.iterations = it + 1;
    if (config.record_objective) result.objectives.push_back(f_prev);
    if (l1_optimality_residual(dict, y, x_prev, lambda) <=
        config.l1_tolerance) {
      result.converged = true;
      break;
    }
  }
  result.alpha = x_prev;
  return result;
}

DirectRanking direct_rank(const Eigen::MatrixXd& gallery,
                          const Eigen::VectorXd& probe,
                          const BaselineConfig& config) {
  check_coding_inputs(gallery, probe, config.lambda);
  DirectRanking out;
  Eigen::VectorXd alpha;
  if (config.norm == PenaltyNorm::l2) {
    alpha = crc_code(gallery, probe, config.lambda);
  } else {
    SrcResult src = src_code(gallery, probe, config);
    alpha = src.alpha;
    out.coder_converged = src.converged;
  }
  const Eigen::Index n = gallery.cols();
  out.residuals.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.residuals[i] = (probe - gallery.col(i) * alpha[i]).norm();
  }
  out.order = rank_descending(-out.residuals);
  return out;
}

CodingPair c2rc_code(const Eigen::MatrixXd& d_x, const Eigen::MatrixXd& d_y,
                     const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                     double lambda) {
  if (d_x.cols() != d_y.cols()) {
    throw DimensionError("c2rc_code: training views disagree on subject count");
  }
  CodingPair pair;
  pair.alpha_x = crc_code(d_x, x, lambda);
  pair.alpha_y = crc_code(d_y, y, lambda);
  return pair;
}

KernelC2rc fit_kernel_c2rc(const Eigen::MatrixXd& d_x,
                           const Eigen::MatrixXd& d_y, double lambda,
                           const KernelSpec& kernel_x,
                           const KernelSpec& kernel_y) {
  if (d_x.rows() != d_y.rows() || d_x.cols() != d_y.cols()) {
    throw DimensionError("fit_kernel_c2rc: training views must match");
  }
  if (!(lambda > 0.0)) {
    throw ConfigError("fit_kernel_c2rc: lambda must be positive");
  }
  KernelC2rc model;
  model.d_x = d_x;
  model.d_y = d_y;
  model.lambda = lambda;
  model.kernel_x = resolve_bandwidth(kernel_x, d_x);
  model.kernel_y = resolve_bandwidth(kernel_y, d_y);
  const Eigen::Index n = d_x.rows();
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd reg_x = gram(d_x, d_x, model.kernel_x) + lambda * identity;
  Eigen::MatrixXd reg_y = gram(d_y, d_y, model.kernel_y) + lambda * identity;
  model.solve_x = Eigen::LLT<Eigen::MatrixXd>(reg_x).solve(identity);
  model.solve_y = Eigen::LLT<Eigen::MatrixXd>(reg_y).solve(identity);
  return model;
}

CodingPair kernel_c2rc_code(const KernelC2rc& model, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& y) {
  if (x.size() != model.d_x.cols() || y.size() != model.d_y.cols()) {
    throw DimensionError("kernel_c2rc_code: feature dimension mismatch");
  }
  CodingPair pair;
  pair.alpha_x = model.solve_x * kernel_vector(model.d_x, x, model.kernel_x);
  pair.alpha_y = model.solve_y * kernel_vector(model.d_y, y, model.kernel_y);
  return pair;
}

RankResult rank_all_kernel_c2rc(const KernelC2rc& model,
                                const Eigen::MatrixXd& gallery,
                                const Eigen::MatrixXd& probe) {
  if (gallery.cols() != model.d_x.cols() || probe.cols() != model.d_y.cols()) {
    throw DimensionError("rank_all_kernel_c2rc: feature dimension mismatch");
  }
  const Eigen::MatrixXd ax =
      model.solve_x * gram(model.d_x, gallery, model.kernel_x);  // n x lg
  const Eigen::MatrixXd ay =
      model.solve_y * gram(model.d_y, probe, model.kernel_y);  // n x lp
  const Eigen::VectorXd nx = ax.colwise().norm();
  const Eigen::VectorXd ny = ay.colwise().norm();
  const Eigen::MatrixXd dots = ay.transpose() * ax;  // lp x lg

  RankResult result;
  result.similarity.resize(probe.rows(), gallery.rows());
  for (Eigen::Index j = 0; j < probe.rows(); ++j) {
    bool any_ok = false;
    for (Eigen::Index i = 0; i < gallery.rows(); ++i) {
      if (nx[i] > 0.0 && ny[j] > 0.0) {
        result.similarity(j, i) = dots(j, i) / (nx[i] * ny[j]);
        any_ok = true;
      } else {
        result.similarity(j, i) = -std::numeric_limits<double>::infinity();
      }
    }
    if (!any_ok) {
      throw NumericalError("degenerate coding for every gallery pairing of "
                           "probe " + std::to_string(j));
    }
    result.ranking.push_back(rank_descending(result.similarity.row(j).transpose()));
  }
  return result;
}

}  // namespace xcrc
