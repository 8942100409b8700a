#include "xcrc/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "xcrc/errors.hpp"

namespace xcrc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_query(const TrainedSolver& solver, Eigen::Index xdim,
                 Eigen::Index ydim) {
  if (xdim != solver.dim() || ydim != solver.dim()) {
    throw DimensionError("query feature dimension does not match training (" +
                         std::to_string(solver.dim()) + ")");
  }
}

// Cosine from precomputed pieces; -inf marks a degenerate (zero-norm) pair.
double cosine_or_degenerate(double dot, double n2_x, double n2_y) {
  if (!(n2_x > 0.0) || !(n2_y > 0.0)) return -kInf;
  return dot / (std::sqrt(n2_x) * std::sqrt(n2_y));
}

void check_probe_degeneracy(const RankResult& result) {
  for (Eigen::Index j = 0; j < result.similarity.rows(); ++j) {
    if ((result.similarity.row(j).array() == -kInf).all()) {
      throw NumericalError("degenerate coding for every gallery pairing of "
                           "probe " + std::to_string(j));
    }
  }
}

}  // namespace

TrainedSolver fit(const Eigen::MatrixXd& d_x, const Eigen::MatrixXd& d_y,
                  const SolverConfig& config) {
  if (d_x.rows() != d_y.rows() || d_x.cols() != d_y.cols()) {
    throw DimensionError("fit: training views must have identical shapes");
  }
  if (d_x.rows() < 1) {
    throw ConfigError("fit: need at least one training pair");
  }
  if (!d_x.allFinite() || !d_y.allFinite()) {
    throw ConfigError("fit: non-finite training features");
  }
  if (!(config.lambda > 0.0)) {
    throw ConfigError("fit: lambda must be positive");
  }
  if (!(config.condition_limit > 0.0 && config.condition_limit < 1.0)) {
    throw ConfigError("fit: condition_limit must lie in (0, 1)");
  }

  TrainedSolver s;
  s.d_x = d_x;
  s.d_y = d_y;
  s.config = config;
  s.config.kernel_x = resolve_bandwidth(config.kernel_x, d_x);
  s.config.kernel_y = resolve_bandwidth(config.kernel_y, d_y);

  const Eigen::Index n = d_x.rows();
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n, n);

  s.k_x = gram(d_x, d_x, s.config.kernel_x);
  s.k_y = gram(d_y, d_y, s.config.kernel_y);
  s.p_x = s.k_x + config.lambda * identity;
  s.p_y = s.k_y + config.lambda * identity;

  Eigen::LLT<Eigen::MatrixXd> llt_x(s.p_x);
  Eigen::LLT<Eigen::MatrixXd> llt_y(s.p_y);
  if (llt_x.info() != Eigen::Success || llt_y.info() != Eigen::Success) {
    throw NumericalError("fit: P matrix is not positive definite");
  }

  const Eigen::MatrixXd px_inv = llt_x.solve(identity);
  const Eigen::MatrixXd py_inv = llt_y.solve(identity);

  if (config.decouple) {
    s.q = identity;
    s.w = identity;
    s.beta_xx = px_inv;
    s.beta_yy = py_inv;
    s.beta_xy = Eigen::MatrixXd::Zero(n, n);
    s.beta_yx = Eigen::MatrixXd::Zero(n, n);
    return s;
  }

  const Eigen::MatrixXd pyi_pxi = llt_y.solve(px_inv);
  const Eigen::MatrixXd pxi_pyi = llt_x.solve(py_inv);

  s.q = identity - pyi_pxi;
  s.w = identity - pxi_pyi;

  Eigen::PartialPivLU<Eigen::MatrixXd> lu_q(s.q);
  const double rcond_q = lu_q.rcond();
  if (!std::isfinite(rcond_q) || rcond_q < config.condition_limit) {
    throw NumericalError("fit: ill-conditioned coupling matrix Q (rcond=" +
                         std::to_string(rcond_q) + ")");
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_w(s.w);
  const double rcond_w = lu_w.rcond();
  if (!std::isfinite(rcond_w) || rcond_w < config.condition_limit) {
    throw NumericalError("fit: ill-conditioned coupling matrix W (rcond=" +
                         std::to_string(rcond_w) + ")");
  }

  s.beta_xx = lu_w.solve(px_inv);
  s.beta_xy = lu_w.solve(pxi_pyi);
  s.beta_yy = lu_q.solve(py_inv);
  s.beta_yx = lu_q.solve(pyi_pxi);
  return s;
}

CodingPair code_pair(const TrainedSolver& solver, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& y) {
  check_query(solver, x.size(), y.size());
  const Eigen::VectorXd kx = kernel_vector(solver.d_x, x, solver.config.kernel_x);
  const Eigen::VectorXd ky = kernel_vector(solver.d_y, y, solver.config.kernel_y);
  CodingPair pair;
  pair.alpha_x = solver.beta_xx * kx + solver.beta_xy * ky;
  pair.alpha_y = solver.beta_yx * kx + solver.beta_yy * ky;
  return pair;
}

double similarity(const CodingPair& pair) {
  const double nx = pair.alpha_x.norm();
  const double ny = pair.alpha_y.norm();
  if (!(nx > 0.0) || !(ny > 0.0)) {
    throw NumericalError("degenerate coding: zero-norm coding vector");
  }
  return pair.alpha_x.dot(pair.alpha_y) / (nx * ny);
}

std::pair<double, double> stationarity_residual(const TrainedSolver& solver,
                                                const Eigen::VectorXd& x,
                                                const Eigen::VectorXd& y,
                                                const CodingPair& pair) {
  check_query(solver, x.size(), y.size());
  if (pair.alpha_x.size() != solver.n() || pair.alpha_y.size() != solver.n()) {
    throw DimensionError("stationarity_residual: coding length != n");
  }
  const Eigen::VectorXd kx = kernel_vector(solver.d_x, x, solver.config.kernel_x);
  const Eigen::VectorXd ky = kernel_vector(solver.d_y, y, solver.config.kernel_y);
  const double r_y = (solver.p_y * pair.alpha_y - pair.alpha_x - ky).norm();
  const double r_x = (solver.p_x * pair.alpha_x - pair.alpha_y - kx).norm();
  return {r_y, r_x};
}

std::vector<Eigen::Index> rank_descending(const Eigen::VectorXd& scores) {
  std::vector<Eigen::Index> order(scores.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return order;
}

RankResult rank_all(const TrainedSolver& solver, const Eigen::MatrixXd& gallery,
                    const Eigen::MatrixXd& probe) {
  check_query(solver, gallery.cols(), probe.cols());
  if (gallery.rows() < 1 || probe.rows() < 1) {
    throw ConfigError("rank_all: empty gallery or probe set");
  }
  const Eigen::Index lg = gallery.rows();
  const Eigen::Index lp = probe.rows();

  const Eigen::MatrixXd kx_gal = gram(solver.d_x, gallery, solver.config.kernel_x);
  const Eigen::MatrixXd ky_pro = gram(solver.d_y, probe, solver.config.kernel_y);

  // alpha_x(i, j) = ax_gal.col(i) + ax_pro.col(j), same split for alpha_y.
  const Eigen::MatrixXd ax_gal = solver.beta_xx * kx_gal;
  const Eigen::MatrixXd ax_pro = solver.beta_xy * ky_pro;
  const Eigen::MatrixXd ay_gal = solver.beta_yx * kx_gal;
  const Eigen::MatrixXd ay_pro = solver.beta_yy * ky_pro;

  // Cross products carrying every pairwise interaction.
  const Eigen::RowVectorXd dot_gg =
      (ax_gal.array() * ay_gal.array()).colwise().sum().matrix();  // 1 x lg
  const Eigen::RowVectorXd dot_pp =
      (ax_pro.array() * ay_pro.array()).colwise().sum().matrix();  // 1 x lp
  const Eigen::MatrixXd cross_xy = ax_gal.transpose() * ay_pro;  // lg x lp
  const Eigen::MatrixXd cross_yx = ay_gal.transpose() * ax_pro;  // lg x lp
  const Eigen::MatrixXd cross_xx = ax_gal.transpose() * ax_pro;  // lg x lp
  const Eigen::MatrixXd cross_yy = ay_gal.transpose() * ay_pro;  // lg x lp
  const Eigen::VectorXd n2_ax_gal = ax_gal.colwise().squaredNorm();
  const Eigen::VectorXd n2_ax_pro = ax_pro.colwise().squaredNorm();
  const Eigen::VectorXd n2_ay_gal = ay_gal.colwise().squaredNorm();
  const Eigen::VectorXd n2_ay_pro = ay_pro.colwise().squaredNorm();

  RankResult result;
  result.similarity.resize(lp, lg);
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < lp; ++j) {
    for (Eigen::Index i = 0; i < lg; ++i) {
      const double dot = dot_gg[i] + cross_xy(i, j) + cross_yx(i, j) +
                         dot_pp[j];
      const double n2_x = n2_ax_gal[i] + 2.0 * cross_xx(i, j) + n2_ax_pro[j];
      const double n2_y = n2_ay_gal[i] + 2.0 * cross_yy(i, j) + n2_ay_pro[j];
      result.similarity(j, i) = cosine_or_degenerate(dot, n2_x, n2_y);
    }
  }
  check_probe_degeneracy(result);

  result.ranking.resize(static_cast<std::size_t>(lp));
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < lp; ++j) {
    result.ranking[static_cast<std::size_t>(j)] =
        rank_descending(result.similarity.row(j).transpose());
  }
  return result;
}

RankResult rank_all_naive(const TrainedSolver& solver,
                          const Eigen::MatrixXd& gallery,
                          const Eigen::MatrixXd& probe) {
  check_query(solver, gallery.cols(), probe.cols());
  if (gallery.rows() < 1 || probe.rows() < 1) {
    throw ConfigError("rank_all: empty gallery or probe set");
  }
  RankResult result;
  result.similarity.resize(probe.rows(), gallery.rows());
  for (Eigen::Index j = 0; j < probe.rows(); ++j) {
    for (Eigen::Index i = 0; i < gallery.rows(); ++i) {
      const CodingPair pair =
          code_pair(solver, gallery.row(i).transpose(), probe.row(j).transpose());
      result.similarity(j, i) =
          cosine_or_degenerate(pair.alpha_x.dot(pair.alpha_y),
                               pair.alpha_x.squaredNorm(),
                               pair.alpha_y.squaredNorm());
    }
  }
  check_probe_degeneracy(result);
  for (Eigen::Index j = 0; j < probe.rows(); ++j) {
    result.ranking.push_back(rank_descending(result.similarity.row(j).transpose()));
  }
  return result;
}

}  // namespace xcrc
