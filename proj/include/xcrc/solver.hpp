#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "xcrc/kernels.hpp"

namespace xcrc {

struct SolverConfig {
  double lambda = 1.0;
  KernelSpec kernel_x;
  KernelSpec kernel_y;
  // Fit fails when the reciprocal condition number of a coupling matrix
  // drops below this.
  double condition_limit = 1e-12;
  // Diagnostic: drop the cross-view coupling term, which reduces the solver
  // to two independent kernel ridge solves.
  bool decouple = false;
};

/// Per-pair coding coefficients over the training dictionary.
struct CodingPair {
  Eigen::VectorXd alpha_x;
  Eigen::VectorXd alpha_y;
};

/// Fitted cross-view solver state. Immutable after fit(); safe to share
/// across threads.
///
/// With K = Gram(training) per view and lambda from the config:
///   p_x = k_x + lambda I,  p_y = k_y + lambda I      (both SPD)
///   q = I - p_y^-1 p_x^-1, w = I - p_x^-1 p_y^-1
///   beta_xx = w^-1 p_x^-1, beta_xy = w^-1 p_x^-1 p_y^-1
///   beta_yy = q^-1 p_y^-1, beta_yx = q^-1 p_y^-1 p_x^-1
/// Row i of d_x and d_y describes the same training subject seen from the
/// gallery-side and probe-side cameras respectively.
struct TrainedSolver {
  Eigen::MatrixXd d_x, d_y;  // n x m training features, rows are samples
  Eigen::MatrixXd k_x, k_y;
  Eigen::MatrixXd p_x, p_y;
  Eigen::MatrixXd q, w;
  Eigen::MatrixXd beta_xx, beta_xy, beta_yy, beta_yx;
  SolverConfig config;  // kernels resolved to explicit bandwidths

  Eigen::Index n() const { return d_x.rows(); }
  Eigen::Index dim() const { return d_x.cols(); }
};

/// Precomputes the solve operators for a paired training set. Kernel specs
/// on auto bandwidth are resolved per view from the training data here and
/// frozen. Throws NumericalError naming the offending matrix when Q or W is
/// ill-conditioned (reciprocal condition below config.condition_limit).
TrainedSolver fit(const Eigen::MatrixXd& d_x, const Eigen::MatrixXd& d_y,
                  const SolverConfig& config);

/// Codes one gallery/probe feature pair:
///   alpha_x = beta_xx k_x + beta_xy k_y
///   alpha_y = beta_yx k_x + beta_yy k_y
/// with k_x = kernel_vector(d_x, x), k_y = kernel_vector(d_y, y).
CodingPair code_pair(const TrainedSolver& solver, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& y);

/// Cosine similarity of the coding vectors, in [-1, 1]. Throws
/// NumericalError("degenerate coding") on a zero-norm vector.
double similarity(const CodingPair& pair);

/// Norms of the coupled stationarity equations at the given pair:
///   r_y = ||p_y alpha_y - alpha_x - k_y||, r_x = ||p_x alpha_x - alpha_y - k_x||.
/// Both vanish (up to round-off) for pairs produced by code_pair.
std::pair<double, double> stationarity_residual(const TrainedSolver& solver,
                                                const Eigen::VectorXd& x,
                                                const Eigen::VectorXd& y,
                                                const CodingPair& pair);

struct RankResult {
  // similarity(j, i) = cosine similarity of probe j against gallery i.
  // A degenerate pairing scores -inf and sorts last.
  Eigen::MatrixXd similarity;
  // Per probe: gallery indices sorted by descending similarity, ties broken
  // by ascending gallery index.
  std::vector<std::vector<Eigen::Index>> ranking;
};

/// Scores every probe against every gallery sample.
///
/// Coding vectors separate into per-gallery and per-probe columns
/// (alpha_x(i,j) = U_i + V_j and likewise alpha_y), so all cosine
/// similarities come out of four n x l kernel-coefficient matrices and
/// their cross products; no per-pair vector is materialized.
RankResult rank_all(const TrainedSolver& solver, const Eigen::MatrixXd& gallery,
                    const Eigen::MatrixXd& probe);

/// Literal per-pair double loop over code_pair + similarity. Serial
/// reference for rank_all; also behind the CLI --naive flag.
RankResult rank_all_naive(const TrainedSolver& solver,
                          const Eigen::MatrixXd& gallery,
                          const Eigen::MatrixXd& probe);

/// Descending-score order with ties broken by ascending index.
std::vector<Eigen::Index> rank_descending(const Eigen::VectorXd& scores);

}  // namespace xcrc
