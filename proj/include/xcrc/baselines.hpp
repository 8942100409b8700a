#pragma once

#include <Eigen/Dense>
#include <vector>

#include "xcrc/kernels.hpp"
#include "xcrc/solver.hpp"

namespace xcrc {

enum class PenaltyNorm { l1, l2 };

struct BaselineConfig {
  double lambda = 1.0;
  PenaltyNorm norm = PenaltyNorm::l2;
  int l1_max_iters = 5000;
  double l1_tolerance = 1e-8;
  bool record_objective = false;  // fill SrcResult::objectives
};

/// Ridge coding: alpha = (D^T D + lambda I)^-1 D^T y for a dictionary with
/// atoms as columns (m x n).
Eigen::VectorXd crc_code(const Eigen::MatrixXd& dict, const Eigen::VectorXd& y,
                         double lambda);

struct SrcResult {
  Eigen::VectorXd alpha;
  bool converged = false;
  int iterations = 0;
  std::vector<double> objectives;  // accepted-iterate objectives, on request
};

/// l1 coding: approximate minimizer of ||y - D alpha||^2 + lambda ||alpha||_1
/// via accelerated proximal gradient (function-value restart, step from the
/// dictionary spectral norm). Converged means the l1 subgradient optimality
/// residual fell below l1_tolerance; hitting l1_max_iters first clears the
/// flag instead of raising.
SrcResult src_code(const Eigen::MatrixXd& dict, const Eigen::VectorXd& y,
                   const BaselineConfig& config);

/// Max-norm violation of the l1 optimality conditions at alpha:
/// |d_i^T (y - D alpha)| <= lambda/2 on zero coordinates and
/// = lambda/2 sign(alpha_i) on the rest.
double l1_optimality_residual(const Eigen::MatrixXd& dict,
                              const Eigen::VectorXd& y,
                              const Eigen::VectorXd& alpha, double lambda);

struct DirectRanking {
  std::vector<Eigen::Index> order;  // subjects, ascending residual
  Eigen::VectorXd residuals;        // per gallery column
  bool coder_converged = true;
};

/// SRC/CRC ranking without training data: codes the probe over the gallery
/// itself (single-shot, one column per subject) and ranks subjects ascending
/// by the single-column class residual ||y - x_i alpha_i||.
DirectRanking direct_rank(const Eigen::MatrixXd& gallery,
                          const Eigen::VectorXd& probe,
                          const BaselineConfig& config);

/// Camera-specific coding: two independent ridge solves, one per view.
CodingPair c2rc_code(const Eigen::MatrixXd& d_x, const Eigen::MatrixXd& d_y,
                     const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                     double lambda);

/// Fitted state for the kernelized independent solves (the nonlinear
/// extension of c2rc_code): alpha = (K + lambda I)^-1 k per view.
struct KernelC2rc {
  Eigen::MatrixXd d_x, d_y;          // n x m, rows are samples
  Eigen::MatrixXd solve_x, solve_y;  // (K + lambda I)^-1
  KernelSpec kernel_x, kernel_y;
  double lambda = 1.0;
};

KernelC2rc fit_kernel_c2rc(const Eigen::MatrixXd& d_x,
                           const Eigen::MatrixXd& d_y, double lambda,
                           const KernelSpec& kernel_x,
                           const KernelSpec& kernel_y);

CodingPair kernel_c2rc_code(const KernelC2rc& model, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& y);

/// Cosine-matches every probe against every gallery sample. Since each side
/// of the pair depends on its own view only, this is one coefficient solve
/// per sample plus a single cross product.
RankResult rank_all_kernel_c2rc(const KernelC2rc& model,
                                const Eigen::MatrixXd& gallery,
                                const Eigen::MatrixXd& probe);

}  // namespace xcrc
