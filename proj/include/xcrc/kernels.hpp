#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

namespace xcrc {

enum class KernelKind { linear, rbf, expchi2 };

std::string to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string& name);

/// Kernel function selection. An unset bandwidth means "auto": resolve via
/// the median heuristic on training data before computing Gram matrices.
/// The exponential-chi2 kernel is only defined for elementwise nonnegative
/// inputs (histogram-style features).
struct KernelSpec {
  KernelKind kind = KernelKind::linear;
  std::optional<double> bandwidth;  // sigma; nullopt = auto

  bool needs_bandwidth() const { return kind != KernelKind::linear; }
  bool resolved() const { return !needs_bandwidth() || bandwidth.has_value(); }
};

/// Median-heuristic bandwidth: sigma such that 2*sigma^2 equals the median
/// pairwise squared Euclidean (rbf) or chi2 (expchi2) distance over distinct
/// sample pairs. Falls back to 1.0 when the median is zero. Requires n >= 2.
double median_bandwidth(const Eigen::MatrixXd& samples, KernelKind kind);

/// Returns a copy of `spec` with an explicit bandwidth, computed from the
/// training samples when the spec is on auto.
KernelSpec resolve_bandwidth(const KernelSpec& spec,
                             const Eigen::MatrixXd& train);

/// Gram matrix between row-sample matrices: entry (i, j) = k(a_i, b_j).
/// linear: dot product; rbf: exp(-||a-b||^2 / (2 sigma^2));
/// expchi2: exp(-chi2(a,b) / (2 sigma^2)) with
/// chi2(a,b) = sum_d (a_d-b_d)^2/(a_d+b_d), zero-denominator terms skipped.
/// Parallelizes over rows of A.
Eigen::MatrixXd gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                     const KernelSpec& spec);

/// Single-threaded per-pair reference for gram(); kept for testing and
/// benchmarking against the blocked/parallel path.
Eigen::MatrixXd gram_serial(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                            const KernelSpec& spec);

/// Kernel evaluations of one sample against every row of `train`.
Eigen::VectorXd kernel_vector(const Eigen::MatrixXd& train,
                              const Eigen::VectorXd& x,
                              const KernelSpec& spec);

}  // namespace xcrc
