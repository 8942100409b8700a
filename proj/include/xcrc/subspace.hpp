#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

namespace xcrc {

/// Learned cross-view projection with an optional metric in the projected
/// space. projection is m x r; metric (when present) is r x r symmetric.
struct SubspaceModel {
  Eigen::MatrixXd projection;
  std::optional<Eigen::MatrixXd> metric;
  Eigen::Index dim = 0;
  // Retained generalized eigenvalues, descending. Kept for diagnostics.
  Eigen::VectorXd eigenvalues;
};

struct MetricModel {
  Eigen::MatrixXd m;  // d x d symmetric
};

struct XqdaOptions {
  double reg = 1e-3;  // added to the intra-person covariance diagonal
  // Fixed output dimension; unset keeps eigenvectors with generalized
  // eigenvalue > 1 (at least one).
  std::optional<Eigen::Index> dim;
};

/// Cross-view quadratic discriminant subspace from paired training views
/// (rows are samples, row i of both matrices is the same subject).
/// Builds intra-person differences {x_i - y_i} and extra-person differences
/// {x_i - y_j, i != j}, forms their covariances, and keeps the top
/// generalized eigenvectors of sigma_I^-1 sigma_E. The metric is
/// sigma_I^-1 - sigma_E^-1 recomputed in the projected space.
///
/// When n(n-1) > 20n the extra-person pairs are subsampled to exactly 20n:
/// Rng(0x9e3779b97f4a7c15) drawing i = below(n), j = below(n-1) with j
/// incremented past i, repeated 20n times.
SubspaceModel fit_xqda(const Eigen::MatrixXd& d_x, const Eigen::MatrixXd& d_y,
                       const XqdaOptions& options = {});

/// sigma_S^-1 - sigma_D^-1 from two sets of difference vectors (rows),
/// before any eigenvalue clipping. Covariances are second-moment matrices
/// with reg added to the diagonal.
Eigen::MatrixXd difference_of_inverses(const Eigen::MatrixXd& similar,
                                       const Eigen::MatrixXd& dissimilar,
                                       double reg);

/// KISSME metric: difference_of_inverses projected onto the PSD cone by
/// clipping negative eigenvalues at zero. Each set needs at least d+1
/// difference vectors unless reg > 0.
MetricModel fit_kissme(const Eigen::MatrixXd& similar,
                       const Eigen::MatrixXd& dissimilar, double reg = 0.0);

/// Pooled inverse covariance of the two training views (per-view centering),
/// the M used by the Mahalanobis matcher.
MetricModel fit_mahalanobis(const Eigen::MatrixXd& view_a,
                            const Eigen::MatrixXd& view_b, double reg = 1e-6);

/// Row-wise projection: samples (l x m) -> (l x r).
Eigen::MatrixXd project(const SubspaceModel& model,
                        const Eigen::MatrixXd& samples);

enum class MetricKind { cosine, mahalanobis, kissme };

std::string to_string(MetricKind kind);
MetricKind metric_kind_from_string(const std::string& name);

/// cosine: 1 - cos(a, b); mahalanobis / kissme: (a-b)^T M (a-b).
double metric_distance(MetricKind kind, const std::optional<MetricModel>& m,
                       const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// JSON (de)serialization; matrices stored as row-major flat arrays with
/// explicit dims.
std::string subspace_to_json(const SubspaceModel& model);
SubspaceModel subspace_from_json(const std::string& text);
std::string metric_to_json(const MetricModel& model);
MetricModel metric_from_json(const std::string& text);

}  // namespace xcrc
