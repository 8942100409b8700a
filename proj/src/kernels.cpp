#include "xcrc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "xcrc/errors.hpp"

namespace xcrc {

namespace {

void check_inputs(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                  const KernelSpec& spec) {
  if (a.cols() != b.cols()) {
    throw DimensionError("gram: sample dimensions differ (" +
                         std::to_string(a.cols()) + " vs " +
                         std::to_string(b.cols()) + ")");
  }
  if (!spec.resolved()) {
    throw ConfigError("gram: kernel bandwidth is unresolved (auto); call "
                      "resolve_bandwidth on training data first");
  }
  if (spec.needs_bandwidth() && *spec.bandwidth <= 0.0) {
    throw ConfigError("gram: kernel bandwidth must be positive");
  }
  if (spec.kind == KernelKind::expchi2 &&
      (a.minCoeff() < 0.0 || b.minCoeff() < 0.0)) {
    throw ConfigError("gram: expchi2 kernel requires nonnegative features");
  }
}

double chi2_distance(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  double d = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double s = a[k] + b[k];
    if (s > 0.0) {
      const double diff = a[k] - b[k];
      d += diff * diff / s;
    }
  }
  return d;
}

}  // namespace

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::linear:
      return "linear";
    case KernelKind::rbf:
      return "rbf";
    case KernelKind::expchi2:
      return "expchi2";
  }
  return "unknown";
}

KernelKind kernel_kind_from_string(const std::string& name) {
  if (name == "linear") return KernelKind::linear;
  if (name == "rbf") return KernelKind::rbf;
  if (name == "expchi2") return KernelKind::expchi2;
  throw ConfigError("unknown kernel kind '" + name + "'");
}

double median_bandwidth(const Eigen::MatrixXd& samples, KernelKind kind) {
  const Eigen::Index n = samples.rows();
  if (n < 2) {
    throw ConfigError("median_bandwidth: need at least 2 samples");
  }
  if (kind == KernelKind::linear) {
    throw ConfigError("median_bandwidth: linear kernel has no bandwidth");
  }
  if (kind == KernelKind::expchi2 && samples.minCoeff() < 0.0) {
    throw ConfigError("median_bandwidth: expchi2 requires nonnegative features");
  }
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (kind == KernelKind::rbf) {
        dist.push_back((samples.row(i) - samples.row(j)).squaredNorm());
      } else {
        dist.push_back(chi2_distance(samples.row(i), samples.row(j)));
      }
    }
  }
  // Median: middle order statistic, mean of the two central ones when even.
  const std::size_t mid = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + mid, dist.end());
  double median = dist[mid];
  if (dist.size() % 2 == 0) {
    const double lower =
        *std::max_element(dist.begin(), dist.begin() + mid);
    median = 0.5 * (median + lower);
  }
  if (median <= 0.0) return 1.0;
  return std::sqrt(median / 2.0);
}

KernelSpec resolve_bandwidth(const KernelSpec& spec,
                             const Eigen::MatrixXd& train) {
  KernelSpec out = spec;
  if (out.needs_bandwidth() && !out.bandwidth) {
    out.bandwidth = median_bandwidth(train, out.kind);
  }
  return out;
}

Eigen::MatrixXd gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                     const KernelSpec& spec) {
  check_inputs(a, b, spec);
  const Eigen::Index na = a.rows();
  const Eigen::Index nb = b.rows();

  if (spec.kind == KernelKind::linear) {
    return a * b.transpose();
  }

  Eigen::MatrixXd out(na, nb);
  const double inv2s2 = 1.0 / (2.0 * *spec.bandwidth * *spec.bandwidth);

  if (spec.kind == KernelKind::rbf) {
    // ||a-b||^2 = ||a||^2 + ||b||^2 - 2 a.b, clamped at 0 against round-off.
    const Eigen::VectorXd na2 = a.rowwise().squaredNorm();
    const Eigen::VectorXd nb2 = b.rowwise().squaredNorm();
    out.noalias() = a * b.transpose();
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < na; ++i) {
      for (Eigen::Index j = 0; j < nb; ++j) {
        const double d2 = std::max(0.0, na2[i] + nb2[j] - 2.0 * out(i, j));
        out(i, j) = std::exp(-d2 * inv2s2);
      }
    }
    return out;
  }

#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < na; ++i) {
    for (Eigen::Index j = 0; j < nb; ++j) {
      out(i, j) = std::exp(-chi2_distance(a.row(i), b.row(j)) * inv2s2);
    }
  }
  return out;
}

Eigen::MatrixXd gram_serial(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                            const KernelSpec& spec) {
  check_inputs(a, b, spec);
  Eigen::MatrixXd out(a.rows(), b.rows());
  const double inv2s2 = spec.needs_bandwidth()
                            ? 1.0 / (2.0 * *spec.bandwidth * *spec.bandwidth)
                            : 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      switch (spec.kind) {
        case KernelKind::linear:
          out(i, j) = a.row(i).dot(b.row(j));
          break;
        case KernelKind::rbf:
          out(i, j) = std::exp(-(a.row(i) - b.row(j)).squaredNorm() * inv2s2);
          break;
        case KernelKind::expchi2:
          out(i, j) = std::exp(-chi2_distance(a.row(i), b.row(j)) * inv2s2);
          break;
      }
    }
  }
  return out;
}

Eigen::VectorXd kernel_vector(const Eigen::MatrixXd& train,
                              const Eigen::VectorXd& x,
                              const KernelSpec& spec) {
  return gram(train, x.transpose(), spec).col(0);
}

}  // namespace xcrc
