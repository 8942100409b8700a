#include "xcrc/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "xcrc/errors.hpp"
#include "xcrc/rng.hpp"

namespace xcrc {

namespace {

using nlohmann::json;

// Seed for extra-person pair subsampling; fixed so fits are reproducible.
constexpr std::uint64_t kPairSubsampleSeed = 0x9e3779b97f4a7c15ull;
constexpr Eigen::Index kMaxExtraPairsPerSample = 20;

Eigen::MatrixXd second_moment(const Eigen::MatrixXd& diffs, double reg) {
  Eigen::MatrixXd cov =
      diffs.transpose() * diffs / static_cast<double>(diffs.rows());
  cov.diagonal().array() += reg;
  return cov;
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& cov, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NumericalError(std::string("singular ") + what +
                         " covariance; increase regularization");
  }
  return llt.solve(Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw IoError("matrix JSON: data length does not match dims");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index jj = 0; jj < cols; ++jj) m(i, jj) = data[k++];
  }
  return m;
}

}  // namespace

SubspaceModel fit_xqda(const Eigen::MatrixXd& d_x, const Eigen::MatrixXd& d_y,
                       const XqdaOptions& options) {
  if (d_x.rows() != d_y.rows() || d_x.cols() != d_y.cols()) {
    throw DimensionError("fit_xqda: paired views must have identical shapes");
  }
  const Eigen::Index n = d_x.rows();
  const Eigen::Index m = d_x.cols();
  if (n < 2) {
    throw ConfigError("fit_xqda: need at least 2 training pairs");
  }
  if (options.reg < 0.0) {
    throw ConfigError("fit_xqda: regularization must be nonnegative");
  }

  const Eigen::MatrixXd intra = d_x - d_y;

  // Extra-person differences over ordered pairs i != j, capped at 20n.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  const Eigen::Index total = n * (n - 1);
  const Eigen::Index cap = kMaxExtraPairsPerSample * n;
  if (total <= cap) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i != j) pairs.emplace_back(i, j);
      }
    }
  } else {
    Rng rng(kPairSubsampleSeed);
    pairs.reserve(static_cast<std::size_t>(cap));
    for (Eigen::Index k = 0; k < cap; ++k) {
      const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n)));
      auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n - 1)));
      if (j >= i) ++j;
      pairs.emplace_back(i, j);
    }
  }
  Eigen::MatrixXd extra(static_cast<Eigen::Index>(pairs.size()), m);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    extra.row(static_cast<Eigen::Index>(k)) =
        d_x.row(pairs[k].first) - d_y.row(pairs[k].second);
  }

  const Eigen::MatrixXd sigma_i = second_moment(intra, options.reg);
  const Eigen::MatrixXd sigma_e = second_moment(extra, 0.0);

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(sigma_e,
                                                                sigma_i);
  if (ges.info() != Eigen::Success) {
    throw NumericalError("fit_xqda: generalized eigenproblem failed; "
                         "singular intra-person covariance without "
                         "regularization");
  }

  // Eigenvalues come back ascending; retain from the top.
  const Eigen::VectorXd evals = ges.eigenvalues();
  const Eigen::MatrixXd evecs = ges.eigenvectors();
  Eigen::Index r;
  if (options.dim) {
    r = *options.dim;
    if (r < 1 || r > m) {
      throw ConfigError("fit_xqda: requested dimension exceeds available "
                        "eigenvectors");
    }
  } else {
    r = (evals.array() > 1.0).count();
    if (r < 1) r = 1;
  }

  SubspaceModel model;
  model.dim = r;
  model.projection.resize(m, r);
  model.eigenvalues.resize(r);
  for (Eigen::Index k = 0; k < r; ++k) {
    model.projection.col(k) = evecs.col(m - 1 - k);
    model.eigenvalues[k] = evals[m - 1 - k];
  }

  // Metric in the projected space.
  const Eigen::MatrixXd proj_i =
      model.projection.transpose() * sigma_i * model.projection;
  const Eigen::MatrixXd proj_e =
      model.projection.transpose() * sigma_e * model.projection;
  Eigen::MatrixXd metric =
      spd_inverse(proj_i, "intra-person") - spd_inverse(proj_e, "extra-person");
  model.metric = 0.5 * (metric + metric.transpose());
  return model;
}

Eigen::MatrixXd difference_of_inverses(const Eigen::MatrixXd& similar,
                                       const Eigen::MatrixXd& dissimilar,
                                       double reg) {
  if (similar.cols() != dissimilar.cols()) {
    throw DimensionError("difference sets disagree on dimension");
  }
  const Eigen::Index d = similar.cols();
  if (reg <= 0.0 && (similar.rows() < d + 1 || dissimilar.rows() < d + 1)) {
    throw ConfigError("fit_kissme: fewer than d+1 differences per set; "
                      "supply regularization");
  }
  const Eigen::MatrixXd inv_s = spd_inverse(second_moment(similar, reg),
                                            "similar-pair");
  const Eigen::MatrixXd inv_d = spd_inverse(second_moment(dissimilar, reg),
                                            "dissimilar-pair");
  return inv_s - inv_d;
}

MetricModel fit_kissme(const Eigen::MatrixXd& similar,
                       const Eigen::MatrixXd& dissimilar, double reg) {
  Eigen::MatrixXd raw = difference_of_inverses(similar, dissimilar, reg);
  raw = 0.5 * (raw + raw.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(raw);
  const Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(0.0);
  MetricModel model;
  model.m = es.eigenvectors() * clipped.asDiagonal() *
            es.eigenvectors().transpose();
  model.m = 0.5 * (model.m + model.m.transpose());
  return model;
}

MetricModel fit_mahalanobis(const Eigen::MatrixXd& view_a,
                            const Eigen::MatrixXd& view_b, double reg) {
  if (view_a.cols() != view_b.cols()) {
    throw DimensionError("fit_mahalanobis: views disagree on dimension");
  }
  auto centered_sq = [](const Eigen::MatrixXd& v) {
    const Eigen::RowVectorXd mean = v.colwise().mean();
    const Eigen::MatrixXd c = v.rowwise() - mean;
    return Eigen::MatrixXd(c.transpose() * c / static_cast<double>(v.rows()));
  };
  Eigen::MatrixXd pooled = 0.5 * (centered_sq(view_a) + centered_sq(view_b));
  pooled.diagonal().array() += reg;
  MetricModel model;
  model.m = spd_inverse(pooled, "pooled");
  return model;
}

Eigen::MatrixXd project(const SubspaceModel& model,
                        const Eigen::MatrixXd& samples) {
  if (samples.cols() != model.projection.rows()) {
    throw DimensionError("project: feature dimension " +
                         std::to_string(samples.cols()) + " != projection " +
                         std::to_string(model.projection.rows()));
  }
  return samples * model.projection;
}

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::cosine:
      return "cosine";
    case MetricKind::mahalanobis:
      return "mahalanobis";
    case MetricKind::kissme:
      return "kissme";
  }
  return "unknown";
}

MetricKind metric_kind_from_string(const std::string& name) {
  if (name == "cosine") return MetricKind::cosine;
  if (name == "mahalanobis") return MetricKind::mahalanobis;
  if (name == "kissme") return MetricKind::kissme;
  throw ConfigError("unknown metric kind '" + name + "'");
}

double metric_distance(MetricKind kind, const std::optional<MetricModel>& m,
                       const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) {
    throw DimensionError("metric_distance: vector sizes differ");
  }
  if (!a.allFinite() || !b.allFinite()) {
    throw NumericalError("metric_distance: non-finite input");
  }
  if (kind == MetricKind::cosine) {
    const double na = a.norm();
    const double nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0)) {
      throw NumericalError("metric_distance: zero-norm vector under cosine");
    }
    return 1.0 - a.dot(b) / (na * nb);
  }
  if (!m) {
    throw ConfigError("metric_distance: " + to_string(kind) +
                      " requires a fitted metric");
  }
  if (m->m.rows() != a.size() || m->m.cols() != a.size()) {
    throw DimensionError("metric_distance: metric dims do not match vectors");
  }
  const Eigen::VectorXd d = a - b;
  return d.dot(m->m * d);
}

std::string subspace_to_json(const SubspaceModel& model) {
  json j{{"projection", matrix_to_json(model.projection)},
         {"dim", model.dim}};
  if (model.metric) j["metric"] = matrix_to_json(*model.metric);
  if (model.eigenvalues.size() > 0) {
    j["eigenvalues"] = std::vector<double>(
        model.eigenvalues.data(),
        model.eigenvalues.data() + model.eigenvalues.size());
  }
  return j.dump(2);
}

SubspaceModel subspace_from_json(const std::string& text) {
  json j = json::parse(text);
  SubspaceModel model;
  model.projection = matrix_from_json(j.at("projection"));
  model.dim = j.at("dim").get<Eigen::Index>();
  if (j.contains("metric")) model.metric = matrix_from_json(j.at("metric"));
  if (j.contains("eigenvalues")) {
    const auto ev = j.at("eigenvalues").get<std::vector<double>>();
    model.eigenvalues = Eigen::Map<const Eigen::VectorXd>(
        ev.data(), static_cast<Eigen::Index>(ev.size()));
  }
  return model;
}

std::string metric_to_json(const MetricModel& model) {
  return json{{"metric", matrix_to_json(model.m)}}.dump(2);
}

MetricModel metric_from_json(const std::string& text) {
  json j = json::parse(text);
  return MetricModel{matrix_from_json(j.at("metric"))};
}

}  // namespace xcrc
