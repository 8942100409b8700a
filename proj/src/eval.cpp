#include "xcrc/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "xcrc/errors.hpp"
#include "xcrc/rng.hpp"
#include "xcrc/solver.hpp"

namespace xcrc {

namespace {

constexpr std::uint64_t kKissmePairSeed = 0x9e3779b97f4a7c15ull;

// Rows of `set` grouped by id, input order preserved within a group.
std::map<std::string, std::vector<Eigen::Index>> rows_by_id(
    const SampleSet& set) {
  std::map<std::string, std::vector<Eigen::Index>> rows;
  for (Eigen::Index i = 0; i < set.n(); ++i) {
    rows[set.ids[static_cast<std::size_t>(i)]].push_back(i);
  }
  return rows;
}

SampleSet take_rows(const SampleSet& set,
                    const std::vector<Eigen::Index>& order) {
  SampleSet out;
  out.features.resize(static_cast<Eigen::Index>(order.size()), set.dim());
  for (std::size_t k = 0; k < order.size(); ++k) {
    out.ids.push_back(set.ids[static_cast<std::size_t>(order[k])]);
    out.cams.push_back(set.cams[static_cast<std::size_t>(order[k])]);
    out.features.row(static_cast<Eigen::Index>(k)) = set.features.row(order[k]);
  }
  return out;
}

Eigen::MatrixXd negated_pairwise_metric(const Eigen::MatrixXd& probe,
                                        const Eigen::MatrixXd& gallery,
                                        const MetricModel& metric) {
  // (g - p)^T M (g - p) expanded through one GEMM against M.
  const Eigen::MatrixXd mg = gallery * metric.m;  // lg x d
  const Eigen::MatrixXd mp = probe * metric.m;    // lp x d
  const Eigen::VectorXd qg = (mg.array() * gallery.array()).rowwise().sum();
  const Eigen::VectorXd qp = (mp.array() * probe.array()).rowwise().sum();
  Eigen::MatrixXd scores = 2.0 * (probe * mg.transpose());  // lp x lg
  scores.colwise() -= qp;
  scores.rowwise() -= qg.transpose();
  return scores;  // = -(qp + qg - 2 p M g) = -distance
}

Eigen::MatrixXd cosine_scores(const Eigen::MatrixXd& probe,
                              const Eigen::MatrixXd& gallery) {
  const Eigen::VectorXd np = probe.rowwise().norm();
  const Eigen::VectorXd ng = gallery.rowwise().norm();
  if ((np.array() <= 0.0).any() || (ng.array() <= 0.0).any()) {
    throw NumericalError("cosine matcher: zero-norm feature row");
  }
  Eigen::MatrixXd cos = probe * gallery.transpose();
  cos.array().colwise() /= np.array();
  cos.array().rowwise() /= ng.transpose().array();
  return cos;  // ranking by cosine == ranking by -(1 - cosine)
}

// Extra-person difference rows x_i - y_j (i != j), capped at 20n pairs.
Eigen::MatrixXd cross_differences(const Eigen::MatrixXd& d_x,
                                  const Eigen::MatrixXd& d_y) {
  const Eigen::Index n = d_x.rows();
  const Eigen::Index total = n * (n - 1);
  const Eigen::Index cap = 20 * n;
  Eigen::MatrixXd out(std::min(total, cap), d_x.cols());
  if (total <= cap) {
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i != j) out.row(k++) = d_x.row(i) - d_y.row(j);
      }
    }
  } else {
    Rng rng(kKissmePairSeed);
    for (Eigen::Index k = 0; k < cap; ++k) {
      const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n)));
      auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n - 1)));
      if (j >= i) ++j;
      out.row(k) = d_x.row(i) - d_y.row(j);
    }
  }
  return out;
}

}  // namespace

SplitResult split(const CrossViewDataset& data, const SplitSpec& spec) {
  const auto rows_a = rows_by_id(data.view_a);
  const auto rows_b = rows_by_id(data.view_b);
  const std::set<std::string> distractors(data.distractor_ids.begin(),
                                          data.distractor_ids.end());

  std::vector<std::string> paired;
  for (const auto& [id, rows] : rows_a) {
    if (distractors.contains(id)) {
      throw ConfigError("split: distractor '" + id + "' appears in probe view");
    }
    if (!rows_b.contains(id)) {
      throw ConfigError("split: identity '" + id + "' missing from gallery view");
    }
    paired.push_back(id);  // map iteration is sorted
  }

  const auto n_ids = static_cast<Eigen::Index>(paired.size());
  Eigen::Index n_train;
  if (spec.train_count) {
    n_train = *spec.train_count;
  } else {
    const double fraction = spec.train_fraction.value_or(0.5);
    if (!(fraction > 0.0 && fraction < 1.0)) {
      throw ConfigError("split: train_fraction must lie in (0, 1)");
    }
    n_train = static_cast<Eigen::Index>(
        std::floor(fraction * static_cast<double>(n_ids)));
  }
  if (n_train < 1 || n_train >= n_ids) {
    throw ConfigError("split: need 1 <= train_count < paired identities (" +
                      std::to_string(n_ids) + ")");
  }

  Rng rng(spec.seed);
  std::vector<std::string> shuffled = paired;
  rng.shuffle(shuffled);
  std::vector<std::string> train_ids(shuffled.begin(),
                                     shuffled.begin() + n_train);
  std::vector<std::string> test_ids(shuffled.begin() + n_train,
                                    shuffled.end());
  std::sort(train_ids.begin(), train_ids.end());
  std::sort(test_ids.begin(), test_ids.end());
  std::vector<std::string> distractor_ids(distractors.begin(),
                                          distractors.end());

  // One row per identity per camera. Selection draws happen in this fixed
  // order: train ids, test ids, distractor ids; view_a before view_b.
  auto pick = [&](const std::vector<Eigen::Index>& rows,
                  const std::string& id) -> Eigen::Index {
    if (rows.size() == 1) return rows[0];
    if (!spec.single_shot) {
      throw ConfigError("split: identity '" + id +
                        "' is multi-shot but single_shot is off");
    }
    return rows[rng.below(rows.size())];
  };
  auto select = [&](const std::vector<std::string>& ids, bool in_probe) {
    std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> sel;
    for (const auto& id : ids) {
      if (in_probe) sel.first.push_back(pick(rows_a.at(id), id));
      sel.second.push_back(pick(rows_b.at(id), id));
    }
    return sel;
  };

  const auto train_sel = select(train_ids, true);
  const auto test_sel = select(test_ids, true);
  const auto distractor_sel = select(distractor_ids, false);

  SplitResult out;
  out.train.view_a = take_rows(data.view_a, train_sel.first);
  out.train.view_b = take_rows(data.view_b, train_sel.second);
  out.test.view_a = take_rows(data.view_a, test_sel.first);
  std::vector<Eigen::Index> gallery_rows = test_sel.second;
  gallery_rows.insert(gallery_rows.end(), distractor_sel.second.begin(),
                      distractor_sel.second.end());
  out.test.view_b = take_rows(data.view_b, gallery_rows);
  out.test.distractor_ids = distractor_ids;
  return out;
}

CmcCurve cmc(const std::vector<std::vector<Eigen::Index>>& rankings,
             const std::vector<std::string>& probe_ids,
             const std::vector<std::string>& gallery_ids) {
  if (rankings.size() != probe_ids.size()) {
    throw DimensionError("cmc: rankings and probe ids disagree");
  }
  if (probe_ids.empty() || gallery_ids.empty()) {
    throw ConfigError("cmc: empty probe or gallery set");
  }
  std::map<std::string, std::vector<Eigen::Index>> gallery_pos;
  for (std::size_t i = 0; i < gallery_ids.size(); ++i) {
    gallery_pos[gallery_ids[i]].push_back(static_cast<Eigen::Index>(i));
  }

  const auto lg = static_cast<Eigen::Index>(gallery_ids.size());
  Eigen::VectorXd hits = Eigen::VectorXd::Zero(lg);
  for (std::size_t j = 0; j < probe_ids.size(); ++j) {
    const auto it = gallery_pos.find(probe_ids[j]);
    if (it == gallery_pos.end()) {
      throw ConfigError("cmc: probe '" + probe_ids[j] +
                        "' has no true match in the gallery");
    }
    if (it->second.size() != 1) {
      throw ConfigError("cmc: probe '" + probe_ids[j] +
                        "' matches multiple gallery entries");
    }
    const Eigen::Index truth = it->second[0];
    const auto& order = rankings[j];
    if (static_cast<Eigen::Index>(order.size()) != lg) {
      throw DimensionError("cmc: ranking length != gallery size");
    }
    const auto pos = std::find(order.begin(), order.end(), truth);
    if (pos == order.end()) {
      throw ConfigError("cmc: ranking for probe '" + probe_ids[j] +
                        "' misses the true gallery index");
    }
    hits[static_cast<Eigen::Index>(pos - order.begin())] += 1.0;
  }

  CmcCurve curve;
  curve.trials = 1;
  curve.rates.resize(lg);
  double cum = 0.0;
  for (Eigen::Index k = 0; k < lg; ++k) {
    cum += hits[k];
    curve.rates[k] = cum / static_cast<double>(probe_ids.size());
  }
  return curve;
}

std::string to_string(Method method) {
  switch (method) {
    case Method::kernel_xcrc: return "kernel_xcrc";
    case Method::xcrc_linear: return "xcrc_linear";
    case Method::kernel_c2rc: return "kernel_c2rc";
    case Method::c2rc: return "c2rc";
    case Method::crc_direct: return "crc_direct";
    case Method::src_direct: return "src_direct";
    case Method::cosine: return "cosine";
    case Method::mahalanobis: return "mahalanobis";
    case Method::kissme: return "kissme";
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  for (const Method m :
       {Method::kernel_xcrc, Method::xcrc_linear, Method::kernel_c2rc,
        Method::c2rc, Method::crc_direct, Method::src_direct, Method::cosine,
        Method::mahalanobis, Method::kissme}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown method '" + name + "'");
}

SplitEvaluation evaluate_split(const CrossViewDataset& train,
                               const CrossViewDataset& test,
                               const MethodConfig& method) {
  // x is the gallery-side view (camera B), y the probe side (camera A).
  Eigen::MatrixXd d_x = train.view_b.features;
  Eigen::MatrixXd d_y = train.view_a.features;
  Eigen::MatrixXd gallery = test.view_b.features;
  Eigen::MatrixXd probe = test.view_a.features;
  if (gallery.rows() < 1 || probe.rows() < 1) {
    throw ConfigError("evaluate_split: empty test partition");
  }

  if (method.xqda) {
    const SubspaceModel sub = fit_xqda(d_x, d_y, *method.xqda);
    d_x = project(sub, d_x);
    d_y = project(sub, d_y);
    gallery = project(sub, gallery);
    probe = project(sub, probe);
  }

  SplitEvaluation out;
  out.probe_ids = test.view_a.ids;
  out.gallery_ids = test.view_b.ids;
  const Eigen::Index lp = probe.rows();
  const Eigen::Index lg = gallery.rows();

  switch (method.method) {
    case Method::kernel_xcrc:
    case Method::xcrc_linear: {
      SolverConfig cfg;
      cfg.lambda = method.lambda;
      cfg.kernel_x = method.method == Method::xcrc_linear
                         ? KernelSpec{KernelKind::linear, std::nullopt}
                         : method.kernel;
      cfg.kernel_y = cfg.kernel_x;
      cfg.condition_limit = method.condition_limit;
      const TrainedSolver solver = fit(d_x, d_y, cfg);
      const RankResult rr = method.naive_ranking
                                ? rank_all_naive(solver, gallery, probe)
                                : rank_all(solver, gallery, probe);
      out.scores = rr.similarity;
      out.ranking = rr.ranking;
      break;
    }
    case Method::kernel_c2rc: {
      const KernelC2rc model =
          fit_kernel_c2rc(d_x, d_y, method.lambda, method.kernel, method.kernel);
      if (method.naive_ranking) {
        out.scores.resize(lp, lg);
        for (Eigen::Index j = 0; j < lp; ++j) {
          for (Eigen::Index i = 0; i < lg; ++i) {
            const CodingPair pair = kernel_c2rc_code(
                model, gallery.row(i).transpose(), probe.row(j).transpose());
            out.scores(j, i) = similarity(pair);
          }
          out.ranking.push_back(rank_descending(out.scores.row(j).transpose()));
        }
      } else {
        const RankResult rr = rank_all_kernel_c2rc(model, gallery, probe);
        out.scores = rr.similarity;
        out.ranking = rr.ranking;
      }
      break;
    }
    case Method::c2rc: {
      // Independent explicit-feature ridge solves per sample, then cosine.
      const Eigen::MatrixXd dict_x = d_x.transpose();  // m x n
      const Eigen::MatrixXd dict_y = d_y.transpose();
      auto coder = [&](const Eigen::MatrixXd& dict) {
        Eigen::MatrixXd normal = dict.transpose() * dict;
        normal.diagonal().array() += method.lambda;
        return Eigen::LLT<Eigen::MatrixXd>(normal);
      };
      const auto llt_x = coder(dict_x);
      const auto llt_y = coder(dict_y);
      const Eigen::MatrixXd ax =
          llt_x.solve(dict_x.transpose() * gallery.transpose());  // n x lg
      const Eigen::MatrixXd ay =
          llt_y.solve(dict_y.transpose() * probe.transpose());  // n x lp
      out.scores = cosine_scores(ay.transpose(), ax.transpose());
      for (Eigen::Index j = 0; j < lp; ++j) {
        out.ranking.push_back(rank_descending(out.scores.row(j).transpose()));
      }
      break;
    }
    case Method::crc_direct:
    case Method::src_direct: {
      BaselineConfig cfg;
      cfg.lambda = method.lambda;
      cfg.norm = method.method == Method::src_direct ? PenaltyNorm::l1
                                                     : PenaltyNorm::l2;
      cfg.l1_max_iters = method.l1_max_iters;
      cfg.l1_tolerance = method.l1_tolerance;
      const Eigen::MatrixXd dict = gallery.transpose();  // m x lg
      out.scores.resize(lp, lg);
      out.ranking.resize(static_cast<std::size_t>(lp));
#pragma omp parallel for schedule(dynamic)
      for (Eigen::Index j = 0; j < lp; ++j) {
        const DirectRanking dr =
            direct_rank(dict, probe.row(j).transpose(), cfg);
        out.scores.row(j) = -dr.residuals.transpose();
        out.ranking[static_cast<std::size_t>(j)] = dr.order;
      }
      break;
    }
    case Method::cosine: {
      out.scores = cosine_scores(probe, gallery);
      for (Eigen::Index j = 0; j < lp; ++j) {
        out.ranking.push_back(rank_descending(out.scores.row(j).transpose()));
      }
      break;
    }
    case Method::mahalanobis:
    case Method::kissme: {
      MetricModel metric;
      if (method.method == Method::mahalanobis) {
        metric = fit_mahalanobis(d_y, d_x, method.metric_reg);
      } else {
        metric = fit_kissme(d_x - d_y, cross_differences(d_x, d_y),
                            method.metric_reg);
      }
      out.scores = negated_pairwise_metric(probe, gallery, metric);
      for (Eigen::Index j = 0; j < lp; ++j) {
        out.ranking.push_back(rank_descending(out.scores.row(j).transpose()));
      }
      break;
    }
  }

  out.curve = cmc(out.ranking, out.probe_ids, out.gallery_ids);
  return out;
}

TrialsResult run_trials(const CrossViewDataset& data, const SplitSpec& spec,
                        const MethodConfig& method, int n_trials,
                        std::uint64_t base_seed) {
  if (n_trials < 1) {
    throw ConfigError("run_trials: need at least one trial");
  }
  TrialsResult result;
  result.per_trial.resize(static_cast<std::size_t>(n_trials));
  enum class Kind { none, config, dimension, numerical, io, other };
  std::vector<Kind> error_kind(static_cast<std::size_t>(n_trials), Kind::none);
  std::vector<std::string> errors(static_cast<std::size_t>(n_trials));

#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < n_trials; ++t) {
    const auto started = std::chrono::steady_clock::now();
    const auto slot = static_cast<std::size_t>(t);
    try {
      SplitSpec trial_spec = spec;
      trial_spec.seed = base_seed + static_cast<std::uint64_t>(t);
      const SplitResult parts = split(data, trial_spec);
      const SplitEvaluation ev =
          evaluate_split(parts.train, parts.test, method);
      auto& outcome = result.per_trial[slot];
      outcome.seed = trial_spec.seed;
      outcome.curve = ev.curve;
      outcome.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                        started)
              .count();
    } catch (const ConfigError& e) {
      error_kind[slot] = Kind::config;
      errors[slot] = e.what();
    } catch (const DimensionError& e) {
      error_kind[slot] = Kind::dimension;
      errors[slot] = e.what();
    } catch (const NumericalError& e) {
      error_kind[slot] = Kind::numerical;
      errors[slot] = e.what();
    } catch (const IoError& e) {
      error_kind[slot] = Kind::io;
      errors[slot] = e.what();
    } catch (const std::exception& e) {
      error_kind[slot] = Kind::other;
      errors[slot] = e.what();
    }
  }
  for (int t = 0; t < n_trials; ++t) {
    const auto slot = static_cast<std::size_t>(t);
    if (error_kind[slot] == Kind::none) continue;
    const std::string message =
        "trial " + std::to_string(t) + ": " + errors[slot];
    switch (error_kind[slot]) {
      case Kind::config: throw ConfigError(message);
      case Kind::dimension: throw DimensionError(message);
      case Kind::numerical: throw NumericalError(message);
      case Kind::io: throw IoError(message);
      default: throw Error(message);
    }
  }

  const Eigen::Index lg = result.per_trial.front().curve.rates.size();
  for (const auto& trial : result.per_trial) {
    if (trial.curve.rates.size() != lg) {
      throw ConfigError("run_trials: gallery size varies across trials");
    }
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(lg);
  for (const auto& trial : result.per_trial) mean += trial.curve.rates;
  mean /= static_cast<double>(n_trials);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(lg);
  for (const auto& trial : result.per_trial) {
    var += (trial.curve.rates - mean).cwiseAbs2();
  }
  var /= static_cast<double>(n_trials);

  result.mean.rates = mean;
  result.mean.trials = n_trials;
  result.std_rates = var.cwiseSqrt();
  return result;
}

TuneResult lambda_tune(const CrossViewDataset& data, const SplitSpec& spec,
                       const MethodConfig& method, std::vector<double> grid,
                       std::uint64_t tuning_seed) {
  if (grid.empty()) {
    throw ConfigError("lambda_tune: empty grid");
  }
  for (const double lambda : grid) {
    if (!(lambda > 0.0)) {
      throw ConfigError("lambda_tune: lambdas must be positive");
    }
  }
  std::sort(grid.begin(), grid.end());

  SplitSpec tune_spec = spec;
  tune_spec.seed = tuning_seed;
  const SplitResult parts = split(data, tune_spec);

  TuneResult result;
  result.grid = grid;
  result.tuning_seed = tuning_seed;
  result.rank1.assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
  std::string last_error = "no candidates evaluated";
  bool any_ok = false;
  double best = -1.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    MethodConfig candidate = method;
    candidate.lambda = grid[i];
    try {
      const SplitEvaluation ev =
          evaluate_split(parts.train, parts.test, candidate);
      result.rank1[i] = ev.curve.rank(1);
      any_ok = true;
      if (result.rank1[i] >= best) {  // ties move toward larger lambda
        best = result.rank1[i];
        result.best_lambda = grid[i];
      }
    } catch (const std::exception& e) {
      last_error = e.what();
    }
  }
  if (!any_ok) {
    throw Error("lambda_tune: every candidate failed; last error: " +
                last_error);
  }
  return result;
}

}  // namespace xcrc
