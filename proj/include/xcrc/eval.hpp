#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xcrc/baselines.hpp"
#include "xcrc/dataset.hpp"
#include "xcrc/kernels.hpp"
#include "xcrc/subspace.hpp"

namespace xcrc {

/// Random identity-disjoint train/test partition parameters.
struct SplitSpec {
  std::optional<int> train_count;
  std::optional<double> train_fraction;  // used when train_count is unset
  std::uint64_t seed = 0;
  bool single_shot = true;
};

struct SplitResult {
  CrossViewDataset train;
  CrossViewDataset test;
};

/// Partitions paired identities into disjoint train/test sets; distractors
/// always flow to the test gallery. With single_shot, one row per identity
/// per camera is chosen uniformly at random (a draw happens only for
/// identities with multiple rows in a camera); without it, multi-shot input
/// is an error. Identity order is canonical (sorted) before the seeded
/// shuffle, so the partition depends only on the identity set and the seed.
SplitResult split(const CrossViewDataset& data, const SplitSpec& spec);

/// Cumulative match characteristic: rates[k-1] is the fraction of probes
/// whose true match appears within the top k ranked gallery entries.
struct CmcCurve {
  Eigen::VectorXd rates;
  int trials = 1;

  double rank(Eigen::Index k) const { return rates[k - 1]; }
};

/// Computes the CMC curve from per-probe gallery orderings. Every probe id
/// must match exactly one gallery id.
CmcCurve cmc(const std::vector<std::vector<Eigen::Index>>& rankings,
             const std::vector<std::string>& probe_ids,
             const std::vector<std::string>& gallery_ids);

enum class Method {
  kernel_xcrc,
  xcrc_linear,
  kernel_c2rc,
  c2rc,
  crc_direct,
  src_direct,
  cosine,
  mahalanobis,
  kissme,
};

std::string to_string(Method method);
Method method_from_string(const std::string& name);

/// Full matcher pipeline description: optional XQDA projection followed by
/// a coder or metric.
struct MethodConfig {
  Method method = Method::kernel_xcrc;
  double lambda = 1.0;
  KernelSpec kernel{KernelKind::rbf, std::nullopt};
  std::optional<XqdaOptions> xqda;
  int l1_max_iters = 5000;
  double l1_tolerance = 1e-8;
  double condition_limit = 1e-12;
  double metric_reg = 1e-6;
  // Replaces the batched ranking with the literal per-pair loop.
  bool naive_ranking = false;
};

/// One fitted-and-ranked partition. Scores are "higher is better" for every
/// method (coder similarities, negated distances/residuals); rankings break
/// ties by ascending gallery index.
struct SplitEvaluation {
  Eigen::MatrixXd scores;  // l_p x l_g
  std::vector<std::vector<Eigen::Index>> ranking;
  std::vector<std::string> probe_ids;
  std::vector<std::string> gallery_ids;
  CmcCurve curve;
};

SplitEvaluation evaluate_split(const CrossViewDataset& train,
                               const CrossViewDataset& test,
                               const MethodConfig& method);

struct TrialOutcome {
  std::uint64_t seed = 0;
  CmcCurve curve;
  double seconds = 0.0;
};

struct TrialsResult {
  CmcCurve mean;             // trials = number of trials
  Eigen::VectorXd std_rates; // population standard deviation per rank
  std::vector<TrialOutcome> per_trial;
};

/// Runs n_trials independent split/fit/rank/cmc rounds with trial t seeded
/// by base_seed + t and averages the curves. Trials may execute in
/// parallel; the result is a pure function of (data, spec, method,
/// n_trials, base_seed). Errors carry the trial index.
TrialsResult run_trials(const CrossViewDataset& data, const SplitSpec& spec,
                        const MethodConfig& method, int n_trials,
                        std::uint64_t base_seed);

struct TuneResult {
  double best_lambda = 0.0;
  std::vector<double> grid;    // ascending
  std::vector<double> rank1;   // aligned with grid; NaN where the fit failed
  std::uint64_t tuning_seed = 0;
};

/// Evaluates rank-1 on one fixed tuning partition per candidate lambda and
/// returns the argmax, ties broken toward larger lambda. Candidates whose
/// fit fails score NaN; all candidates failing is an error.
TuneResult lambda_tune(const CrossViewDataset& data, const SplitSpec& spec,
                       const MethodConfig& method, std::vector<double> grid,
                       std::uint64_t tuning_seed);

}  // namespace xcrc
