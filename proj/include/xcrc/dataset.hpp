#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace xcrc {

/// Labeled feature vectors: row i of `features` belongs to subject `ids[i]`
/// seen by camera `cams[i]`.
struct SampleSet {
  std::vector<std::string> ids;
  std::vector<std::string> cams;
  Eigen::MatrixXd features;  // n x m

  Eigen::Index n() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
};

/// Paired cross-view data. view_a is the probe side and view_b the gallery
/// side. Every non-distractor view_b identity appears in view_a; distractor
/// identities appear only in view_b (gallery entries with no correct match).
struct CrossViewDataset {
  SampleSet view_a;
  SampleSet view_b;
  std::vector<std::string> distractor_ids;
};

enum class Transition { identity, linear, tanh_nonlinear };

std::string to_string(Transition t);
Transition transition_from_string(const std::string& name);

/// Synthetic cross-view generator configuration. All randomness flows from
/// `seed`; the generated dataset is a pure function of this struct.
struct SynthConfig {
  int n_identities = 2;
  int m_dim = 1;
  Transition transition = Transition::identity;
  double noise_sigma = 0.0;
  int n_distractors = 0;
  std::uint64_t seed = 0;
};

enum class NormScheme { none, unit_l2, unit_l1_nonneg };

std::string to_string(NormScheme scheme);
NormScheme norm_scheme_from_string(const std::string& name);

/// Feature CSV: header `id,cam,f0,...,f{m-1}`, one row per image, UTF-8,
/// '.' decimal separator. A binary alternative (magic "XCRCBIN1") is
/// accepted transparently; see save_binary.
SampleSet load_samples(const std::filesystem::path& path);
void save_csv(const SampleSet& set, const std::filesystem::path& path);

/// Binary feature file: 8-byte magic "XCRCBIN1", u64 row count, u64 feature
/// count, features as row-major little-endian 64-bit floats, then per row a
/// u32-length-prefixed id and cam string.
void save_binary(const SampleSet& set, const std::filesystem::path& path);

/// Splits one SampleSet into an aligned cross-view dataset. Shared
/// identities are ordered by id; identities found only in cam_b become
/// distractors; identities found only in cam_a are an error. With
/// single_shot, duplicate (id, cam) rows are rejected.
CrossViewDataset pair_views(const SampleSet& set, const std::string& cam_a,
                            const std::string& cam_b, bool single_shot = false);

/// Draws view_a features i.i.d. standard normal per identity and maps them
/// through the configured camera transition plus Gaussian noise for view_b:
///   identity:       b = a + noise
///   linear:         b = A a + noise          (A a fixed random orthogonal map)
///   tanh_nonlinear: b = tanh(A a + bias) + noise
/// Distractor identities draw independent latents through the same
/// transition. Draw order (one Rng seeded from config.seed): transition map
/// column-major, then bias, then per paired identity its latent row followed
/// by its noise row, then the same for distractors.
CrossViewDataset synth_generate(const SynthConfig& config);

struct NormalizeResult {
  SampleSet set;
  std::vector<Eigen::Index> zero_rows;  // rows left unchanged
};

/// Row-wise normalization. unit_l1_nonneg requires nonnegative features.
/// Zero rows pass through unchanged and are reported.
NormalizeResult normalize(const SampleSet& set, NormScheme scheme);

/// Dataset manifest: which file belongs to which camera, how to normalize,
/// and whether rows are single-shot.
struct DatasetManifest {
  std::string camera_a;
  std::string camera_b;
  std::vector<std::string> files;  // relative to the manifest directory
  NormScheme normalization = NormScheme::none;
  bool single_shot = true;
  std::vector<std::string> distractor_ids;  // informative; validated on load
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest,
                   const std::filesystem::path& path);

/// Loads every file in the manifest, concatenates, normalizes, and pairs
/// the two cameras.
CrossViewDataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace xcrc
