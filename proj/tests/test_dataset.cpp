#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "oracles.hpp"
#include "xcrc/dataset.hpp"
#include "xcrc/errors.hpp"
#include "xcrc/rng.hpp"

namespace fs = std::filesystem;
using xcrc::CrossViewDataset;
using xcrc::SampleSet;
using xcrc::SynthConfig;
using xcrc::Transition;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("xcrc_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

SampleSet tiny_set() {
  SampleSet set;
  set.ids = {"s1", "s2", "s1", "s2"};
  set.cams = {"a", "a", "b", "b"};
  set.features.resize(4, 3);
  set.features << 1, 2, 3, 4, 5, 6, 7, 8, 9, 0.5, -0.25, 0.125;
  return set;
}

}  // namespace

TEST_CASE("load_samples parses a small csv") {
  TempDir dir;
  write_file(dir.path / "f.csv",
             "id,cam,f0,f1,f2\n"
             "s1,a,1.5,-2,0.25\n"
             "s2,a,3,4,5\n");
  const SampleSet set = xcrc::load_samples(dir.path / "f.csv");
  CHECK(set.n() == 2);
  CHECK(set.dim() == 3);
  CHECK(set.ids[0] == "s1");
  CHECK(set.features(0, 1) == -2.0);
}

TEST_CASE("load_samples rejects malformed input naming the line") {
  TempDir dir;
  write_file(dir.path / "empty_col.csv", "id,cam,f0,f1\ns1,a,1,\n");
  CHECK_THROWS_WITH_AS(xcrc::load_samples(dir.path / "empty_col.csv"),
                       doctest::Contains("line 2"), xcrc::IoError);

  write_file(dir.path / "ragged.csv", "id,cam,f0,f1\ns1,a,1,2\ns2,a,3\n");
  CHECK_THROWS_WITH_AS(xcrc::load_samples(dir.path / "ragged.csv"),
                       doctest::Contains("line 3"), xcrc::IoError);

  write_file(dir.path / "text.csv", "id,cam,f0\ns1,a,abc\n");
  CHECK_THROWS_AS(xcrc::load_samples(dir.path / "text.csv"), xcrc::IoError);

  write_file(dir.path / "header.csv", "ident,cam,f0\ns1,a,1\n");
  CHECK_THROWS_AS(xcrc::load_samples(dir.path / "header.csv"), xcrc::IoError);

  CHECK_THROWS_AS(xcrc::load_samples(dir.path / "missing.csv"), xcrc::IoError);
}

TEST_CASE("csv round-trip preserves the sample set exactly") {
  TempDir dir;
  xcrc::Rng rng(401);
  SampleSet set = tiny_set();
  set.features = oracle::random_matrix(rng, 4, 3);
  xcrc::save_csv(set, dir.path / "roundtrip.csv");
  const SampleSet back = xcrc::load_samples(dir.path / "roundtrip.csv");
  CHECK(back.ids == set.ids);
  CHECK(back.cams == set.cams);
  CHECK(back.features == set.features);
}

TEST_CASE("binary round-trip preserves the sample set exactly") {
  TempDir dir;
  xcrc::Rng rng(409);
  SampleSet set = tiny_set();
  set.features = oracle::random_matrix(rng, 4, 3);
  xcrc::save_binary(set, dir.path / "roundtrip.bin");
  const SampleSet back = xcrc::load_samples(dir.path / "roundtrip.bin");
  CHECK(back.ids == set.ids);
  CHECK(back.cams == set.cams);
  CHECK(back.features == set.features);
}

TEST_CASE("pair_views aligns shared identities") {
  const SampleSet set = tiny_set();
  const CrossViewDataset ds = xcrc::pair_views(set, "a", "b");
  CHECK(ds.view_a.ids == std::vector<std::string>{"s1", "s2"});
  CHECK(ds.view_b.ids == std::vector<std::string>{"s1", "s2"});
  CHECK(ds.distractor_ids.empty());
  CHECK(ds.view_a.features.row(0) == set.features.row(0));
  CHECK(ds.view_b.features.row(0) == set.features.row(2));
}

TEST_CASE("pair_views routes gallery-only identities to distractors") {
  SampleSet set = tiny_set();
  set.ids.insert(set.ids.end(), {"dz", "dq"});
  set.cams.insert(set.cams.end(), {"b", "b"});
  set.features.conservativeResize(6, 3);
  set.features.row(4) << 1, 1, 1;
  set.features.row(5) << 2, 2, 2;
  const CrossViewDataset ds = xcrc::pair_views(set, "a", "b");
  CHECK(ds.distractor_ids == std::vector<std::string>{"dq", "dz"});
  CHECK(ds.view_b.ids ==
        std::vector<std::string>{"s1", "s2", "dq", "dz"});
  CHECK(ds.view_a.ids == std::vector<std::string>{"s1", "s2"});
}

TEST_CASE("pair_views is order independent") {
  SampleSet set = tiny_set();
  const CrossViewDataset sorted = xcrc::pair_views(set, "a", "b");

  SampleSet shuffled;
  for (const int i : {3, 0, 2, 1}) {
    shuffled.ids.push_back(set.ids[static_cast<std::size_t>(i)]);
    shuffled.cams.push_back(set.cams[static_cast<std::size_t>(i)]);
  }
  shuffled.features.resize(4, 3);
  shuffled.features.row(0) = set.features.row(3);
  shuffled.features.row(1) = set.features.row(0);
  shuffled.features.row(2) = set.features.row(2);
  shuffled.features.row(3) = set.features.row(1);
  const CrossViewDataset again = xcrc::pair_views(shuffled, "a", "b");
  CHECK(again.view_a.ids == sorted.view_a.ids);
  CHECK(again.view_b.ids == sorted.view_b.ids);
  CHECK(again.view_a.features == sorted.view_a.features);
  CHECK(again.view_b.features == sorted.view_b.features);
}

TEST_CASE("pair_views error paths") {
  SampleSet set = tiny_set();
  set.ids[1] = "only_a";
  CHECK_THROWS_WITH_AS(xcrc::pair_views(set, "a", "b"),
                       doctest::Contains("only_a"), xcrc::ConfigError);

  SampleSet dup = tiny_set();
  dup.ids[1] = "s1";  // two s1 rows in camera a
  CHECK_THROWS_AS(xcrc::pair_views(dup, "a", "b", /*single_shot=*/true),
                  xcrc::ConfigError);
}

TEST_CASE("synth identity transition with zero noise copies the features") {
  SynthConfig cfg;
  cfg.n_identities = 6;
  cfg.m_dim = 4;
  cfg.seed = 9;
  const CrossViewDataset ds = xcrc::synth_generate(cfg);
  CHECK(ds.view_a.features == ds.view_b.features.topRows(6));
  CHECK(ds.view_a.ids == ds.view_b.ids);
}

TEST_CASE("synth is a pure function of its config") {
  SynthConfig cfg;
  cfg.n_identities = 8;
  cfg.m_dim = 3;
  cfg.transition = Transition::tanh_nonlinear;
  cfg.noise_sigma = 0.4;
  cfg.n_distractors = 2;
  cfg.seed = 77;
  const CrossViewDataset one = xcrc::synth_generate(cfg);
  const CrossViewDataset two = xcrc::synth_generate(cfg);
  CHECK(one.view_a.features == two.view_a.features);
  CHECK(one.view_b.features == two.view_b.features);
  CHECK(one.view_a.ids == two.view_a.ids);
  CHECK(one.distractor_ids == two.distractor_ids);
  CHECK(one.distractor_ids.size() == 2);
}

TEST_CASE("synth tanh view regenerates from the documented draw order") {
  SynthConfig cfg;
  cfg.n_identities = 5;
  cfg.m_dim = 3;
  cfg.transition = Transition::tanh_nonlinear;
  cfg.noise_sigma = 0.25;
  cfg.seed = 123;
  const CrossViewDataset ds = xcrc::synth_generate(cfg);

  xcrc::Rng rng(cfg.seed);
  Eigen::MatrixXd g(3, 3);
  for (Eigen::Index j = 0; j < 3; ++j) {
    for (Eigen::Index i = 0; i < 3; ++i) g(i, j) = rng.normal();
  }
  const Eigen::MatrixXd map =
      Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  Eigen::VectorXd bias(3);
  for (Eigen::Index i = 0; i < 3; ++i) bias[i] = rng.normal();
  for (int i = 0; i < 5; ++i) {
    Eigen::VectorXd latent(3), noise(3);
    for (Eigen::Index k = 0; k < 3; ++k) latent[k] = rng.normal();
    for (Eigen::Index k = 0; k < 3; ++k) noise[k] = rng.normal();
    const Eigen::VectorXd expect =
        (map * latent + bias).array().tanh().matrix() + 0.25 * noise;
    CHECK(ds.view_a.features.row(i) == latent.transpose());
    CHECK(ds.view_b.features.row(i) == expect.transpose());
  }
}

TEST_CASE("normalize schemes") {
  SampleSet set;
  set.ids = {"p", "q", "z"};
  set.cams = {"a", "a", "a"};
  set.features.resize(3, 2);
  set.features << 3, 4, 2, 2, 0, 0;

  const auto l2 = xcrc::normalize(set, xcrc::NormScheme::unit_l2);
  CHECK(l2.set.features(0, 0) == doctest::Approx(0.6));
  CHECK(l2.set.features(0, 1) == doctest::Approx(0.8));
  CHECK(l2.zero_rows == std::vector<Eigen::Index>{2});
  CHECK(l2.set.features.row(2) == set.features.row(2));

  const auto l1 = xcrc::normalize(set, xcrc::NormScheme::unit_l1_nonneg);
  CHECK(l1.set.features(1, 0) == doctest::Approx(0.5));
  CHECK(l1.set.features(1, 1) == doctest::Approx(0.5));

  set.features(0, 0) = -3;
  CHECK_THROWS_AS(xcrc::normalize(set, xcrc::NormScheme::unit_l1_nonneg),
                  xcrc::ConfigError);

  xcrc::Rng rng(419);
  SampleSet rand;
  rand.features = oracle::random_matrix(rng, 20, 6);
  rand.ids.assign(20, "x");
  rand.cams.assign(20, "a");
  const auto normed = xcrc::normalize(rand, xcrc::NormScheme::unit_l2);
  for (Eigen::Index i = 0; i < 20; ++i) {
    CHECK(std::abs(normed.set.features.row(i).norm() - 1.0) <= 1e-12);
  }
}

TEST_CASE("manifest round-trip and dataset loading") {
  TempDir dir;
  SynthConfig cfg;
  cfg.n_identities = 5;
  cfg.m_dim = 3;
  cfg.n_distractors = 1;
  cfg.seed = 5;
  const CrossViewDataset ds = xcrc::synth_generate(cfg);
  xcrc::save_csv(ds.view_a, dir.path / "va.csv");
  xcrc::save_csv(ds.view_b, dir.path / "vb.csv");

  xcrc::DatasetManifest manifest;
  manifest.camera_a = "a";
  manifest.camera_b = "b";
  manifest.files = {"va.csv", "vb.csv"};
  manifest.normalization = xcrc::NormScheme::none;
  manifest.single_shot = true;
  manifest.distractor_ids = ds.distractor_ids;
  xcrc::save_manifest(manifest, dir.path / "manifest.json");

  const xcrc::DatasetManifest back = xcrc::load_manifest(dir.path / "manifest.json");
  CHECK(back.camera_a == manifest.camera_a);
  CHECK(back.files == manifest.files);
  CHECK(back.distractor_ids == manifest.distractor_ids);

  const CrossViewDataset loaded = xcrc::load_dataset(dir.path / "manifest.json");
  CHECK(loaded.view_a.ids == ds.view_a.ids);
  CHECK(loaded.view_b.ids == ds.view_b.ids);
  CHECK(loaded.view_a.features == ds.view_a.features);
  CHECK(loaded.distractor_ids == ds.distractor_ids);

  SUBCASE("wrong distractor list is rejected") {
    manifest.distractor_ids = {"nope"};
    xcrc::save_manifest(manifest, dir.path / "bad.json");
    CHECK_THROWS_AS(xcrc::load_dataset(dir.path / "bad.json"),
                    xcrc::ConfigError);
  }
}
