#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "oracles.hpp"
#include "xcrc/errors.hpp"
#include "xcrc/solver.hpp"

using xcrc::KernelKind;
using xcrc::KernelSpec;
using xcrc::SolverConfig;

namespace {

SolverConfig rbf_config(double lambda, double sigma = 0.0) {
  SolverConfig cfg;
  cfg.lambda = lambda;
  cfg.kernel_x = KernelSpec{KernelKind::rbf,
                            sigma > 0 ? std::optional<double>{sigma}
                                      : std::nullopt};
  cfg.kernel_y = cfg.kernel_x;
  return cfg;
}

SolverConfig linear_config(double lambda) {
  SolverConfig cfg;
  cfg.lambda = lambda;
  return cfg;
}

}  // namespace

TEST_CASE("1x1 fit with a unit training vector and lambda 1") {
  Eigen::MatrixXd d(1, 3);
  d << 1, 0, 0;
  const xcrc::TrainedSolver s = xcrc::fit(d, d, linear_config(1.0));
  CHECK(s.p_x(0, 0) == doctest::Approx(2.0));
  CHECK(s.p_y(0, 0) == doctest::Approx(2.0));
  CHECK(s.q(0, 0) == doctest::Approx(0.75));
  CHECK(s.w(0, 0) == doctest::Approx(0.75));
  CHECK(s.beta_xx(0, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(s.beta_yy(0, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(s.beta_xy(0, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(s.beta_yx(0, 0) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("q is the inverse of the defining expression") {
  xcrc::Rng rng(101);
  const Eigen::MatrixXd d_x = oracle::random_matrix(rng, 12, 5);
  const Eigen::MatrixXd d_y = oracle::random_matrix(rng, 12, 5);
  const xcrc::TrainedSolver s = xcrc::fit(d_x, d_y, rbf_config(2.0));
  const Eigen::MatrixXd expr =
      Eigen::MatrixXd::Identity(12, 12) -
      s.p_y.inverse() * s.p_x.inverse();
  CHECK((s.q * expr.inverse() - Eigen::MatrixXd::Identity(12, 12))
            .cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("beta operators match explicit dense inverse products") {
  xcrc::Rng rng(103);
  const Eigen::MatrixXd d_x = oracle::random_matrix(rng, 20, 8);
  const Eigen::MatrixXd d_y = oracle::random_matrix(rng, 20, 8);
  const xcrc::TrainedSolver s = xcrc::fit(d_x, d_y, rbf_config(1.5));
  const oracle::DenseBetas b = oracle::dense_betas(s.k_x, s.k_y, 1.5);
  CHECK((s.beta_xx - b.beta_xx).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((s.beta_xy - b.beta_xy).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((s.beta_yy - b.beta_yy).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((s.beta_yx - b.beta_yx).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("fit validation and conditioning") {
  Eigen::MatrixXd d(2, 2);
  d << 1, 0, 0, 1;
  CHECK_THROWS_AS(xcrc::fit(d, d, linear_config(-1.0)), xcrc::ConfigError);
  Eigen::MatrixXd ragged(3, 2);
  ragged.setOnes();
  CHECK_THROWS_AS(xcrc::fit(d, ragged, linear_config(1.0)),
                  xcrc::DimensionError);
  Eigen::MatrixXd bad = d;
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(xcrc::fit(bad, d, linear_config(1.0)), xcrc::ConfigError);
  SolverConfig cfg = linear_config(1.0);
  cfg.condition_limit = 2.0;
  CHECK_THROWS_AS(xcrc::fit(d, d, cfg), xcrc::ConfigError);

  // Rank-deficient linear Grams share null directions, so at lambda = 1 the
  // coupling matrix is exactly singular and the fit must refuse.
  xcrc::Rng rng(107);
  const Eigen::MatrixXd wide_x = oracle::random_matrix(rng, 12, 3);
  const Eigen::MatrixXd wide_y = oracle::random_matrix(rng, 12, 3);
  CHECK_THROWS_WITH_AS(xcrc::fit(wide_x, wide_y, linear_config(1.0)),
                       doctest::Contains("ill-conditioned coupling"),
                       xcrc::NumericalError);
}

TEST_CASE("1x1 coding of the training vector itself") {
  Eigen::MatrixXd d(1, 2);
  d << 1, 0;
  const xcrc::TrainedSolver s = xcrc::fit(d, d, linear_config(1.0));
  const xcrc::CodingPair pair =
      xcrc::code_pair(s, d.row(0).transpose(), d.row(0).transpose());
  CHECK(pair.alpha_x[0] == doctest::Approx(1.0));
  CHECK(pair.alpha_y[0] == doctest::Approx(1.0));
}

TEST_CASE("fully symmetric instances code both views identically") {
  xcrc::Rng rng(109);
  const Eigen::MatrixXd d = oracle::random_matrix(rng, 9, 4);
  const Eigen::VectorXd z = oracle::random_vector(rng, 4);
  const xcrc::TrainedSolver s = xcrc::fit(d, d, rbf_config(0.8));
  const xcrc::CodingPair pair = xcrc::code_pair(s, z, z);
  CHECK((pair.alpha_x - pair.alpha_y).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(xcrc::similarity(pair) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("coding matches the numerical minimizer of the coupled objective") {
  xcrc::Rng rng(113);
  for (const double lambda : {1.5, 2.0, 5.0}) {
    const Eigen::MatrixXd d_x = oracle::random_matrix(rng, 10, 6);
    const Eigen::MatrixXd d_y = oracle::random_matrix(rng, 10, 6);
    const Eigen::VectorXd x = oracle::random_vector(rng, 6);
    const Eigen::VectorXd y = oracle::random_vector(rng, 6);
    const xcrc::TrainedSolver s = xcrc::fit(d_x, d_y, rbf_config(lambda));
    const xcrc::CodingPair pair = xcrc::code_pair(s, x, y);
    const auto minimizer = oracle::minimize_coupled_objective(
        s.k_x, s.k_y, xcrc::kernel_vector(d_x, x, s.config.kernel_x),
        xcrc::kernel_vector(d_y, y, s.config.kernel_y), lambda - 1.0);
    CHECK((pair.alpha_x - minimizer.alpha_x).lpNorm<Eigen::Infinity>() <=
          1e-6);
    CHECK((pair.alpha_y - minimizer.alpha_y).lpNorm<Eigen::Infinity>() <=
          1e-6);
  }
}

TEST_CASE("similarity corner cases") {
  xcrc::CodingPair pair;
  pair.alpha_x = Eigen::Vector3d(1, 2, -1);
  pair.alpha_y = pair.alpha_x;
  CHECK(xcrc::similarity(pair) == doctest::Approx(1.0));
  pair.alpha_y = -pair.alpha_x;
  CHECK(xcrc::similarity(pair) == doctest::Approx(-1.0));
  pair.alpha_x = Eigen::Vector3d(1, 0, 0);
  pair.alpha_y = Eigen::Vector3d(0, 1, 0);
  CHECK(xcrc::similarity(pair) == doctest::Approx(0.0));
  pair.alpha_y.setZero();
  CHECK_THROWS_WITH_AS(xcrc::similarity(pair),
                       doctest::Contains("degenerate coding"),
                       xcrc::NumericalError);
}

TEST_CASE("stationarity residual vanishes at code_pair output") {
  xcrc::Rng rng(127);
  const Eigen::MatrixXd d_x = oracle::random_matrix(rng, 14, 5);
  const Eigen::MatrixXd d_y = oracle::random_matrix(rng, 14, 5);
  const Eigen::VectorXd x = oracle::random_vector(rng, 5);
  const Eigen::VectorXd y = oracle::random_vector(rng, 5);
  const xcrc::TrainedSolver s = xcrc::fit(d_x, d_y, rbf_config(0.7));
  const xcrc::CodingPair pair = xcrc::code_pair(s, x, y);
  const auto [r_y, r_x] = xcrc::stationarity_residual(s, x, y, pair);
  const double scale =
      1.0 + std::max(xcrc::kernel_vector(d_x, x, s.config.kernel_x).norm(),
                     xcrc::kernel_vector(d_y, y, s.config.kernel_y).norm());
  CHECK(r_y <= 1e-8 * scale);
  CHECK(r_x <= 1e-8 * scale);

  SUBCASE("residual grows linearly in a coordinate perturbation") {
    xcrc::CodingPair bumped = pair;
    bumped.alpha_y[0] += 1e-3;
    const auto [ry1, rx1] = xcrc::stationarity_residual(s, x, y, bumped);
    bumped.alpha_y[0] += 1e-3;
    const auto [ry2, rx2] = xcrc::stationarity_residual(s, x, y, bumped);
    CHECK(ry2 == doctest::Approx(2.0 * ry1).epsilon(1e-6));
    CHECK(rx2 == doctest::Approx(2.0 * rx1).epsilon(1e-6));
  }

  SUBCASE("residual of an arbitrary pair equals the direct expression") {
    xcrc::CodingPair off;
    off.alpha_x = oracle::random_vector(rng, 14);
    off.alpha_y = oracle::random_vector(rng, 14);
    const auto [ry, rx] = xcrc::stationarity_residual(s, x, y, off);
    const Eigen::VectorXd kx = xcrc::kernel_vector(d_x, x, s.config.kernel_x);
    const Eigen::VectorXd ky = xcrc::kernel_vector(d_y, y, s.config.kernel_y);
    CHECK(ry == doctest::Approx(
                    (s.p_y * off.alpha_y - off.alpha_x - ky).norm())
                    .epsilon(1e-13));
    CHECK(rx == doctest::Approx(
                    (s.p_x * off.alpha_x - off.alpha_y - kx).norm())
                    .epsilon(1e-13));
  }
}

TEST_CASE("swapping the views swaps the coding vectors exactly") {
  xcrc::Rng rng(131);
  const Eigen::MatrixXd d_x = oracle::random_matrix(rng, 8, 5);
  const Eigen::MatrixXd d_y = oracle::random_matrix(rng, 8, 5);
  const Eigen::VectorXd x = oracle::random_vector(rng, 5);
  const Eigen::VectorXd y = oracle::random_vector(rng, 5);
  const SolverConfig cfg = rbf_config(1.2, 0.9);
  const xcrc::TrainedSolver fwd = xcrc::fit(d_x, d_y, cfg);
  const xcrc::TrainedSolver swp = xcrc::fit(d_y, d_x, cfg);
  const xcrc::CodingPair p1 = xcrc::code_pair(fwd, x, y);
  const xcrc::CodingPair p2 = xcrc::code_pair(swp, y, x);
  CHECK(p1.alpha_x == p2.alpha_y);
  CHECK(p1.alpha_y == p2.alpha_x);
  CHECK(xcrc::similarity(p1) == xcrc::similarity(p2));
}

TEST_CASE("coding norms shrink as lambda grows past 1") {
  xcrc::Rng rng(137);
  const Eigen::MatrixXd d_x = oracle::random_matrix(rng, 11, 4);
  const Eigen::MatrixXd d_y = oracle::random_matrix(rng, 11, 4);
  const Eigen::VectorXd x = oracle::random_vector(rng, 4);
  const Eigen::VectorXd y = oracle::random_vector(rng, 4);
  double prev = std::numeric_limits<double>::infinity();
  for (const double lambda : {1.05, 1.5, 2.0, 5.0, 10.0, 100.0}) {
    const xcrc::TrainedSolver s = xcrc::fit(d_x, d_y, rbf_config(lambda, 1.0));
    const xcrc::CodingPair pair = xcrc::code_pair(s, x, y);
    const double total = pair.alpha_x.norm() + pair.alpha_y.norm();
    CHECK(total <= prev * (1.0 + 1e-12));
    prev = total;
  }
}

TEST_CASE("linear-kernel coding equals the explicit feature-space solve") {
  xcrc::Rng rng(139);
  const Eigen::MatrixXd d_x = oracle::random_matrix(rng, 6, 9);  // m >= n
  const Eigen::MatrixXd d_y = oracle::random_matrix(rng, 6, 9);
  const Eigen::VectorXd x = oracle::random_vector(rng, 9);
  const Eigen::VectorXd y = oracle::random_vector(rng, 9);
  const xcrc::TrainedSolver s = xcrc::fit(d_x, d_y, linear_config(0.6));
  const xcrc::CodingPair pair = xcrc::code_pair(s, x, y);
  const oracle::ExplicitCoding exp =
      oracle::explicit_linear_xcrc(d_x, d_y, x, y, 0.6);
  CHECK((pair.alpha_x - exp.alpha_x).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((pair.alpha_y - exp.alpha_y).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("rank_all of a single pair equals code_pair plus similarity") {
  xcrc::Rng rng(149);
  const Eigen::MatrixXd d_x = oracle::random_matrix(rng, 7, 4);
  const Eigen::MatrixXd d_y = oracle::random_matrix(rng, 7, 4);
  const Eigen::MatrixXd gal = oracle::random_matrix(rng, 1, 4);
  const Eigen::MatrixXd pro = oracle::random_matrix(rng, 1, 4);
  const xcrc::TrainedSolver s = xcrc::fit(d_x, d_y, rbf_config(1.1));
  const xcrc::RankResult rr = xcrc::rank_all(s, gal, pro);
  const double direct = xcrc::similarity(
      xcrc::code_pair(s, gal.row(0).transpose(), pro.row(0).transpose()));
  CHECK(rr.similarity(0, 0) == doctest::Approx(direct).epsilon(1e-12));
  CHECK(rr.ranking[0] == std::vector<Eigen::Index>{0});
}

TEST_CASE("permuting gallery rows permutes similarity columns") {
  xcrc::Rng rng(151);
  const Eigen::MatrixXd d_x = oracle::random_matrix(rng, 8, 4);
  const Eigen::MatrixXd d_y = oracle::random_matrix(rng, 8, 4);
  const Eigen::MatrixXd gal = oracle::random_matrix(rng, 5, 4);
  const Eigen::MatrixXd pro = oracle::random_matrix(rng, 3, 4);
  const xcrc::TrainedSolver s = xcrc::fit(d_x, d_y, rbf_config(1.4));
  const xcrc::RankResult base = xcrc::rank_all(s, gal, pro);

  Eigen::MatrixXd permuted(5, 4);
  const std::vector<Eigen::Index> perm{3, 0, 4, 1, 2};
  for (Eigen::Index i = 0; i < 5; ++i) permuted.row(i) = gal.row(perm[i]);
  const xcrc::RankResult moved = xcrc::rank_all(s, permuted, pro);
  for (Eigen::Index j = 0; j < 3; ++j) {
    for (Eigen::Index i = 0; i < 5; ++i) {
      CHECK(moved.similarity(j, i) ==
            doctest::Approx(base.similarity(j, perm[i])).epsilon(1e-12));
    }
  }
}

TEST_CASE("batched ranking equals the naive per-pair loop") {
  xcrc::Rng rng(157);
  for (int round = 0; round < 3; ++round) {
    const Eigen::MatrixXd d_x = oracle::random_matrix(rng, 12, 6);
    const Eigen::MatrixXd d_y = oracle::random_matrix(rng, 12, 6);
    const Eigen::MatrixXd gal = oracle::random_matrix(rng, 10, 6);
    const Eigen::MatrixXd pro = oracle::random_matrix(rng, 10, 6);
    const xcrc::TrainedSolver s = xcrc::fit(d_x, d_y, rbf_config(2.0));
    const xcrc::RankResult fast = xcrc::rank_all(s, gal, pro);
    const xcrc::RankResult slow = xcrc::rank_all_naive(s, gal, pro);
    CHECK((fast.similarity - slow.similarity).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(fast.ranking == slow.ranking);
  }
}

TEST_CASE("equal similarities break ties by ascending gallery index") {
  xcrc::Rng rng(163);
  const Eigen::MatrixXd d_x = oracle::random_matrix(rng, 6, 3);
  const Eigen::MatrixXd d_y = oracle::random_matrix(rng, 6, 3);
  Eigen::MatrixXd gal(4, 3);
  const Eigen::RowVector3d row(0.3, -1.0, 0.4);
  gal << row, row, row, row;  // identical gallery entries tie everywhere
  const Eigen::MatrixXd pro = oracle::random_matrix(rng, 2, 3);
  const xcrc::TrainedSolver s = xcrc::fit(d_x, d_y, rbf_config(1.0));
  const xcrc::RankResult rr = xcrc::rank_all(s, gal, pro);
  for (const auto& order : rr.ranking) {
    CHECK(order == std::vector<Eigen::Index>{0, 1, 2, 3});
  }
}

TEST_CASE("matched pairs dominate on noiseless symmetric data") {
  xcrc::Rng rng(167);
  const Eigen::MatrixXd d = oracle::random_matrix(rng, 10, 5);
  const Eigen::MatrixXd test = oracle::random_matrix(rng, 8, 5);
  const xcrc::TrainedSolver s = xcrc::fit(d, d, rbf_config(1.5));
  const xcrc::RankResult rr = xcrc::rank_all(s, test, test);
  for (Eigen::Index j = 0; j < 8; ++j) {
    CHECK(rr.similarity(j, j) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rr.ranking[static_cast<std::size_t>(j)][0] == j);
  }
}

TEST_CASE("decoupled diagnostic mode zeroes the cross terms") {
  xcrc::Rng rng(173);
  const Eigen::MatrixXd d_x = oracle::random_matrix(rng, 9, 4);
  const Eigen::MatrixXd d_y = oracle::random_matrix(rng, 9, 4);
  SolverConfig cfg = rbf_config(0.9);
  cfg.decouple = true;
  const xcrc::TrainedSolver s = xcrc::fit(d_x, d_y, cfg);
  CHECK(s.beta_xy.isZero());
  CHECK(s.beta_yx.isZero());
  CHECK(s.q.isIdentity());
}
