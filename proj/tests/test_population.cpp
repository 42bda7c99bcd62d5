#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "resem/errors.hpp"
#include "resem/population.hpp"
#include "test_support.hpp"

using resem::DesignFractions;
using resem::FinitePopulation;
using resem::fp_moments;
using resem::projection_variance;
using resem::theoretical_components;

namespace {

FinitePopulation tiny_population() {
  FinitePopulation pop;
  pop.y1.resize(4);
  pop.y1 << 2, 3, 4, 5;
  pop.y0.resize(4);
  pop.y0 << 1, 2, 3, 4;
  pop.w.resize(4, 1);
  pop.w << 1, 2, 3, 4;
  pop.x = pop.w;
  pop.e = pop.w;
  pop.c = pop.w;
  return pop;
}

}  // namespace

TEST_CASE("constant outcomes have zero variance") {
  FinitePopulation pop = tiny_population();
  pop.y1.setConstant(3.0);
  pop.y0.setConstant(3.0);
  const auto m = fp_moments(pop);
  CHECK(m.var_y1 == 0.0);
  CHECK(m.var_y0 == 0.0);
  CHECK(m.var_tau == 0.0);
}

TEST_CASE("hand-computed moments for a 4-point column") {
  const auto m = fp_moments(tiny_population());
  // column (1,2,3,4): mean 2.5, variance sum((w-2.5)^2)/3 = 5/3
  CHECK(m.mean_w(0) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(m.cov_w(0, 0) == doctest::Approx(5.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("additive shift gives zero effect variance and unit mean effect") {
  const auto m = fp_moments(tiny_population());  // y1 = y0 + 1
  CHECK(m.var_tau == doctest::Approx(0.0));
  CHECK(m.mean_tau == doctest::Approx(1.0));
}

TEST_CASE("moments are invariant to unit order") {
  resem::RngStream rng(5, 0);
  auto pop = testsupport::random_population(60, 2, 3, 2, 4, rng);
  const auto base = fp_moments(pop);

  std::vector<int> perm(60);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = 59; i > 0; --i)
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(rng.next_below(static_cast<std::uint64_t>(i + 1)))]);

  FinitePopulation shuffled = pop;
  for (int i = 0; i < 60; ++i) {
    const int src = perm[static_cast<std::size_t>(i)];
    shuffled.y1(i) = pop.y1(src);
    shuffled.y0(i) = pop.y0(src);
    shuffled.w.row(i) = pop.w.row(src);
    shuffled.x.row(i) = pop.x.row(src);
    shuffled.e.row(i) = pop.e.row(src);
    shuffled.c.row(i) = pop.c.row(src);
  }
  const auto other = fp_moments(shuffled);
  CHECK(other.var_y1 == doctest::Approx(base.var_y1).epsilon(1e-12));
  CHECK(other.var_tau == doctest::Approx(base.var_tau).epsilon(1e-12));
  CHECK((other.cov_x - base.cov_x).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((other.cov_tau_w - base.cov_tau_w).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(other.proj_var_tau_c == doctest::Approx(base.proj_var_tau_c).epsilon(1e-10));
}

TEST_CASE("degenerate population is rejected") {
  FinitePopulation pop;
  pop.y1.resize(1);
  pop.y1 << 1;
  pop.y0.resize(1);
  pop.y0 << 0;
  pop.w.resize(1, 0);
  pop.x.resize(1, 0);
  pop.e.resize(1, 0);
  pop.c.resize(1, 0);
  CHECK_THROWS_AS(fp_moments(pop), resem::DegenerateError);
}

TEST_CASE("projection variance: orthogonal, perfect and hand-computed cases") {
  Eigen::VectorXd y(4);
  y << 1, 2, 3, 4;
  Eigen::MatrixXd orthogonal(4, 1);
  orthogonal << 1, -1, -1, 1;  // uncorrelated with y by construction
  CHECK(projection_variance(y, orthogonal) == doctest::Approx(0.0));

  Eigen::MatrixXd same(4, 1);
  same << 1, 2, 3, 4;
  CHECK(projection_variance(y, same) == doctest::Approx(5.0 / 3.0).epsilon(1e-12));

  // exact linear function of two covariates reproduces the full variance
  resem::RngStream rng(8, 0);
  Eigen::MatrixXd cov(30, 2);
  for (int i = 0; i < 30; ++i) {
    cov(i, 0) = rng.next_gaussian();
    cov(i, 1) = rng.next_gaussian();
  }
  const Eigen::VectorXd exact = 2.0 * cov.col(0) - 0.7 * cov.col(1);
  const double total = (exact.array() - exact.mean()).square().sum() / 29.0;
  CHECK(projection_variance(exact, cov) == doctest::Approx(total).epsilon(1e-10));
}

TEST_CASE("projection variance is affine invariant") {
  resem::RngStream rng(21, 0);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::MatrixXd cov(40, 3);
    Eigen::VectorXd y(40);
    for (int i = 0; i < 40; ++i) {
      for (int j = 0; j < 3; ++j) cov(i, j) = rng.next_gaussian();
      y(i) = 0.5 * cov(i, 0) - cov(i, 2) + 0.3 * rng.next_gaussian();
    }
    Eigen::MatrixXd a(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) a(i, j) = rng.next_gaussian();
    a += 3.0 * Eigen::MatrixXd::Identity(3, 3);  // keep it nonsingular
    Eigen::RowVectorXd b(3);
    b << 1.0, -2.0, 0.5;
    const Eigen::MatrixXd transformed = (cov * a.transpose()).rowwise() + b;
    CHECK(projection_variance(y, transformed) ==
          doctest::Approx(projection_variance(y, cov)).epsilon(1e-8));
  }
}

TEST_CASE("singular covariate block is an error naming the block") {
  Eigen::VectorXd y(4);
  y << 1, 2, 3, 4;
  Eigen::MatrixXd cov(4, 2);
  cov << 1, 2, 2, 4, 3, 6, 4, 8;  // second column is twice the first
  CHECK_THROWS_AS(projection_variance(y, cov, "w"), resem::SingularDesignError);
  try {
    projection_variance(y, cov, "w");
  } catch (const resem::SingularDesignError& ex) {
    CHECK(ex.block() == "w");
  }
}

TEST_CASE("theoretical components: constant effects") {
  resem::RngStream rng(33, 0);
  auto pop = testsupport::random_population(200, 2, 3, 2, 4, rng);
  pop.y1 = pop.y0.array() + 2.0;  // constant individual effect
  const auto m = fp_moments(pop);
  const auto fr = DesignFractions::from_counts(200, 50, 25);
  const auto tc = theoretical_components(m, fr);
  CHECK(tc.r_s2 == doctest::Approx(0.0));
  // with constant effects the assignment-stage measure reduces to the
  // explained share of the control outcome
  const double expected =
      (m.proj_var_y0_x / fr.r1 + m.proj_var_y0_x / fr.r0 - 0.0) /
      (m.var_y0 / fr.r1 + m.var_y0 / fr.r0);
  CHECK(tc.r_t2 == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("full sampling removes the sampling-stage association") {
  resem::RngStream rng(34, 0);
  auto pop = testsupport::random_population(100, 2, 2, 2, 3, rng);
  const auto m = fp_moments(pop);
  const auto fr = DesignFractions::from_counts(100, 100, 50);
  const auto tc = theoretical_components(m, fr);
  CHECK(tc.r_s2 == 0.0);
  // f = 1 also matches the classical variance formula
  const double neyman = m.var_y1 / fr.r1 + m.var_y0 / fr.r0 - m.var_tau;
  CHECK(tc.v_tau_tau == doctest::Approx(neyman).epsilon(1e-12));
}

TEST_CASE("outcomes orthogonal to all covariates give zero associations") {
  // covariates vary only in dimensions the outcomes ignore
  FinitePopulation pop;
  const int n = 8;
  pop.y1.resize(n);
  pop.y0.resize(n);
  pop.w.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    pop.y0(i) = (i % 2 == 0) ? 1.0 : -1.0;
    pop.y1(i) = pop.y0(i) + ((i / 2) % 2 == 0 ? 0.5 : -0.5);
    pop.w(i, 0) = (i < 4) ? 1.0 : -1.0;  // orthogonal to both patterns
  }
  pop.x = pop.w;
  pop.e = pop.w;
  pop.c = pop.w;
  const auto m = fp_moments(pop);
  const auto tc = theoretical_components(m, DesignFractions::from_counts(n, 4, 2));
  CHECK(tc.r_s2 == doctest::Approx(0.0));
  CHECK(tc.r_t2 == doctest::Approx(0.0));
}

TEST_CASE("association measures stay inside the simplex on random populations") {
  resem::RngStream rng(77, 0);
  for (int rep = 0; rep < 30; ++rep) {
    auto pop = testsupport::random_population(80, 2, 3, 1, 3, rng);
    const auto m = fp_moments(pop);
    const auto tc = theoretical_components(m, DesignFractions::from_counts(80, 20, 10));
    CHECK(tc.r_s2 >= 0.0);
    CHECK(tc.r_t2 >= 0.0);
    CHECK(tc.r_s2 + tc.r_t2 <= 1.0 + 1e-10);
    CHECK(tc.r_e2 + tc.r_c2 <= 1.0 + 1e-10);
  }
}

TEST_CASE("degenerate outcome variance is rejected") {
  FinitePopulation pop = tiny_population();
  pop.y1.setZero();
  pop.y0.setZero();
  const auto m = fp_moments(pop);
  CHECK_THROWS_AS(theoretical_components(m, DesignFractions::from_counts(4, 2, 1)),
                  resem::DegenerateError);
}

TEST_CASE("e sub-block flag is enforced") {
  FinitePopulation pop = tiny_population();
  pop.e_subset_of_c = true;
  pop.e_columns_in_c = {0};
  CHECK_NOTHROW(pop.validate());
  pop.e(0, 0) += 1.0;
  CHECK_THROWS_AS(pop.validate(), resem::DomainError);
}
