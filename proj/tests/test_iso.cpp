#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <complex>

#include "doctest.h"
#include "freespec/ensembles.hpp"
#include "freespec/free_solver.hpp"
#include "freespec/iso.hpp"
#include "test_util.hpp"

using namespace freespec;
using testutil::random_hermitian;
using testutil::random_model;

TEST_CASE("bbp_value branches and domain") {
  CHECK(bbp_value(0.5) == 2.0);
  CHECK(bbp_value(1.0) == 2.0);
  CHECK(bbp_value(2.0) == 2.5);
  CHECK(bbp_value(0.0) == 2.0);
  // continuous across the kink
  CHECK(bbp_value(1.0 + 1e-12) == doctest::Approx(2.0).epsilon(1e-11));
  CHECK_THROWS_AS(bbp_value(-0.1), ValidationError);
}

TEST_CASE("bbp_overlap values") {
  CHECK(bbp_overlap(1.0) == 0.0);
  CHECK(bbp_overlap(2.0) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(bbp_overlap(0.5) == 0.0);
  CHECK(bbp_overlap(0.0) == 0.0);
  CHECK(bbp_overlap(3.0) == doctest::Approx(1.0 - 1.0 / 9.0).epsilon(1e-15));
}

TEST_CASE("edge function difference quotients stay within the overlap band") {
  // (B(t+h)-B(t))/h <= overlap(t) + h and (B(t)-B(t-h))/h >= overlap(t) - h
  for (int i = 1; i <= 100; ++i) {
    double theta = 0.03 * i;
    for (int j = 1; j <= 100; ++j) {
      double h = 0.002 * j;
      double up = (bbp_value(theta + h) - bbp_value(theta)) / h;
      double lo = (bbp_value(theta) - bbp_value(std::max(theta - h, 0.0))) / h;
      CHECK(up <= bbp_overlap(theta) + h + 1e-12);
      CHECK(lo >= bbp_overlap(theta) - h - 1e-12);
    }
  }
}

TEST_CASE("bbp_window on the flat ensemble") {
  GaussianSeriesModel m = unit_iso_model(8);
  BbpPrediction p = bbp_window(m);
  CHECK(p.theta == 0.0);
  CHECK(p.value == 2.0);
  CHECK(p.rank == 0);
  CHECK(p.error_radius == 0.0);
  CHECK(p.isotropy_defect <= 1e-12);
  CHECK(p.applicable);
}

TEST_CASE("bbp_window on a spiked flat model, cross-checked variationally") {
  const int d = 32;
  CVec v = CVec::Zero(d);
  v(0) = 1.0;
  GaussianSeriesModel m = add_spike(unit_iso_model(d), 2.0, v);
  BbpPrediction p = bbp_window(m);
  CHECK(p.theta == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(p.value == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(p.rank == 1);
  // flat-ensemble sigma_star^2 is 2/d - 1/d^2 (uniform vector saturates it)
  CHECK(p.error_radius == doctest::Approx(2.0 * std::sqrt(2.0 / d - 1.0 / (d * d))).epsilon(1e-4));
  CHECK(p.applicable);
  LehnerSolution sol = lehner_max(m);
  CHECK(std::abs(sol.value - p.value) <= p.error_radius + 1e-9);
}

TEST_CASE("bbp_window flags hypothesis violations") {
  // sigma_star * sqrt(rank) > 1: identity coefficient, rank-2 mean
  CMat a0 = CMat::Zero(2, 2);
  a0(0, 0) = 2.0;
  a0(1, 1) = 1.5;
  GaussianSeriesModel m1 = GaussianSeriesModel::from_dense(a0, {CMat::Identity(2, 2)});
  BbpPrediction p1 = bbp_window(m1);
  CHECK(p1.rank == 2);
  CHECK_FALSE(p1.applicable);
  CHECK(p1.value == doctest::Approx(2.5));  // still emitted

  // anisotropic covariance
  CMat c = CMat::Zero(2, 2);
  c(0, 0) = 2.0;
  GaussianSeriesModel m2 = GaussianSeriesModel::from_dense(CMat::Zero(2, 2), {c});
  BbpPrediction p2 = bbp_window(m2);
  CHECK(p2.isotropy_defect > 1e-8);
  CHECK_FALSE(p2.applicable);
}

TEST_CASE("bbp_window tracks the variational edge on random spiked instances") {
  const int d = 32;
  RngStream rs(0xb5b5, {});
  for (int inst = 0; inst < 20; ++inst) {
    double theta = 0.2 + 2.8 * rs.uniform();
    CVec v(d);
    for (int i = 0; i < d; ++i) v(i) = Complex(rs.gaussian(), rs.gaussian());
    v.normalize();
    GaussianSeriesModel m = add_spike(unit_iso_model(d), theta, v);
    BbpPrediction p = bbp_window(m);
    REQUIRE(p.rank == 1);
    REQUIRE(p.error_radius <= 2.0 * 0.3);  // hypothesis regime
    CHECK(p.applicable);
    LehnerSolution sol = lehner_max(m);
    CHECK(std::abs(sol.value - p.value) <= p.error_radius + 1e-9);
  }
}

TEST_CASE("covariance norm bound on low-rank arguments") {
  GaussianSeriesModel m = random_model(6, 5, 0x51a1);
  SUBCASE("zero argument") {
    SrankBound b = srank_bound_check(m, CMat::Zero(6, 6));
    CHECK(b.bound == 0.0);
    CHECK(b.exact == 0.0);
  }
  SUBCASE("rank one") {
    RngStream rs(0x51a2, {});
    CVec v(6);
    for (int i = 0; i < 6; ++i) v(i) = Complex(rs.gaussian(), rs.gaussian());
    v.normalize();
    CMat M = v * v.adjoint();
    SrankBound b = srank_bound_check(m, M);
    ModelParameters p = compute_parameters(m);
    CHECK(b.bound == doctest::Approx(p.sigma_star_sq).epsilon(1e-9));
    CHECK(b.exact <= b.bound + 1e-9);
  }
  SUBCASE("random rank two") {
    RngStream rs(0x51a3, {});
    for (int rep = 0; rep < 10; ++rep) {
      CVec u(6), w(6);
      for (int i = 0; i < 6; ++i) {
        u(i) = Complex(rs.gaussian(), rs.gaussian());
        w(i) = Complex(rs.gaussian(), rs.gaussian());
      }
      u.normalize();
      w -= u * (u.adjoint() * w);
      w.normalize();
      CMat M = 1.5 * u * u.adjoint() - 0.7 * w * w.adjoint();
      SrankBound b = srank_bound_check(m, M);
      CHECK(b.exact <= b.bound + 1e-9);
      // exact really is the operator norm of S(M)
      CMat sm = covariance_map(m, M);
      Eigen::JacobiSVD<CMat> svd(sm);
      CHECK(b.exact == doctest::Approx(svd.singularValues()(0)).epsilon(1e-9));
    }
  }
}

TEST_CASE("perturbation sandwich: commuting cases") {
  CMat x = CMat::Zero(2, 2);
  x(0, 0) = 2.0;
  CMat p1 = CMat::Zero(2, 2);
  p1(0, 0) = 1.0;
  OverlapSandwich s1 = perturb_overlap(x, p1, 0.5);
  CHECK(s1.point == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s1.lower == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s1.upper == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(s1.degenerate);

  CMat p2 = CMat::Zero(2, 2);
  p2(1, 1) = 1.0;
  OverlapSandwich s2 = perturb_overlap(x, p2, 0.5);
  CHECK(s2.point == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s2.lower == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s2.upper == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("perturbation sandwich: random instances and input validation") {
  RngStream rs(0x7a7a, {});
  for (int rep = 0; rep < 25; ++rep) {
    CMat x = random_hermitian(6, rs);
    // random orthogonal projection of rank 1..5
    int k = 1 + static_cast<int>(rs.next_u64() % 5);
    CMat g(6, k);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < k; ++j) g(i, j) = Complex(rs.gaussian(), rs.gaussian());
    Eigen::HouseholderQR<CMat> qr(g);
    CMat q = qr.householderQ() * CMat::Identity(6, k);
    CMat p = q * q.adjoint();
    for (double t : {1e-3, 0.3}) {
      OverlapSandwich s = perturb_overlap(x, p, t);
      CHECK(s.lower <= s.point + 1e-10);
      CHECK(s.point <= s.upper + 1e-10);
      CHECK(s.point >= -1e-12);
      CHECK(s.point <= 1.0 + 1e-12);
    }
  }
  CMat x = random_hermitian(4, rs);
  CHECK_THROWS_AS(perturb_overlap(x, CMat::Identity(4, 4), 0.0), ValidationError);
  CHECK_THROWS_AS(perturb_overlap(x, CMat::Identity(4, 4), -1.0), ValidationError);
  CHECK_THROWS_AS(perturb_overlap(x, CMat(0.5 * CMat::Identity(4, 4)), 0.5), ValidationError);
  OverlapSandwich s = perturb_overlap(CMat::Identity(3, 3), CMat::Identity(3, 3), 0.5);
  CHECK(s.degenerate);
  CHECK(s.point == doctest::Approx(1.0));
}

TEST_CASE("three-point overlap: supercritical spiked flat model") {
  const int d = 512;
  CVec v = CVec::Zero(d);
  v(0) = 1.0;
  GaussianSeriesModel m = add_spike(unit_iso_model(d), 2.0, v);
  ThreePointOverlap r = three_point_overlap(m, 2.0, 0.3, 0.15, 20, 0x3931);
  CHECK(r.band_center == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(std::abs(r.mean - 0.75) <= 0.1);
  CHECK(r.epsilon < 0.5);  // measured edge deviation stays small at d=512
  CHECK(static_cast<int>(r.overlaps.size()) == 20);
}

TEST_CASE("three-point overlap: subcritical spike") {
  const int d = 256;
  CVec v = CVec::Zero(d);
  v(0) = 1.0;
  GaussianSeriesModel m = add_spike(unit_iso_model(d), 0.5, v);
  ThreePointOverlap r = three_point_overlap(m, 0.5, 0.3, 0.1, 10, 0x3932);
  CHECK(r.band_center == 0.0);
  CHECK(r.mean <= 0.1);
}

TEST_CASE("three-point overlap: precondition") {
  GaussianSeriesModel m = unit_iso_model(4);
  CHECK_THROWS_AS(three_point_overlap(m, 2.0, 0.1, 0.2, 2, 1), ValidationError);
  CHECK_THROWS_AS(three_point_overlap(m, 2.0, 0.1, 0.0, 2, 1), ValidationError);
  CHECK_THROWS_AS(three_point_overlap(m, 2.0, 0.1, 0.05, 0, 1), ValidationError);
}

TEST_CASE("low-rank split") {
  CMat a = CMat::Zero(3, 3);
  a(0, 0) = 3.0;
  a(1, 1) = 2.0;
  a(2, 2) = 1.0;
  LowRankSplit s1 = low_rank_split(a, 1);
  CHECK(std::real(s1.truncated(0, 0)) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(s1.truncated.cwiseAbs().maxCoeff() == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(std::abs(s1.truncated(1, 1)) <= 1e-12);
  CHECK(s1.tail_norm == doctest::Approx(2.0).epsilon(1e-12));

  LowRankSplit s0 = low_rank_split(a, 0);
  CHECK(s0.truncated.cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(s0.tail_norm == doctest::Approx(3.0).epsilon(1e-12));

  LowRankSplit sd = low_rank_split(a, 3);
  CHECK((sd.truncated - a).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(sd.tail_norm == 0.0);

  CHECK_THROWS_AS(low_rank_split(a, -1), ValidationError);

  RngStream rs(0x10e4, {});
  for (int rep = 0; rep < 8; ++rep) {
    CMat b = random_hermitian(7, rs);
    for (int r = 0; r <= 7; ++r) {
      LowRankSplit s = low_rank_split(b, r);
      Eigen::SelfAdjointEigenSolver<CMat> es(CMat(b - s.truncated), Eigen::EigenvaluesOnly);
      double rem = es.eigenvalues().cwiseAbs().maxCoeff();
      CHECK(rem == doctest::Approx(s.tail_norm).epsilon(1e-10));
    }
  }
}

TEST_CASE("second eigenvalue stays at the bulk edge under a supercritical spike") {
  const int d = 512;
  CVec v = CVec::Zero(d);
  v(0) = 1.0;
  GaussianSeriesModel m = add_spike(unit_iso_model(d), 1.5, v);
  for (int s = 0; s < 20; ++s) {
    CMat x = sample(m, 0xeef0 + s);
    Eigen::SelfAdjointEigenSolver<CMat> es(x, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues()(d - 2) <= 2.0 + 0.3);
  }
}
