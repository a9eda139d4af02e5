#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "freespec/block_model.hpp"
#include "freespec/ensembles.hpp"
#include "freespec/free_solver.hpp"
#include "test_util.hpp"

using namespace freespec;
using testutil::random_model;

namespace {

GaussianSeriesModel scalar_model(double a0, double a1) {
  CMat m0 = CMat::Constant(1, 1, a0);
  CMat m1 = CMat::Constant(1, 1, a1);
  return GaussianSeriesModel::from_dense(m0, {m1});
}

double lehner_objective(const GaussianSeriesModel& m, const CMat& mm) {
  return lambda_max(CMat(m.a0() + mm.inverse() + cov_apply(m, mm)));
}

CVec basis_vec(int d, int i) {
  CVec v = CVec::Zero(d);
  v(i) = 1.0;
  return v;
}

}  // namespace

TEST_CASE("variational edge of the scalar semicircle") {
  auto sol = lehner_max(scalar_model(0, 1));
  CHECK(sol.converged);
  CHECK(sol.value == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(sol.kkt_residual < 1e-8);

  auto shifted = lehner_max(scalar_model(3, 1));
  CHECK(shifted.value == doctest::Approx(5.0).epsilon(1e-9));

  CHECK_THROWS_AS(lehner_max(GaussianSeriesModel(CMat::Zero(1, 1), {})), ValidationError);
}

TEST_CASE("variational edge of an isotropic spiked model") {
  auto m = add_spike(unit_iso_model(8), 2.0, basis_vec(8, 0));
  auto p = compute_parameters(m);
  auto sol = lehner_max(m);
  CHECK(sol.converged);
  CHECK(std::abs(sol.value - 2.5) <= 2.0 * p.sigma_star);
  CHECK(lambda_min(sol.minimizer) > 0);
}

TEST_CASE("minimizer is locally optimal") {
  for (uint64_t seed : {3u, 9u}) {
    auto m = random_model(4, 3, seed, false);
    auto sol = lehner_max(m);
    CHECK(sol.converged);
    CHECK(lehner_objective(m, sol.minimizer) == doctest::Approx(sol.value).epsilon(1e-10));
    RngStream rs(seed, {77});
    for (int rep = 0; rep < 10; ++rep) {
      double eps = 0.1 * (2 * rs.uniform() - 1);
      CHECK(lehner_objective(m, CMat((1 + eps) * sol.minimizer)) >= sol.value - 1e-8);
    }
    // The objective is convex over positive definite M, so a dip along any
    // probe direction would contradict global optimality.
    double room = 0.5 * lambda_min(sol.minimizer);
    REQUIRE(room > 0);
    for (int rep = 0; rep < 10; ++rep) {
      CMat probe = testutil::random_hermitian(4, rs, false);
      probe /= probe.norm();
      CHECK(lehner_objective(m, CMat(sol.minimizer + room * probe)) >= sol.value - 1e-8);
    }
  }
}

TEST_CASE("smallest edge via negation") {
  auto sol = lehner_min(scalar_model(0, 1));
  CHECK(sol.value == doctest::Approx(-2.0).epsilon(1e-9));

  auto m = random_model(4, 3, 123, false);
  GaussianSeriesModel neg(-m.a0(), m.coeffs());
  CHECK(lehner_min(m).value == -lehner_max(neg).value);

  // support inclusion: sp(X_free) inside sp(A0) + 2 sigma [-1, 1]
  auto shifted = GaussianSeriesModel(CMat::Identity(4, 4) * 5.0 + m.a0() * 0.0, m.coeffs());
  auto p = compute_parameters(shifted);
  CHECK(lehner_min(shifted).value >= 5.0 - 2 * p.sigma - 1e-6);
  CHECK(lehner_max(shifted).value <= 5.0 + 2 * p.sigma + 1e-6);
}

TEST_CASE("self-consistent resolvent solves the fixed point") {
  // deterministic: exact resolvent
  CMat a0(2, 2);
  a0 << 1, 0, 0, -1;
  GaussianSeriesModel det(a0, {});
  Complex z(0.3, 0.8);
  CMat g = mde_resolvent(det, z);
  CMat expect = (z * CMat::Identity(2, 2) - a0).inverse();
  CHECK((g - expect).norm() < 1e-12);

  // scalar semicircle vs quadratic formula
  auto m = scalar_model(0, 1);
  Complex z2(0, 2);
  Complex gs = mde_resolvent(m, z2)(0, 0);
  Complex exact = (z2 - std::sqrt(z2 * z2 - 4.0)) / 2.0;
  CHECK(std::abs(gs - exact) <= 1e-9);

  CHECK_THROWS_AS(mde_resolvent(m, Complex(1.0, -0.1)), ValidationError);
  CHECK_THROWS_AS(mde_resolvent(m, Complex(1.0, 0.0)), ValidationError);
}

TEST_CASE("resolvent symmetry and half-plane preservation") {
  auto m = random_model(3, 2, 31, false, true);  // centered, real
  Complex z(0.7, 0.3);
  CMat g1 = mde_resolvent(m, Complex(-z.real(), z.imag()));
  CMat g2 = mde_resolvent(m, z);
  CHECK((g1 + g2.conjugate()).norm() < 1e-8);

  CMat im = (g2 - g2.adjoint()) / Complex(0, 2);
  CHECK(lambda_max(im) <= 1e-10);
}

TEST_CASE("spectral density of the semicircle") {
  auto m = scalar_model(0, 1);
  auto sol = free_density(m, -3.0, 3.0, 2001, 1e-4);
  CHECK(sol.density.minCoeff() >= 0.0);
  int mid = 1000;
  CHECK(sol.grid(mid) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(sol.density(mid) - 1.0 / 3.14159265358979324) <= 1e-3);
  double mass = 0;
  for (int i = 0; i + 1 < sol.grid.size(); ++i)
    mass += 0.5 * (sol.density(i) + sol.density(i + 1)) * (sol.grid(i + 1) - sol.grid(i));
  CHECK(mass >= 0.99);
  CHECK(mass <= 1.01);
  CHECK(sol.resolvent_residuals.maxCoeff() <= 1e-10);
}

TEST_CASE("support of the semicircle") {
  auto sup = free_support(scalar_model(0, 1));
  REQUIRE(sup.intervals.size() == 1);
  CHECK(std::abs(sup.intervals[0].lo + 2.0) <= 1e-3);
  CHECK(std::abs(sup.intervals[0].hi - 2.0) <= 1e-3);
  CHECK_FALSE(sup.edge_warning);

  CHECK_THROWS_AS(free_support(scalar_model(0, 1), 1e-4, 1e9), ValidationError);
}

TEST_CASE("support of a spiked isotropic model splits off an outlier") {
  // At this dimension the deterministic model smears the rank-one outlier
  // into a component of width ~4/sqrt(d) rather than an atom at 2.5.  The
  // reference endpoints below come from reducing the model to an exact
  // two-variable scalar fixed point (the mean and the spike direction
  // decouple): bulk edge 1.9375000270, outlier [2.1824010422, 2.7965695321].
  auto m = add_spike(unit_iso_model(32), 2.0, basis_vec(32, 0));
  auto p = compute_parameters(m);
  auto sup = free_support(m);
  REQUIRE(sup.intervals.size() == 2);
  CHECK(sup.intervals[0].lo >= -2.1);
  CHECK(std::abs(sup.intervals[0].hi - 1.9375000270) <= 2e-2);
  CHECK(std::abs(sup.intervals[1].lo - 2.1824010422) <= 2e-2);
  CHECK(std::abs(sup.intervals[1].hi - 2.7965695321) <= 2e-2);
  // The outer edge still sits within the guaranteed radius of theta + 1/theta.
  CHECK(std::abs(sup.intervals[1].hi - 2.5) <= 2.0 * p.sigma_star);
}

TEST_CASE("support of a deterministic model is its fattened spectrum") {
  CMat a0(3, 3);
  a0.setZero();
  a0(0, 0) = -1;
  a0(1, 1) = 1;
  a0(2, 2) = 1;
  GaussianSeriesModel det(a0, {});
  auto sup = free_support(det, 1e-5);
  REQUIRE(sup.intervals.size() == 2);
  CHECK(std::abs(sup.intervals[0].lo + 1) <= 1e-4);
  CHECK(std::abs(sup.intervals[1].hi - 1) <= 1e-4);
}

TEST_CASE("support stays inside the mean spectrum plus twice sigma") {
  for (uint64_t seed : {5u, 6u, 7u}) {
    auto m = random_model(5, 3, seed, false);
    auto p = compute_parameters(m);
    auto sup = free_support(m);
    auto a0eigs = eigen_spectrum(m.a0());
    double allowed = 2 * p.sigma + 10 * (1e-4 * p.sigma);
    auto dist_to_spec = [&](double x) {
      double best = 1e300;
      for (int i = 0; i < a0eigs.eigenvalues.size(); ++i)
        best = std::min(best, std::abs(x - a0eigs.eigenvalues(i)));
      return best;
    };
    for (const auto& iv : sup.intervals) {
      CHECK(dist_to_spec(iv.lo) <= allowed);
      CHECK(dist_to_spec(iv.hi) <= allowed);
      for (int i = 0; i + 1 < a0eigs.eigenvalues.size(); ++i) {
        double mid = 0.5 * (a0eigs.eigenvalues(i) + a0eigs.eigenvalues(i + 1));
        if (mid > iv.lo && mid < iv.hi) CHECK(dist_to_spec(mid) <= allowed);
      }
    }
  }
}

TEST_CASE("free moments of the semicircle are Catalan numbers") {
  auto m = scalar_model(0, 1);
  CHECK(std::abs(free_moment(m, 2) - 1.0) <= 1e-3);
  CHECK(std::abs(free_moment(m, 4) - 2.0) <= 1e-2);
  CHECK_THROWS_AS(free_moment(m, 3), ValidationError);
  CHECK_THROWS_AS(free_moment(m, -2), ValidationError);

  CMat a0(2, 2);
  a0 << 1, 0, 0, -1;
  CHECK(free_moment(GaussianSeriesModel(a0, {}), 2) == doctest::Approx(1.0));
}

TEST_CASE("block-invariant models agree with the reduced edge principle") {
  // A model whose mean is the blockwise row-sum offset and whose entry
  // variances are exactly B_ab/d is invariant under permutations within
  // blocks, so by convexity its minimizer can be taken diagonal and
  // block-constant: the full solver and the q-variable reduced principle
  // solve the same problem and must agree to optimizer accuracy.
  auto ideal_null = [](const BlockModelSpec& spec) {
    const int d = spec.dim();
    std::vector<int> lab(d);
    int pos = 0, blk = 0;
    for (int s : spec.block_sizes) {
      for (int i = 0; i < s; ++i) lab[pos++] = blk;
      ++blk;
    }
    RVec bc = spec.b * spec.weights();
    CMat a0 = CMat::Zero(d, d);
    for (int i = 0; i < d; ++i) a0(i, i) = -bc(lab[i]);
    std::vector<Coeff> cs;
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        double s = std::sqrt(spec.b(lab[i], lab[j]) / d);
        cs.push_back(Coeff::from_pairs(d, {{i, j, Complex(s, 0)}}));
      }
    return GaussianSeriesModel(std::move(a0), std::move(cs));
  };

  std::vector<BlockModelSpec> specs;
  {
    BlockModelSpec s;
    s.block_sizes = {8};
    s.b = RMat::Constant(1, 1, 0.5);
    s.z = RVec::Ones(8);
    specs.push_back(s);
    s.block_sizes = {6, 10};
    s.b = RMat(2, 2);
    s.b << 1.2, 0.4, 0.4, 0.8;
    s.z = RVec::Ones(16);
    specs.push_back(s);
    s.block_sizes = {4, 6, 8};
    s.b = RMat(3, 3);
    s.b << 0.6, 0.3, 0.2, 0.3, 1.1, 0.5, 0.2, 0.5, 0.9;
    s.z = RVec::Ones(18);
    specs.push_back(s);
  }
  for (const auto& spec : specs) {
    auto rep = reduced_lambda0(spec);
    auto sol = lehner_max(ideal_null(spec));
    CHECK(sol.converged);
    CHECK(std::abs(sol.value - rep.value) <= 1e-6);
  }
}

TEST_CASE("sampled band spectra concentrate on the deterministic support") {
  const int d = 256;
  auto m = band_model(d, 16);
  auto p = compute_parameters(m);
  auto sup = free_support(m);
  double vtilde = p.v_tilde;
  double budget = 10.0 * vtilde * std::pow(std::log(d), 0.75);
  for (int seed = 0; seed < 20; ++seed) {
    auto spec = eigen_spectrum(sample(m, 7000 + seed));
    CHECK(hausdorff_distance(spec, sup) <= budget);
  }
}
