#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "freespec/block_model.hpp"
#include "freespec/free_solver.hpp"
#include "freespec/lanczos.hpp"
#include "freespec/model.hpp"
#include "test_util.hpp"

using namespace freespec;

namespace {

BlockModelSpec make_spec(std::vector<int> sizes, RMat b, RVec z) {
  BlockModelSpec s;
  s.block_sizes = std::move(sizes);
  s.b = std::move(b);
  s.z = std::move(z);
  return s;
}

BlockModelSpec q1_spec(double b, int d = 8) {
  return make_spec({d}, RMat::Constant(1, 1, b), RVec::Ones(d));
}

RMat b2(double a, double bb, double c) {
  RMat m(2, 2);
  m << a, bb, bb, c;
  return m;
}

// Random valid spec: strictly positive symmetric B, sign-pattern z.
BlockModelSpec random_spec(uint64_t seed, int qmax = 3, int size_cap = 20) {
  RngStream rs(seed, {101});
  int q = 1 + static_cast<int>(rs.next_u64() % qmax);
  std::vector<int> sizes(q);
  int d = 0;
  for (int k = 0; k < q; ++k) {
    sizes[k] = 2 + static_cast<int>(rs.next_u64() % (size_cap - 1));
    d += sizes[k];
  }
  RMat b(q, q);
  for (int k = 0; k < q; ++k)
    for (int l = k; l < q; ++l) b(k, l) = b(l, k) = 0.1 + 2.0 * rs.uniform();
  RVec z(d);
  for (int i = 0; i < d; ++i) z(i) = rs.uniform() < 0.5 ? -1.0 : 1.0;
  return make_spec(std::move(sizes), std::move(b), std::move(z));
}

AlgebraElement random_elem(int q, uint64_t seed) {
  RngStream rs(seed, {55});
  CMat m(q, q);
  CVec v(q);
  for (int k = 0; k < q; ++k) {
    v(k) = Complex(2 * rs.uniform() - 1, 2 * rs.uniform() - 1);
    for (int l = 0; l < q; ++l) m(k, l) = Complex(2 * rs.uniform() - 1, 2 * rs.uniform() - 1);
  }
  return {m, v};
}

}  // namespace

TEST_CASE("spec validation rejects malformed inputs") {
  CHECK_NOTHROW(q1_spec(1.0).validate());
  CHECK_THROWS_AS(make_spec({1, 4}, b2(1, 1, 1), RVec::Ones(5)).validate(), ValidationError);
  CHECK_THROWS_AS(make_spec({}, RMat(), RVec()).validate(), ValidationError);

  RMat asym(2, 2);
  asym << 1, 2, 1, 1;
  CHECK_THROWS_AS(make_spec({2, 2}, asym, RVec::Ones(4)).validate(), ValidationError);
  CHECK_THROWS_AS(make_spec({2, 2}, b2(1, -0.5, 1), RVec::Ones(4)).validate(), ValidationError);
  // Zero coupling disconnects the two blocks.
  CHECK_THROWS_AS(make_spec({2, 2}, b2(1, 0, 1), RVec::Ones(4)).validate(), ValidationError);

  RVec bad_z = RVec::Ones(4);
  bad_z(0) = 2.0;
  CHECK_THROWS_AS(make_spec({2, 2}, b2(1, 1, 1), bad_z).validate(), ValidationError);
  CHECK_THROWS_AS(make_spec({2, 2}, b2(1, 1, 1), RVec::Ones(3)).validate(), ValidationError);
}

TEST_CASE("json round trip and generated sign patterns") {
  auto spec = block_spec_from_json(
      R"({"block_sizes": [3, 3], "B": [[2, 1], [1, 2]], "z": "ones"})");
  CHECK(spec.q() == 2);
  CHECK(spec.dim() == 6);
  CHECK(spec.z.isApprox(RVec::Ones(6)));

  auto back = block_spec_from_json(block_spec_to_json(spec));
  CHECK(back.b.isApprox(spec.b));
  CHECK(back.z.isApprox(spec.z));
  CHECK(back.block_sizes == spec.block_sizes);

  auto signs = block_spec_from_json(
      R"({"block_sizes": [4, 4], "B": [[2, 1], [1, 2]], "z": "signs:7"})");
  for (int i = 0; i < 8; ++i) CHECK(std::abs(signs.z(i)) == doctest::Approx(1.0));
  auto signs2 = block_spec_from_json(
      R"({"block_sizes": [4, 4], "B": [[2, 1], [1, 2]], "z": "signs:7"})");
  CHECK(signs.z.isApprox(signs2.z));

  CHECK_THROWS_AS(block_spec_from_json("{"), ValidationError);
  CHECK_THROWS_AS(block_spec_from_json(R"({"block_sizes": [2, 2]})"), ValidationError);
  CHECK_THROWS_AS(
      block_spec_from_json(R"({"block_sizes": [2, 2], "B": [[1, 1], [1, 1]], "z": "junk"})"),
      ValidationError);
}

TEST_CASE("built model matches the displayed mean and variance profile") {
  const int d = 6;
  auto spec = q1_spec(1.0, d);
  auto null_model = build_block_model(spec, false);
  // Null mean is the diagonal compensation alone.
  for (int i = 0; i < d; ++i)
    CHECK(std::real(null_model.a0()(i, i)) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK((null_model.a0() - CMat(null_model.a0().diagonal().asDiagonal())).norm() == 0.0);
  // Diagonal noise variance sums to 1 + 1/d for a flat profile.
  CMat s_id = covariance_map(null_model, CMat::Identity(d, d));
  for (int i = 0; i < d; ++i)
    CHECK(std::real(s_id(i, i)) == doctest::Approx(1.0 + 1.0 / d).epsilon(1e-12));

  auto sig = build_block_model(spec, true);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      CHECK(std::real(sig.a0()(i, j)) ==
            doctest::Approx(1.0 / d - (i == j ? 1.0 : 0.0)).epsilon(1e-12));
}

TEST_CASE("sampled entry variances follow the block profile") {
  auto spec = make_spec({3, 3}, b2(2.0, 0.5, 1.0), RVec::Ones(6));
  const int n = 10000, d = 6;
  RMat a0 = build_block_model(spec, false).a0().real();
  RMat mean = RMat::Zero(d, d), second = RMat::Zero(d, d);
  for (int s = 0; s < n; ++s) {
    RMat noise = block_sample(spec, false, 40000 + s).real() - a0;
    mean += noise;
    second += noise.cwiseAbs2();
  }
  mean /= n;
  second /= n;
  auto lab = [&](int i) { return i < 3 ? 0 : 1; };
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      double want = (i == j ? 2.0 : 1.0) * spec.b(lab(i), lab(j)) / d;
      double got = second(i, j) - mean(i, j) * mean(i, j);
      double se = want * std::sqrt(2.0 / n);
      CHECK(std::abs(got - want) <= 5 * se);
    }
}

TEST_CASE("direct sampler equals the generic model sampler entry for entry") {
  auto spec = make_spec({3, 4, 5}, [] {
    RMat b(3, 3);
    b << 2, 1, 0.5, 1, 1.5, 0.25, 0.5, 0.25, 3;
    return b;
  }(), RVec::Ones(12));
  for (bool with_signal : {false, true}) {
    auto model = build_block_model(spec, with_signal);
    for (uint64_t seed : {0u, 1u, 9u}) {
      CMat a = sample(model, seed);
      CMat b = block_sample(spec, with_signal, seed);
      CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("algebra embedding basics") {
  auto spec = make_spec({3, 5}, b2(2, 1, 2), RVec::Ones(8));
  const int q = 2, d = 8;
  AlgebraElement one{CMat::Identity(q, q), CVec::Ones(q)};
  CHECK((algebra_embed(spec, one) - CMat::Identity(d, d)).norm() <= 1e-14);

  AlgebraElement proj{CMat::Zero(q, q), CVec(q)};
  proj.v << Complex(2, 0), Complex(-1, 0);
  CMat e = algebra_embed(spec, proj);
  CHECK(std::real(e.trace()) == doctest::Approx(2 * (3 - 1) - 1 * (5 - 1)).epsilon(1e-12));

  // The embedded element is unitarily a direct sum: its top eigenvalue is the
  // max of the small matrix's top eigenvalue and the projector weights.
  RngStream rs(3, {8});
  for (int rep = 0; rep < 10; ++rep) {
    CMat m = testutil::random_hermitian(q, rs, true);
    CVec v(q);
    for (int k = 0; k < q; ++k) v(k) = Complex(2 * rs.uniform() - 1, 0);
    AlgebraElement elem{m, v};
    double want = std::max(lambda_max(m), v.real().maxCoeff());
    CHECK(lambda_max(algebra_embed(spec, elem)) == doctest::Approx(want).epsilon(1e-11));
  }

  CHECK_THROWS_AS(algebra_embed(spec, AlgebraElement{CMat::Zero(3, 3), CVec::Zero(3)}),
                  ValidationError);
}

TEST_CASE("mean in the algebra reproduces the model mean") {
  auto flat = mean_in_algebra(q1_spec(0.7));
  CHECK(std::abs(flat.m(0, 0)) <= 1e-15);
  CHECK(std::abs(flat.v(0) - Complex(-0.7, 0)) <= 1e-15);

  auto zero = mean_in_algebra(make_spec({4}, RMat::Zero(1, 1), RVec::Ones(4)));
  CHECK(std::abs(zero.m(0, 0)) == 0.0);
  CHECK(std::abs(zero.v(0)) == 0.0);

  for (uint64_t seed : {2u, 5u, 11u}) {
    auto spec = random_spec(seed, 3, 8);
    auto model = build_block_model(spec, true);
    CMat emb = algebra_embed(spec, mean_in_algebra(spec));
    CHECK((emb - model.a0()).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("reduced variance map agrees with the full covariance map") {
  auto zero = variance_map_reduced(q1_spec(1.0), AlgebraElement{CMat::Zero(1, 1), CVec::Zero(1)});
  CHECK(zero.m.norm() == 0.0);
  CHECK(zero.v.norm() == 0.0);

  // One-block closed form.
  {
    double beta = 1.3;
    const int d = 8;
    auto spec = q1_spec(beta, d);
    Complex mm(0.4, 0), ww(-0.2, 0);
    auto out = variance_map_reduced(spec, AlgebraElement{CMat::Constant(1, 1, mm),
                                                         CVec::Constant(1, ww)});
    Complex base = beta * (ww + (mm - ww) / static_cast<double>(d));
    CHECK(std::abs(out.m(0, 0) - (base + beta * mm / static_cast<double>(d))) <= 1e-14);
    CHECK(std::abs(out.v(0) - (base + beta * ww / static_cast<double>(d))) <= 1e-14);
  }

  for (uint64_t seed : {1u, 4u, 7u, 13u, 21u}) {
    auto spec = random_spec(seed, 3, 14);  // d <= 40ish
    auto model = build_block_model(spec, true);
    auto elem = random_elem(spec.q(), seed);
    // Hermitize: covariance_map validates its input.
    elem.m = 0.5 * (elem.m + elem.m.adjoint()).eval();
    elem.v = elem.v.real().cast<Complex>().eval();
    CMat lhs = algebra_embed(spec, variance_map_reduced(spec, elem));
    CMat rhs = covariance_map(model, algebra_embed(spec, elem));
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("one-block edges match the scalar calculus") {
  struct Row {
    double b, lambda0, vstar;
  };
  for (auto [b, l0, vs] : {Row{0.25, 0.75, 2.0}, Row{4.0, 0.0, 0.5}, Row{1.0, 1.0, 1.0},
                           Row{0.5, 0.9142135623730951, 1.4142135623730951}}) {
    auto sol = reduced_lambda0(q1_spec(b));
    CHECK(sol.converged);
    CHECK(sol.value == doctest::Approx(l0).epsilon(1e-8));
    CHECK(sol.v_star(0) == doctest::Approx(vs).epsilon(1e-8));
    CHECK(sol.kkt1_residual <= 1e-7);
    CHECK(std::abs(sol.kkt2_value) <= 1e-6);
  }
  for (auto [b, lam] : {std::pair{0.25, 0.75}, {4.0, 1.0}, {1.0, 1.0}}) {
    auto sol = reduced_lambda(q1_spec(b));
    CHECK(sol.converged);
    CHECK(sol.value == doctest::Approx(lam).epsilon(1e-8));
  }
  CHECK(reduced_lambda(q1_spec(4.0)).v_star(0) == doctest::Approx(0.25).epsilon(1e-8));
  CHECK_THROWS_AS(reduced_lambda0(make_spec({4}, RMat::Zero(1, 1), RVec::Ones(4))),
                  ValidationError);
}

TEST_CASE("reduced edges agree with the full variational principle") {
  for (uint64_t seed : {3u, 8u, 15u, 23u, 31u, 40u}) {
    auto spec = random_spec(seed, 3, 20);  // d <= 60
    double radius = std::sqrt(8.0 * (spec.b * RVec::Ones(spec.q())).lpNorm<Eigen::Infinity>() /
                              spec.dim()) +
                    1e-6;
    auto lam = reduced_lambda(spec);
    auto full = lehner_max(build_block_model(spec, true));
    CHECK(std::abs(lam.value - full.value) <= radius);
    auto lam0 = reduced_lambda0(spec);
    auto full0 = lehner_max(build_block_model(spec, false));
    CHECK(std::abs(lam0.value - full0.value) <= radius);
  }
}

TEST_CASE("minimizer is unique up to block relabeling") {
  auto spec = make_spec({4, 6, 8}, [] {
    RMat b(3, 3);
    b << 1.2, 0.4, 0.7, 0.4, 2.0, 0.3, 0.7, 0.3, 0.9;
    return b;
  }(), RVec::Ones(18));
  auto sol = reduced_lambda0(spec);
  // Reversed block order: the solution must be the reversed vector.
  auto rev = make_spec({8, 6, 4}, spec.b.reverse().eval(), RVec::Ones(18));
  auto rsol = reduced_lambda0(rev);
  CHECK(rsol.value == doctest::Approx(sol.value).epsilon(1e-9));
  for (int k = 0; k < 3; ++k)
    CHECK(rsol.v_star(2 - k) == doctest::Approx(sol.v_star(k)).epsilon(1e-6));
}

TEST_CASE("edge ordering and critical normalization") {
  for (uint64_t seed : {2u, 6u, 12u, 19u, 27u}) {
    auto spec = random_spec(seed, 3, 15);
    auto rep = phase_classify(spec);
    CHECK(rep.lambda0 <= rep.lambda + 1e-8);
    CHECK(rep.lambda <= 1.0 + 1e-8);
    if (rep.snr >= 1.0) CHECK(rep.lambda == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(rep.lambda0 <= rep.lambda0_bound + 1e-8);

    // Rescale to the critical point: the null minimizer collapses to ones.
    auto crit = spec;
    crit.b /= rep.snr;
    auto csol = reduced_lambda0(crit);
    CHECK((csol.v_star - RVec::Ones(crit.q())).lpNorm<Eigen::Infinity>() <= 1e-6);
    CHECK(csol.value == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("phase classification across the transition") {
  auto a = phase_classify(q1_spec(0.5));
  CHECK(a.phase == 'a');
  CHECK(a.snr == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(a.lambda == doctest::Approx(a.lambda0).epsilon(1e-8));
  // One block: the closed-form bound is attained exactly.
  CHECK(a.lambda0_bound == doctest::Approx(0.9142135623730951).epsilon(1e-9));
  CHECK(a.lambda0 == doctest::Approx(a.lambda0_bound).epsilon(1e-7));

  auto spec_c = make_spec({5, 5}, b2(2, 1, 2), RVec::Ones(10));
  auto c = phase_classify(spec_c);
  CHECK(c.snr == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(c.phase == 'c');
  CHECK(c.lambda == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(c.lambda0 < 1.0 - 1e-3);
  CHECK(c.error_radius == doctest::Approx(std::sqrt(8.0 * 3.0 / 10.0)).epsilon(1e-12));
  CHECK(c.perron_b.size() == 2);
  CHECK(c.perron_b.minCoeff() > 0);

  auto spec_b = spec_c;
  spec_b.b /= 1.5;
  auto b = phase_classify(spec_b);
  CHECK(b.phase == 'b');
  CHECK(b.lambda == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(b.lambda0 == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("tilted edges and the overlap slope") {
  CHECK(lambda_t(q1_spec(4.0), 0.0) == doctest::Approx(reduced_lambda(q1_spec(4.0)).value)
                                           .epsilon(1e-12));
  // Closed form at q=1, b=4, tilt -0.1: v = 1/3.9, lambda = 3.9 + 4(1/3.9 - 1).
  CHECK(lambda_t(q1_spec(4.0), -0.1) ==
        doctest::Approx(3.9 + 4.0 * (1.0 / 3.9 - 1.0)).epsilon(1e-8));
  CHECK(lambda_t(q1_spec(4.0), -0.1) < 1.0 - 1e-3);
  // Critical point: quadratic growth of the tilted edge.
  double crit_gap = lambda_t(q1_spec(1.0), 0.01) - reduced_lambda(q1_spec(1.0)).value;
  CHECK(crit_gap >= -1e-10);
  CHECK(crit_gap <= 1e-3);

  auto [sub_lo, sub_hi] = overlap_slope(q1_spec(0.5), 0.01);
  CHECK(std::abs(sub_lo) <= 1e-6);
  CHECK(std::abs(sub_hi) <= 1e-6);
  auto [sup_lo, sup_hi] = overlap_slope(q1_spec(4.0), 0.01);
  CHECK(sup_lo > 0);
  // The slope approximates the asymptotic overlap 1 - 1/snr = 0.75.
  CHECK(sup_lo == doctest::Approx(0.75).epsilon(2e-2));
  CHECK(sup_hi >= sup_lo - 1e-9);

  CHECK_THROWS_AS(overlap_slope(q1_spec(4.0), 0.0), ValidationError);
  CHECK_THROWS_AS(overlap_slope(q1_spec(4.0), -0.1), ValidationError);
}

TEST_CASE("lanczos extremes match dense eigensolves") {
  RngStream rs(17, {3});
  // Above the dense fallback threshold.
  const int n = 300, k = 3;
  RMat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) a(i, j) = a(j, i) = rs.gaussian() / std::sqrt(n);
  Eigen::SelfAdjointEigenSolver<RMat> es(a);
  LanczosOptions opts;
  opts.seed = 5;
  auto r = lanczos_topk([&](const RVec& x) { return RVec(a * x); }, n, k, opts);
  CHECK(r.converged);
  for (int i = 0; i < k; ++i)
    CHECK(r.values(i) == doctest::Approx(es.eigenvalues()(n - 1 - i)).epsilon(1e-7));
  for (int i = 0; i < k; ++i) {
    CHECK(std::abs(r.vectors.col(i).norm() - 1.0) <= 1e-9);
    CHECK((a * r.vectors.col(i) - r.values(i) * r.vectors.col(i)).norm() <= 1e-6);
  }

  // Dense fallback path.
  RVec diag(8);
  diag << 9, 7, 5, 3, 1, -1, -3, -5;
  auto small = lanczos_topk([&](const RVec& x) { return RVec(diag.asDiagonal() * x); }, 8, 2);
  CHECK(small.values(0) == doctest::Approx(9.0));
  CHECK(small.values(1) == doctest::Approx(7.0));

  CHECK_THROWS_AS(lanczos_topk([](const RVec& x) { return x; }, 4, 5), ValidationError);
}

TEST_CASE("sampled extremes concentrate at the predicted edges") {
  auto spec = make_spec({1000, 1000}, b2(2, 1, 2), RVec::Ones(2000));
  auto rep = phase_classify(spec);
  CHECK(rep.snr == doctest::Approx(1.5).epsilon(1e-12));
  int ok_sig = 0, ok_null = 0;
  LanczosOptions lopts;
  lopts.num_starts = 2;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    RMat xn = block_sample(spec, false, 6000 + seed).real();
    auto rn = lanczos_topk([&](const RVec& x) { return RVec(xn * x); }, 2000, 1, lopts);
    if (std::abs(rn.values(0) - rep.lambda0) <= 0.1) ++ok_null;
    RMat xs = block_sample(spec, true, 6000 + seed).real();
    auto rsig = lanczos_topk([&](const RVec& x) { return RVec(xs * x); }, 2000, 1, lopts);
    if (std::abs(rsig.values(0) - rep.lambda) <= 0.1) ++ok_sig;
  }
  CHECK(ok_sig >= 6);
  CHECK(ok_null >= 6);
}
