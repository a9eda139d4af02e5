#include "freespec/applications.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "freespec/lanczos.hpp"
#include "freespec/rng.hpp"

namespace freespec {

namespace {

std::int64_t binom_ll(int n, int k) {
  if (k < 0 || n < 0 || k > n) return 0;
  k = std::min(k, n - k);
  __int128 r = 1;
  for (int i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;  // exact: the partial product is C(n-k+i, i)
    if (r > std::numeric_limits<std::int64_t>::max())
      throw ValidationError("binomial: value exceeds 64-bit range");
  }
  return static_cast<std::int64_t>(r);
}

// Calls f(chosen) for every k-subset of items, in lexicographic index order.
template <class F>
void for_each_combination(const std::vector<int>& items, int k, F&& f) {
  const int m = static_cast<int>(items.size());
  if (k > m || k < 0) return;
  std::vector<int> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<int> chosen(k);
  while (true) {
    for (int i = 0; i < k; ++i) chosen[i] = items[idx[i]];
    f(chosen);
    int i = k - 1;
    while (i >= 0 && idx[i] == m - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

// Advance a sorted k-subset of [0,n) to its co-lex successor.
bool next_subset_colex(std::vector<int>& s, int n) {
  const int k = static_cast<int>(s.size());
  for (int i = 0; i < k; ++i) {
    const int lim = (i + 1 < k) ? s[i + 1] : n;
    if (s[i] + 1 < lim) {
      ++s[i];
      for (int j = 0; j < i; ++j) s[j] = j;
      return true;
    }
  }
  return false;
}

void check_signs(const RVec& x, const char* who) {
  for (int i = 0; i < x.size(); ++i)
    if (x(i) != 1.0 && x(i) != -1.0)
      throw ValidationError(std::string(who) + ": entries must be +1 or -1");
}

// Maximize a scalar function on [lo, hi]: coarse scan, then golden-section on
// the bracketing subinterval.  Assumes the scan grid resolves the peak.
template <class F>
double max_scan_golden(double lo, double hi, F&& f) {
  constexpr int kGrid = 256;
  int best = 0;
  double fb = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kGrid; ++i) {
    const double v = f(lo + (hi - lo) * i / kGrid);
    if (v > fb) {
      fb = v;
      best = i;
    }
  }
  double a = lo + (hi - lo) * std::max(0, best - 1) / kGrid;
  double b = lo + (hi - lo) * std::min(kGrid, best + 1) / kGrid;
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 300 && b - a > 1e-13 * (1.0 + std::abs(a) + std::abs(b)); ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = f(x1);
    }
  }
  return std::max({fb, f1, f2});
}

template <class F>
double min_scan_golden(double lo, double hi, F&& f) {
  return -max_scan_golden(lo, hi, [&](double t) { return -f(t); });
}

// min over the simplex of max_i(alpha_i/x_i + beta_i) with all alpha_i > 0:
// the optimum equalizes every term at the root of sum_i alpha_i/(tau-beta_i)=1,
// found by safeguarded Newton on the decreasing convex left side.
double waterfill_value(const std::vector<double>& alpha, const std::vector<double>& beta) {
  const size_t m = alpha.size();
  double bmax = -std::numeric_limits<double>::infinity(), asum = 0;
  for (size_t i = 0; i < m; ++i) {
    bmax = std::max(bmax, beta[i]);
    asum += alpha[i];
  }
  double lo = bmax, hi = bmax + asum, tau = hi;
  for (int it = 0; it < 200; ++it) {
    double g = 0, gp = 0;
    for (size_t i = 0; i < m; ++i) {
      const double w = tau - beta[i];
      g += alpha[i] / w;
      gp -= alpha[i] / (w * w);
    }
    if (g > 1)
      lo = tau;
    else
      hi = tau;
    double next = tau - (g - 1.0) / gp;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(g - 1.0) < 1e-15 || hi - lo < 1e-16 * std::abs(tau)) break;
    tau = next;
  }
  return tau;
}

}  // namespace

double binomial(int n, int k) { return static_cast<double>(binom_ll(n, k)); }

std::int64_t subset_rank(const std::vector<int>& set) {
  std::int64_t r = 0;
  for (size_t i = 0; i < set.size(); ++i) {
    if (set[i] < 0 || (i > 0 && set[i] <= set[i - 1]))
      throw ValidationError("subset_rank: set must be strictly increasing and nonnegative");
    r += binom_ll(set[i], static_cast<int>(i) + 1);
  }
  return r;
}

std::vector<int> subset_unrank(std::int64_t rank, int k) {
  if (rank < 0 || k < 0) throw ValidationError("subset_unrank: negative input");
  std::vector<int> set(k);
  for (int i = k; i >= 1; --i) {
    int m = i - 1;  // smallest value with C(m, i) = 0 <= rank
    while (binom_ll(m + 1, i) <= rank) ++m;
    set[i - 1] = m;
    rank -= binom_ll(m, i);
  }
  if (rank != 0) throw ValidationError("subset_unrank: rank out of range");
  return set;
}

KikuchiParams kikuchi_params(int n, int p, int ell) {
  if (p < 4 || p % 2 != 0) throw ValidationError("kikuchi_params: p must be even and at least 4");
  if (!(2 * ell >= p && 4 * ell < 3 * p))
    throw ValidationError("kikuchi_params: need p/2 <= ell < 3p/4");
  if (n < p || n < ell + p / 2)
    throw ValidationError("kikuchi_params: n too small for the subset sizes");
  KikuchiParams out;
  out.k_star = binomial(ell, p / 2) * binomial(n - ell, p / 2);
  out.sigma_sq = out.k_star;
  out.v_sq = binomial(p, p / 2) * binomial(n - p, ell - p / 2);
  out.s1_factor = out.k_star;
  out.r = binomial(n, ell - p / 2);
  return out;
}

SpMat kikuchi_matrix(const TensorPcaInstance& inst, std::int64_t dim_cap) {
  const KikuchiParams params = kikuchi_params(inst.n, inst.p, inst.ell);
  if (!(inst.lambda >= 0)) throw ValidationError("kikuchi_matrix: lambda must be nonnegative");
  if (static_cast<int>(inst.x.size()) != inst.n)
    throw ValidationError("kikuchi_matrix: signal length must be n");
  check_signs(inst.x, "kikuchi_matrix");
  const std::int64_t dim = binom_ll(inst.n, inst.ell);
  if (dim > dim_cap)
    throw ValidationError("kikuchi_matrix: dimension C(n,ell) = " + std::to_string(dim) +
                          " exceeds the cap " + std::to_string(dim_cap));
  const RngStream rs(inst.seed, {});
  const int half = inst.p / 2;

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<size_t>(dim * static_cast<std::int64_t>(params.k_star)));
  std::vector<int> s(inst.ell);
  std::iota(s.begin(), s.end(), 0);
  std::vector<char> in_s(inst.n);
  std::vector<int> comp, t_set, u_set;
  std::int64_t srank = 0;
  do {
    std::fill(in_s.begin(), in_s.end(), 0);
    for (int v : s) in_s[v] = 1;
    comp.clear();
    for (int v = 0; v < inst.n; ++v)
      if (!in_s[v]) comp.push_back(v);
    // T runs over sets swapping p/2 elements of S for p/2 outside ones, so
    // |S xor T| = p exactly; every off-diagonal entry of the row is hit once.
    for_each_combination(s, half, [&](const std::vector<int>& out_half) {
      for_each_combination(comp, half, [&](const std::vector<int>& in_half) {
        t_set.clear();
        for (int v : s)
          if (std::find(out_half.begin(), out_half.end(), v) == out_half.end()) t_set.push_back(v);
        t_set.insert(t_set.end(), in_half.begin(), in_half.end());
        std::sort(t_set.begin(), t_set.end());
        u_set.clear();
        u_set.insert(u_set.end(), out_half.begin(), out_half.end());
        u_set.insert(u_set.end(), in_half.begin(), in_half.end());
        std::sort(u_set.begin(), u_set.end());
        double sign = 1;
        for (int v : u_set) sign *= inst.x(v);
        const std::int64_t u = subset_rank(u_set);
        const double y = inst.lambda * sign + rs.gaussian_at(static_cast<uint64_t>(u));
        trips.emplace_back(static_cast<int>(srank), static_cast<int>(subset_rank(t_set)), y);
      });
    });
    ++srank;
  } while (next_subset_colex(s, inst.n));

  SpMat m(dim, dim);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

KikuchiDecision kikuchi_test(const SpMat& m, int n, int p, int ell) {
  const KikuchiParams params = kikuchi_params(n, p, ell);
  const std::int64_t dim = binom_ll(n, ell);
  if (m.rows() != dim || m.cols() != dim)
    throw ValidationError("kikuchi_test: matrix dimension does not match C(n,ell)");
  auto res = lanczos_topk([&](const RVec& v) { return RVec(m * v); }, static_cast<int>(dim), 1);
  KikuchiDecision out;
  out.statistic = res.values(0) / std::sqrt(params.k_star);
  out.threshold = 2.0 + std::pow(static_cast<double>(n), -0.2);
  out.decision = out.statistic > out.threshold;
  return out;
}

void kikuchi_export(std::ostream& os, const SpMat& m, const TensorPcaInstance& inst) {
  os << "# kikuchi n=" << inst.n << " p=" << inst.p << " ell=" << inst.ell
     << " seed=" << inst.seed << " dim=" << m.rows() << "\n";
  char buf[96];
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it) {
      if (it.row() > it.col()) continue;
      std::snprintf(buf, sizeof buf, "%lld %lld %.17g\n", static_cast<long long>(it.row()),
                    static_cast<long long>(it.col()), it.value());
      os << buf;
    }
}

RegularGraph circulant_band_graph(int d, int k) {
  if (d < 2 || k < 1 || k >= d) throw ValidationError("circulant_band_graph: need 1 <= k < d");
  if (k % 2 == 1 && d % 2 == 1)
    throw ValidationError("circulant_band_graph: odd degree needs an even vertex count");
  RegularGraph g;
  g.d = d;
  g.k = k;
  for (int o = 1; o <= k / 2; ++o)
    for (int i = 0; i < d; ++i) {
      const int j = (i + o) % d;
      g.edges.emplace_back(std::min(i, j), std::max(i, j));
    }
  if (k % 2 == 1)
    for (int i = 0; i < d / 2; ++i) g.edges.emplace_back(i, i + d / 2);
  std::sort(g.edges.begin(), g.edges.end());
  return g;
}

RegularGraph random_regular_graph(int d, int k, uint64_t seed) {
  if (d < 2 || k < 1 || k >= d) throw ValidationError("random_regular_graph: need 1 <= k < d");
  if (static_cast<std::int64_t>(d) * k % 2 != 0)
    throw ValidationError("random_regular_graph: d*k must be even");
  RngStream rs(seed, {});
  std::vector<int> pts(static_cast<size_t>(d) * k);
  for (int i = 0; i < d; ++i) std::fill_n(pts.begin() + static_cast<size_t>(i) * k, k, i);
  for (size_t i = pts.size() - 1; i > 0; --i) {
    const size_t j = static_cast<size_t>(rs.next_u64() % (i + 1));
    std::swap(pts[i], pts[j]);
  }
  const size_t ne = pts.size() / 2;
  std::vector<std::pair<int, int>> e(ne);
  for (size_t t = 0; t < ne; ++t) e[t] = {pts[2 * t], pts[2 * t + 1]};

  auto key = [d](int a, int b) {
    return static_cast<std::int64_t>(std::min(a, b)) * d + std::max(a, b);
  };
  std::unordered_map<std::int64_t, int> cnt;
  for (const auto& ed : e) ++cnt[key(ed.first, ed.second)];
  auto is_bad = [&](const std::pair<int, int>& ed) {
    return ed.first == ed.second || cnt[key(ed.first, ed.second)] > 1;
  };

  // Loops and multi-edges are removed by random double-edge switches; each
  // accepted switch never creates a new defect, so the defect count is
  // nonincreasing and hits zero quickly in practice.
  std::int64_t budget = 500ll * static_cast<std::int64_t>(ne) + 100000;
  size_t scan = 0;
  while (budget-- > 0) {
    while (scan < ne && !is_bad(e[scan])) ++scan;
    if (scan == ne) {
      scan = 0;  // re-scan: a switch may have moved a defect behind the cursor
      bool any = false;
      for (size_t t = 0; t < ne; ++t)
        if (is_bad(e[t])) {
          any = true;
          scan = t;
          break;
        }
      if (!any) break;
    }
    const size_t ib = scan;
    const size_t jb = static_cast<size_t>(rs.next_u64() % ne);
    if (jb == ib) continue;
    const auto [a, b] = e[ib];
    const auto [c, f] = e[jb];
    const bool cross = (rs.next_u64() & 1) != 0;
    const int nb1 = cross ? c : f, nb2 = cross ? f : c;
    --cnt[key(a, b)];
    --cnt[key(c, f)];
    const bool ok = a != nb1 && b != nb2 && cnt[key(a, nb1)] == 0 && cnt[key(b, nb2)] == 0 &&
                    key(a, nb1) != key(b, nb2);
    if (ok) {
      e[ib] = {a, nb1};
      e[jb] = {b, nb2};
      ++cnt[key(a, nb1)];
      ++cnt[key(b, nb2)];
    } else {
      ++cnt[key(a, b)];
      ++cnt[key(c, f)];
    }
  }

  RegularGraph g;
  g.d = d;
  g.k = k;
  g.edges.reserve(ne);
  std::vector<int> deg(d, 0);
  for (const auto& ed : e) {
    if (ed.first == ed.second || cnt[key(ed.first, ed.second)] != 1)
      throw ConvergenceError("random_regular_graph: switch repair did not reach a simple graph");
    g.edges.emplace_back(std::min(ed.first, ed.second), std::max(ed.first, ed.second));
    ++deg[ed.first];
    ++deg[ed.second];
  }
  for (int i = 0; i < d; ++i)
    if (deg[i] != k) throw ConvergenceError("random_regular_graph: degree mismatch after repair");
  std::sort(g.edges.begin(), g.edges.end());
  return g;
}

DecodeBuild decode_build(const GraphDecodingInstance& inst) {
  const int d = inst.graph.d, k = inst.graph.k;
  if (d < 1 || k < 1) throw ValidationError("decode_build: empty graph");
  if (!(inst.p >= 0 && inst.p <= 0.5))
    throw ValidationError("decode_build: flip probability must lie in [0, 1/2]");
  if (static_cast<int>(inst.x.size()) != d)
    throw ValidationError("decode_build: label length must match the vertex count");
  check_signs(inst.x, "decode_build");

  auto edges = inst.graph.edges;
  std::sort(edges.begin(), edges.end());
  std::vector<int> deg(d, 0);
  for (size_t t = 0; t < edges.size(); ++t) {
    const auto [i, j] = edges[t];
    if (i < 0 || j >= d || i >= j) throw ValidationError("decode_build: malformed edge");
    if (t > 0 && edges[t] == edges[t - 1]) throw ValidationError("decode_build: duplicate edge");
    ++deg[i];
    ++deg[j];
  }
  for (int i = 0; i < d; ++i)
    if (deg[i] != k) throw ValidationError("decode_build: graph is not k-regular");

  RngStream rs(inst.seed, {});
  DecodeBuild out;
  out.y = RMat::Zero(d, d);
  for (const auto& [i, j] : edges) {
    const double xi = rs.uniform() < inst.p ? -1.0 : 1.0;
    out.y(i, j) = out.y(j, i) = inst.x(i) * inst.x(j) * xi;
  }
  const double var = 4.0 * inst.p * (1.0 - inst.p);
  if (inst.p == 0.0) {
    out.theta_prime = std::numeric_limits<double>::infinity();
    out.theta_prime_infinite = true;
    out.y_prime = out.y;  // noiseless: no finite normalization exists
  } else {
    out.theta_prime = std::sqrt(static_cast<double>(k)) * (1.0 - 2.0 * inst.p) / std::sqrt(var);
    out.y_prime = out.y / std::sqrt(k * var);
  }
  return out;
}

RVec decode_round(const RVec& v, double epsilon, uint64_t seed) {
  if (!(epsilon > 0)) throw ValidationError("decode_round: epsilon must be positive");
  const int d = static_cast<int>(v.size());
  if (d == 0) throw ValidationError("decode_round: empty vector");
  const double c = 2.0 / std::sqrt(epsilon);
  const double rd = std::sqrt(static_cast<double>(d));
  RngStream rs(seed, {});
  RVec xhat(d);
  for (int i = 0; i < d; ++i) {
    const double s = v(i) * rd;
    const double mean = std::abs(s) <= c ? s / c : 0.0;
    xhat(i) = rs.uniform() < 0.5 * (1.0 + mean) ? 1.0 : -1.0;
  }
  return xhat;
}

CsbmBuild csbm_build(const CsbmInstance& inst) {
  const int n = inst.n, p = inst.p;
  if (n < 1 || p < 1) throw ValidationError("csbm_build: need n >= 1 and p >= 1");
  if (!(inst.lambda >= 0) || !(inst.mu >= 0))
    throw ValidationError("csbm_build: lambda and mu must be nonnegative");
  if (static_cast<int>(inst.v.size()) != n)
    throw ValidationError("csbm_build: label length must be n");
  check_signs(inst.v, "csbm_build");

  RngStream rs(inst.seed, {});
  CsbmBuild out;
  out.a = (inst.lambda / n) * (inst.v * inst.v.transpose());
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const double g = rs.gaussian() * std::sqrt((i == j ? 2.0 : 1.0) / n);
      out.a(i, j) += g;
      if (j != i) out.a(j, i) += g;
    }
  RVec u(p);
  for (int i = 0; i < p; ++i) u(i) = rs.gaussian();
  out.y = std::sqrt(inst.mu / n) * (u * inst.v.transpose());
  const double hs = 1.0 / std::sqrt(static_cast<double>(n));
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < n; ++j) out.y(i, j) += rs.gaussian() * hs;

  const double w = std::sqrt(inst.mu * p / static_cast<double>(n));
  out.x_hat = RMat::Zero(n + p, n + p);
  out.x_hat.topLeftCorner(n, n) =
      inst.lambda * out.a -
      (inst.lambda * inst.lambda + inst.mu * p / static_cast<double>(n)) * RMat::Identity(n, n);
  out.x_hat.topRightCorner(n, p) = w * out.y.transpose();
  out.x_hat.bottomLeftCorner(p, n) = w * out.y;
  out.x_hat.bottomRightCorner(p, p) = -inst.mu * RMat::Identity(p, p);
  return out;
}

CsbmSnr csbm_snr(double lambda, double mu, double gamma) {
  if (!(gamma > 0)) throw ValidationError("csbm_snr: gamma must be positive");
  if (!(lambda >= 0) || !(mu >= 0))
    throw ValidationError("csbm_snr: lambda and mu must be nonnegative");
  CsbmSnr out;
  const double l2 = lambda * lambda;
  out.snr = 0.5 * (l2 + std::sqrt(l2 * l2 + 4.0 * mu * mu / gamma));
  out.supercritical = l2 + mu * mu / gamma > 1.0;
  return out;
}

CsbmEstimate csbm_estimate(const RMat& x_hat, int n) {
  const int dim = static_cast<int>(x_hat.rows());
  if (x_hat.cols() != dim || dim < 1) throw ValidationError("csbm_estimate: matrix must be square");
  if (n < 1 || n > dim) throw ValidationError("csbm_estimate: n out of range");
  LanczosOptions opts;
  opts.tol = 1e-6;  // far below the overlap scales being read off
  auto res =
      lanczos_topk([&](const RVec& v) { return RVec(x_hat * v); }, dim, std::min(2, dim), opts);
  CsbmEstimate out;
  out.gap =
      res.values.size() > 1 ? res.values(0) - res.values(1) : std::numeric_limits<double>::max();
  out.degenerate = res.values.size() > 1 && out.gap < 1e-12;
  out.v_hat = res.vectors.col(0).head(n);
  out.lambda_max = res.values(0);
  out.lambda_2 = res.values.size() > 1 ? res.values(1) : out.lambda_max;
  return out;
}

SpikedBlockBuild spiked_block_build(const RMat& delta, const std::vector<int>& block_sizes,
                                    const RVec& x, uint64_t seed) {
  const int q = static_cast<int>(delta.rows());
  if (delta.cols() != q || q < 1) throw ValidationError("spiked_block_build: Delta must be square");
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j) {
      if (!(delta(i, j) > 0))
        throw ValidationError("spiked_block_build: Delta entries must be positive");
      if (delta(i, j) != delta(j, i))
        throw ValidationError("spiked_block_build: Delta must be symmetric");
    }
  SpikedBlockBuild out;
  out.spec.block_sizes = block_sizes;
  out.spec.b = delta.cwiseInverse();
  out.spec.z = x;
  out.spec.validate();
  out.x = block_sample(out.spec, true, seed);
  out.x_null = block_sample(out.spec, false, seed);
  const RVec sc = out.spec.weights().cwiseSqrt();
  Eigen::SelfAdjointEigenSolver<RMat> es(sc.asDiagonal() * out.spec.b * sc.asDiagonal(),
                                         Eigen::EigenvaluesOnly);
  out.snr_delta = es.eigenvalues().maxCoeff();
  return out;
}

ScovForms scov_closed_forms(double lambda, double delta) {
  if (!(lambda >= 0) || !(delta > 0))
    throw ValidationError("scov_closed_forms: need lambda >= 0 and delta > 0");
  const double rd = std::sqrt(delta);
  ScovForms out;
  out.s = lambda <= rd ? (1 + rd) * (1 + rd) : (1 + lambda) * (1 + delta / lambda);
  out.h_plus = lambda <= 1 + rd
                   ? delta + 2 * rd
                   : (1 + lambda) / (2 * lambda) * (rd + std::sqrt(delta + 4 * lambda)) * rd;
  if (lambda <= 1 - rd)
    out.h_minus = delta - 2 * rd;
  else if (lambda == 0)
    out.h_minus = -1.0;  // delta >= 1: the sample covariance is singular
  else
    out.h_minus = (1 + lambda) / (2 * lambda) * (rd - std::sqrt(delta + 4 * lambda)) * rd;
  return out;
}

ScovForms scov_pi_forms(double lambda, double delta) {
  if (!(lambda >= 0) || !(delta > 0))
    throw ValidationError("scov_pi_forms: need lambda >= 0 and delta > 0");
  auto s_of = [&](double pi) {
    const double a = std::sqrt((1 - pi) * delta), b = std::sqrt(1 + pi * lambda);
    return (a + b) * (a + b);
  };
  auto hp_of = [&](double pi) { return s_of(pi) - (1 + pi * lambda); };
  auto phi = [](double u, double v) { return v < u ? 2 * std::sqrt(u * v) - v : u; };
  auto hm_of = [&](double pi) { return phi(1 + pi * lambda, (1 - pi) * delta); };
  ScovForms out;
  out.s = max_scan_golden(0.0, 1.0, s_of);
  out.h_plus = max_scan_golden(0.0, 1.0, hp_of);
  out.h_minus = -max_scan_golden(0.0, 1.0, hm_of);
  return out;
}

ScovForms scov_variational(const RVec& mu_spectrum, int n) {
  if (n < 1) throw ValidationError("scov_variational: need n >= 1");
  if (mu_spectrum.size() == 0) throw ValidationError("scov_variational: empty spectrum");
  std::vector<double> mu(mu_spectrum.data(), mu_spectrum.data() + mu_spectrum.size());
  for (double m : mu)
    if (!(m >= 0)) throw ValidationError("scov_variational: eigenvalues must be nonnegative");
  std::sort(mu.begin(), mu.end(), std::greater<double>());
  // Coordinates with equal mu share mass equally at the optimum, so each
  // distinct value enters the water-filling once with its multiplicity.
  std::vector<double> gm, gc;
  for (double m : mu) {
    if (m == 0) continue;
    if (!gm.empty() && gm.back() == m)
      gc.back() += 1;
    else {
      gm.push_back(m);
      gc.push_back(1);
    }
  }
  if (gm.empty()) throw ValidationError("scov_variational: zero spectrum");

  const size_t ng = gm.size();
  std::vector<double> alpha(ng), beta(ng);
  auto inner = [&](double a, int which) {
    for (size_t i = 0; i < ng; ++i) {
      alpha[i] = gc[i] * gm[i] / (n * a);
      beta[i] = which == 0   ? gm[i] / (1 - a)
                : which == 1 ? a * gm[i] / (1 - a)
                             : a * gm[i] / (1 + a);
    }
    return waterfill_value(alpha, beta);
  };
  ScovForms out;
  out.s = min_scan_golden(1e-9, 1 - 1e-9, [&](double a) { return inner(a, 0); });
  out.h_plus = min_scan_golden(1e-9, 1 - 1e-9, [&](double a) { return inner(a, 1); });
  out.h_minus =
      -min_scan_golden(-30.0, 30.0, [&](double u) { return inner(std::exp(u), 2); });
  return out;
}

RMat scov_sample(int n, int p, double lambda, uint64_t seed) {
  if (n < 1 || p < 1) throw ValidationError("scov_sample: need n >= 1 and p >= 1");
  if (!(lambda >= 0)) throw ValidationError("scov_sample: lambda must be nonnegative");
  RngStream rs(seed, {});
  RMat x(p, n);
  const double s0 = std::sqrt(1.0 + lambda);
  for (int i = 0; i < p; ++i) {
    const double s = i == 0 ? s0 : 1.0;
    for (int j = 0; j < n; ++j) x(i, j) = s * rs.gaussian();
  }
  return RMat((x * x.transpose()) / n);
}

}  // namespace freespec
