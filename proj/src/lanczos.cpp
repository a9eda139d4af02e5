#include "freespec/lanczos.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "freespec/rng.hpp"
#include "freespec/types.hpp"

namespace freespec {
namespace {

struct StartResult {
  RVec values;
  RMat vectors;
  int iterations = 0;
  bool converged = false;
};

StartResult run_one(const std::function<RVec(const RVec&)>& apply, int n, int k,
                    const LanczosOptions& opts, uint64_t start_idx) {
  RngStream rs(opts.seed, {start_idx});
  std::vector<RVec> basis;
  std::vector<double> alpha, beta;  // beta[j] links basis[j] and basis[j+1]

  auto fresh_vector = [&]() {
    RVec v(n);
    for (int attempt = 0; attempt < 64; ++attempt) {
      for (int i = 0; i < n; ++i) v(i) = rs.gaussian();
      for (const auto& b : basis) v -= b.dot(v) * b;
      for (const auto& b : basis) v -= b.dot(v) * b;
      double nrm = v.norm();
      if (nrm > 1e-8 * std::sqrt(static_cast<double>(n))) return RVec(v / nrm);
    }
    throw ConvergenceError("could not find a vector outside the Krylov space");
  };

  basis.push_back(fresh_vector());
  double scale = 0.0;
  StartResult out;
  int m_cap = std::min(opts.max_iter, n);
  while (static_cast<int>(basis.size()) <= m_cap) {
    int j = static_cast<int>(basis.size()) - 1;
    RVec w = apply(basis[j]);
    alpha.push_back(basis[j].dot(w));
    scale = std::max(scale, std::abs(alpha.back()));
    // Full reorthogonalization (two passes) keeps the basis clean.
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& b : basis) w -= b.dot(w) * b;
    double bnorm = w.norm();

    int m = static_cast<int>(alpha.size());
    RMat t = RMat::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      t(i, i) = alpha[i];
      if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta[i];
    }
    Eigen::SelfAdjointEigenSolver<RMat> es(t);
    if (es.info() != Eigen::Success) throw ConvergenceError("tridiagonal eigensolver failed");

    bool exhausted = bnorm <= 1e-12 * std::max(1.0, scale);
    bool have_k = m >= k;
    bool resid_ok = false;
    if (have_k) {
      resid_ok = true;
      for (int i = 0; i < k; ++i) {
        int col = m - 1 - i;
        double resid = bnorm * std::abs(es.eigenvectors()(m - 1, col));
        if (resid > opts.tol * std::max(1.0, std::abs(es.eigenvalues()(col)))) resid_ok = false;
      }
    }
    bool done = (have_k && resid_ok) || static_cast<int>(basis.size()) == m_cap ||
                (exhausted && m >= std::min(k, n));
    if (done || exhausted) {
      if (done) {
        int kk = std::min(k, m);
        out.values = RVec(kk);
        out.vectors = RMat::Zero(n, kk);
        for (int i = 0; i < kk; ++i) {
          int col = m - 1 - i;
          out.values(i) = es.eigenvalues()(col);
          for (int jj = 0; jj < m; ++jj)
            out.vectors.col(i) += es.eigenvectors()(jj, col) * basis[jj];
          out.vectors.col(i).normalize();
        }
        out.iterations = m;
        out.converged = have_k && resid_ok;
        return out;
      }
      // Invariant subspace smaller than k: restart with a fresh direction.
      basis.push_back(fresh_vector());
      beta.push_back(0.0);
      continue;
    }
    beta.push_back(bnorm);
    basis.push_back(RVec(w / bnorm));
  }
  throw ConvergenceError("lanczos iteration did not terminate");
}

}  // namespace

LanczosResult lanczos_topk(const std::function<RVec(const RVec&)>& apply, int n, int k,
                           const LanczosOptions& opts) {
  if (n < 1 || k < 1 || k > n) throw ValidationError("lanczos_topk needs 1 <= k <= n");
  if (opts.num_starts < 1 || opts.max_iter < 1) throw ValidationError("bad lanczos options");

  // Small operators: materialize and solve densely.
  if (n <= std::max(4 * k, 64)) {
    RMat a(n, n);
    RVec e = RVec::Zero(n);
    for (int i = 0; i < n; ++i) {
      e(i) = 1.0;
      a.col(i) = apply(e);
      e(i) = 0.0;
    }
    Eigen::SelfAdjointEigenSolver<RMat> es(0.5 * (a + a.transpose()));
    if (es.info() != Eigen::Success) throw ConvergenceError("dense eigensolver failed");
    LanczosResult r;
    r.values = es.eigenvalues().tail(k).reverse();
    r.vectors = RMat(n, k);
    for (int i = 0; i < k; ++i) r.vectors.col(i) = es.eigenvectors().col(n - 1 - i);
    r.iterations = n;
    r.converged = true;
    return r;
  }

  LanczosResult best;
  bool have_best = false;
  for (int s = 0; s < opts.num_starts; ++s) {
    StartResult r = run_one(apply, n, k, opts, static_cast<uint64_t>(s));
    bool better = !have_best || (r.converged && !best.converged) ||
                  (r.converged == best.converged && r.values(0) > best.values(0));
    if (have_best && r.values.size() == best.values.size()) {
      double agree = (r.values - best.values).cwiseAbs().maxCoeff();
      if (agree <= opts.tol * std::max(1.0, best.values.cwiseAbs().maxCoeff()) && r.converged &&
          best.converged) {
        if (better) {
          best.values = r.values;
          best.vectors = r.vectors;
          best.converged = r.converged;
          best.iterations += r.iterations;
        }
        return best;
      }
    }
    if (better) {
      LanczosResult nb;
      nb.values = r.values;
      nb.vectors = r.vectors;
      nb.converged = r.converged;
      nb.iterations = (have_best ? best.iterations : 0) + r.iterations;
      best = nb;
      have_best = true;
    } else {
      best.iterations += r.iterations;
    }
  }
  return best;
}

}  // namespace freespec
