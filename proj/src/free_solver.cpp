#include "freespec/free_solver.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

namespace freespec {
namespace {

constexpr double kPi = 3.14159265358979323846;

struct EigH {
  RVec lam;
  CMat vec;
};

EigH eigh(const CMat& a) {
  Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (a + a.adjoint()));
  if (es.info() != Eigen::Success) throw ConvergenceError("hermitian eigensolver failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

CMat herm(const CMat& a) { return 0.5 * (a + a.adjoint()); }

struct Smoothed {
  double value;
  CMat w;  // softmax density matrix, trace 1
};

Smoothed smoothed_max(const CMat& y, double t) {
  EigH e = eigh(y);
  double lmax = e.lam.maxCoeff();
  RVec ex = ((e.lam.array() - lmax) / t).exp();
  double z = ex.sum();
  return {lmax + t * std::log(z), herm(e.vec * (ex / z).asDiagonal() * e.vec.adjoint())};
}

// Value only: skips the eigenvector pass, used by line searches.
double smoothed_value(const CMat& y, double t) {
  Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (y + y.adjoint()), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw ConvergenceError("hermitian eigensolver failed");
  double lmax = es.eigenvalues().maxCoeff();
  return lmax + t * std::log(((es.eigenvalues().array() - lmax) / t).exp().sum());
}

double model_sigma_sq(const GaussianSeriesModel& m) {
  return lambda_max(cov_apply(m, CMat::Identity(m.dim(), m.dim())));
}

// Entrywise models (diagonal mean, one entry pair per coefficient) admit a
// diagonal minimizer: conjugating M by any diagonal sign matrix leaves the
// objective unchanged, so by convexity the sign-average — the diagonal part —
// does at least as well.  With M = diag(x) the variational objective is
// max_k (a0_k + 1/x_k + (V x)_k) with V the entry variance profile: a d-dim
// scalar problem, solved by the same annealed L-BFGS in log coordinates.
LehnerSolution lehner_entrywise(const RVec& a0d, const RMat& prof, double sigma,
                                const LehnerOptions& opts) {
  const int d = static_cast<int>(a0d.size());
  const double scale = std::max(1.0, sigma);

  auto eval = [&](const RVec& u, double t, RVec* grad) -> double {
    RVec x = u.array().exp();
    RVec y = a0d + x.cwiseInverse() + prof * x;
    double ymax = y.maxCoeff();
    RVec ex = ((y.array() - ymax) / t).exp();
    double z = ex.sum();
    if (grad) {
      RVec w = ex / z;
      *grad = x.cwiseProduct(RVec(prof * w) - w.cwiseQuotient(x.cwiseAbs2()));
    }
    return ymax + t * std::log(z);
  };

  LehnerSolution sol;
  RVec u = RVec::Constant(d, -std::log(sigma));
  const double t_lo = 1e-9 * sigma;  // iterations are cheap; anneal deep
  const int mem = 10;
  bool final_stalled = false;
  for (double t = opts.temp_hi * sigma;; t /= 10.0) {
    bool last_stage = t <= t_lo * (1 + 1e-9);
    std::vector<RVec> svecs, yvecs;
    std::vector<double> rho;
    RVec grad;
    double f = eval(u, t, &grad);
    double drop_floor =
        last_stage ? std::max(1e-11 * std::max(1.0, std::abs(f)), 1e-3 * t_lo) : 1e-2 * t;
    int iter_cap = std::max(opts.max_iter, 2000);
    bool stalled = false;
    // Stage ends when mean progress over a trailing window is below the floor
    // AND the gradient is small against the smoothing curvature ~1/t (so only
    // ~|g|^2 t/2 per step remains).  The gradient guard keeps cold-start
    // iterations, which move slowly while the curvature memory builds, from
    // reading as a stall; the window keeps bursty L-BFGS progress from doing
    // the same.
    const size_t window = 10;
    const double grad_stall = 3 * std::sqrt(2 * drop_floor / t);
    std::vector<double> hist{f};
    for (int it = 0; it < iter_cap; ++it) {
      double gn = grad.norm();
      if (gn <= 1e-11 * scale) {
        stalled = true;
        break;
      }
      RVec q = grad;
      std::vector<double> coef(svecs.size());
      for (int i = static_cast<int>(svecs.size()) - 1; i >= 0; --i) {
        coef[i] = rho[i] * svecs[i].dot(q);
        q -= coef[i] * yvecs[i];
      }
      if (!svecs.empty())
        q *= svecs.back().dot(yvecs.back()) / yvecs.back().squaredNorm();
      else
        q *= t / std::max(sigma * sigma, 1e-12);
      for (size_t i = 0; i < svecs.size(); ++i) q += (coef[i] - rho[i] * yvecs[i].dot(q)) * svecs[i];
      RVec dir = -q;
      double dg = dir.dot(grad);
      if (!(dg < 0)) {
        dir = -grad;
        dg = -gn * gn;
      }
      bool accepted = false;
      RVec unext;
      double fnext = 0;
      for (double step = 1.0; step > 1e-18; step *= 0.5) {
        unext = u + step * dir;
        fnext = eval(unext, t, nullptr);
        if (fnext <= f + 1e-4 * step * dg) {
          accepted = true;
          break;
        }
      }
      ++sol.iterations;
      if (!accepted) {
        stalled = true;
        break;
      }
      RVec gnext;
      fnext = eval(unext, t, &gnext);
      RVec sv = unext - u, yv = gnext - grad;
      double sy = sv.dot(yv);
      if (sy > 1e-12 * sv.norm() * yv.norm()) {
        svecs.push_back(std::move(sv));
        yvecs.push_back(std::move(yv));
        rho.push_back(1.0 / sy);
        if (static_cast<int>(svecs.size()) > mem) {
          svecs.erase(svecs.begin());
          yvecs.erase(yvecs.begin());
          rho.erase(rho.begin());
        }
      }
      u = std::move(unext);
      f = fnext;
      grad = std::move(gnext);
      hist.push_back(f);
      // Past 50 iterations the memory has been rebuilt many times over, so a
      // flat window is exhaustion even with a large gradient (the landscape
      // is nonsmooth at eigenvalue crossings and the quadratic progress
      // estimate is unreachable there).
      if (hist.size() > window + 1 &&
          hist[hist.size() - 1 - window] - f <= window * drop_floor &&
          (grad.norm() <= grad_stall || it >= 50)) {
        stalled = true;
        break;
      }
    }
    if (last_stage) {
      final_stalled = stalled;
      break;
    }
  }

  RVec x = u.array().exp();
  RVec y = a0d + x.cwiseInverse() + prof * x;
  sol.value = y.maxCoeff();
  sol.minimizer = x.cast<Complex>().asDiagonal();
  sol.objective_residual = 0.0;
  RVec ex = ((y.array() - sol.value) / t_lo).exp();
  RVec w = ex / ex.sum();
  RVec sw = prof * w;
  sol.kkt_residual = (sw - w.cwiseQuotient(x.cwiseAbs2())).norm() / (1.0 + sw.norm());
  sol.converged = final_stalled;
  return sol;
}

}  // namespace

LehnerSolution lehner_max(const GaussianSeriesModel& m, const LehnerOptions& opts) {
  if (m.num_coeffs() < 1) throw ValidationError("lehner_max requires at least one coefficient");
  const int d = m.dim();
  const CMat id = CMat::Identity(d, d);
  double ssq = model_sigma_sq(m);
  if (!(ssq > 0)) {
    LehnerSolution s;
    s.value = lambda_max(m.a0());
    s.minimizer = 1e8 * id;
    s.converged = true;
    return s;
  }
  double sigma = std::sqrt(ssq);
  const double scale = std::max(1.0, sigma);

  {
    RVec a0d;
    RMat prof;
    if (entrywise_structure(m, &a0d, &prof)) return lehner_entrywise(a0d, prof, sigma, opts);
  }

  auto objective_exact = [&](const CMat& mm) {
    EigH e = eigh(mm);
    if (e.lam.minCoeff() <= 0) return 1e300;
    CMat minv = e.vec * e.lam.cwiseInverse().asDiagonal() * e.vec.adjoint();
    return lambda_max(CMat(m.a0() + minv + cov_apply(m, mm)));
  };

  // Smoothed objective f_t(M) = t log tr exp(Y/t), Y = A0 + M^{-1} + S(M),
  // over positive definite M; convex, with gradient S(W) - M^{-1} W M^{-1}
  // where W is the softmax density of Y.  Returns 1e300 off the cone.
  auto eval_value = [&](const CMat& mm, double t) -> double {
    Eigen::LLT<CMat> llt(mm);
    if (llt.info() != Eigen::Success) return 1e300;
    CMat minv = llt.solve(id);
    return smoothed_value(CMat(m.a0() + minv + cov_apply(m, mm)), t);
  };
  auto eval_grad = [&](const CMat& mm, double t, CMat& grad) -> double {
    Eigen::LLT<CMat> llt(mm);
    if (llt.info() != Eigen::Success) return 1e300;
    CMat minv = llt.solve(id);
    EigH e = eigh(CMat(m.a0() + minv + cov_apply(m, mm)));
    double lmax = e.lam.maxCoeff();
    RVec ex = ((e.lam.array() - lmax) / t).exp();
    double z = ex.sum();
    // Only eigenvalues with nonnegligible softmax weight enter W.
    int first = 0;
    while (first < d - 1 && ex(first) < 1e-18 * z) ++first;
    int k = d - first;
    CMat vk = e.vec.rightCols(k);
    RVec pk = ex.tail(k) / z;
    CMat w = herm(vk * pk.asDiagonal() * vk.adjoint());
    CMat mv = minv * vk;
    grad = herm(cov_apply(m, w) - mv * pk.asDiagonal() * mv.adjoint());
    return lmax + t * std::log(z);
  };
  auto inner = [](const CMat& a, const CMat& b) { return (a.adjoint() * b).trace().real(); };

  // Annealed L-BFGS: temperatures step down geometrically (relative to the
  // overall scale sigma), each stage warm-starting from the previous one.
  LehnerSolution sol;
  CMat mcur = (1.0 / sigma) * id;
  bool final_stalled = false;
  const int mem = 8;
  const double t_lo = opts.temp_lo * sigma;
  for (double t = opts.temp_hi * sigma;; t /= 10.0) {
    bool last_stage = t <= t_lo * (1 + 1e-9);
    std::vector<CMat> svecs, yvecs;
    std::vector<double> rho;
    CMat grad;
    double f = eval_grad(mcur, t, grad);
    // A stage needs no more accuracy than its own smoothing error ~t log d;
    // the final stage runs down to roundoff in the objective.
    double drop_floor = last_stage ? std::max(1e-9 * std::max(1.0, std::abs(f)), 1e-4 * t_lo)
                                   : 1e-2 * t;
    // Small models iterate in microseconds, so the final stage can afford to
    // grind much longer before the stall window closes.
    int iter_cap = last_stage ? opts.max_iter * std::max(1, 128 / d)
                              : std::min(opts.max_iter, 150);
    bool stalled = false;
    // Stage ends when mean progress over a trailing window is below the floor
    // AND the gradient is small against the smoothing curvature ~1/t (so only
    // ~|g|^2 t/2 per step remains).  The gradient guard keeps cold-start
    // iterations, which move slowly while the curvature memory builds, from
    // reading as a stall; the window keeps bursty L-BFGS progress from doing
    // the same.
    const size_t window = last_stage ? 8 : 4;
    const double grad_stall = 3 * std::sqrt(2 * drop_floor / t);
    std::vector<double> hist{f};
    for (int it = 0; it < iter_cap; ++it) {
      double gn = grad.norm();
      if (gn <= 1e-8 * scale) {
        stalled = true;
        break;
      }
      CMat q = grad;
      std::vector<double> coef(svecs.size());
      for (int i = static_cast<int>(svecs.size()) - 1; i >= 0; --i) {
        coef[i] = rho[i] * inner(svecs[i], q);
        q -= coef[i] * yvecs[i];
      }
      if (!svecs.empty())
        q *= inner(svecs.back(), yvecs.back()) / inner(yvecs.back(), yvecs.back());
      else
        q *= t / std::max(ssq * ssq, 1e-12);
      for (size_t i = 0; i < svecs.size(); ++i)
        q += (coef[i] - rho[i] * inner(yvecs[i], q)) * svecs[i];
      CMat dir = -q;
      double dg = inner(dir, grad);
      if (!(dg < 0)) {
        dir = -grad;
        dg = -gn * gn;
      }
      bool accepted = false;
      CMat mnext;
      double fnext = 0;
      for (double step = 1.0; step > 1e-16; step *= 0.5) {
        mnext = herm(mcur + step * dir);
        fnext = eval_value(mnext, t);
        if (fnext <= f + 1e-4 * step * dg) {
          accepted = true;
          break;
        }
      }
      ++sol.iterations;
      if (!accepted) {
        stalled = true;
        break;
      }
      CMat gnext;
      fnext = eval_grad(mnext, t, gnext);
      CMat sv = mnext - mcur, yv = gnext - grad;
      double sy = inner(sv, yv);
      if (sy > 1e-10 * sv.norm() * yv.norm()) {
        svecs.push_back(std::move(sv));
        yvecs.push_back(std::move(yv));
        rho.push_back(1.0 / sy);
        if (static_cast<int>(svecs.size()) > mem) {
          svecs.erase(svecs.begin());
          yvecs.erase(yvecs.begin());
          rho.erase(rho.begin());
        }
      }
      mcur = std::move(mnext);
      f = fnext;
      grad = std::move(gnext);
      hist.push_back(f);
      // Past 50 iterations the memory has been rebuilt many times over, so a
      // flat window is exhaustion even with a large gradient (the landscape
      // is nonsmooth at eigenvalue crossings and the quadratic progress
      // estimate is unreachable there).
      if (hist.size() > window + 1 &&
          hist[hist.size() - 1 - window] - f <= window * drop_floor &&
          (grad.norm() <= grad_stall || it >= 50)) {
        stalled = true;
        break;
      }
    }
    if (last_stage) {
      final_stalled = stalled;
      break;
    }
  }

  // Polish: fixed-point sweeps of the stationarity condition M S(W) M = W,
  // accepted only when the exact objective decreases.
  double obj = objective_exact(mcur);
  double last_drop = 0;
  for (int sweep = 0; sweep < opts.polish_sweeps; ++sweep) {
    EigH em = eigh(mcur);
    CMat minv = em.vec * em.lam.cwiseInverse().asDiagonal() * em.vec.adjoint();
    CMat y = herm(m.a0() + minv + cov_apply(m, mcur));
    Smoothed s = smoothed_max(y, t_lo);
    CMat sw = herm(cov_apply(m, s.w));
    EigH es = eigh(sw + (1e-13 * (1.0 + sw.norm())) * id);
    RVec sq = es.lam.cwiseMax(1e-300).cwiseSqrt();
    CMat shalf = es.vec * sq.asDiagonal() * es.vec.adjoint();
    CMat shinv = es.vec * sq.cwiseInverse().asDiagonal() * es.vec.adjoint();
    EigH ek = eigh(herm(shalf * s.w * shalf));
    CMat khalf = ek.vec * ek.lam.cwiseMax(0.0).cwiseSqrt().asDiagonal() * ek.vec.adjoint();
    CMat mric = herm(shinv * khalf * shinv);
    bool accepted = false;
    for (double step = 1.0; step > 1e-9; step *= 0.5) {
      CMat mtry = herm(mcur + step * (mric - mcur));
      double o2 = objective_exact(mtry);
      if (o2 < obj) {
        last_drop = obj - o2;
        obj = o2;
        mcur = mtry;
        accepted = true;
        break;
      }
    }
    ++sol.iterations;
    if (!accepted) {
      last_drop = 0;
      break;
    }
  }

  sol.value = obj;
  sol.minimizer = mcur;
  sol.objective_residual = last_drop;
  {
    EigH em = eigh(mcur);
    CMat minv = em.vec * em.lam.cwiseInverse().asDiagonal() * em.vec.adjoint();
    CMat y = herm(m.a0() + minv + cov_apply(m, mcur));
    Smoothed s = smoothed_max(y, t_lo);
    CMat sw = herm(cov_apply(m, s.w));
    sol.kkt_residual = (sw - minv * s.w * minv).norm() / (1.0 + sw.norm());
  }
  sol.converged = final_stalled && last_drop <= 1e-6 * std::max(1.0, std::abs(obj));
  return sol;
}

LehnerSolution lehner_min(const GaussianSeriesModel& m, const LehnerOptions& opts) {
  GaussianSeriesModel neg(-m.a0(), m.coeffs());
  LehnerSolution s = lehner_max(neg, opts);
  s.value = -s.value;
  return s;
}

namespace {

// One engine per model: picks the dense matrix iteration or, for diagonal
// mean + single-entry-pair coefficients, the O(d) scalar system.
class MdeEngine {
 public:
  explicit MdeEngine(const GaussianSeriesModel& m) : m_(m), d_(m.dim()) {
    RVec a0d;
    RMat prof;
    diag_ = entrywise_structure(m, &a0d, &prof);
    if (diag_) {
      a0d_ = a0d;
      rows_.resize(d_);
      for (int i = 0; i < d_; ++i)
        for (int j = 0; j < d_; ++j)
          if (prof(i, j) != 0.0) rows_[i].push_back({j, prof(i, j)});
    }
  }

  bool deterministic() const { return m_.num_coeffs() == 0; }

  // Fixed-point solve; returns (trace of G)/d and the final residual.
  std::pair<Complex, double> normalized_trace(Complex z, double tol, int max_iter) const {
    if (deterministic()) {
      Complex acc = 0;
      EigH e = eigh(m_.a0());
      for (int i = 0; i < d_; ++i) acc += 1.0 / (z - e.lam(i));
      return {acc / static_cast<double>(d_), 0.0};
    }
    if (diag_) {
      CVec g;
      double r = solve_diag(z, tol, max_iter, &g);
      return {g.sum() / static_cast<double>(d_), r};
    }
    CMat g;
    double r = solve_dense(z, tol, max_iter, &g);
    return {g.trace() / static_cast<double>(d_), r};
  }

  CMat full_resolvent(Complex z, double tol, int max_iter) const {
    if (deterministic()) {
      CMat a = z * CMat::Identity(d_, d_) - m_.a0();
      return a.partialPivLu().solve(CMat::Identity(d_, d_));
    }
    if (diag_) {
      CVec g;
      double r = solve_diag(z, tol, max_iter, &g);
      if (r > tol)
        throw ConvergenceError("mde_resolvent: residual " + std::to_string(r) +
                               " above tolerance");
      CMat out = CMat::Zero(d_, d_);
      out.diagonal() = g;
      return out;
    }
    CMat g;
    double r = solve_dense(z, tol, max_iter, &g);
    if (r > tol)
      throw ConvergenceError("mde_resolvent: residual " + std::to_string(r) +
                             " above tolerance");
    return g;
  }

 private:
  double solve_dense(Complex z, double tol, int max_iter, CMat* out) const {
    const CMat id = CMat::Identity(d_, d_);
    CMat g = (1.0 / z) * id;
    double omega = 0.5, prev = 1e300, resid = 1e300;
    for (int it = 0; it < max_iter; ++it) {
      CMat f = (z * id - m_.a0() - cov_apply_raw(m_, g)).partialPivLu().solve(id);
      resid = (g - f).norm();
      if (resid <= tol) {
        *out = g;
        return resid;
      }
      omega = (resid > prev) ? std::max(omega * 0.5, 1.0 / 64.0) : std::min(omega * 1.05, 0.5);
      prev = resid;
      g = (1.0 - omega) * g + omega * f;
    }
    *out = g;
    return resid;
  }

  double solve_diag(Complex z, double tol, int max_iter, CVec* out) const {
    CVec g = CVec::Constant(d_, 1.0 / z);
    double omega = 0.5, prev = 1e300, resid = 1e300;
    CVec f(d_);
    for (int it = 0; it < max_iter; ++it) {
      for (int i = 0; i < d_; ++i) {
        Complex s = 0;
        for (const auto& [j, v] : rows_[i]) s += v * g(j);
        f(i) = 1.0 / (z - a0d_(i) - s);
      }
      resid = (g - f).norm();
      if (resid <= tol) {
        *out = g;
        return resid;
      }
      omega = (resid > prev) ? std::max(omega * 0.5, 1.0 / 64.0) : std::min(omega * 1.05, 0.5);
      prev = resid;
      g = (1.0 - omega) * g + omega * f;
    }
    *out = g;
    return resid;
  }

  const GaussianSeriesModel& m_;
  int d_;
  bool diag_ = false;
  RVec a0d_;
  std::vector<std::vector<std::pair<int, double>>> rows_;
};

double density_from_trace(Complex tr) { return std::max(0.0, -tr.imag() / kPi); }

}  // namespace

CMat mde_resolvent(const GaussianSeriesModel& m, Complex z, const MdeOptions& opts) {
  if (!(z.imag() > 0)) throw ValidationError("mde_resolvent requires Im z > 0");
  return MdeEngine(m).full_resolvent(z, opts.tol, opts.max_iter);
}

MdeSolution free_density(const GaussianSeriesModel& m, double x_lo, double x_hi, int steps,
                         double eta) {
  if (steps < 2) throw ValidationError("free_density needs at least 2 grid points");
  if (!(x_hi > x_lo)) throw ValidationError("free_density needs x_hi > x_lo");
  double sigma = std::sqrt(std::max(0.0, model_sigma_sq(m)));
  if (eta <= 0) eta = 1e-4 * std::max(sigma, 1e-12);
  MdeEngine eng(m);
  MdeSolution sol;
  sol.eta = eta;
  sol.grid = RVec::LinSpaced(steps, x_lo, x_hi);
  sol.density = RVec::Zero(steps);
  sol.resolvent_residuals = RVec::Zero(steps);
  for (int i = 0; i < steps; ++i) {
    auto [tr, r] = eng.normalized_trace(Complex(sol.grid(i), eta), 1e-10, 200000);
    sol.density(i) = density_from_trace(tr);
    sol.resolvent_residuals(i) = r;
  }
  return sol;
}

SupportSet free_support(const GaussianSeriesModel& m, double eta, double density_threshold) {
  double ssq = model_sigma_sq(m);
  double sigma = std::sqrt(std::max(0.0, ssq));
  if (m.num_coeffs() == 0 || !(ssq > 0)) {
    // Deterministic spectrum: eigenvalues fattened by the smoothing scale.
    if (eta <= 0) eta = 1e-6;
    EigH e = eigh(m.a0());
    SupportSet out;
    for (int i = 0; i < m.dim(); ++i) {
      Interval iv{e.lam(i) - eta, e.lam(i) + eta};
      if (!out.intervals.empty() && iv.lo <= out.intervals.back().hi + 4 * eta)
        out.intervals.back().hi = std::max(out.intervals.back().hi, iv.hi);
      else
        out.intervals.push_back(iv);
    }
    return out;
  }
  if (eta <= 0) eta = 1e-4 * sigma;
  if (density_threshold <= 0) density_threshold = 5e-3 / sigma;
  const double tau = density_threshold;

  LehnerSolution top = lehner_max(m);
  LehnerSolution bot = lehner_min(m);
  if (!top.converged || !bot.converged)
    throw ConvergenceError("free_support: variational edge solve did not converge");
  const double lo_edge = bot.value, hi_edge = top.value;
  const double margin = 0.05 * sigma + 10 * eta;

  MdeEngine eng(m);
  const double dtol = 1e-8;
  auto rho = [&](double x) {
    return density_from_trace(eng.normalized_trace(Complex(x, eta), dtol, 200000).first);
  };

  std::vector<double> xs;
  const int coarse = 2000, fine = 257;
  for (int i = 0; i < coarse; ++i)
    xs.push_back(lo_edge - margin + (hi_edge - lo_edge + 2 * margin) * i / (coarse - 1.0));
  for (int i = 0; i < fine; ++i) {
    xs.push_back(lo_edge - margin + 2 * margin * i / (fine - 1.0));
    xs.push_back(hi_edge - margin + 2 * margin * i / (fine - 1.0));
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

  std::vector<char> above(xs.size());
  std::vector<double> vals(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) {
    vals[i] = rho(xs[i]);
    above[i] = vals[i] > tau;
  }

  auto bisect = [&](double xlo, double xhi, bool rising) {
    // density crosses tau between xlo and xhi
    for (int it = 0; it < 60 && xhi - xlo > 1e-6 * std::max(1.0, sigma); ++it) {
      double mid = 0.5 * (xlo + xhi);
      bool a = rho(mid) > tau;
      if (a == rising)
        xhi = mid;  // rising: above means the crossing is to the left
      else
        xlo = mid;
    }
    return 0.5 * (xlo + xhi);
  };

  SupportSet out;
  size_t i = 0;
  while (i < xs.size()) {
    if (!above[i]) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j + 1 < xs.size() && above[j + 1]) ++j;
    double a = (i == 0) ? xs[i] : bisect(xs[i - 1], xs[i], true);
    double b = (j + 1 == xs.size()) ? xs[j] : bisect(xs[j], xs[j + 1], false);
    out.intervals.push_back({a, b});
    i = j + 1;
  }
  if (out.intervals.empty())
    throw ValidationError("free_support: density never exceeds the threshold");

  // Merge components separated by less than 4 eta.
  std::vector<Interval> merged;
  for (const auto& iv : out.intervals) {
    if (!merged.empty() && iv.lo - merged.back().hi < 4 * eta)
      merged.back().hi = iv.hi;
    else
      merged.push_back(iv);
  }
  out.intervals = std::move(merged);

  out.edge_discrepancy = std::max(std::abs(out.intervals.front().lo - lo_edge),
                                  std::abs(out.intervals.back().hi - hi_edge));
  out.edge_warning = out.edge_discrepancy > 10 * eta;
  return out;
}

namespace {

double adaptive_simpson(const std::function<double(double)>& f, double a, double m, double b,
                        double fa, double fm, double fb, double whole, double tol, int depth) {
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6.0 * (fa + 4 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson(f, a, lm, m, fa, flm, fm, left, tol / 2, depth - 1) +
         adaptive_simpson(f, m, rm, b, fm, frm, fb, right, tol / 2, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  double m = 0.5 * (a + b);
  double fa = f(a), fm = f(m), fb = f(b);
  double whole = (b - a) / 6.0 * (fa + 4 * fm + fb);
  return adaptive_simpson(f, a, m, b, fa, fm, fb, whole, tol, 22);
}

}  // namespace

double free_moment(const GaussianSeriesModel& m, int k) {
  if (k < 0 || k % 2 != 0) throw ValidationError("free_moment requires even k >= 0");
  if (k == 0) return 1.0;
  double ssq = model_sigma_sq(m);
  if (m.num_coeffs() == 0 || !(ssq > 0)) {
    EigH e = eigh(m.a0());
    double acc = 0;
    for (int i = 0; i < m.dim(); ++i) acc += std::pow(e.lam(i), k);
    return acc / m.dim();
  }
  double sigma = std::sqrt(ssq);
  SupportSet sup = free_support(m);
  double eta_mom = 1e-5 * sigma;
  MdeEngine eng(m);
  auto f = [&](double x) {
    auto [tr, r] = eng.normalized_trace(Complex(x, eta_mom), 1e-9, 200000);
    (void)r;
    return std::pow(x, k) * density_from_trace(tr);
  };
  // Pad each component so the eta-broadened edges are inside the window.
  double pad = 0.05 * sigma;
  std::vector<Interval> regions;
  for (const auto& iv : sup.intervals) {
    Interval r{iv.lo - pad, iv.hi + pad};
    if (!regions.empty() && r.lo <= regions.back().hi)
      regions.back().hi = r.hi;
    else
      regions.push_back(r);
  }
  double acc = 0;
  for (const auto& r : regions) {
    double scale = std::max(1.0, std::pow(std::max(std::abs(r.lo), std::abs(r.hi)), k));
    acc += integrate(f, r.lo, r.hi, 1e-7 * scale * (r.hi - r.lo));
  }
  return acc;
}

}  // namespace freespec
