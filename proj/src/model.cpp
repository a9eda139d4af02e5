#include "freespec/model.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace freespec {
namespace {

double max_abs(const CMat& a) {
  double m = 0;
  for (int j = 0; j < a.cols(); ++j)
    for (int i = 0; i < a.rows(); ++i) m = std::max(m, std::abs(a(i, j)));
  return m;
}

void require_hermitian(const CMat& a, double tol, const char* what) {
  if (a.rows() != a.cols()) throw ValidationError(std::string(what) + ": matrix not square");
  double scale = std::max(1.0, max_abs(a));
  double dev = max_abs(CMat(a - a.adjoint()));
  if (dev > tol * scale)
    throw ValidationError(std::string(what) + ": not self-adjoint (deviation " +
                          std::to_string(dev) + ")");
}

}  // namespace

Coeff::Coeff(int d, std::vector<Entry> entries, bool validate) : d_(d) {
  if (d < 1) throw ValidationError("coefficient dimension must be >= 1");
  for (const auto& e : entries)
    if (e.r < 0 || e.c < 0 || e.r >= d || e.c >= d)
      throw ValidationError("coefficient entry out of range");
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.r != b.r ? a.r < b.r : a.c < b.c;
  });
  // Merge duplicates.
  for (const auto& e : entries) {
    if (!entries_.empty() && entries_.back().r == e.r && entries_.back().c == e.c)
      entries_.back().v += e.v;
    else
      entries_.push_back(e);
  }
  if (validate) {
    // Every entry must have its conjugate mirror; symmetrize exactly.
    std::unordered_map<uint64_t, Complex> pos;
    double scale = 1.0;
    for (const auto& e : entries_) {
      pos[static_cast<uint64_t>(e.r) * d_ + e.c] = e.v;
      scale = std::max(scale, std::abs(e.v));
    }
    for (auto& e : entries_) {
      auto it = pos.find(static_cast<uint64_t>(e.c) * d_ + e.r);
      Complex mirror = (it == pos.end()) ? Complex(0) : it->second;
      if (std::abs(e.v - std::conj(mirror)) > 1e-12 * scale)
        throw ValidationError("coefficient not self-adjoint");
      e.v = 0.5 * (e.v + std::conj(mirror));
    }
  }
  entries_.erase(std::remove_if(entries_.begin(), entries_.end(),
                                [](const Entry& e) { return e.v == Complex(0); }),
                 entries_.end());
  double nnzf = static_cast<double>(entries_.size());
  if (nnzf * nnzf > static_cast<double>(d_) * d_ * d_) dense_ = to_dense();
}

Coeff Coeff::from_dense(const CMat& a) {
  require_hermitian(a, 1e-12, "coefficient");
  CMat h = 0.5 * (a + a.adjoint());
  std::vector<Entry> es;
  for (int j = 0; j < h.cols(); ++j)
    for (int i = 0; i < h.rows(); ++i)
      if (h(i, j) != Complex(0)) es.push_back({i, j, h(i, j)});
  return Coeff(static_cast<int>(h.rows()), std::move(es), false);
}

Coeff Coeff::from_pairs(int d, const std::vector<Entry>& upper) {
  std::vector<Entry> es;
  for (const auto& e : upper) {
    if (e.r == e.c) {
      es.push_back({e.r, e.r, Complex(e.v.real(), 0.0)});
    } else {
      es.push_back(e);
      es.push_back({e.c, e.r, std::conj(e.v)});
    }
  }
  return Coeff(d, std::move(es), false);
}

CMat Coeff::to_dense() const {
  if (dense_) return *dense_;
  CMat a = CMat::Zero(d_, d_);
  for (const auto& e : entries_) a(e.r, e.c) += e.v;
  return a;
}

void Coeff::add_to(CMat& x, Complex scale) const {
  for (const auto& e : entries_) x(e.r, e.c) += scale * e.v;
}

CVec Coeff::apply(const CVec& x) const {
  CVec y = CVec::Zero(d_);
  for (const auto& e : entries_) y(e.r) += e.v * x(e.c);
  return y;
}

void Coeff::accumulate_conjugation(const CMat& m, CMat& out) const {
  if (dense_) {
    out.noalias() += (*dense_) * m * (*dense_);
    return;
  }
  for (const auto& a : entries_)
    for (const auto& b : entries_) out(a.r, b.c) += a.v * m(a.c, b.r) * b.v;
}

double Coeff::frobenius_norm() const {
  double s = 0;
  for (const auto& e : entries_) s += std::norm(e.v);
  return std::sqrt(s);
}

GaussianSeriesModel::GaussianSeriesModel(CMat a0, std::vector<Coeff> coeffs)
    : d_(static_cast<int>(a0.rows())), a0_(std::move(a0)), coeffs_(std::move(coeffs)) {
  if (d_ < 1) throw ValidationError("model dimension must be >= 1");
  require_hermitian(a0_, 1e-12, "A0");
  a0_ = 0.5 * (a0_ + a0_.adjoint()).eval();
  for (const auto& c : coeffs_)
    if (c.dim() != d_) throw ValidationError("coefficient dimension mismatch");
}

GaussianSeriesModel GaussianSeriesModel::from_dense(const CMat& a0,
                                                    const std::vector<CMat>& coeffs) {
  std::vector<Coeff> cs;
  cs.reserve(coeffs.size());
  for (const auto& c : coeffs) {
    if (c.rows() != a0.rows()) throw ValidationError("coefficient dimension mismatch");
    cs.push_back(Coeff::from_dense(c));
  }
  return GaussianSeriesModel(a0, std::move(cs));
}

CMat cov_apply_raw(const GaussianSeriesModel& m, const CMat& M) {
  CMat out = CMat::Zero(m.dim(), m.dim());
  for (const auto& c : m.coeffs()) c.accumulate_conjugation(M, out);
  return out;
}

CMat cov_apply(const GaussianSeriesModel& m, const CMat& M) {
  CMat out = cov_apply_raw(m, M);
  return 0.5 * (out + out.adjoint()).eval();
}

CMat covariance_map(const GaussianSeriesModel& m, const CMat& M) {
  if (M.rows() != m.dim() || M.cols() != m.dim())
    throw ValidationError("covariance_map: dimension mismatch");
  require_hermitian(M, 1e-10, "covariance_map argument");
  return cov_apply(m, 0.5 * (M + M.adjoint()));
}

namespace {

// lambda_max of the n x n Gram matrix Tr(A_i* A_j) without forming all pairs:
// coefficients only correlate through shared entry positions.
double gram_lambda_max(const GaussianSeriesModel& m) {
  const int n = m.num_coeffs();
  const int d = m.dim();
  std::unordered_map<uint64_t, std::vector<std::pair<int, Complex>>> by_pos;
  for (int i = 0; i < n; ++i)
    for (const auto& e : m.coeffs()[i].entries())
      by_pos[static_cast<uint64_t>(e.r) * d + e.c].push_back({i, e.v});

  if (n <= 768) {
    RMat g = RMat::Zero(n, n);
    for (const auto& [pos, bucket] : by_pos) {
      (void)pos;
      for (const auto& [i, vi] : bucket)
        for (const auto& [j, vj] : bucket) g(i, j) += (std::conj(vi) * vj).real();
    }
    Eigen::SelfAdjointEigenSolver<RMat> es(g, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
  }

  // Sparse rows + power iteration (Gram is PSD).
  std::unordered_map<uint64_t, double> gmap;
  for (const auto& [pos, bucket] : by_pos) {
    (void)pos;
    for (const auto& [i, vi] : bucket)
      for (const auto& [j, vj] : bucket)
        gmap[static_cast<uint64_t>(i) * n + j] += (std::conj(vi) * vj).real();
  }
  std::vector<std::vector<std::pair<int, double>>> rows(n);
  for (const auto& [key, val] : gmap)
    rows[static_cast<int>(key / n)].push_back({static_cast<int>(key % n), val});

  auto matvec = [&](const RVec& x) {
    RVec y = RVec::Zero(n);
    for (int i = 0; i < n; ++i)
      for (const auto& [j, v] : rows[i]) y(i) += v * x(j);
    return y;
  };
  double best = 0;
  RngStream rs(0x706f776572ULL, {0});
  for (int restart = 0; restart < 3; ++restart) {
    RVec x(n);
    for (int i = 0; i < n; ++i) x(i) = rs.gaussian();
    x.normalize();
    double lam = 0;
    for (int it = 0; it < 2000; ++it) {
      RVec y = matvec(x);
      double nl = x.dot(y);
      double ny = y.norm();
      if (ny == 0) break;
      x = y / ny;
      if (std::abs(nl - lam) <= 1e-13 * std::max(1.0, std::abs(nl)) && it > 2) {
        lam = nl;
        break;
      }
      lam = nl;
    }
    best = std::max(best, lam);
  }
  return best;
}

// sup over unit u, w of sum_i |<u, A_i w>|^2 by alternating power steps.
double sigma_star_sq(const GaussianSeriesModel& m) {
  const int d = m.dim();
  const auto& coeffs = m.coeffs();
  auto value = [&](const CVec& u, const CVec& w) {
    double s = 0;
    for (const auto& c : coeffs) {
      Complex t = 0;
      for (const auto& e : c.entries()) t += std::conj(u(e.r)) * e.v * w(e.c);
      s += std::norm(t);
    }
    return s;
  };
  double best = 0;
  RngStream rs(0x73746172ULL, {1});
  for (int restart = 0; restart < 50; ++restart) {
    CVec u(d), w(d);
    for (int i = 0; i < d; ++i) {
      u(i) = Complex(rs.gaussian(), rs.gaussian());
      w(i) = Complex(rs.gaussian(), rs.gaussian());
    }
    u.normalize();
    w.normalize();
    double val = value(u, w);
    for (int it = 0; it < 500; ++it) {
      // u <- normalize(sum_i (A_i w)(A_i w)^* u)
      CVec un = CVec::Zero(d);
      for (const auto& c : coeffs) {
        Complex s = 0;
        for (const auto& e : c.entries()) s += std::conj(e.v * w(e.c)) * u(e.r);
        for (const auto& e : c.entries()) un(e.r) += e.v * w(e.c) * s;
      }
      if (un.norm() > 0) u = un.normalized();
      // w <- normalize(sum_i (A_i u)(A_i u)^* w)
      CVec wn = CVec::Zero(d);
      for (const auto& c : coeffs) {
        Complex s = 0;
        for (const auto& e : c.entries()) s += std::conj(e.v * u(e.c)) * w(e.r);
        for (const auto& e : c.entries()) wn(e.r) += e.v * u(e.c) * s;
      }
      if (wn.norm() > 0) w = wn.normalized();
      double nv = value(u, w);
      if (std::abs(nv - val) <= 1e-10 * std::max(1.0, nv)) {
        val = nv;
        break;
      }
      val = nv;
    }
    best = std::max(best, val);
  }
  return best;
}

}  // namespace

ModelParameters compute_parameters(const GaussianSeriesModel& m) {
  ModelParameters p{};
  if (m.num_coeffs() == 0) return p;
  CMat si = cov_apply(m, CMat::Identity(m.dim(), m.dim()));
  p.sigma_sq = lambda_max(si);
  p.sigma = std::sqrt(std::max(0.0, p.sigma_sq));
  p.v_sq = gram_lambda_max(m);
  p.v = std::sqrt(std::max(0.0, p.v_sq));
  p.sigma_star_sq = sigma_star_sq(m);
  p.sigma_star = std::sqrt(std::max(0.0, p.sigma_star_sq));
  p.v_tilde = std::sqrt(p.v * p.sigma);
  return p;
}

CMat sample(const GaussianSeriesModel& m, uint64_t seed) {
  RngStream rs(seed, {});
  CMat x = m.a0();
  for (const auto& c : m.coeffs()) c.add_to(x, rs.gaussian());
  return x;
}

CMat sample_universal(const UniversalModel& m, uint64_t seed) {
  RngStream rs(seed, {});
  CMat x = m.z0;
  for (const auto& s : m.summands) {
    double eps;
    if (s.law == UniversalSummand::Law::kRademacher)
      eps = (rs.next_u64() >> 63) ? 1.0 : -1.0;
    else
      eps = std::sqrt(3.0) * (2.0 * rs.uniform() - 1.0);
    s.coeff.add_to(x, eps);
  }
  return x;
}

UniversalModel universal_rademacher(const GaussianSeriesModel& m) {
  UniversalModel u;
  u.z0 = m.a0();
  u.summands.reserve(m.coeffs().size());
  for (const auto& c : m.coeffs())
    u.summands.push_back({c, UniversalSummand::Law::kRademacher, c.frobenius_norm()});
  return u;
}

SpectrumSet eigen_spectrum(const CMat& a) {
  require_hermitian(a, 1e-10, "eigen_spectrum input");
  CMat h = 0.5 * (a + a.adjoint());
  Eigen::SelfAdjointEigenSolver<CMat> es(h);
  if (es.info() != Eigen::Success) throw ConvergenceError("eigen_spectrum: solver failed");
  RVec lam = es.eigenvalues();
  double norm = std::max(std::abs(lam(0)), std::abs(lam(lam.size() - 1)));
  if (norm > 0) {
    CMat resid = h * es.eigenvectors() - es.eigenvectors() * lam.asDiagonal().toDenseMatrix().cast<Complex>();
    for (int j = 0; j < lam.size(); ++j)
      if (resid.col(j).norm() > 1e-8 * norm)
        throw ConvergenceError("eigen_spectrum: residual check failed");
  }
  return SpectrumSet{lam};
}

GaussianSeriesModel dilate(const RectModel& rm) {
  const int p = static_cast<int>(rm.b0.rows());
  const int q = static_cast<int>(rm.b0.cols());
  auto lift = [&](const CMat& b) {
    if (b.rows() != p || b.cols() != q) throw ValidationError("dilate: dimension mismatch");
    CMat a = CMat::Zero(p + q, p + q);
    a.topRightCorner(p, q) = b;
    a.bottomLeftCorner(q, p) = b.adjoint();
    return a;
  };
  std::vector<CMat> cs;
  cs.reserve(rm.coeffs.size());
  for (const auto& b : rm.coeffs) cs.push_back(lift(b));
  return GaussianSeriesModel::from_dense(lift(rm.b0), cs);
}

double lambda_max(const CMat& a) {
  Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (a + a.adjoint()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double lambda_min(const CMat& a) {
  Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (a + a.adjoint()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

std::pair<double, CVec> top_eigenpair(const CMat& a) {
  Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (a + a.adjoint()));
  int last = static_cast<int>(a.rows()) - 1;
  return {es.eigenvalues()(last), es.eigenvectors().col(last)};
}

namespace {

std::vector<Interval> normalize_intervals(std::vector<Interval> iv) {
  if (iv.empty()) throw ValidationError("hausdorff_distance: empty set");
  std::sort(iv.begin(), iv.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  std::vector<Interval> out;
  for (const auto& i : iv) {
    if (i.lo > i.hi) throw ValidationError("hausdorff_distance: invalid interval");
    if (!out.empty() && i.lo <= out.back().hi)
      out.back().hi = std::max(out.back().hi, i.hi);
    else
      out.push_back(i);
  }
  return out;
}

double dist_to(double x, const std::vector<Interval>& b) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& i : b) {
    if (x < i.lo)
      best = std::min(best, i.lo - x);
    else if (x > i.hi)
      best = std::min(best, x - i.hi);
    else
      return 0.0;
  }
  return best;
}

// sup_{x in a} dist(x, b): attained at endpoints of a or at b-gap midpoints.
double sup_dist(const std::vector<Interval>& a, const std::vector<Interval>& b) {
  double s = 0;
  for (const auto& i : a) {
    s = std::max(s, dist_to(i.lo, b));
    s = std::max(s, dist_to(i.hi, b));
  }
  for (size_t j = 0; j + 1 < b.size(); ++j) {
    double mid = 0.5 * (b[j].hi + b[j + 1].lo);
    for (const auto& i : a)
      if (mid >= i.lo && mid <= i.hi) s = std::max(s, dist_to(mid, b));
  }
  // Points of a beyond b's hull are covered by the endpoint candidates above.
  return s;
}

}  // namespace

double hausdorff_distance(const std::vector<Interval>& a, const std::vector<Interval>& b) {
  auto na = normalize_intervals(a);
  auto nb = normalize_intervals(b);
  return std::max(sup_dist(na, nb), sup_dist(nb, na));
}

std::vector<Interval> as_intervals(const SpectrumSet& s) {
  if (s.eigenvalues.size() == 0) throw ValidationError("empty spectrum");
  std::vector<Interval> iv;
  for (int i = 0; i < s.eigenvalues.size(); ++i)
    iv.push_back({s.eigenvalues(i), s.eigenvalues(i)});
  return iv;
}

double hausdorff_distance(const SpectrumSet& a, const SpectrumSet& b) {
  return hausdorff_distance(as_intervals(a), as_intervals(b));
}

double hausdorff_distance(const SpectrumSet& a, const SupportSet& b) {
  return hausdorff_distance(as_intervals(a), b.intervals);
}

double hausdorff_distance(const SupportSet& a, const SupportSet& b) {
  return hausdorff_distance(a.intervals, b.intervals);
}

bool entrywise_structure(const GaussianSeriesModel& m, RVec* a0_diag, RMat* profile) {
  const int d = m.dim();
  const CMat& a0 = m.a0();
  double scale = std::max(1.0, max_abs(a0));
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i)
      if (i != j && std::abs(a0(i, j)) > 1e-14 * scale) return false;
  RMat v = RMat::Zero(d, d);
  for (const auto& c : m.coeffs()) {
    const auto& es = c.entries();
    if (es.size() == 1 && es[0].r == es[0].c) {
      v(es[0].r, es[0].r) += std::norm(es[0].v);
    } else if (es.size() == 2 && es[0].r == es[1].c && es[0].c == es[1].r &&
               es[0].r != es[0].c) {
      v(es[0].r, es[0].c) += std::norm(es[0].v);
      v(es[1].r, es[1].c) += std::norm(es[1].v);
    } else {
      return false;
    }
  }
  if (a0_diag) *a0_diag = a0.diagonal().real();
  if (profile) *profile = std::move(v);
  return true;
}

}  // namespace freespec
