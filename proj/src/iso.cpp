#include "freespec/iso.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace freespec {

namespace {

// B without the domain guard; the public entry point checks theta >= 0, but
// internally EX shifted down by a bump can have a negative top eigenvalue.
double b_of(double theta) { return theta <= 1.0 ? 2.0 : theta + 1.0 / theta; }

double spec_norm_herm(const CMat& a) {
  Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (a + a.adjoint()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

double bbp_value(double theta) {
  if (!(theta >= 0)) throw ValidationError("bbp_value: theta must be nonnegative");
  return b_of(theta);
}

double bbp_overlap(double theta) {
  if (theta == 0.0) return 0.0;
  double o = 1.0 - 1.0 / (theta * theta);
  return o > 0.0 ? o : 0.0;
}

BbpPrediction bbp_window(const GaussianSeriesModel& m) {
  BbpPrediction out;
  SpectrumSet sp = eigen_spectrum(m.a0());
  const int d = m.dim();
  out.theta = sp.eigenvalues(d - 1);
  double a0_norm = sp.eigenvalues.cwiseAbs().maxCoeff();
  int rank = 0;
  for (int i = 0; i < d; ++i)
    if (std::abs(sp.eigenvalues(i)) > 1e-10 * a0_norm) ++rank;
  out.rank = rank;
  out.value = b_of(out.theta);

  ModelParameters p = compute_parameters(m);
  double sr = p.sigma_star * std::sqrt(static_cast<double>(rank));
  out.error_radius = 2.0 * sr;
  out.isotropy_defect = spec_norm_herm(cov_apply(m, CMat::Identity(d, d)) - CMat::Identity(d, d));
  out.applicable = sr <= 1.0 && out.isotropy_defect <= 1e-8;
  return out;
}

SrankBound srank_bound_check(const GaussianSeriesModel& m, const CMat& M) {
  CMat sm = covariance_map(m, M);  // validates M
  Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (M + M.adjoint()), Eigen::EigenvaluesOnly);
  RVec lam = es.eigenvalues();
  double m_norm = lam.cwiseAbs().maxCoeff();
  int rank = 0;
  for (int i = 0; i < lam.size(); ++i)
    if (std::abs(lam(i)) > 1e-10 * m_norm) ++rank;
  ModelParameters p = compute_parameters(m);
  return {p.sigma_star_sq * rank * m_norm, spec_norm_herm(sm)};
}

OverlapSandwich perturb_overlap(const CMat& x, const CMat& p, double t) {
  if (!(t > 0)) throw ValidationError("perturb_overlap: t must be positive");
  if (x.rows() != x.cols() || p.rows() != p.cols() || x.rows() != p.rows())
    throw ValidationError("perturb_overlap: dimension mismatch");
  double p_scale = std::max(1.0, p.cwiseAbs().maxCoeff());
  if ((p - p.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * p_scale ||
      (p * p - p).cwiseAbs().maxCoeff() > 1e-10 * p_scale)
    throw ValidationError("perturb_overlap: p is not an orthogonal projection");

  const int d = static_cast<int>(x.rows());
  Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (x + x.adjoint()));
  if (es.info() != Eigen::Success) throw ConvergenceError("perturb_overlap: eigensolver failed");
  double lmax = es.eigenvalues()(d - 1);
  CVec v = es.eigenvectors().col(d - 1);

  OverlapSandwich out;
  out.degenerate = d > 1 && es.eigenvalues()(d - 1) - es.eigenvalues()(d - 2) < 1e-12;
  out.point = std::real(Complex(v.adjoint() * (p * v)));
  out.upper = (lambda_max(x + t * p) - lmax) / t;
  out.lower = (lmax - lambda_max(x - t * p)) / t;
  return out;
}

ThreePointOverlap three_point_overlap(const GaussianSeriesModel& m, double theta,
                                      double delta, double t, int trials,
                                      uint64_t seed) {
  if (!(t > 0) || !(t <= delta))
    throw ValidationError("three_point_overlap: need 0 < t <= delta");
  if (trials < 1) throw ValidationError("three_point_overlap: trials must be positive");
  const int d = m.dim();

  // Spectral projector of EX onto eigenvalues in (theta - delta, theta].
  Eigen::SelfAdjointEigenSolver<CMat> es0(m.a0());
  if (es0.info() != Eigen::Success)
    throw ConvergenceError("three_point_overlap: eigensolver failed on EX");
  CMat pproj = CMat::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    double lam = es0.eigenvalues()(i);
    if (lam > theta - delta && lam <= theta)
      pproj += es0.eigenvectors().col(i) * es0.eigenvectors().col(i).adjoint();
  }

  const double shifts[3] = {0.0, t, -t};
  double ref_edge[3];
  for (int k = 0; k < 3; ++k)
    ref_edge[k] = b_of(lambda_max(m.a0() + shifts[k] * pproj));

  ThreePointOverlap out;
  out.band_center = bbp_overlap(theta);
  out.overlaps.reserve(trials);
  for (int trial = 0; trial < trials; ++trial) {
    uint64_t tseed = RngStream(seed, {static_cast<uint64_t>(trial)}).next_u64();
    CMat x = sample(m, tseed);
    for (int k = 0; k < 3; ++k) {
      CMat xs = x + shifts[k] * pproj;
      double lmax;
      if (k == 0) {
        Eigen::SelfAdjointEigenSolver<CMat> es(xs);
        if (es.info() != Eigen::Success)
          throw ConvergenceError("three_point_overlap: eigensolver failed");
        lmax = es.eigenvalues()(d - 1);
        if (d > 1 && lmax - es.eigenvalues()(d - 2) < 1e-12) out.degenerate = true;
        CVec v = es.eigenvectors().col(d - 1);
        out.overlaps.push_back(std::real(Complex(v.adjoint() * (pproj * v))));
      } else {
        lmax = lambda_max(xs);
      }
      out.epsilon = std::max(out.epsilon, std::abs(lmax - ref_edge[k]));
    }
  }
  out.band_radius = t + 2.0 * out.epsilon / t;
  double n = static_cast<double>(trials);
  out.mean = std::accumulate(out.overlaps.begin(), out.overlaps.end(), 0.0) / n;
  if (trials > 1) {
    double ss = 0;
    for (double o : out.overlaps) ss += (o - out.mean) * (o - out.mean);
    out.stddev = std::sqrt(ss / (n - 1.0));
  }
  return out;
}

LowRankSplit low_rank_split(const CMat& a, int r) {
  if (r < 0) throw ValidationError("low_rank_split: rank must be nonnegative");
  if (a.rows() != a.cols()) throw ValidationError("low_rank_split: matrix not square");
  double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw ValidationError("low_rank_split: matrix not self-adjoint");
  const int d = static_cast<int>(a.rows());
  Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (a + a.adjoint()));
  if (es.info() != Eigen::Success) throw ConvergenceError("low_rank_split: eigensolver failed");
  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    return std::abs(es.eigenvalues()(i)) > std::abs(es.eigenvalues()(j));
  });

  LowRankSplit out;
  out.truncated = CMat::Zero(d, d);
  for (int i = 0; i < std::min(r, d); ++i) {
    int k = order[i];
    out.truncated +=
        es.eigenvalues()(k) * es.eigenvectors().col(k) * es.eigenvectors().col(k).adjoint();
  }
  out.tail_norm = r < d ? std::abs(es.eigenvalues()(order[r])) : 0.0;
  return out;
}

}  // namespace freespec
