#pragma once

#include <cstdint>
#include <vector>

#include "freespec/model.hpp"

namespace freespec {

// Edge prediction for nearly isotropic models: the top edge of the free model
// sits within 2*sigma_star*sqrt(rank EX) of B(lambda_max(EX)), provided the
// noise covariance is close to the identity and sigma_star*sqrt(rank) <= 1.
struct BbpPrediction {
  double theta = 0.0;          // lambda_max(EX)
  double value = 2.0;          // B(theta)
  double error_radius = 0.0;   // 2 * sigma_star * sqrt(rank)
  int rank = 0;                // numerical rank of EX
  double isotropy_defect = 0.0;  // ||S(I) - I||
  bool applicable = true;      // false when sigma_star*sqrt(rank) > 1 or the
                               // covariance is visibly non-isotropic
};

// B(theta) = 2 for theta <= 1, theta + 1/theta above.
double bbp_value(double theta);
// Squared top-eigenvector alignment in the supercritical phase: (1 - 1/theta^2)_+.
double bbp_overlap(double theta);
BbpPrediction bbp_window(const GaussianSeriesModel& m);

// bound = sigma_star^2 * rank(M) * ||M||, exact = ||S(M)||; exact <= bound.
struct SrankBound {
  double bound;
  double exact;
};
SrankBound srank_bound_check(const GaussianSeriesModel& m, const CMat& M);

// First-order sandwich for the top eigenvalue under a projection bump:
// (lmax(X) - lmax(X - tP))/t <= <v, P v> <= (lmax(X + tP) - lmax(X))/t.
struct OverlapSandwich {
  double lower = 0.0;
  double point = 0.0;
  double upper = 0.0;
  bool degenerate = false;  // top gap below 1e-12; eigenvector choice arbitrary
};
OverlapSandwich perturb_overlap(const CMat& x, const CMat& p, double t);

// Monte Carlo eigenvector-overlap estimate through the three-point trick:
// evaluates X, X + tP, X - tP on shared noise realizations, where P projects
// EX onto its eigenvalues in (theta - delta, theta].
struct ThreePointOverlap {
  double mean = 0.0;
  double stddev = 0.0;
  double band_center = 0.0;  // (1 - 1/theta^2)_+
  double band_radius = 0.0;  // t + 2*epsilon/t
  double epsilon = 0.0;      // max measured |lmax(X_s) - B(lmax(EX_s))|
  bool degenerate = false;
  std::vector<double> overlaps;  // one per trial
};
ThreePointOverlap three_point_overlap(const GaussianSeriesModel& m, double theta,
                                      double delta, double t, int trials,
                                      uint64_t seed);

// Keep the r largest-|eigenvalue| pairs of a self-adjoint matrix; the dropped
// remainder has operator norm tail_norm (the (r+1)-th singular value).
struct LowRankSplit {
  CMat truncated;
  double tail_norm = 0.0;
};
LowRankSplit low_rank_split(const CMat& a, int r);

}  // namespace freespec
