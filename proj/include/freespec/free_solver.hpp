#pragma once

#include "freespec/model.hpp"

namespace freespec {

struct LehnerOptions {
  double tol = 1e-8;       // absolute tolerance on the final objective decrease
  int max_iter = 400;      // gradient iterations per annealing stage
  double temp_hi = 1e-1;   // log-sum-exp smoothing temperature range,
  double temp_lo = 1e-6;   // annealed geometrically; units of sigma
  int polish_sweeps = 5;   // stationarity fixed-point sweeps after annealing
};

struct LehnerSolution {
  double value = 0;        // lambda_max of EX + M^-1 + S(M) at the minimizer
  CMat minimizer;          // positive definite M
  int iterations = 0;
  double objective_residual = 0;  // magnitude of the final accepted decrease
  double kkt_residual = 0;        // |S(W) - M^-1 W M^-1|_F / (1 + |S(W)|_F)
  bool converged = false;
};

// inf over M > 0 of lambda_max(EX + M^-1 + S(M)): the largest point of the
// deterministic spectrum.  Requires n >= 1 (at least one coefficient).
LehnerSolution lehner_max(const GaussianSeriesModel& m, const LehnerOptions& opts = {});
// Smallest point, via negation of the mean.
LehnerSolution lehner_min(const GaussianSeriesModel& m, const LehnerOptions& opts = {});

struct MdeOptions {
  double tol = 1e-10;  // Frobenius norm of G - (z - A0 - S(G))^-1
  int max_iter = 200000;
};

// Self-consistent resolvent: G = (z - A0 - S(G))^-1, Im z > 0.
CMat mde_resolvent(const GaussianSeriesModel& m, Complex z, const MdeOptions& opts = {});

struct MdeSolution {
  RVec grid;
  double eta = 0;
  RVec density;
  RVec resolvent_residuals;
};

// rho(x) = -(1/pi) Im tr G(x + i eta), normalized trace, on `steps` grid
// points spanning [x_lo, x_hi].  eta <= 0 selects the default 1e-4 * sigma.
MdeSolution free_density(const GaussianSeriesModel& m, double x_lo, double x_hi, int steps,
                         double eta = -1.0);

// Maximal intervals where the eta-smoothed density exceeds the threshold,
// endpoints refined by bisection to 1e-6; components closer than 4*eta are
// merged; outer endpoints are cross-checked against the variational edges.
// Defaults (argument <= 0): eta = 1e-4 * sigma, threshold = 5e-3 / sigma.
SupportSet free_support(const GaussianSeriesModel& m, double eta = -1.0,
                        double density_threshold = -1.0);

// k-th spectral moment of the deterministic model, k even, by adaptive
// quadrature of x^k rho(x) over the detected support.
double free_moment(const GaussianSeriesModel& m, int k);

}  // namespace freespec
