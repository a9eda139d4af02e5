#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "freespec/model.hpp"
#include "freespec/types.hpp"

namespace freespec {

// Signal-plus-noise symmetric matrix with a block-constant variance profile
// B/d and diagonal compensation, over a partition of [d] into contiguous
// blocks.  B must be symmetric, entrywise nonnegative, and irreducible.
struct BlockModelSpec {
  std::vector<int> block_sizes;  // each > 1, summing to d
  RMat b;                        // q x q
  RVec z;                        // d-vector, per block sum of squares = block size

  int q() const { return static_cast<int>(block_sizes.size()); }
  int dim() const;
  RVec weights() const;  // c_k = |C_k| / d
  void validate() const;
};

BlockModelSpec block_spec_from_json(const std::string& text);
std::string block_spec_to_json(const BlockModelSpec& spec);

// Element (M, v) of the invariant subalgebra, representing
// A(M, v) = sum_kl M_kl f_k f_l^* + sum_k v_k P_k.
struct AlgebraElement {
  CMat m;  // q x q
  CVec v;  // q
};

struct ReducedSolution {
  double value = 0;       // lambda or lambda_0
  RVec v_star;            // positive q-vector
  double kkt1_residual = 0;  // sup-norm defect of the equalized stationarity system
  double kkt2_value = 0;     // spectral side condition (zero or nonpositive at optimum)
  bool converged = false;
};

struct PhaseReport {
  double snr = 0;      // lambda_max(diag(c)^{1/2} B diag(c)^{1/2})
  double lambda = 0;   // signal model edge
  double lambda0 = 0;  // null model edge
  char phase = '?';    // 'a': lambda = lambda0 < 1, 'b': both = 1, 'c': lambda0 < lambda = 1
  double lambda0_bound = 0;
  double error_radius = 0;  // sqrt(8 ||B 1||_inf / d)
  RVec perron_b;
};

GaussianSeriesModel build_block_model(const BlockModelSpec& spec, bool include_signal);

// Same distribution as sample(build_block_model(spec, include_signal), seed),
// entry for entry, without materializing the d(d+1)/2 coefficients.
CMat block_sample(const BlockModelSpec& spec, bool include_signal, uint64_t seed);

CMat algebra_embed(const BlockModelSpec& spec, const AlgebraElement& elem);
AlgebraElement mean_in_algebra(const BlockModelSpec& spec);
AlgebraElement variance_map_reduced(const BlockModelSpec& spec, const AlgebraElement& elem);

ReducedSolution reduced_lambda0(const BlockModelSpec& spec);
ReducedSolution reduced_lambda(const BlockModelSpec& spec);
PhaseReport phase_classify(const BlockModelSpec& spec);

// Edge of the rank-one-tilted model: the spectral max-term uses B + t 11^T
// while the coordinate term keeps B.  lambda_t(spec, 0) == reduced_lambda.
double lambda_t(const BlockModelSpec& spec, double t);

// Difference quotients ((l0 - l_{-t})/t, (l_t - l0)/t); a positive lower
// value predicts asymptotically positive overlap with the signal.
std::pair<double, double> overlap_slope(const BlockModelSpec& spec, double t);

}  // namespace freespec
