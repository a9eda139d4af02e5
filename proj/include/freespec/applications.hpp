#pragma once

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include <Eigen/SparseCore>

#include "freespec/block_model.hpp"
#include "freespec/model.hpp"

namespace freespec {

using SpMat = Eigen::SparseMatrix<double>;

// ---- subset combinatorics (co-lex order) ----

// Exact binomial coefficient as a double; 0 outside the triangle.
double binomial(int n, int k);

// Rank of a strictly increasing index set among all sets of the same size,
// in co-lexicographic order: rank = sum_i C(set[i], i+1).
std::int64_t subset_rank(const std::vector<int>& set);
std::vector<int> subset_unrank(std::int64_t rank, int k);

// ---- tensor PCA via the Kikuchi hierarchy ----

struct KikuchiParams {
  double k_star = 0;     // nonzeros per row; also the top-signal factor
  double sigma_sq = 0;   // E[(M - EM)^2] = sigma_sq * I
  double v_sq = 0;       // operator norm of the entry covariance
  double s1_factor = 0;  // s1(EM) = s1_factor * lambda
  double r = 0;          // rank cutoff: s_{r+1} <= (p/n) s_1
};
KikuchiParams kikuchi_params(int n, int p, int ell);

struct TensorPcaInstance {
  int n = 0;
  int p = 0;           // tensor order, even, >= 4
  int ell = 0;         // row subset size, p/2 <= ell < 3p/4
  double lambda = 0;   // signal strength
  RVec x;              // signal in {-1,+1}^n
  uint64_t seed = 0;
};

// Symmetric C(n,ell)-dimensional matrix with entry Y_{S xor T} wherever the
// symmetric difference has size p.  Throws ValidationError past dim_cap.
SpMat kikuchi_matrix(const TensorPcaInstance& inst, std::int64_t dim_cap = 200000);

struct KikuchiDecision {
  double statistic = 0;  // lambda_max(k_star^{-1/2} M)
  double threshold = 0;  // 2 + n^{-1/5}
  bool decision = false;
};
KikuchiDecision kikuchi_test(const SpMat& m, int n, int p, int ell);

// Coordinate-format export: one header line recording (n, p, ell, seed),
// then "row col value" per stored upper-triangle entry.
void kikuchi_export(std::ostream& os, const SpMat& m, const TensorPcaInstance& inst);

// ---- decoding a broadcast sign on a regular graph ----

struct RegularGraph {
  int d = 0;  // vertices
  int k = 0;  // degree
  std::vector<std::pair<int, int>> edges;  // i < j, sorted
};
// Periodic band: offsets 1..k/2 on a cycle; odd k needs even d and adds the
// antipodal chord.
RegularGraph circulant_band_graph(int d, int k);
// Uniform-ish simple k-regular graph: pairing model with switch repairs.
RegularGraph random_regular_graph(int d, int k, uint64_t seed);

struct GraphDecodingInstance {
  RegularGraph graph;
  double p = 0;  // flip probability, 0 <= p <= 1/2
  RVec x;        // labels in {-1,+1}^d
  uint64_t seed = 0;
};

struct DecodeBuild {
  RMat y;                 // observed signs on edges, 0 elsewhere
  RMat y_prime;           // y / sqrt(4 k p (1-p))
  double theta_prime = 0; // sqrt(k) (1-2p) / sqrt(4 p (1-p))
  bool theta_prime_infinite = false;  // p = 0: noiseless
};
DecodeBuild decode_build(const GraphDecodingInstance& inst);

// Randomized rounding of a unit vector to signs: coordinate i is an
// independent sign with mean (v_i sqrt(d) / c) 1{|v_i| sqrt(d) <= c},
// c = 2/sqrt(epsilon).
RVec decode_round(const RVec& v, double epsilon, uint64_t seed);

// ---- contextual stochastic block model (Gaussian surrogate) ----

struct CsbmInstance {
  int n = 0;       // nodes
  int p = 0;       // context dimension
  double lambda = 0;
  double mu = 0;
  RVec v;          // community labels in {-1,+1}^n
  uint64_t seed = 0;
};

struct CsbmBuild {
  RMat a;      // n x n:  (lambda/n) vv^T + GOE(1/n)
  RMat y;      // p x n:  sqrt(mu/n) u v^T + N(0, 1/n) entries
  RMat x_hat;  // (n+p) x (n+p) composite estimator matrix
};
CsbmBuild csbm_build(const CsbmInstance& inst);

struct CsbmSnr {
  double snr = 0;             // (lambda^2 + sqrt(lambda^4 + 4 mu^2/gamma)) / 2
  bool supercritical = false; // lambda^2 + mu^2/gamma > 1 (equivalent to snr > 1)
};
CsbmSnr csbm_snr(double lambda, double mu, double gamma);

struct CsbmEstimate {
  RVec v_hat;              // first n coordinates of the unit top eigenvector
  bool degenerate = false; // top gap below 1e-12; eigenvector choice arbitrary
  double gap = 0;
  double lambda_max = 0;   // top two eigenvalues of the lifted matrix
  double lambda_2 = 0;
};
CsbmEstimate csbm_estimate(const RMat& x_hat, int n);

// ---- spiked block-variance model ----

struct SpikedBlockBuild {
  CMat x;                // signal-plus-noise sample
  CMat x_null;           // same noise, no signal
  double snr_delta = 0;  // lambda_max(diag(c)^{1/2} (1/Delta) diag(c)^{1/2})
  BlockModelSpec spec;   // the equivalent block spec (B = 1/Delta, z = x)
};
SpikedBlockBuild spiked_block_build(const RMat& delta, const std::vector<int>& block_sizes,
                                    const RVec& x, uint64_t seed);

// ---- sample covariance with a rank-one covariance spike ----

struct ScovForms {
  double s = 0;        // norm of the sample covariance
  double h_plus = 0;   // largest eigenvalue of the estimation error
  double h_minus = 0;  // smallest eigenvalue of the estimation error
};
// Piecewise limits with branch points sqrt(delta), 1 +- sqrt(delta).
ScovForms scov_closed_forms(double lambda, double delta);
// One-dimensional suprema over the mixing weight pi (the delta-limit forms).
ScovForms scov_pi_forms(double lambda, double delta);
// Exact finite-(n,p) variational values for an arbitrary covariance spectrum.
ScovForms scov_variational(const RVec& mu_spectrum, int n);

// Sample covariance (1/n) X X^T for Sigma = I + lambda e1 e1^T.
RMat scov_sample(int n, int p, double lambda, uint64_t seed);

}  // namespace freespec
