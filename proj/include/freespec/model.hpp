#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "freespec/rng.hpp"
#include "freespec/types.hpp"

namespace freespec {

// One self-adjoint coefficient matrix, stored as sparse triplets (every stored
// entry, both (r,c) and (c,r)).  Large structured models (band matrices, block
// models) have coefficients with O(1) entries each; dense storage would not fit.
class Coeff {
 public:
  struct Entry {
    int r, c;
    Complex v;
  };

  Coeff(int d, std::vector<Entry> entries, bool validate = true);
  static Coeff from_dense(const CMat& a);
  // Entries given for one triangle only; the mirror (c,r, conj v) is added.
  static Coeff from_pairs(int d, const std::vector<Entry>& upper);

  int dim() const { return d_; }
  const std::vector<Entry>& entries() const { return entries_; }
  int nnz() const { return static_cast<int>(entries_.size()); }

  CMat to_dense() const;
  void add_to(CMat& x, Complex scale) const;   // x += scale * A
  CVec apply(const CVec& x) const;             // A x
  void accumulate_conjugation(const CMat& m, CMat& out) const;  // out += A m A
  double frobenius_norm() const;

 private:
  int d_ = 0;
  std::vector<Entry> entries_;
  std::optional<CMat> dense_;  // cached when nnz is comparable to d*d
};

// X = A0 + sum_i g_i A_i with g_i i.i.d. standard Gaussian; all matrices
// d x d complex Hermitian.
class GaussianSeriesModel {
 public:
  GaussianSeriesModel(CMat a0, std::vector<Coeff> coeffs);
  static GaussianSeriesModel from_dense(const CMat& a0, const std::vector<CMat>& coeffs);

  int dim() const { return d_; }
  int num_coeffs() const { return static_cast<int>(coeffs_.size()); }
  const CMat& a0() const { return a0_; }
  const std::vector<Coeff>& coeffs() const { return coeffs_; }

 private:
  int d_;
  CMat a0_;
  std::vector<Coeff> coeffs_;
};

struct ModelParameters {
  double sigma_sq, sigma;
  double v_sq, v;
  double sigma_star_sq, sigma_star;
  double v_tilde;  // sqrt(v * sigma)
};

struct SpectrumSet {
  RVec eigenvalues;  // nondecreasing
};

struct Interval {
  double lo, hi;
};

struct SupportSet {
  std::vector<Interval> intervals;  // disjoint, sorted
  double edge_discrepancy = 0.0;    // |density edge - variational edge|, outer ends
  bool edge_warning = false;        // discrepancy exceeded 10*eta
};

// Rectangular (p x n, non-self-adjoint) series; only used as dilation input.
struct RectModel {
  CMat b0;
  std::vector<CMat> coeffs;
};

// Same mean/covariance as a Gaussian series but with bounded centered scalar
// weights: X = z0 + sum_i eps_i A_i, |eps_i| <= law bound, E eps = 0, E eps^2 = 1.
struct UniversalSummand {
  Coeff coeff;
  enum class Law { kRademacher, kUniform } law;
  double r_bound;  // a.s. bound on the summand's operator norm
};

struct UniversalModel {
  CMat z0;
  std::vector<UniversalSummand> summands;
};

CMat covariance_map(const GaussianSeriesModel& m, const CMat& M);
CMat cov_apply(const GaussianSeriesModel& m, const CMat& M);      // no validation, output re-hermitized
CMat cov_apply_raw(const GaussianSeriesModel& m, const CMat& M);  // no validation, exact sum (for resolvents)
ModelParameters compute_parameters(const GaussianSeriesModel& m);
CMat sample(const GaussianSeriesModel& m, uint64_t seed);
CMat sample_universal(const UniversalModel& m, uint64_t seed);
UniversalModel universal_rademacher(const GaussianSeriesModel& m);
SpectrumSet eigen_spectrum(const CMat& a);
GaussianSeriesModel dilate(const RectModel& rm);

double hausdorff_distance(const std::vector<Interval>& a, const std::vector<Interval>& b);
double hausdorff_distance(const SpectrumSet& a, const SpectrumSet& b);
double hausdorff_distance(const SpectrumSet& a, const SupportSet& b);
double hausdorff_distance(const SupportSet& a, const SupportSet& b);
std::vector<Interval> as_intervals(const SpectrumSet& s);

// Dense Hermitian eigen helpers shared across modules.
double lambda_max(const CMat& a);
double lambda_min(const CMat& a);
std::pair<double, CVec> top_eigenpair(const CMat& a);

// Entry-sparse structure detection: true when A0 is diagonal and every
// coefficient touches a single symmetric entry pair (or one diagonal entry).
// Fills a0_diag and the d x d profile V_kj = sum_i |A_i[k,j]|^2.
bool entrywise_structure(const GaussianSeriesModel& m, RVec* a0_diag, RMat* profile);

}  // namespace freespec
