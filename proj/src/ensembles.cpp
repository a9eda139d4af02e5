#include "freespec/ensembles.hpp"

#include <cmath>

namespace freespec {

GaussianSeriesModel unit_iso_model(int d) {
  std::vector<Coeff> cs;
  double s = 1.0 / std::sqrt(static_cast<double>(d));
  for (int i = 0; i < d; ++i) {
    cs.push_back(Coeff::from_pairs(d, {{i, i, s}}));
    for (int j = i + 1; j < d; ++j) cs.push_back(Coeff::from_pairs(d, {{i, j, s}}));
  }
  return GaussianSeriesModel(CMat::Zero(d, d), std::move(cs));
}

GaussianSeriesModel band_model(int d, int half_width) {
  if (half_width < 0 || half_width >= d) throw ValidationError("band_model: bad half width");
  int k = 2 * half_width + 1;
  double s = 1.0 / std::sqrt(static_cast<double>(k));
  std::vector<Coeff> cs;
  for (int i = 0; i < d; ++i) {
    cs.push_back(Coeff::from_pairs(d, {{i, i, s}}));
    for (int j = i + 1; j < d && j <= i + half_width; ++j)
      cs.push_back(Coeff::from_pairs(d, {{i, j, s}}));
  }
  return GaussianSeriesModel(CMat::Zero(d, d), std::move(cs));
}

GaussianSeriesModel add_spike(const GaussianSeriesModel& m, double theta, const CVec& v) {
  if (v.size() != m.dim()) throw ValidationError("add_spike: dimension mismatch");
  CMat a0 = m.a0() + theta * (v * v.adjoint());
  return GaussianSeriesModel(a0, m.coeffs());
}

}  // namespace freespec
