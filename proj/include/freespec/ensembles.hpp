#pragma once

#include "freespec/model.hpp"

namespace freespec {

// Flat ensemble: every entry (diagonal included) has variance 1/d, so
// E[(X - EX)^2] = I exactly.
GaussianSeriesModel unit_iso_model(int d);

// Band ensemble: entries on |i - j| <= half_width, each with variance 1/k,
// k = 2*half_width + 1 (the interior row count), so sigma = 1.
GaussianSeriesModel band_model(int d, int half_width);

// Same model with the mean shifted by theta * v v*.
GaussianSeriesModel add_spike(const GaussianSeriesModel& m, double theta, const CVec& v);

}  // namespace freespec
