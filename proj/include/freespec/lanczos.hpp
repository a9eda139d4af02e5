#pragma once

#include <cstdint>
#include <functional>

#include "freespec/types.hpp"

namespace freespec {

struct LanczosOptions {
  double tol = 1e-8;
  int max_iter = 300;   // Krylov dimension cap per start
  int num_starts = 3;
  uint64_t seed = 0;
};

struct LanczosResult {
  RVec values;   // top-k Ritz values, descending
  RMat vectors;  // n x k, orthonormal
  int iterations = 0;
  bool converged = false;
};

// Top-k eigenpairs of a real symmetric operator given only matrix-vector
// products.  Full reorthogonalization; several random starts, best kept, with
// an early exit once two starts agree.  Small problems fall back to a dense
// solve of the operator applied to the standard basis.
LanczosResult lanczos_topk(const std::function<RVec(const RVec&)>& apply, int n, int k,
                           const LanczosOptions& opts = {});

}  // namespace freespec
