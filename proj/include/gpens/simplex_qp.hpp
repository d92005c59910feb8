#pragma once

#include "gpens/types.hpp"

namespace gpens {

/// Euclidean projection onto the probability simplex {w : w >= 0, sum w = 1},
/// via the sort-based threshold algorithm.
Vec project_simplex(const Vec& v);

struct SimplexQPOptions {
  int max_iters = 100000;
  double tol = 1e-10;  // stop when the KKT residual falls below this
};

struct SimplexQPResult {
  Vec w;
  double kkt_residual = 0.0;  // ||w - project(w - (Qw - b))||_inf at the solution
  int iterations = 0;
  bool converged = false;
};

/// Minimize 0.5 w'Qw - b'w over the simplex by accelerated projected gradient
/// (momentum with gradient-based restarts), step size from a power-iteration
/// estimate of ||Q||_2. Q is symmetrized internally; it should be PSD up to
/// rounding. A (near-)zero Q degenerates to a linear program whose solution is
/// a vertex at argmax b (uniform when b is constant); that case is returned
/// directly.
SimplexQPResult solve_simplex_qp(const Mat& Q, const Vec& b,
                                 const SimplexQPOptions& opts = {});

}  // namespace gpens
