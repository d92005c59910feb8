// Times the OpenMP kernel-matrix builder against a naive serial entry loop
// (per-entry norm recomputation, no threading) and reports the numerical gap.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gpens/kernel.hpp"
#include "gpens/types.hpp"

using namespace gpens;

namespace {

Mat random_points(Rng& rng, Eigen::Index n, Eigen::Index d) {
  Mat X(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = rng.normal();
  return X;
}

double kval(const KernelParams& p, const Vec& x, const Vec& y) {
  const double nx = std::sqrt(x.dot(x));
  const double ny = std::sqrt(y.dot(y));
  const double d = std::sqrt((x - y).dot(x - y));
  return p.sigma * p.sigma * (1.0 + p.alpha * nx) * (1.0 + p.alpha * ny) / (1.0 + d / p.beta);
}

double now() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 3;
  if (reps < 1) {
    std::fprintf(stderr, "usage: %s [reps]\n", argv[0]);
    return 2;
  }

#ifdef _OPENMP
  std::printf("openmp: %d threads\n", omp_get_max_threads());
#else
  std::printf("openmp: disabled at build time\n");
#endif

  KernelParams p;
  p.sigma = 0.8;
  p.alpha = 0.3;
  p.beta = 4.0;
  p.noise_var = 1e-10;

  Rng rng(1);
  bool sane = true;
  std::printf("%8s %6s | %12s %12s %9s | %s\n", "n", "d", "naive ms", "library ms", "speedup",
              "max |diff|");
  for (const Eigen::Index n : {128, 256, 512, 1024, 2048}) {
    const Eigen::Index d = 15;
    const Mat X = random_points(rng, n, d);

    double naive_best = 1e300, lib_best = 1e300, diff = 0.0;
    for (int r = 0; r < reps; ++r) {
      double t0 = now();
      Mat ref(n, n);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
          ref(i, j) = kval(p, X.row(i).transpose(), X.row(j).transpose());
      naive_best = std::min(naive_best, now() - t0);

      t0 = now();
      const Mat K = kernel_matrix(p, X, X);
      lib_best = std::min(lib_best, now() - t0);

      diff = std::max(diff, (K - ref).cwiseAbs().maxCoeff());
    }
    std::printf("%8td %6td | %12.2f %12.2f %8.2fx | %.3g\n", n, d, naive_best * 1e3,
                lib_best * 1e3, naive_best / lib_best, diff);
    sane = sane && diff < 1e-10;
  }
  return sane ? 0 : 1;
}
