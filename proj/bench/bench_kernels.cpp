// Compares the serial and OpenMP matmul kernels on training-shaped problems
// and verifies bitwise agreement while timing.

#include <chrono>
#include <functional>
#include <cstdio>
#include <vector>

#include "uvlm/kernels.hpp"
#include "uvlm/rng.hpp"

using namespace uvlm;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main() {
  struct Case {
    size_t m, k, n;
    const char* label;
  };
  // shapes taken from the toy model's hot paths
  const std::vector<Case> cases = {
      {36, 64, 64, "attn projection (T x d_h x d_h)"},
      {36, 64, 256, "ffn up (T x d_h x 4d_h)"},
      {36, 256, 64, "ffn down (T x 4d_h x d_h)"},
      {36, 64, 512, "tied head (T x d_h x V)"},
      {128, 128, 128, "square 128"},
      {256, 256, 256, "square 256"},
  };

  Rng rng(7);
  std::printf("%-34s %10s %10s %8s %8s\n", "case", "serial ms", "omp ms",
              "speedup", "bitwise");
  for (const Case& c : cases) {
    std::vector<double> a(c.m * c.k), b(c.k * c.n);
    for (double& v : a) v = rng.normal(0.0, 1.0);
    for (double& v : b) v = rng.normal(0.0, 1.0);
    std::vector<double> out_s(c.m * c.n), out_p(c.m * c.n);

    double ms_s = time_ms(
        [&] { kernels::matmul_serial(a.data(), b.data(), out_s.data(), c.m, c.k, c.n); },
        20);
    double ms_p = time_ms(
        [&] { kernels::matmul_omp(a.data(), b.data(), out_p.data(), c.m, c.k, c.n); },
        20);
    bool same = out_s == out_p;
    std::printf("%-34s %10.3f %10.3f %8.2fx %8s\n", c.label, ms_s, ms_p,
                ms_s / ms_p, same ? "yes" : "NO");
    if (!same) return 1;
  }
  return 0;
}
