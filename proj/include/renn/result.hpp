#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "renn/table.hpp"

namespace renn {

/// Output of every approximate (and the exact) inference method.
struct InferenceResult {
  std::string method;
  std::vector<std::vector<double>> unary;    // b_i, n x K
  std::vector<BeliefTable> factor_beliefs;   // b_a, one per factor (unary factors included)
  std::vector<BeliefTable> region_beliefs;   // b_R, region-based methods only
  double free_energy = 0.0;                  // estimate of -log Z
  int iterations = 0;
  bool converged = false;
  bool warning = false;                      // inconsistency, clamped division, ...
  std::string note;
  double runtime_ms = 0.0;
};

class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_;
};

}  // namespace renn
