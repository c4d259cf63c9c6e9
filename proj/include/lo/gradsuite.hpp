#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lo/network.hpp"

namespace lo {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

// Finite-difference verification of every autodiff primitive plus the
// full reduced-width model end-to-end on an 8-point pair, all in 64-bit.
// quick mode trims the instance counts for interactive use.
std::vector<GradCheckResult> run_gradient_suite(bool quick = false,
                                                std::uint64_t seed = 7);

// Worst relative error between analytic parameter gradients of the pair
// loss and central differences, over every trainable coordinate.
double model_grad_check(const ModelConfig& cfg, std::uint64_t seed);

}  // namespace lo
