#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "parkbench/ad/tensor.hpp"

namespace parkbench::ad {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Norm-wise relative error ||a - b|| / max(||a|| + ||b||, 1e-12).
double relative_error(const std::vector<double>& a, const std::vector<double>& b);

/// Compares reverse-mode gradients of the scalar `f(inputs)` against central
/// differences with step `eps`, input by input; returns the worst relative error.
double check_gradients(const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
                       std::vector<Tensor<double>>& inputs, double eps = 1e-5);

/// Names of every registered op and loss check.
std::vector<std::string> gradcheck_registry();

/// Runs one registered check on random small shapes.
GradCheckResult run_gradcheck(const std::string& name, std::uint64_t seed = 1,
                              double tolerance = 1e-4);

}  // namespace parkbench::ad
