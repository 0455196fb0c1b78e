#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "htcan/tensor.hpp"

namespace htcan::verify {

struct GradcheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::string worst;  // input with the largest error
  std::int64_t entries = 0;
  bool pass = false;
};

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;     // networks
  double op_tolerance = 1e-5;  // single primitives
  double floor = 1e-6;          // denominator floor of the relative error
  std::int64_t max_entries = 0;  // per input; 0 checks every entry
  std::uint64_t seed = 0;        // picks the entries when subsampling
};

struct NamedInput {
  std::string name;
  Tensor<double> tensor;
};

/// Compares tape gradients of the scalar `loss()` against central
/// differences. Per input: max|analytic - numeric| / max(max|analytic|,
/// max|numeric|, floor); the result keeps the worst input.
GradcheckResult gradcheck(const std::string& name, const std::vector<NamedInput>& inputs,
                          const std::function<Tensor<double>()>& loss,
                          const GradcheckOptions& opts = {});

/// Every differentiable primitive plus tiny stage-1 and stage-2 networks
/// with randomized weights.
std::vector<GradcheckResult> gradcheck_suite(std::uint64_t seed, const GradcheckOptions& opts = {});

std::string format_gradcheck_table(const std::vector<GradcheckResult>& results);

}  // namespace htcan::verify
