#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "aal/tensor.hpp"

namespace aal {

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, Tensor<T>>>;

struct GradcheckOptions {
  // 2^-20 (about 0.95e-6): a power of two, so x +- step is exact.
  double step = 0x1p-20;
  double threshold = 1e-5;
  // Check at most this many entries per parameter (evenly strided); 0 = all.
  std::size_t max_entries_per_param = 0;
};

struct GradcheckReport {
  std::string name;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  bool passed = false;
};

/// Compares reverse-mode gradients of the scalar `loss` against central
/// differences with the given step. The error of one entry is
/// |analytic - numeric| / max(1, |analytic|, |numeric|), i.e. relative for
/// gradients above one and absolute below. `loss` is re-evaluated for every
/// perturbation and must be deterministic. Throws NumericError when the loss
/// is not finite.
GradcheckReport gradcheck(const std::string& name, const std::function<Tensor<double>()>& loss,
                          NamedTensors<double> params, const GradcheckOptions& options = {});

}  // namespace aal
