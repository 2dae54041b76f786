#pragma once

#include <cstdint>
#include <vector>

#include "aal/gradcheck.hpp"

namespace aal {

/// Gradient checks at 64-bit for every differentiable primitive on small
/// random inputs, plus the student logits and the full training objective
/// (cross-entropy + lambda * attention loss over student and link
/// parameters) on a 2-sample toy batch. Each case projects its output onto a
/// fixed random tensor to get a scalar.
std::vector<GradcheckReport> gradcheck_suite(std::uint64_t seed = 0, const GradcheckOptions& options = {});

/// The full-objective case alone.
GradcheckReport gradcheck_objective(std::uint64_t seed = 0, const GradcheckOptions& options = {});

}  // namespace aal
