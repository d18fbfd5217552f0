#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rrl/model/config.hpp"
#include "rrl/numeric/gradcheck.hpp"

namespace rrl {

struct GradientSuiteEntry {
  std::string name;
  std::uint64_t seed = 0;
  GradientCheck check;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradientSuiteReport {
  std::vector<GradientSuiteEntry> entries;

  bool all_passed() const;
  double worst(const std::string& name) const;
  std::string csv() const;
};

// Small encoder (widths 4 and 8, one block per stage)
// that still yields the 14x14 feature grid, with K = 3.
ModelConfig tiny_model_config();

/// Finite-difference checks of L_glo, L_loc, L_corr and L_all with respect to
/// every coordinate of their inputs (tolerance 1e-5), and of L_all through the
/// tiny encoder composite along random unit directions in parameter space
/// (tolerance 1e-4), for seeds base_seed .. base_seed + seeds - 1. Transport
/// plans are held fixed at their value at the unperturbed point.
GradientSuiteReport run_gradient_suite(int seeds, std::uint64_t base_seed, bool with_composite = true,
                                       double composite_step = 1e-6);

}  // namespace rrl
