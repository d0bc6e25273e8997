#ifndef PEGAN_GRADCHECK_HPP
#define PEGAN_GRADCHECK_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pegan/tensor.hpp"

namespace pegan {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 5;
  /// Entries checked per parameter tensor in the end-to-end cases; the
  /// primitive cases check every entry.
  std::size_t samples_per_tensor = 3;
  bool include_end_to_end = true;
};

struct GradCheckResult {
  std::string name;
  std::size_t entries = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

/// Compares backward() of `objective` (a scalar, re-recorded on every call)
/// with central differences for the leaves. `entries[i]` lists the flat
/// indices checked in leaves[i]; an empty list means every entry.
GradCheckResult check_gradients(const std::string& name, const std::function<Tensor()>& objective,
                                std::vector<Tensor> leaves,
                                const std::vector<std::vector<std::size_t>>& entries,
                                const GradCheckOptions& options);

/// Every primitive and loss, then the end-to-end generator objective and
/// discriminator objective of a depth-3, 16x16, 2-category model.
std::vector<GradCheckResult> run_gradcheck_suite(const GradCheckOptions& options = {});

void print_gradcheck_table(const std::vector<GradCheckResult>& results, std::ostream& out);

}  // namespace pegan

#endif  // PEGAN_GRADCHECK_HPP
