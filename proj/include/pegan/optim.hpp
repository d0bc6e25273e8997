#ifndef PEGAN_OPTIM_HPP
#define PEGAN_OPTIM_HPP

#include <map>
#include <string>
#include <vector>

#include "pegan/archive.hpp"
#include "pegan/model.hpp"

namespace pegan {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Bias-corrected Adam with per-parameter moment and step state, keyed by
/// parameter name. Parameters that are not trainable, do not require a
/// gradient, or received no gradient in the last sweep are left untouched.
class Adam {
 public:
  explicit Adam(AdamOptions options = {});

  const AdamOptions& options() const { return options_; }
  void set_learning_rate(double lr);
  /// New hyperparameters; moment state is kept.
  void set_options(const AdamOptions& options);

  /// Throws NumericError naming the first parameter whose gradient is not
  /// finite; no parameter is modified in that case.
  void step(const std::vector<NamedTensor>& params);

  /// Archive entries `<prefix>.<param>.m`, `.v` and a `<prefix>.steps` document.
  void save(TensorArchive& archive, const std::string& prefix) const;
  void load(const TensorArchive& archive, const std::string& prefix);

  std::size_t steps_for(const std::string& name) const;

 private:
  struct Slot {
    Tensor m, v;
    std::size_t step = 0;
  };
  AdamOptions options_;
  std::map<std::string, Slot> slots_;
};

}  // namespace pegan

#endif  // PEGAN_OPTIM_HPP
