#include "pegan/optim.hpp"

#include <cmath>

namespace pegan {

namespace {

bool updatable(const NamedTensor& p) {
  return p.trainable && p.tensor.defined() && p.tensor.requires_grad() && p.tensor.has_grad();
}

}  // namespace

void AdamOptions::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning rate must be finite and >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0,1)");
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be > 0");
}

Adam::Adam(AdamOptions options) : options_(options) { options_.validate(); }

void Adam::set_learning_rate(double lr) {
  AdamOptions next = options_;
  next.learning_rate = lr;
  next.validate();
  options_ = next;
}

void Adam::set_options(const AdamOptions& options) {
  options.validate();
  options_ = options;
}

void Adam::step(const std::vector<NamedTensor>& params) {
  for (const auto& p : params)
    if (updatable(p) && !all_finite(p.tensor.grad()))
      throw NumericError("non-finite gradient for parameter '" + p.name + "'");

  const double b1 = options_.beta1, b2 = options_.beta2;
  for (const auto& p : params) {
    if (!updatable(p)) continue;
    Tensor param = p.tensor;
    auto [it, fresh] = slots_.try_emplace(p.name);
    Slot& slot = it->second;
    if (fresh || slot.m.shape() != param.shape()) {
      slot.m = Tensor(param.shape(), 0.0);
      slot.v = Tensor(param.shape(), 0.0);
      slot.step = 0;
    }
    ++slot.step;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(slot.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(slot.step));
    auto g = param.grad();
    auto m = slot.m.mutable_data();
    auto v = slot.v.mutable_data();
    auto w = param.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
  }
}

std::size_t Adam::steps_for(const std::string& name) const {
  auto it = slots_.find(name);
  return it == slots_.end() ? 0 : it->second.step;
}

void Adam::save(TensorArchive& archive, const std::string& prefix) const {
  nlohmann::json steps = nlohmann::json::object();
  for (const auto& [name, slot] : slots_) {
    archive.put(prefix + "." + name + ".m", slot.m);
    archive.put(prefix + "." + name + ".v", slot.v);
    steps[name] = slot.step;
  }
  archive.put_json(prefix + ".steps", nlohmann::json{{"steps", steps}, {"options", {
      {"learning_rate", options_.learning_rate},
      {"beta1", options_.beta1},
      {"beta2", options_.beta2},
      {"epsilon", options_.epsilon}}}});
}

void Adam::load(const TensorArchive& archive, const std::string& prefix) {
  if (!archive.contains_json(prefix + ".steps"))
    throw IoError("archive has no optimizer state '" + prefix + "'");
  const auto& doc = archive.get_json(prefix + ".steps");
  std::map<std::string, Slot> slots;
  AdamOptions options;
  try {
    const auto& o = doc.at("options");
    options.learning_rate = o.at("learning_rate").get<double>();
    options.beta1 = o.at("beta1").get<double>();
    options.beta2 = o.at("beta2").get<double>();
    options.epsilon = o.at("epsilon").get<double>();
    options.validate();
    for (const auto& [name, step] : doc.at("steps").items()) {
      Slot slot;
      slot.m = archive.get(prefix + "." + name + ".m");
      slot.v = archive.get(prefix + "." + name + ".v");
      slot.step = step.get<std::size_t>();
      slots.emplace(name, std::move(slot));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed optimizer state '" + prefix + "': " + e.what());
  }
  options_ = options;
  slots_ = std::move(slots);
}

}  // namespace pegan
