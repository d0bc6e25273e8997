#include "pegan/losses.hpp"

#include <algorithm>
#include <cmath>

#include "json_util.hpp"
#include "pegan/ops.hpp"

namespace pegan {

namespace {

void require_probabilities(const char* op, const Tensor& p) {
  for (double v : p.data())
    if (!(v >= 0.0 && v <= 1.0))
      throw DomainError(std::string(op) + ": probability " + std::to_string(v) +
                        " outside [0,1]");
}

// mean(log(clamp(p))) or mean(log(clamp(1-p))) with the matching gradient.
Tensor mean_log(const char* op, const Tensor& p, bool complement) {
  require_probabilities(op, p);
  const double n = static_cast<double>(p.numel());
  double total = 0.0;
  for (double v : p.data()) total += std::log(std::max(complement ? 1.0 - v : v, kLogClamp));
  return make_result(op, Shape{1}, {total / n}, {p}, [p, n, complement](std::span<const double> g) {
    if (!p.requires_grad()) return;
    auto gp = grad_accumulator(p);
    auto v = p.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double arg = complement ? 1.0 - v[i] : v[i];
      if (arg <= kLogClamp) continue;
      gp[i] += g[0] / n * (complement ? -1.0 / arg : 1.0 / arg);
    }
  });
}

}  // namespace

void LossWeights::validate() const {
  for (double w : {adv, l1, perp, cate})
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
}

void PerceptualLayerWeights::validate() const {
  for (double w : lambda)
    if (!(w >= 0.0) || !std::isfinite(w))
      throw ConfigError("perceptual layer weights must be finite and >= 0");
}

AdversarialForm parse_adversarial_form(const std::string& name) {
  if (name == "minimax") return AdversarialForm::minimax;
  if (name == "non_saturating") return AdversarialForm::non_saturating;
  throw ConfigError("unknown adversarial formulation '" + name +
                    "' (expected minimax or non_saturating)");
}

std::string to_string(AdversarialForm form) {
  return form == AdversarialForm::minimax ? "minimax" : "non_saturating";
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = nlohmann::json{{"adv", w.adv}, {"l1", w.l1}, {"perp", w.perp}, {"cate", w.cate}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  const std::string s = "train.loss_weights";
  json_util::reject_unknown_keys(j, {"adv", "l1", "perp", "cate"}, s);
  json_util::read(j, "adv", w.adv, s);
  json_util::read(j, "l1", w.l1, s);
  json_util::read(j, "perp", w.perp, s);
  json_util::read(j, "cate", w.cate, s);
}

Tensor adv_loss_d(const Tensor& real_prob_on_x, const Tensor& real_prob_on_gz) {
  Tensor real_term = mean_log("adv_loss_d", real_prob_on_x, false);
  Tensor fake_term = mean_log("adv_loss_d", real_prob_on_gz, true);
  return scale(add(real_term, fake_term), -1.0);
}

Tensor adv_loss_g(const Tensor& real_prob_on_gz, AdversarialForm form) {
  if (form == AdversarialForm::minimax) return mean_log("adv_loss_g", real_prob_on_gz, true);
  return scale(mean_log("adv_loss_g", real_prob_on_gz, false), -1.0);
}

Tensor l1_loss(const Tensor& x, const Tensor& g) {
  if (x.shape() != g.shape())
    throw ShapeError("l1_loss: shape mismatch " + shape_str(x.shape()) + " vs " +
                     shape_str(g.shape()));
  auto a = x.data(), b = g.data();
  const double n = static_cast<double>(a.size());
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return make_result("l1_loss", Shape{1}, {total / n}, {x, g}, [x, g, n](std::span<const double> grad) {
    auto a = x.data(), b = g.data();
    const double k = grad[0] / n;
    for (int side = 0; side < 2; ++side) {
      const Tensor& t = side == 0 ? x : g;
      if (!t.requires_grad()) continue;
      auto gt = grad_accumulator(t);
      const double sign = side == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        gt[i] += sign * k * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
      }
    }
  });
}

Tensor category_loss(const Tensor& category_logits, std::span<const int> targets) {
  if (category_logits.rank() != 2)
    throw ShapeError("category_loss: logits must be [B,N], got " +
                     shape_str(category_logits.shape()));
  const auto batch = category_logits.dim(0), classes = category_logits.dim(1);
  if (targets.size() != batch)
    throw ShapeError("category_loss: " + std::to_string(targets.size()) + " targets for batch of " +
                     std::to_string(batch));
  for (int t : targets)
    if (t < 0 || static_cast<std::size_t>(t) >= classes)
      throw LookupError("category_loss: target " + std::to_string(t) + " outside " +
                        std::to_string(classes) + " categories");
  std::vector<int> tgt(targets.begin(), targets.end());
  auto z = category_logits.data();
  const double n = static_cast<double>(z.size());
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < classes; ++j) {
      const double l = z[b * classes + j];
      const double y = static_cast<int>(j) == tgt[b] ? 1.0 : 0.0;
      total += std::max(l, 0.0) - l * y + std::log1p(std::exp(-std::abs(l)));
    }
  return make_result("category_loss", Shape{1}, {total / n}, {category_logits},
                     [category_logits, tgt = std::move(tgt), classes, n](std::span<const double> g) {
                       if (!category_logits.requires_grad()) return;
                       auto gz = grad_accumulator(category_logits);
                       auto z = category_logits.data();
                       for (std::size_t i = 0; i < z.size(); ++i) {
                         const double y = static_cast<int>(i % classes) == tgt[i / classes] ? 1.0 : 0.0;
                         const double s = z[i] >= 0 ? 1.0 / (1.0 + std::exp(-z[i]))
                                                    : std::exp(z[i]) / (1.0 + std::exp(z[i]));
                         gz[i] += g[0] / n * (s - y);
                       }
                     });
}

Tensor category_loss(const Tensor& category_logits, int target) {
  const std::vector<int> targets(category_logits.rank() == 2 ? category_logits.dim(0) : 0, target);
  return category_loss(category_logits, targets);
}

Tensor perceptual_loss(const std::vector<Tensor>& features_x, const std::vector<Tensor>& features_g,
                       const PerceptualLayerWeights& weights) {
  if (features_x.size() != 5 || features_g.size() != 5)
    throw ShapeError("perceptual_loss: expected 5 feature maps per image, got " +
                     std::to_string(features_x.size()) + " and " + std::to_string(features_g.size()));
  weights.validate();
  Tensor total;
  for (std::size_t l = 0; l < 5; ++l) {
    Tensor term = scale(l1_loss(features_x[l], features_g[l]), weights.lambda[l]);
    total = l == 0 ? term : add(total, term);
  }
  return total;
}

Tensor total_generator_loss(const Tensor& adv, const Tensor& l1, const Tensor& perp,
                            const Tensor& cate, const LossWeights& weights) {
  const char* names[] = {"adversarial", "L1", "perceptual", "category"};
  const Tensor* parts[] = {&adv, &l1, &perp, &cate};
  for (int i = 0; i < 4; ++i) {
    if (parts[i]->numel() != 1) throw ShapeError(std::string(names[i]) + " loss must be a scalar");
    if (!std::isfinite(parts[i]->item()))
      throw NumericError(std::string("non-finite ") + names[i] + " loss component");
  }
  weights.validate();
  // left to right, the same rounding as w_adv*a + w_l1*l + w_perp*p + w_cate*c
  return add(add(add(scale(adv, weights.adv), scale(l1, weights.l1)), scale(perp, weights.perp)),
             scale(cate, weights.cate));
}

}  // namespace pegan
