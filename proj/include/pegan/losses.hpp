#ifndef PEGAN_LOSSES_HPP
#define PEGAN_LOSSES_HPP

#include <array>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pegan/tensor.hpp"

namespace pegan {

struct LossWeights {
  double adv = 1.0;
  double l1 = 100.0;
  double perp = 1.0;
  double cate = 1.0;

  void validate() const;
};

/// Per-tap weights of the perceptual loss, shallow to deep.
struct PerceptualLayerWeights {
  std::array<double, 5> lambda{1.0, 1.0, 1.0, 1.0, 10.0};

  void validate() const;
};

enum class AdversarialForm { minimax, non_saturating };

AdversarialForm parse_adversarial_form(const std::string& name);
std::string to_string(AdversarialForm form);

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

/// Log arguments are clamped at this value.
inline constexpr double kLogClamp = 1e-12;

/// -[mean log D(x) + mean log(1 - D(G(z)))]. Inputs must lie in [0,1].
Tensor adv_loss_d(const Tensor& real_prob_on_x, const Tensor& real_prob_on_gz);

/// minimax: mean log(1 - D(G(z))); non_saturating: -mean log D(G(z)).
Tensor adv_loss_g(const Tensor& real_prob_on_gz, AdversarialForm form = AdversarialForm::non_saturating);

/// Mean absolute difference.
Tensor l1_loss(const Tensor& x, const Tensor& g);

/// Sigmoid cross entropy of [B,N] logits against one-hot targets, averaged
/// over batch and classes. Uses max(l,0) - l*y + log(1 + exp(-|l|)).
Tensor category_loss(const Tensor& category_logits, std::span<const int> targets);
Tensor category_loss(const Tensor& category_logits, int target);

/// sum_l lambda_l * mean|phi_l(x) - phi_l(g)| over the five taps.
Tensor perceptual_loss(const std::vector<Tensor>& features_x, const std::vector<Tensor>& features_g,
                       const PerceptualLayerWeights& weights = {});

/// w_adv*adv + w_l1*l1 + w_perp*perp + w_cate*cate. Throws NumericError if a
/// component is not finite.
Tensor total_generator_loss(const Tensor& adv, const Tensor& l1, const Tensor& perp,
                            const Tensor& cate, const LossWeights& weights = {});

}  // namespace pegan

#endif  // PEGAN_LOSSES_HPP
