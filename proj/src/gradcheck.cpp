#include "pegan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>

#include "pegan/losses.hpp"
#include "pegan/model.hpp"
#include "pegan/ops.hpp"

namespace pegan {

namespace {

constexpr double kKinkMargin = 0.05;

Tensor random_leaf(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v)).set_requires_grad(true);
}

// Random values kept kKinkMargin away from zero, for piecewise-linear ops.
Tensor away_from_zero(Shape shape, Rng& rng) {
  Tensor t = random_leaf(std::move(shape), rng);
  for (auto& x : t.mutable_data()) x = x < 0 ? x - kKinkMargin : x + kKinkMargin;
  return t;
}

// Distinct values 0.01 apart in random order, so max pooling has no ties.
Tensor distinct_leaf(Shape shape, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = -1.0 + 0.01 * static_cast<double>(i);
  std::shuffle(v.begin(), v.end(), rng);
  return Tensor(std::move(shape), std::move(v)).set_requires_grad(true);
}

Tensor fixed(Shape shape, Rng& rng) {
  Tensor t = random_leaf(std::move(shape), rng);
  t.set_requires_grad(false);
  return t;
}

// Generic scalar objective <out, R> for a primitive with output shape `shape`.
std::function<Tensor()> projected(std::function<Tensor()> op, Rng& rng) {
  const Tensor probe = op();
  const Tensor weights = fixed(probe.shape(), rng);
  return [op = std::move(op), weights] { return sum(mul(op(), weights)); };
}

std::vector<std::size_t> sample_entries(std::size_t numel, std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(numel);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(count, numel));
  std::sort(idx.begin(), idx.end());
  return idx;
}

void add_case(std::vector<GradCheckResult>& out, const GradCheckOptions& o, const std::string& name,
              std::function<Tensor()> op, std::vector<Tensor> leaves, Rng& rng) {
  out.push_back(check_gradients(name, projected(std::move(op), rng), std::move(leaves), {}, o));
}

void primitive_cases(std::vector<GradCheckResult>& out, const GradCheckOptions& o, Rng& rng) {
  {
    Tensor a = random_leaf({2, 3}, rng), b = random_leaf({2, 3}, rng);
    add_case(out, o, "add", [=] { return add(a, b); }, {a, b}, rng);
    add_case(out, o, "sub", [=] { return sub(a, b); }, {a, b}, rng);
    add_case(out, o, "mul", [=] { return mul(a, b); }, {a, b}, rng);
    add_case(out, o, "scale", [=] { return scale(a, -1.7); }, {a}, rng);
    add_case(out, o, "add_scalar", [=] { return add_scalar(a, 0.3); }, {a}, rng);
    add_case(out, o, "sum", [=] { return sum(a); }, {a}, rng);
    add_case(out, o, "mean", [=] { return mean(a); }, {a}, rng);
    add_case(out, o, "reshape", [=] { return reshape(a, {3, 2}); }, {a}, rng);
  }
  {
    Tensor a = away_from_zero({2, 3, 2, 2}, rng);
    add_case(out, o, "abs", [=] { return abs(a); }, {a}, rng);
    add_case(out, o, "relu", [=] { return relu(a); }, {a}, rng);
    add_case(out, o, "leaky_relu", [=] { return leaky_relu(a, 0.2); }, {a}, rng);
    add_case(out, o, "sigmoid", [=] { return sigmoid(a); }, {a}, rng);
    add_case(out, o, "tanh", [=] { return tanh(a); }, {a}, rng);
    add_case(out, o, "flatten", [=] { return flatten(a); }, {a}, rng);
  }
  {
    Tensor x = random_leaf({2, 2, 6, 6}, rng), k = random_leaf({3, 2, 3, 3}, rng);
    Tensor b = random_leaf({3}, rng);
    add_case(out, o, "conv2d", [=] { return conv2d(x, k, b, 1, 1); }, {x, k, b}, rng);
    Tensor k5 = random_leaf({3, 2, 5, 5}, rng);
    add_case(out, o, "conv2d (5x5, stride 2)", [=] { return conv2d(x, k5, b, 2, 2); }, {x, k5, b},
             rng);
  }
  {
    Tensor x = random_leaf({2, 3, 3, 3}, rng), k = random_leaf({3, 2, 5, 5}, rng);
    Tensor b = random_leaf({2}, rng);
    add_case(out, o, "conv2d_transpose",
             [=] { return conv2d_transpose(x, k, b, 2, 2, 1); }, {x, k, b}, rng);
  }
  {
    Tensor x = random_leaf({2, 3, 3, 3}, rng);
    Tensor g = random_leaf({3}, rng, 0.5, 1.5), be = random_leaf({3}, rng);
    auto state = std::make_shared<BatchNormState>(3);
    add_case(out, o, "batchnorm2d (train)",
             [=] { return batchnorm2d(x, g, be, *state, Mode::train); }, {x, g, be}, rng);
    auto frozen = std::make_shared<BatchNormState>(3);
    frozen->running_mean = Tensor({3}, std::vector<double>{0.1, -0.2, 0.3});
    frozen->running_var = Tensor({3}, std::vector<double>{0.5, 1.5, 2.0});
    add_case(out, o, "batchnorm2d (eval)",
             [=] { return batchnorm2d(x, g, be, *frozen, Mode::eval); }, {x, g, be}, rng);
  }
  {
    Tensor x = random_leaf({2, 3, 4, 4}, rng);
    add_case(out, o, "dropout", [=] {
      Rng mask(91);
      return dropout(x, 0.5, Mode::train, mask);
    }, {x}, rng);
    Tensor y = random_leaf({2, 2, 4, 4}, rng);
    add_case(out, o, "concat_channels", [=] { return concat_channels(x, y); }, {x, y}, rng);
    add_case(out, o, "slice_channels", [=] { return slice_channels(x, 1, 3); }, {x}, rng);
    add_case(out, o, "avg_downsample", [=] { return avg_downsample(x, 2); }, {x}, rng);
    Tensor d = distinct_leaf({2, 3, 4, 4}, rng);
    add_case(out, o, "max_pool2d", [=] { return max_pool2d(d, 2); }, {d}, rng);
  }
  {
    Tensor v = random_leaf({2, 3}, rng);
    add_case(out, o, "tile_spatial", [=] { return tile_spatial(v, 2, 3); }, {v}, rng);
    Tensor m = random_leaf({2, 5}, rng);
    add_case(out, o, "slice_columns", [=] { return slice_columns(m, 1, 4); }, {m}, rng);
    Tensor w = random_leaf({4, 5}, rng), b = random_leaf({4}, rng);
    add_case(out, o, "linear", [=] { return linear(m, w, b); }, {m, w, b}, rng);
    const std::vector<int> targets{3, 0};
    Tensor z = random_leaf({2, 4}, rng, -3, 3);
    out.push_back(check_gradients("softmax_cross_entropy",
                                  [=] { return softmax_cross_entropy(z, targets); }, {z}, {}, o));
  }
}

void loss_cases(std::vector<GradCheckResult>& out, const GradCheckOptions& o, Rng& rng) {
  Tensor pr = random_leaf({4, 1}, rng, 0.05, 0.95), pf = random_leaf({4, 1}, rng, 0.05, 0.95);
  out.push_back(check_gradients("adv_loss_d", [=] { return adv_loss_d(pr, pf); }, {pr, pf}, {}, o));
  out.push_back(check_gradients("adv_loss_g (minimax)",
                                [=] { return adv_loss_g(pf, AdversarialForm::minimax); }, {pf}, {},
                                o));
  out.push_back(check_gradients("adv_loss_g (non-saturating)",
                                [=] { return adv_loss_g(pf, AdversarialForm::non_saturating); },
                                {pf}, {}, o));
  Tensor x = random_leaf({2, 1, 3, 3}, rng);
  Tensor g = away_from_zero({2, 1, 3, 3}, rng);
  Tensor shifted = Tensor(x.shape(), 0.0).set_requires_grad(true);
  {
    auto s = shifted.mutable_data();
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = x.data()[i] + g.data()[i];
  }
  out.push_back(check_gradients("l1_loss", [=] { return l1_loss(x, shifted); }, {x, shifted}, {}, o));
  Tensor logits = random_leaf({3, 4}, rng, -3, 3);
  const std::vector<int> cats{1, 3, 0};
  out.push_back(
      check_gradients("category_loss", [=] { return category_loss(logits, cats); }, {logits}, {}, o));
  std::vector<Tensor> fx, fg, leaves;
  const Shape shapes[5] = {{1, 2, 4, 4}, {1, 2, 2, 2}, {1, 3, 2, 2}, {1, 3, 1, 1}, {1, 2, 1, 1}};
  for (const auto& s : shapes) {
    Tensor a = random_leaf(s, rng);
    Tensor b = away_from_zero(s, rng);
    auto bv = b.mutable_data();
    for (std::size_t i = 0; i < bv.size(); ++i) bv[i] += a.data()[i];
    fx.push_back(a);
    fg.push_back(b);
    leaves.push_back(a);
    leaves.push_back(b);
  }
  out.push_back(check_gradients("perceptual_loss", [=] { return perceptual_loss(fx, fg); }, leaves,
                                {}, o));
}

GeneratorConfig tiny_generator() {
  GeneratorConfig cfg;
  cfg.depth = 3;
  cfg.width = cfg.height = 16;
  cfg.encoder_channels = {4, 6, 8};
  cfg.embedding_dim = 4;
  cfg.num_categories = 2;
  // Wider initialisation than training uses, so every entry carries a
  // gradient well above the finite-difference noise floor.
  cfg.init_std = 0.2;
  return cfg;
}

void end_to_end_cases(std::vector<GradCheckResult>& out, const GradCheckOptions& o, Rng& rng) {
  Rng init(o.seed + 1);
  auto gen = std::make_shared<Generator>(tiny_generator(), init);
  DiscriminatorConfig dcfg;
  dcfg.channels = {4, 6, 8, 8};
  dcfg.init_std = 0.2;
  auto disc = std::make_shared<Discriminator>(dcfg, 16, 16, 2, init);
  PerceptionConfig pcfg;
  pcfg.stage_channels = {4, 4, 6, 6, 6};
  auto perception = std::make_shared<PerceptionNet>(PerceptionNet::random_fallback(pcfg));

  const Tensor z = fixed({2, 1, 16, 16}, rng);
  const Tensor x = fixed({2, 1, 16, 16}, rng);
  const std::vector<int> cats{0, 1};
  const auto features_x = perception->features(x);

  auto pick = [&](const std::vector<NamedTensor>& params, std::vector<Tensor>& leaves,
                  std::vector<std::vector<std::size_t>>& entries) {
    for (const auto& p : params) {
      if (!p.trainable || !p.tensor.requires_grad()) continue;
      leaves.push_back(p.tensor);
      entries.push_back(sample_entries(p.tensor.numel(), o.samples_per_tensor, rng));
    }
  };

  {
    std::vector<Tensor> leaves;
    std::vector<std::vector<std::size_t>> entries;
    pick(gen->parameters(), leaves, entries);
    for (auto& p : disc->parameters()) p.tensor.set_requires_grad(false);
    auto objective = [=] {
      Rng mask(17);
      Tensor fake = gen->generate(z, cats, Mode::train, mask);
      auto judged = disc->discriminate(fake, Mode::train);
      return total_generator_loss(adv_loss_g(judged.real_prob), l1_loss(x, fake),
                                  perceptual_loss(features_x, perception->features(fake)),
                                  category_loss(judged.category_logits, cats));
    };
    out.push_back(check_gradients("generator objective (depth 3, 16x16, N=2)", objective, leaves,
                                  entries, o));
    for (auto& p : disc->parameters()) p.tensor.set_requires_grad(true);
  }
  {
    std::vector<Tensor> leaves;
    std::vector<std::vector<std::size_t>> entries;
    pick(disc->parameters(), leaves, entries);
    for (auto& p : gen->parameters()) p.tensor.set_requires_grad(false);
    Rng mask(23);
    const Tensor fake = gen->generate(z, cats, Mode::train, mask).detach();
    auto objective = [=] {
      auto on_real = disc->discriminate(x, Mode::train);
      auto on_fake = disc->discriminate(fake, Mode::train);
      return add(adv_loss_d(on_real.real_prob, on_fake.real_prob),
                 add(category_loss(on_real.category_logits, cats),
                     category_loss(on_fake.category_logits, cats)));
    };
    out.push_back(check_gradients("discriminator objective (16x16, N=2)", objective, leaves,
                                  entries, o));
    for (auto& p : gen->parameters()) p.tensor.set_requires_grad(true);
  }
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult check_gradients(const std::string& name, const std::function<Tensor()>& objective,
                                std::vector<Tensor> leaves,
                                const std::vector<std::vector<std::size_t>>& entries,
                                const GradCheckOptions& o) {
  for (auto& leaf : leaves) leaf.zero_grad();
  objective().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& leaf : leaves) {
    if (leaf.has_grad())
      analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
    else
      analytic.emplace_back(leaf.numel(), 0.0);
    leaf.zero_grad();
  }

  GradCheckResult result;
  result.name = name;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    std::vector<std::size_t> idx;
    if (l < entries.size() && !entries[l].empty()) {
      idx = entries[l];
    } else {
      idx.resize(leaves[l].numel());
      std::iota(idx.begin(), idx.end(), 0);
    }
    for (std::size_t i : idx) {
      auto data = leaves[l].mutable_data();
      const double original = data[i];
      data[i] = original + o.step;
      const double up = objective().item();
      data[i] = original - o.step;
      const double down = objective().item();
      data[i] = original;
      const double numeric = (up - down) / (2 * o.step);
      result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[l][i], numeric));
      ++result.entries;
    }
  }
  result.passed = result.max_rel_error < o.tolerance;
  return result;
}

std::vector<GradCheckResult> run_gradcheck_suite(const GradCheckOptions& o) {
  Rng rng(o.seed);
  std::vector<GradCheckResult> results;
  primitive_cases(results, o, rng);
  loss_cases(results, o, rng);
  if (o.include_end_to_end) end_to_end_cases(results, o, rng);
  return results;
}

void print_gradcheck_table(const std::vector<GradCheckResult>& results, std::ostream& out) {
  std::size_t width = 9;
  for (const auto& r : results) width = std::max(width, r.name.size());
  char line[256];
  std::snprintf(line, sizeof line, "%-*s %8s %14s  %s\n", static_cast<int>(width), "primitive",
                "entries", "max rel err", "result");
  out << line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-*s %8zu %14.3e  %s\n", static_cast<int>(width),
                  r.name.c_str(), r.entries, r.max_rel_error, r.passed ? "PASS" : "FAIL");
    out << line;
  }
}

}  // namespace pegan
