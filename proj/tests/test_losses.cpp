#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "loss_oracle.hpp"
#include "pegan/losses.hpp"
#include "test_util.hpp"

using namespace pegan;
using testutil::rand_tensor;

namespace {

Tensor probs(std::vector<double> v) {
  const auto n = v.size();
  return Tensor({n, 1}, std::move(v));
}

std::vector<double> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("published weights") {
  LossWeights w;
  CHECK(w.adv == 1.0);
  CHECK(w.l1 == 100.0);
  CHECK(w.perp == 1.0);
  CHECK(w.cate == 1.0);
  PerceptualLayerWeights p;
  CHECK(p.lambda == std::array<double, 5>{1, 1, 1, 1, 10});
  w.l1 = -1;
  CHECK_THROWS_AS(w.validate(), ConfigError);
}

TEST_CASE("adversarial losses") {
  CHECK(adv_loss_d(probs({0.5}), probs({0.5})).item() == doctest::Approx(2 * std::log(2.0)).epsilon(1e-15));
  CHECK(adv_loss_d(probs({1 - 1e-15}), probs({1e-15})).item() < 1e-12);
  CHECK(adv_loss_g(probs({0.5}), AdversarialForm::minimax).item() == doctest::Approx(std::log(0.5)));
  CHECK(adv_loss_g(probs({0.5}), AdversarialForm::non_saturating).item() == doctest::Approx(-std::log(0.5)));
  CHECK(adv_loss_g(probs({1.0})).item() == 0.0);
  CHECK(adv_loss_d(probs({0.0}), probs({1.0})).item() == doctest::Approx(-2 * std::log(1e-12)));
  CHECK_THROWS_AS(adv_loss_d(probs({1.2}), probs({0.5})), DomainError);
  CHECK_THROWS_AS(adv_loss_g(probs({-0.1})), DomainError);
  CHECK_THROWS_AS(adv_loss_g(probs({std::nan("")})), DomainError);

  std::mt19937_64 rng(1);
  Tensor pr = rand_tensor({16, 1}, rng, 0.001, 0.999), pf = rand_tensor({16, 1}, rng, 0.001, 0.999);
  CHECK(std::abs(adv_loss_d(pr, pf).item() - oracle::adv_d(pr.data(), pf.data())) < 1e-12);
  CHECK(std::abs(adv_loss_g(pf, AdversarialForm::minimax).item() - oracle::adv_g_minimax(pf.data())) < 1e-12);
  CHECK(std::abs(adv_loss_g(pf).item() - oracle::adv_g_nonsat(pf.data())) < 1e-12);
}

TEST_CASE("both generator forms push D(G(z)) up") {
  for (double p : {0.1, 0.5, 0.9}) {
    for (auto form : {AdversarialForm::minimax, AdversarialForm::non_saturating}) {
      Tensor t = probs({p});
      t.set_requires_grad(true);
      adv_loss_g(t, form).backward();
      const double h = 1e-6;
      const double num = (adv_loss_g(probs({p + h}), form).item() - adv_loss_g(probs({p - h}), form).item()) / (2 * h);
      CHECK(t.grad()[0] < 0);
      CHECK(num < 0);
      CHECK(testutil::rel_err(t.grad()[0], num) < 1e-5);
    }
  }
}

TEST_CASE("l1") {
  Tensor ones({2, 1, 3, 3}, 1.0), neg({2, 1, 3, 3}, -1.0);
  CHECK(l1_loss(ones, ones).item() == 0.0);
  CHECK(l1_loss(ones, neg).item() == 2.0);
  std::mt19937_64 rng(2);
  Tensor x = rand_tensor({3, 1, 4, 4}, rng), g = rand_tensor({3, 1, 4, 4}, rng);
  CHECK(std::abs(l1_loss(x, g).item() - oracle::l1(x.data(), g.data())) < 1e-12);
  CHECK(l1_loss(x, g).item() == l1_loss(g, x).item());
  CHECK_THROWS_AS(l1_loss(x, Tensor({3, 1, 4, 5})), ShapeError);
}

TEST_CASE("category") {
  CHECK(category_loss(Tensor({1, 2}, 0.0), 1).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(category_loss(Tensor({1, 3}, std::vector<double>{-20, 20, -20}), 1).item() < 1e-8);
  std::mt19937_64 rng(3);
  Tensor z = rand_tensor({4, 5}, rng, -6, 6);
  const std::vector<int> t{4, 0, 2, 2};
  CHECK(std::abs(category_loss(z, t).item() - oracle::category(z.data(), 5, t)) < 1e-10);
  CHECK_THROWS_AS(category_loss(z, 5), LookupError);
  const std::vector<int> short_t{1, 2};
  CHECK_THROWS_AS(category_loss(z, short_t), ShapeError);
  // stable far beyond where the naive form overflows
  CHECK(std::isfinite(category_loss(Tensor({1, 2}, std::vector<double>{800, -800}), 1).item()));
}

TEST_CASE("perceptual") {
  std::vector<Tensor> a, b;
  for (int l = 0; l < 5; ++l) {
    a.push_back(Tensor({1, 1, 1, 1}, 0.0));
    b.push_back(Tensor({1, 1, 1, 1}, l % 2 ? 1.0 : -1.0));
  }
  CHECK(perceptual_loss(a, b).item() == 14.0);
  CHECK(perceptual_loss(a, a).item() == 0.0);
  std::mt19937_64 rng(4);
  std::vector<Tensor> fx, fg;
  std::vector<std::vector<double>> vx, vg;
  const Shape shapes[5] = {{2, 3, 8, 8}, {2, 4, 4, 4}, {2, 5, 2, 2}, {2, 5, 1, 1}, {2, 5, 1, 1}};
  for (const auto& s : shapes) {
    fx.push_back(rand_tensor(s, rng));
    fg.push_back(rand_tensor(s, rng));
    vx.push_back(vec(fx.back()));
    vg.push_back(vec(fg.back()));
  }
  const double lam[5] = {1, 1, 1, 1, 10};
  const double v = perceptual_loss(fx, fg).item();
  CHECK(std::abs(v - oracle::perceptual(vx, vg, lam)) < 1e-12);
  CHECK(std::abs(perceptual_loss(fg, fx).item() - v) < 1e-15);
  PerceptualLayerWeights w3;
  for (auto& l : w3.lambda) l *= 3;
  CHECK(perceptual_loss(fx, fg, w3).item() == doctest::Approx(3 * v).epsilon(1e-15));
  fx.pop_back();
  CHECK_THROWS_AS(perceptual_loss(fx, fg), ShapeError);
}

TEST_CASE("total objective") {
  auto s = [](double v) { return Tensor::scalar(v); };
  CHECK(total_generator_loss(s(1), s(2), s(3), s(4)).item() == 208.0);
  CHECK(total_generator_loss(s(0), s(0), s(0), s(0)).item() == 0.0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 3);
  for (int i = 0; i < 100; ++i) {
    const double a = u(rng), l = u(rng), p = u(rng), c = u(rng);
    CHECK(total_generator_loss(s(a), s(l), s(p), s(c)).item() == 1.0 * a + 100.0 * l + 1.0 * p + 1.0 * c);
  }
  Tensor a = s(0.3).set_requires_grad(true), l = s(0.2).set_requires_grad(true);
  Tensor p = s(1.1).set_requires_grad(true), c = s(0.7).set_requires_grad(true);
  total_generator_loss(a, l, p, c).backward();
  CHECK(a.grad()[0] == 1.0);
  CHECK(l.grad()[0] == 100.0);
  CHECK(p.grad()[0] == 1.0);
  CHECK(c.grad()[0] == 1.0);
  CHECK_THROWS_AS(total_generator_loss(s(std::numeric_limits<double>::infinity()), s(0), s(0), s(0)), NumericError);
}

TEST_CASE("loss gradients against finite differences") {
  std::mt19937_64 rng(6);
  Tensor pr = rand_tensor({6, 1}, rng, 0.05, 0.95, true), pf = rand_tensor({6, 1}, rng, 0.05, 0.95, true);
  CHECK(testutil::max_grad_error([&] { return adv_loss_d(pr, pf); }, {pr, pf}) < 1e-5);
  Tensor x = rand_tensor({2, 1, 3, 3}, rng, -1, 1, true), g = rand_tensor({2, 1, 3, 3}, rng, -1, 1, true);
  CHECK(testutil::max_grad_error([&] { return l1_loss(x, g); }, {x, g}) < 1e-5);
  Tensor z = rand_tensor({3, 4}, rng, -3, 3, true);
  const std::vector<int> t{0, 3, 1};
  CHECK(testutil::max_grad_error([&] { return category_loss(z, t); }, {z}) < 1e-5);
}

TEST_CASE("batch permutation invariance") {
  std::mt19937_64 rng(7);
  Tensor x = rand_tensor({2, 1, 2, 2}, rng), g = rand_tensor({2, 1, 2, 2}, rng);
  auto swap = [](const Tensor& t) {
    std::vector<double> v(t.data().begin(), t.data().end());
    std::rotate(v.begin(), v.begin() + 4, v.end());
    return Tensor(t.shape(), v);
  };
  CHECK(l1_loss(x, g).item() == doctest::Approx(l1_loss(swap(x), swap(g)).item()).epsilon(1e-15));
  Tensor p = probs({0.2, 0.7}), q = probs({0.7, 0.2});
  CHECK(adv_loss_g(p).item() == doctest::Approx(adv_loss_g(q).item()).epsilon(1e-15));
}
