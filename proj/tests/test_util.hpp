#ifndef PEGAN_TEST_UTIL_HPP
#define PEGAN_TEST_UTIL_HPP

#include <algorithm>
#include <filesystem>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "pegan/ops.hpp"

namespace testutil {

using pegan::Shape;
using pegan::Tensor;

inline Tensor rand_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                          bool grad = false) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(pegan::shape_numel(shape));
  for (auto& x : v) x = u(rng);
  Tensor t(std::move(shape), std::move(v));
  t.set_requires_grad(grad);
  return t;
}

// Central differences of the scalar f() w.r.t. every entry of `leaf`.
inline std::vector<double> numeric_grad(const std::function<double()>& f, Tensor& leaf,
                                        double h = 1e-5) {
  std::vector<double> g(leaf.numel());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double saved = leaf.data()[i];
    leaf.mutable_data()[i] = saved + h;
    const double up = f();
    leaf.mutable_data()[i] = saved - h;
    const double down = f();
    leaf.mutable_data()[i] = saved;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// Largest relative error between autodiff and central differences for the
// scalar objective over all listed leaves.
inline double max_grad_error(const std::function<Tensor()>& objective, std::vector<Tensor> leaves) {
  for (auto& l : leaves) l.zero_grad();
  objective().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& l : leaves) analytic.emplace_back(l.grad().begin(), l.grad().end());
  double worst = 0;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    const auto num = numeric_grad([&] { return objective().item(); }, leaves[k]);
    for (std::size_t i = 0; i < num.size(); ++i) worst = std::max(worst, rel_err(analytic[k][i], num[i]));
  }
  return worst;
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("pegan_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil

#endif
