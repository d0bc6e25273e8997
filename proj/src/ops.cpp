#include "pegan/ops.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

namespace pegan {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  auto mix = [](std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  };
  return mix(mix(mix(base) ^ stream) ^ index);
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

double fault_scale(const char* op) { return debug::backward_fault(op) ? 1.5 : 1.0; }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

void require_rank(const char* op, const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + shape_str(t.shape()));
}

template <typename Forward, typename Derivative>
Tensor unary(const char* op, const Tensor& x, Forward f, Derivative df) {
  auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result(op, x.shape(), std::move(out), {x}, [x, df, op](std::span<const double> g) {
    if (!x.requires_grad()) return;
    auto gx = grad_accumulator(x);
    auto in = x.data();
    const double k = fault_scale(op);
    for (std::size_t i = 0; i < in.size(); ++i) gx[i] += k * g[i] * df(in[i]);
  });
}

// Sliding-window geometry shared by conv2d and its transpose.
struct Geometry {
  std::size_t channels, height, width;  // image side
  std::size_t kh, kw;
  std::size_t out_h, out_w;  // column side
  int stride, padding;

  std::size_t rows() const { return channels * kh * kw; }
  std::size_t cols() const { return out_h * out_w; }
  std::size_t image_size() const { return channels * height * width; }
};

void im2col(const double* image, const Geometry& g, double* col) {
  const auto cols = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = col + ((c * g.kh + ki) * g.kw + kj) * cols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.padding + static_cast<long>(ki);
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill_n(dst, g.out_w, 0.0);
            continue;
          }
          const double* src = image + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.padding + static_cast<long>(kj);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

// Accumulating inverse of im2col.
void col2im(const double* col, const Geometry& g, double* image) {
  const auto cols = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = col + ((c * g.kh + ki) * g.kw + kj) * cols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.padding + static_cast<long>(ki);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          double* dst = image + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.padding + static_cast<long>(kj);
            if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void check_bias(const char* op, const Tensor& bias, std::size_t channels) {
  if (bias.defined() && bias.shape() != Shape{channels})
    throw ShapeError(std::string(op) + ": bias must be [" + std::to_string(channels) + "], got " +
                     shape_str(bias.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
    for (const auto* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto gt = grad_accumulator(*t);
      for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
    if (a.requires_grad()) {
      auto ga = grad_accumulator(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = grad_accumulator(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
    auto x = a.data(), y = b.data();
    if (a.requires_grad()) {
      auto ga = grad_accumulator(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (b.requires_grad()) {
      auto gb = grad_accumulator(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary("scale", a, [factor](double v) { return v * factor; },
               [factor](double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary("add_scalar", a, [value](double v) { return v + value; },
               [](double) { return 1.0; });
}

Tensor abs(const Tensor& a) {
  return unary("abs", a, [](double v) { return std::abs(v); },
               [](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result("sum", Shape{1}, {total}, {a}, [a](std::span<const double> g) {
    if (!a.requires_grad()) return;
    auto ga = grad_accumulator(a);
    for (auto& v : ga) v += g[0];
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result("mean", Shape{1}, {total / n}, {a}, [a, n](std::span<const double> g) {
    if (!a.requires_grad()) return;
    auto ga = grad_accumulator(a);
    for (auto& v : ga) v += g[0] / n;
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  auto values = std::vector<double>(a.data().begin(), a.data().end());
  return make_result("reshape", std::move(shape), std::move(values), {a},
                     [a](std::span<const double> g) {
                       if (!a.requires_grad()) return;
                       auto ga = grad_accumulator(a);
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                     });
}

Tensor flatten(const Tensor& a) {
  if (a.rank() < 2) throw ShapeError("flatten: need a batch axis, got " + shape_str(a.shape()));
  return reshape(a, Shape{a.dim(0), a.numel() / a.dim(0)});
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
              int padding) {
  require_rank("conv2d", input, 4, "input");
  require_rank("conv2d", kernel, 4, "kernel");
  if (stride < 1 || padding < 0) throw ConfigError("conv2d: stride must be >= 1 and padding >= 0");
  const auto batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const auto cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != cin)
    throw ConfigError("conv2d: kernel expects " + std::to_string(kernel.dim(1)) +
                      " input channels, input has " + std::to_string(cin));
  if (h + 2 * padding < kh || w + 2 * padding < kw)
    throw ShapeError("conv2d: kernel larger than padded input " + shape_str(input.shape()));
  check_bias("conv2d", bias, cout);

  const Geometry geo{cin, h, w, kh, kw, (h + 2 * padding - kh) / stride + 1,
                     (w + 2 * padding - kw) / stride + 1, stride, padding};
  const auto rows = geo.rows(), cols = geo.cols();
  std::vector<double> out(batch * cout * cols);
  std::vector<double> col(rows * cols);
  ConstMatMap k(kernel.data().data(), cout, rows);
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(input.data().data() + b * geo.image_size(), geo, col.data());
    MatMap y(out.data() + b * cout * cols, cout, cols);
    y.noalias() = k * ConstMatMap(col.data(), rows, cols);
    if (bias.defined())
      for (std::size_t c = 0; c < cout; ++c) y.row(c).array() += bias.data()[c];
  }

  return make_result(
      "conv2d", Shape{batch, cout, geo.out_h, geo.out_w}, std::move(out), {input, kernel, bias},
      [input, kernel, bias, geo, batch, cout](std::span<const double> g) {
        const auto rows = geo.rows(), cols = geo.cols();
        std::vector<double> col(rows * cols);
        ConstMatMap k(kernel.data().data(), cout, rows);
        const double fault = fault_scale("conv2d");
        for (std::size_t b = 0; b < batch; ++b) {
          ConstMatMap gy(g.data() + b * cout * cols, cout, cols);
          if (kernel.requires_grad()) {
            im2col(input.data().data() + b * geo.image_size(), geo, col.data());
            MatMap(grad_accumulator(kernel).data(), cout, rows).noalias() +=
                gy * ConstMatMap(col.data(), rows, cols).transpose();
          }
          if (bias.defined() && bias.requires_grad()) {
            auto gb = grad_accumulator(bias);
            for (std::size_t c = 0; c < cout; ++c) gb[c] += gy.row(c).sum();
          }
          if (input.requires_grad()) {
            MatMap(col.data(), rows, cols).noalias() = fault * (k.transpose() * gy);
            col2im(col.data(), geo, grad_accumulator(input).data() + b * geo.image_size());
          }
        }
      });
}

int transpose_output_padding(std::size_t in, std::size_t out, int kernel, int stride,
                             int padding) {
  const long base = (static_cast<long>(in) - 1) * stride - 2L * padding + kernel;
  const long pad = static_cast<long>(out) - base;
  if (pad < 0 || pad >= stride)
    throw ConfigError("conv2d_transpose: no output padding maps extent " + std::to_string(in) +
                      " to " + std::to_string(out));
  return static_cast<int>(pad);
}

Tensor conv2d_transpose(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
                        int padding, int output_padding) {
  require_rank("conv2d_transpose", input, 4, "input");
  require_rank("conv2d_transpose", kernel, 4, "kernel");
  if (stride < 1 || padding < 0)
    throw ConfigError("conv2d_transpose: stride must be >= 1 and padding >= 0");
  if (output_padding < 0 || output_padding >= stride)
    throw ConfigError("conv2d_transpose: output_padding must lie in [0, stride) to fix the "
                      "output extent, got " + std::to_string(output_padding));
  const auto batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const auto cout = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(0) != cin)
    throw ConfigError("conv2d_transpose: kernel expects " + std::to_string(kernel.dim(0)) +
                      " input channels, input has " + std::to_string(cin));
  check_bias("conv2d_transpose", bias, cout);
  const long oh = (static_cast<long>(h) - 1) * stride - 2L * padding + static_cast<long>(kh) +
                  output_padding;
  const long ow = (static_cast<long>(w) - 1) * stride - 2L * padding + static_cast<long>(kw) +
                  output_padding;
  if (oh <= 0 || ow <= 0)
    throw ShapeError("conv2d_transpose: non-positive output extent for " +
                     shape_str(input.shape()));

  const Geometry geo{cout, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), kh, kw,
                     h, w, stride, padding};
  const auto rows = geo.rows(), cols = geo.cols();
  std::vector<double> out(batch * geo.image_size(), 0.0);
  std::vector<double> col(rows * cols);
  ConstMatMap k(kernel.data().data(), cin, rows);
  for (std::size_t b = 0; b < batch; ++b) {
    ConstMatMap x(input.data().data() + b * cin * cols, cin, cols);
    MatMap(col.data(), rows, cols).noalias() = k.transpose() * x;
    double* y = out.data() + b * geo.image_size();
    col2im(col.data(), geo, y);
    if (bias.defined()) {
      const auto plane = geo.height * geo.width;
      for (std::size_t c = 0; c < cout; ++c)
        for (std::size_t i = 0; i < plane; ++i) y[c * plane + i] += bias.data()[c];
    }
  }

  return make_result(
      "conv2d_transpose", Shape{batch, cout, geo.height, geo.width}, std::move(out),
      {input, kernel, bias}, [input, kernel, bias, geo, batch, cin](std::span<const double> g) {
        const auto rows = geo.rows(), cols = geo.cols();
        const auto plane = geo.height * geo.width;
        std::vector<double> col(rows * cols);
        ConstMatMap k(kernel.data().data(), cin, rows);
        const double fault = fault_scale("conv2d_transpose");
        for (std::size_t b = 0; b < batch; ++b) {
          const double* gy = g.data() + b * geo.image_size();
          if (bias.defined() && bias.requires_grad()) {
            auto gb = grad_accumulator(bias);
            for (std::size_t c = 0; c < geo.channels; ++c)
              for (std::size_t i = 0; i < plane; ++i) gb[c] += gy[c * plane + i];
          }
          if (!kernel.requires_grad() && !input.requires_grad()) continue;
          im2col(gy, geo, col.data());
          ConstMatMap gcol(col.data(), rows, cols);
          if (kernel.requires_grad()) {
            ConstMatMap x(input.data().data() + b * cin * cols, cin, cols);
            MatMap(grad_accumulator(kernel).data(), cin, rows).noalias() += x * gcol.transpose();
          }
          if (input.requires_grad()) {
            MatMap(grad_accumulator(input).data() + b * cin * cols, cin, cols).noalias() +=
                fault * (k * gcol);
          }
        }
      });
}

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, Mode mode, BatchNormOptions options) {
  require_rank("batchnorm2d", input, 4, "input");
  const auto batch = input.dim(0), channels = input.dim(1);
  const auto plane = input.dim(2) * input.dim(3);
  const auto population = batch * plane;
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &state.running_mean, &state.running_var})
    if (t->shape() != Shape{channels})
      throw ShapeError("batchnorm2d: per-channel parameter must be [" + std::to_string(channels) +
                       "], got " + shape_str(t->shape()));
  if (mode == Mode::train && population < 2)
    throw DomainError("batchnorm2d: train mode needs at least 2 values per channel, got " +
                      std::to_string(population));

  std::vector<double> mu(channels), inv_std(channels);
  auto x = input.data();
  if (mode == Mode::train) {
    auto rm = state.running_mean.mutable_data();
    auto rv = state.running_var.mutable_data();
    const double n = static_cast<double>(population);
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < plane; ++i) s += x[(b * channels + c) * plane + i];
      const double m = s / n;
      double ss = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = x[(b * channels + c) * plane + i] - m;
          ss += d * d;
        }
      const double var = ss / n;
      mu[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + options.epsilon);
      rm[c] = (1.0 - options.momentum) * rm[c] + options.momentum * m;
      rv[c] = (1.0 - options.momentum) * rv[c] + options.momentum * var * n / (n - 1.0);
    }
  } else {
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    for (std::size_t c = 0; c < channels; ++c) {
      mu[c] = rm[c];
      inv_std[c] = 1.0 / std::sqrt(rv[c] + options.epsilon);
    }
  }

  std::vector<double> xhat(x.size()), out(x.size());
  auto ga = gamma.data(), be = beta.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < plane; ++i) {
        const auto idx = (b * channels + c) * plane + i;
        xhat[idx] = (x[idx] - mu[c]) * inv_std[c];
        out[idx] = ga[c] * xhat[idx] + be[c];
      }

  return make_result(
      "batchnorm2d", input.shape(), std::move(out), {input, gamma, beta},
      [input, gamma, beta, mode, batch, channels, plane, population, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](std::span<const double> g) {
        std::vector<double> sum_g(channels, 0.0), sum_gx(channels, 0.0);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t i = 0; i < plane; ++i) {
              const auto idx = (b * channels + c) * plane + i;
              sum_g[c] += g[idx];
              sum_gx[c] += g[idx] * xhat[idx];
            }
        if (gamma.requires_grad()) {
          auto gg = grad_accumulator(gamma);
          for (std::size_t c = 0; c < channels; ++c) gg[c] += sum_gx[c];
        }
        if (beta.requires_grad()) {
          auto gb = grad_accumulator(beta);
          for (std::size_t c = 0; c < channels; ++c) gb[c] += sum_g[c];
        }
        if (!input.requires_grad()) return;
        auto gx = grad_accumulator(input);
        auto ga = gamma.data();
        const double n = static_cast<double>(population);
        const double fault = fault_scale("batchnorm2d");
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < channels; ++c) {
            const double k = fault * ga[c] * inv_std[c];
            for (std::size_t i = 0; i < plane; ++i) {
              const auto idx = (b * channels + c) * plane + i;
              if (mode == Mode::train)
                gx[idx] += k * (g[idx] - sum_g[c] / n - xhat[idx] * sum_gx[c] / n);
              else
                gx[idx] += k * g[idx];
            }
          }
      });
}

// Subgradient 0 is taken at the kink for relu-family activations.
Tensor leaky_relu(const Tensor& input, double slope) {
  return unary("leaky_relu", input, [slope](double v) { return v > 0 ? v : slope * v; },
               [slope](double v) { return v > 0 ? 1.0 : (v < 0 ? slope : 0.0); });
}

Tensor relu(const Tensor& input) {
  return unary("relu", input, [](double v) { return v > 0 ? v : 0.0; },
               [](double v) { return v > 0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& input) {
  auto f = [](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  };
  return unary("sigmoid", input, f, [f](double v) {
    const double s = f(v);
    return s * (1.0 - s);
  });
}

Tensor tanh(const Tensor& input) {
  return unary("tanh", input, [](double v) { return std::tanh(v); },
               [](double v) {
                 const double t = std::tanh(v);
                 return 1.0 - t * t;
               });
}

Tensor dropout(const Tensor& input, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout: p must lie in [0,1), got " + std::to_string(p));
  if (mode == Mode::eval || p == 0.0) return input;
  const double keep = 1.0 / (1.0 - p);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<double> mask(input.numel());
  for (auto& m : mask) m = uniform(rng) < p ? 0.0 : keep;
  auto x = input.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * mask[i];
  return make_result("dropout", input.shape(), std::move(out), {input},
                     [input, mask = std::move(mask)](std::span<const double> g) {
                       if (!input.requires_grad()) return;
                       auto gx = grad_accumulator(input);
                       const double fault = fault_scale("dropout");
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += fault * g[i] * mask[i];
                     });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank("concat_channels", a, 4, "first input");
  require_rank("concat_channels", b, 4, "second input");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw ShapeError("concat_channels: batch/spatial mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const auto batch = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const auto plane = a.dim(2) * a.dim(3);
  std::vector<double> out(batch * (ca + cb) * plane);
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(a.data().data() + n * ca * plane, ca * plane, out.data() + n * (ca + cb) * plane);
    std::copy_n(b.data().data() + n * cb * plane, cb * plane,
                out.data() + (n * (ca + cb) + ca) * plane);
  }
  return make_result(
      "concat_channels", Shape{batch, ca + cb, a.dim(2), a.dim(3)}, std::move(out), {a, b},
      [a, b, batch, ca, cb, plane](std::span<const double> g) {
        const double fault = fault_scale("concat_channels");
        for (std::size_t n = 0; n < batch; ++n) {
          if (a.requires_grad()) {
            auto ga = grad_accumulator(a);
            for (std::size_t i = 0; i < ca * plane; ++i)
              ga[n * ca * plane + i] += fault * g[n * (ca + cb) * plane + i];
          }
          if (b.requires_grad()) {
            auto gb = grad_accumulator(b);
            for (std::size_t i = 0; i < cb * plane; ++i)
              gb[n * cb * plane + i] += g[(n * (ca + cb) + ca) * plane + i];
          }
        }
      });
}

Tensor slice_channels(const Tensor& input, std::size_t begin, std::size_t end) {
  require_rank("slice_channels", input, 4, "input");
  const auto batch = input.dim(0), channels = input.dim(1);
  if (begin >= end || end > channels)
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") invalid for " + shape_str(input.shape()));
  const auto plane = input.dim(2) * input.dim(3);
  const auto width = end - begin;
  std::vector<double> out(batch * width * plane);
  for (std::size_t n = 0; n < batch; ++n)
    std::copy_n(input.data().data() + (n * channels + begin) * plane, width * plane,
                out.data() + n * width * plane);
  return make_result("slice_channels", Shape{batch, width, input.dim(2), input.dim(3)},
                     std::move(out), {input},
                     [input, batch, channels, begin, width, plane](std::span<const double> g) {
                       if (!input.requires_grad()) return;
                       auto gx = grad_accumulator(input);
                       for (std::size_t n = 0; n < batch; ++n)
                         for (std::size_t i = 0; i < width * plane; ++i)
                           gx[(n * channels + begin) * plane + i] += g[n * width * plane + i];
                     });
}

Tensor avg_downsample(const Tensor& input, int factor) {
  require_rank("avg_downsample", input, 4, "input");
  if (factor < 1) throw ConfigError("avg_downsample: factor must be >= 1");
  const auto f = static_cast<std::size_t>(factor);
  const auto h = input.dim(2), w = input.dim(3);
  if (h % f != 0 || w % f != 0)
    throw ShapeError("avg_downsample: factor " + std::to_string(factor) + " does not divide " +
                     shape_str(input.shape()));
  if (f == 1) return input;
  const auto planes = input.dim(0) * input.dim(1);
  const auto oh = h / f, ow = w / f;
  const double norm = 1.0 / static_cast<double>(f * f);
  auto x = input.data();
  std::vector<double> out(planes * oh * ow, 0.0);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xo = 0; xo < ow; ++xo) {
        double s = 0.0;
        for (std::size_t dy = 0; dy < f; ++dy)
          for (std::size_t dx = 0; dx < f; ++dx)
            s += x[(p * h + y * f + dy) * w + xo * f + dx];
        out[(p * oh + y) * ow + xo] = s * norm;
      }
  return make_result("avg_downsample", Shape{input.dim(0), input.dim(1), oh, ow}, std::move(out),
                     {input}, [input, planes, h, w, f, oh, ow, norm](std::span<const double> g) {
                       if (!input.requires_grad()) return;
                       auto gx = grad_accumulator(input);
                       const double k = norm * fault_scale("avg_downsample");
                       for (std::size_t p = 0; p < planes; ++p)
                         for (std::size_t y = 0; y < h; ++y)
                           for (std::size_t x = 0; x < w; ++x)
                             gx[(p * h + y) * w + x] += k * g[(p * oh + y / f) * ow + x / f];
                     });
}

Tensor max_pool2d(const Tensor& input, int window) {
  require_rank("max_pool2d", input, 4, "input");
  if (window < 1) throw ConfigError("max_pool2d: window must be >= 1");
  const auto k = static_cast<std::size_t>(window);
  const auto h = input.dim(2), w = input.dim(3);
  if (h < k || w < k) throw ShapeError("max_pool2d: input smaller than window " + shape_str(input.shape()));
  const auto planes = input.dim(0) * input.dim(1);
  const auto oh = h / k, ow = w / k;
  auto x = input.data();
  std::vector<double> out(planes * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xo = 0; xo < ow; ++xo) {
        std::size_t best = (p * h + y * k) * w + xo * k;
        for (std::size_t dy = 0; dy < k; ++dy)
          for (std::size_t dx = 0; dx < k; ++dx) {
            const auto idx = (p * h + y * k + dy) * w + xo * k + dx;
            if (x[idx] > x[best]) best = idx;
          }
        const auto o = (p * oh + y) * ow + xo;
        out[o] = x[best];
        argmax[o] = best;
      }
  return make_result("max_pool2d", Shape{input.dim(0), input.dim(1), oh, ow}, std::move(out),
                     {input}, [input, argmax = std::move(argmax)](std::span<const double> g) {
                       if (!input.requires_grad()) return;
                       auto gx = grad_accumulator(input);
                       const double fault = fault_scale("max_pool2d");
                       for (std::size_t o = 0; o < g.size(); ++o) gx[argmax[o]] += fault * g[o];
                     });
}

Tensor tile_spatial(const Tensor& input, std::size_t height, std::size_t width) {
  require_rank("tile_spatial", input, 2, "input");
  const auto rows = input.dim(0) * input.dim(1);
  const auto plane = height * width;
  std::vector<double> out(rows * plane);
  for (std::size_t r = 0; r < rows; ++r)
    std::fill_n(out.data() + r * plane, plane, input.data()[r]);
  return make_result("tile_spatial", Shape{input.dim(0), input.dim(1), height, width},
                     std::move(out), {input}, [input, rows, plane](std::span<const double> g) {
                       if (!input.requires_grad()) return;
                       auto gx = grad_accumulator(input);
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t i = 0; i < plane; ++i) gx[r] += g[r * plane + i];
                     });
}

Tensor slice_columns(const Tensor& input, std::size_t begin, std::size_t end) {
  require_rank("slice_columns", input, 2, "input");
  const auto rows = input.dim(0), cols = input.dim(1);
  if (begin >= end || end > cols)
    throw ShapeError("slice_columns: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for " + shape_str(input.shape()));
  const auto width = end - begin;
  std::vector<double> out(rows * width);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(input.data().data() + r * cols + begin, width, out.data() + r * width);
  return make_result("slice_columns", Shape{rows, width}, std::move(out), {input},
                     [input, rows, cols, begin, width](std::span<const double> g) {
                       if (!input.requires_grad()) return;
                       auto gx = grad_accumulator(input);
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < width; ++j)
                           gx[r * cols + begin + j] += g[r * width + j];
                     });
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank("linear", input, 2, "input");
  require_rank("linear", weight, 2, "weight");
  const auto batch = input.dim(0), n = input.dim(1), m = weight.dim(0);
  if (weight.dim(1) != n)
    throw ShapeError("linear: weight " + shape_str(weight.shape()) + " incompatible with input " +
                     shape_str(input.shape()));
  check_bias("linear", bias, m);
  std::vector<double> out(batch * m);
  MatMap y(out.data(), batch, m);
  y.noalias() = ConstMatMap(input.data().data(), batch, n) *
                ConstMatMap(weight.data().data(), m, n).transpose();
  if (bias.defined())
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t j = 0; j < m; ++j) y(b, j) += bias.data()[j];
  return make_result("linear", Shape{batch, m}, std::move(out), {input, weight, bias},
                     [input, weight, bias, batch, n, m](std::span<const double> g) {
                       ConstMatMap gy(g.data(), batch, m);
                       if (input.requires_grad())
                         MatMap(grad_accumulator(input).data(), batch, n).noalias() +=
                             fault_scale("linear") * (gy * ConstMatMap(weight.data().data(), m, n));
                       if (weight.requires_grad())
                         MatMap(grad_accumulator(weight).data(), m, n).noalias() +=
                             gy.transpose() * ConstMatMap(input.data().data(), batch, n);
                       if (bias.defined() && bias.requires_grad()) {
                         auto gb = grad_accumulator(bias);
                         for (std::size_t j = 0; j < m; ++j) gb[j] += gy.col(j).sum();
                       }
                     });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> targets) {
  require_rank("softmax_cross_entropy", logits, 2, "logits");
  const auto batch = logits.dim(0), classes = logits.dim(1);
  if (targets.size() != batch)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                     " targets for batch of " + std::to_string(batch));
  for (int t : targets)
    if (t < 0 || static_cast<std::size_t>(t) >= classes)
      throw LookupError("softmax_cross_entropy: class " + std::to_string(t) + " out of range");
  auto z = logits.data();
  std::vector<double> prob(z.size());
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = z.data() + b * classes;
    const double mx = *std::max_element(row, row + classes);
    double s = 0.0;
    for (std::size_t j = 0; j < classes; ++j) s += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < classes; ++j) prob[b * classes + j] = std::exp(row[j] - mx) / s;
    loss += -(row[targets[b]] - mx - std::log(s));
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  return make_result("softmax_cross_entropy", Shape{1}, {loss / static_cast<double>(batch)},
                     {logits},
                     [logits, prob = std::move(prob), tgt = std::move(tgt), batch,
                      classes](std::span<const double> g) {
                       if (!logits.requires_grad()) return;
                       auto gz = grad_accumulator(logits);
                       const double k = g[0] / static_cast<double>(batch);
                       for (std::size_t b = 0; b < batch; ++b)
                         for (std::size_t j = 0; j < classes; ++j) {
                           const double y = static_cast<int>(j) == tgt[b] ? 1.0 : 0.0;
                           gz[b * classes + j] += k * (prob[b * classes + j] - y);
                         }
                     });
}

}  // namespace pegan
