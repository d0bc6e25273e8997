#ifndef PEGAN_OPS_HPP
#define PEGAN_OPS_HPP

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "pegan/tensor.hpp"

namespace pegan {

using Rng = std::mt19937_64;

/// Seed for an independent stream, a splitmix64 hash of (base, stream, index).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

// Elementwise arithmetic and reductions.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor abs(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor flatten(const Tensor& a);  // [B, ...] -> [B, prod(...)]

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

/// 2-D cross-correlation (no kernel flip).
/// input [B,Cin,H,W], kernel [Cout,Cin,kh,kw], bias [Cout] or undefined.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
              int padding);

/// Adjoint of conv2d. kernel is [Cin,Cout,kh,kw] in the same memory layout
/// conv2d uses for the reverse direction, so
/// <conv2d(x,k), y> == <x, conv2d_transpose(y,k)>.
/// Output extent: (H-1)*stride - 2*padding + kh + output_padding.
Tensor conv2d_transpose(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
                        int padding, int output_padding);

/// output_padding that makes conv2d_transpose map `in` to `out`; throws
/// ConfigError when no valid padding exists.
int transpose_output_padding(std::size_t in, std::size_t out, int kernel, int stride, int padding);

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;

  explicit BatchNormState(std::size_t channels = 1)
      : running_mean(Shape{channels}, 0.0), running_var(Shape{channels}, 1.0) {}
};

struct BatchNormOptions {
  double momentum = 0.1;
  double epsilon = 1e-5;
};

/// Per-channel normalisation over batch and spatial axes. Train mode uses
/// the batch moments and folds them into `state` (unbiased variance);
/// eval mode normalises with the running estimates.
Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, Mode mode, BatchNormOptions options = {});

Tensor leaky_relu(const Tensor& input, double slope = 0.2);
Tensor relu(const Tensor& input);
Tensor sigmoid(const Tensor& input);
Tensor tanh(const Tensor& input);

/// Inverted dropout: survivors are scaled by 1/(1-p). In train mode with
/// p > 0 the mask consumes exactly numel() uniform draws from `rng`.
Tensor dropout(const Tensor& input, double p, Mode mode, Rng& rng);

Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& input, std::size_t begin, std::size_t end);

/// Block mean over factor x factor tiles.
Tensor avg_downsample(const Tensor& input, int factor);
Tensor max_pool2d(const Tensor& input, int window);

/// [B,C] -> [B,C,H,W], replicating each value over the spatial grid.
Tensor tile_spatial(const Tensor& input, std::size_t height, std::size_t width);

/// Columns [begin,end) of a [B,M] tensor.
Tensor slice_columns(const Tensor& input, std::size_t begin, std::size_t end);

/// input [B,N], weight [M,N], bias [M] -> [B,M].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// Mean softmax cross entropy of logits [B,C] against class indices.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> targets);

}  // namespace pegan

#endif  // PEGAN_OPS_HPP
