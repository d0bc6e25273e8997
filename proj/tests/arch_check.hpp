#ifndef PEGAN_TEST_ARCH_CHECK_HPP
#define PEGAN_TEST_ARCH_CHECK_HPP

#include <string>
#include <vector>

#include "pegan/model.hpp"

namespace testutil {

// Runs one traced forward pass and returns every violated structural
// invariant (mirror shape, pyramid concatenation, skip channels).
inline std::vector<std::string> architecture_violations(pegan::Generator& gen, std::size_t batch = 2) {
  using pegan::Shape;
  const auto& cfg = gen.config();
  const int n = cfg.depth;
  const auto s = static_cast<std::size_t>(cfg.width);
  std::vector<std::string> bad;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) bad.push_back(what);
  };
  pegan::Tensor source(Shape{batch, 1, s, s}, 0.25);
  for (std::size_t i = 0; i < source.numel(); ++i)
    source.mutable_data()[i] = 0.5 * std::sin(0.37 * static_cast<double>(i));
  std::vector<int> cats(batch);
  for (std::size_t b = 0; b < batch; ++b) cats[b] = static_cast<int>(b) % cfg.num_categories;
  pegan::Rng rng(1);
  pegan::ForwardTrace trace;
  pegan::Tensor out = gen.generate(source, cats, pegan::Mode::train, rng, &trace);

  expect(out.shape() == source.shape(), "mirror: output shape differs from input");
  if (trace.size() != static_cast<std::size_t>(2 * n)) {
    bad.push_back("trace has " + std::to_string(trace.size()) + " modules");
    return bad;
  }
  auto ch = [&](int i) { return static_cast<std::size_t>(cfg.encoder_channels[i - 1]); };
  auto ext = [&](int i) { return s >> i; };
  for (int i = 1; i <= n; ++i) {
    const auto& t = trace[i - 1];
    const std::string e = "e" + std::to_string(i);
    expect(t.module == e, e + ": module order");
    expect(t.output == Shape{batch, ch(i), ext(i), ext(i)}, e + ": output shape");
    if (i == 1) {
      expect(t.input == source.shape(), e + ": takes the raw source");
      expect(t.pyramid_channels == 0, e + ": no pyramid input");
    } else if (i < n) {
      expect(t.pyramid_channels == 1, e + ": pyramid channel count");
      expect(t.pyramid_shape == Shape{batch, 1, ext(i - 1), ext(i - 1)}, e + ": pyramid resolution");
      expect(t.input == Shape{batch, 1 + ch(i - 1), ext(i - 1), ext(i - 1)}, e + ": pyramid concat");
    } else {
      expect(t.pyramid_channels == 0, e + ": bottleneck has no pyramid input");
      expect(t.input == Shape{batch, ch(i - 1), ext(i - 1), ext(i - 1)}, e + ": bottleneck input");
    }
  }
  std::size_t prev_out = 0;
  for (int i = 1; i <= n; ++i) {
    const auto& t = trace[n + i - 1];
    const std::string d = "d" + std::to_string(i);
    expect(t.module == d, d + ": module order");
    const auto in_ext = ext(n - i + 1);
    if (i == 1) {
      const auto emb = static_cast<std::size_t>(cfg.embedding_dim);
      expect(t.embedding_channels == emb, d + ": embedding width");
      expect(t.input == Shape{batch, ch(n) + emb, in_ext, in_ext}, d + ": bottleneck + embedding");
    } else {
      // d_i takes d_{i-1}'s output concatenated with F_{n-i+1}
      expect(t.skip_channels == ch(n - i + 1), d + ": skip source");
      expect(t.input == Shape{batch, prev_out + ch(n - i + 1), in_ext, in_ext}, d + ": skip concat");
    }
    const std::size_t out_ch = i == n ? 1 : ch(n - i);
    expect(t.output == Shape{batch, out_ch, 2 * in_ext, 2 * in_ext}, d + ": output shape");
    prev_out = t.output.size() == 4 ? t.output[1] : 0;
  }
  return bad;
}

}  // namespace testutil

#endif
