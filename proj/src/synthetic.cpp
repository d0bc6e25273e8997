#include "pegan/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace pegan {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct Segment {
  double x0, y0, x1, y1;
};

std::vector<Segment> skeleton(char32_t codepoint) {
  std::uint64_t h = splitmix64(codepoint);
  auto next = [&h](int mod) {
    h = splitmix64(h);
    return static_cast<int>(h % static_cast<std::uint64_t>(mod));
  };
  const int strokes = synthetic_stroke_count(codepoint);
  std::vector<Segment> segs;
  auto lattice = [](int k) { return 0.2 + 0.15 * k; };  // 5 positions in [0.2, 0.8]
  while (static_cast<int>(segs.size()) < strokes) {
    int ax = next(5), ay = next(5), bx = next(5), by = next(5);
    if (ax == bx && ay == by) continue;
    segs.push_back({lattice(ax), lattice(ay), lattice(bx), lattice(by)});
  }
  return segs;
}

double distance_to_segment(double px, double py, const Segment& s, double bend) {
  // A bent stroke is drawn as two halves meeting at a displaced midpoint.
  const double mx = 0.5 * (s.x0 + s.x1) - bend * (s.y1 - s.y0);
  const double my = 0.5 * (s.y0 + s.y1) + bend * (s.x1 - s.x0);
  auto line = [&](double ax, double ay, double bx, double by) {
    const double dx = bx - ax, dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(px - (ax + t * dx), py - (ay + t * dy));
  };
  return std::min(line(s.x0, s.y0, mx, my), line(mx, my, s.x1, s.y1));
}

}  // namespace

SyntheticStyle synthetic_style(int index) {
  if (index <= 0) return {};
  SyntheticStyle s;
  s.stroke_width = 0.07 + 0.035 * (index % 3);
  s.slant = (index % 2 == 1 ? 0.18 : -0.12) * (1 + index / 3);
  s.scale = 0.9 - 0.05 * (index % 2);
  s.bend = 0.12 * ((index + 1) % 3);
  return s;
}

int synthetic_stroke_count(char32_t codepoint) {
  return 1 + static_cast<int>(splitmix64(codepoint ^ 0x5EEDULL) % 6);
}

GlyphImage render_synthetic_glyph(char32_t codepoint, int size, const SyntheticStyle& style) {
  const auto segs = skeleton(codepoint);
  GlyphImage img(size, size, 1.0);
  const double half = 0.5 * style.stroke_width;
  const double soft = 1.0 / size;  // one pixel of anti-aliasing
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double u = (x + 0.5) / size, v = (y + 0.5) / size;
      // Inverse of: scale about the centre, then shear by slant.
      u = u - style.slant * (0.5 - v);
      u = 0.5 + (u - 0.5) / style.scale;
      v = 0.5 + (v - 0.5) / style.scale;
      double d = 1e9;
      for (const auto& s : segs) d = std::min(d, distance_to_segment(u, v, s, style.bend));
      d *= style.scale;
      const double ink = std::clamp((half + 0.5 * soft - d) / soft, 0.0, 1.0);
      img.at(x, y) = 1.0 - ink;
    }
  return img;
}

std::vector<CharacterMeta> synthetic_metadata(std::size_t count, std::uint64_t seed,
                                              char32_t first) {
  std::mt19937_64 rng(seed);
  std::vector<int> ranks(count);
  std::iota(ranks.begin(), ranks.end(), 1);
  std::shuffle(ranks.begin(), ranks.end(), rng);
  std::vector<CharacterMeta> meta(count);
  for (std::size_t i = 0; i < count; ++i) {
    meta[i].codepoint = first + static_cast<char32_t>(i);
    meta[i].stroke_count = 1 + static_cast<int>(rng() % 16);
    meta[i].frequency_rank = ranks[i];
  }
  return meta;
}

void write_toy_dataset(const ToyDataSpec& spec) {
  if (spec.fonts.empty() || spec.glyphs == 0 || spec.size < 1)
    throw ConfigError("toy dataset needs at least one font, one glyph and a positive size");
  std::vector<CharacterMeta> meta;
  for (std::size_t f = 0; f < spec.fonts.size(); ++f) {
    const auto dir = spec.root / spec.fonts[f];
    std::filesystem::create_directories(dir);
    const auto style = synthetic_style(static_cast<int>(f));
    for (std::size_t g = 0; g < spec.glyphs; ++g) {
      const char32_t cp = spec.first + static_cast<char32_t>(g);
      save_image(render_synthetic_glyph(cp, spec.size, style), dir / glyph_filename(cp));
    }
  }
  for (std::size_t g = 0; g < spec.glyphs; ++g) {
    const char32_t cp = spec.first + static_cast<char32_t>(g);
    meta.push_back({cp, synthetic_stroke_count(cp), static_cast<int>(g + 1)});
  }
  write_metadata(meta, spec.root / "meta.tsv");
}

}  // namespace pegan
