#ifndef PEGAN_SYNTHETIC_HPP
#define PEGAN_SYNTHETIC_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pegan/dataset.hpp"

namespace pegan {

/// Rendering parameters of one synthetic "font".
struct SyntheticStyle {
  double stroke_width = 0.07;  // fraction of the image side
  double slant = 0.0;          // horizontal shear
  double scale = 1.0;          // about the image centre
  double bend = 0.0;           // bow of each stroke, fraction of its length
};

/// Style of synthetic font `index`; index 0 is the plain source style.
SyntheticStyle synthetic_style(int index);

/// Dark strokes on white. The stroke skeleton is a hash of the codepoint and
/// is shared by all styles, so different fonts depict the same "character".
GlyphImage render_synthetic_glyph(char32_t codepoint, int size, const SyntheticStyle& style);

/// Number of strokes in the skeleton of `codepoint`.
int synthetic_stroke_count(char32_t codepoint);

/// `count` entries starting at `first`, strokes 1..16 and a random
/// permutation of ranks 1..count.
std::vector<CharacterMeta> synthetic_metadata(std::size_t count, std::uint64_t seed,
                                              char32_t first = 0x4E00);

struct ToyDataSpec {
  std::filesystem::path root;
  std::vector<std::string> fonts{"source", "target0", "target1"};
  std::size_t glyphs = 8;
  int size = 64;
  char32_t first = 0x4E00;
};

/// Writes <root>/<font>/U+XXXX.png for every font, font i drawn with
/// synthetic_style(i), plus <root>/meta.tsv.
void write_toy_dataset(const ToyDataSpec& spec);

}  // namespace pegan

#endif  // PEGAN_SYNTHETIC_HPP
