#ifndef PEGAN_TURING_HPP
#define PEGAN_TURING_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pegan/image.hpp"

namespace pegan {

enum class TileLabel { real, generated };

struct TuringSheetOptions {
  std::size_t per_group = 20;  // real tiles and generated tiles each
  int columns = 8;
  int tile_size = 64;
  int gap = 8;
};

struct TuringSheet {
  GlyphImage sheet;
  /// labels[i] is the origin of tile i, tiles numbered row-major from 0.
  std::vector<TileLabel> labels;
};

/// Lays out real and generated glyphs in a seed-determined random order.
/// Every tile is resized to tile_size and quantised to 8 bits the same
/// way, on a white canvas with uniform gaps. Throws ConfigError unless both
/// groups hold exactly per_group images.
TuringSheet make_turing_sheet(const std::vector<GlyphImage>& real,
                              const std::vector<GlyphImage>& generated, std::uint64_t seed,
                              const TuringSheetOptions& options = {});

/// CSV `tile_index,label` with labels real|generated.
void write_answer_key(const std::vector<TileLabel>& labels, const std::filesystem::path& path);
std::vector<TileLabel> read_answer_key(const std::filesystem::path& path);

/// Fraction of responses that match the key.
double grade_turing_responses(const std::vector<TileLabel>& key,
                              const std::vector<TileLabel>& responses);

std::string to_string(TileLabel label);

}  // namespace pegan

#endif  // PEGAN_TURING_HPP
