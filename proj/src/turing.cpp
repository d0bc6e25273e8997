#include "pegan/turing.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace pegan {

std::string to_string(TileLabel label) { return label == TileLabel::real ? "real" : "generated"; }

TuringSheet make_turing_sheet(const std::vector<GlyphImage>& real,
                              const std::vector<GlyphImage>& generated, std::uint64_t seed,
                              const TuringSheetOptions& o) {
  if (real.size() != o.per_group || generated.size() != o.per_group)
    throw ConfigError("turing sheet needs " + std::to_string(o.per_group) + " real and " +
                      std::to_string(o.per_group) + " generated images, got " +
                      std::to_string(real.size()) + " and " + std::to_string(generated.size()));
  if (o.columns < 1 || o.tile_size < 1 || o.gap < 0)
    throw ConfigError("turing sheet needs columns >= 1, tile_size >= 1, gap >= 0");
  const std::size_t tiles = 2 * o.per_group;
  std::vector<std::size_t> order(tiles);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const int cols = o.columns;
  const int rows = static_cast<int>((tiles + static_cast<std::size_t>(cols) - 1) / cols);
  const int step = o.tile_size + o.gap;
  TuringSheet out;
  out.sheet = GlyphImage(o.gap + cols * step, o.gap + rows * step, 1.0);
  for (std::size_t t = 0; t < tiles; ++t) {
    const std::size_t src = order[t];
    const bool is_real = src < o.per_group;
    const GlyphImage& img = is_real ? real[src] : generated[src - o.per_group];
    const GlyphImage tile =
        quantize8(resize_bilinear(pad_to_square(img), o.tile_size, o.tile_size));
    const int ox = o.gap + static_cast<int>(t % cols) * step;
    const int oy = o.gap + static_cast<int>(t / cols) * step;
    for (int y = 0; y < o.tile_size; ++y)
      for (int x = 0; x < o.tile_size; ++x) out.sheet.at(ox + x, oy + y) = tile.at(x, y);
    out.labels.push_back(is_real ? TileLabel::real : TileLabel::generated);
  }
  return out;
}

void write_answer_key(const std::vector<TileLabel>& labels, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "tile_index,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << to_string(labels[i]) << '\n';
  if (!out) throw IoError("cannot write answer key " + path.string());
}

std::vector<TileLabel> read_answer_key(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open answer key " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "tile_index,label") throw IoError("bad answer key header in " + path.string());
  std::vector<TileLabel> labels;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const auto index = line.substr(0, comma);
    const auto label = comma == std::string::npos ? "" : line.substr(comma + 1);
    if (index != std::to_string(labels.size()) || (label != "real" && label != "generated"))
      throw IoError("bad answer key line '" + line + "' in " + path.string());
    labels.push_back(label == "real" ? TileLabel::real : TileLabel::generated);
  }
  return labels;
}

double grade_turing_responses(const std::vector<TileLabel>& key,
                              const std::vector<TileLabel>& responses) {
  if (key.empty() || key.size() != responses.size())
    throw ConfigError("responses must cover every tile of the answer key");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < key.size(); ++i) hits += key[i] == responses[i];
  return static_cast<double>(hits) / static_cast<double>(key.size());
}

}  // namespace pegan
