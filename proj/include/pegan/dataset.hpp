#ifndef PEGAN_DATASET_HPP
#define PEGAN_DATASET_HPP

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pegan/image.hpp"

namespace pegan {

struct GlyphPair {
  GlyphImage source;
  GlyphImage target;
  char32_t codepoint = 0;
  int category_id = 0;
};

/// "U+4E00.png" style names; accepts .png and .pgm.
std::optional<char32_t> parse_glyph_filename(const std::string& filename);
std::string glyph_filename(char32_t codepoint, const std::string& extension = ".png");
std::string codepoint_label(char32_t codepoint);  // "U+4E00"

/// Glyph files of a font directory keyed by codepoint, in codepoint order.
/// Other files are ignored.
std::vector<std::pair<char32_t, std::filesystem::path>> list_glyph_files(
    const std::filesystem::path& dir);

/// Pairs the glyphs present in both directories, sorted by codepoint. Each
/// file present on one side only adds a line to `warnings`. With
/// image_size > 0 both sides are padded and resized to that size.
/// Throws DatasetError when a directory is missing or nothing matches.
std::vector<GlyphPair> load_pairs(const std::filesystem::path& source_dir,
                                  const std::filesystem::path& target_dir, int category_id,
                                  int image_size = 0, std::vector<std::string>* warnings = nullptr);

struct CharacterMeta {
  char32_t codepoint = 0;
  int stroke_count = 0;
  int frequency_rank = 0;
};

/// TSV `codepoint<TAB>stroke_count<TAB>frequency_rank`; codepoint is either
/// U+XXXX or the UTF-8 character itself. Blank lines and lines starting with
/// '#' are skipped. Malformed lines and duplicate ranks raise DatasetError
/// citing the line number.
std::vector<CharacterMeta> parse_metadata(std::istream& in, const std::string& source_name);
std::vector<CharacterMeta> load_metadata(const std::filesystem::path& path);
void write_metadata(const std::vector<CharacterMeta>& meta, const std::filesystem::path& path);

enum class Band { easy = 0, mid = 1, hard = 2 };
inline constexpr std::array<const char*, 3> kBandNames{"easy", "mid", "hard"};

/// <=5 strokes easy, 6..9 mid, >=10 hard.
Band band_for_strokes(int stroke_count);

struct EvalBand {
  std::vector<char32_t> codepoints;
  bool shortfall = false;
};

struct EvalSet {
  int per_band = 100;
  std::array<EvalBand, 3> bands;

  bool contains(char32_t codepoint) const;
  std::optional<Band> band_of(char32_t codepoint) const;
  std::size_t size() const;
};

/// Per band, the per_band characters of lowest frequency rank (codepoint
/// breaks ties); a band with fewer candidates keeps all and is flagged.
EvalSet build_eval_set(const std::vector<CharacterMeta>& meta, int per_band = 100);

void to_json(nlohmann::json& j, const EvalSet& set);
void from_json(const nlohmann::json& j, EvalSet& set);
EvalSet load_eval_set(const std::filesystem::path& path);
void save_eval_set(const EvalSet& set, const std::filesystem::path& path);

struct DatasetSplit {
  std::vector<GlyphPair> train;
  std::vector<GlyphPair> eval;
};

DatasetSplit split_dataset(const std::vector<GlyphPair>& pairs, const EvalSet& eval_set);

}  // namespace pegan

#endif  // PEGAN_DATASET_HPP
