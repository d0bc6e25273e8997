#include "pegan/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace pegan {

namespace {

std::optional<char32_t> parse_hex_codepoint(const std::string& text) {
  if (text.size() < 3 || text.size() > 8 || (text[0] != 'U' && text[0] != 'u') || text[1] != '+')
    return std::nullopt;
  char32_t value = 0;
  for (std::size_t i = 2; i < text.size(); ++i) {
    const char c = text[i];
    int digit;
    if (c >= '0' && c <= '9') digit = c - '0';
    else if (c >= 'a' && c <= 'f') digit = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') digit = c - 'A' + 10;
    else return std::nullopt;
    value = value * 16 + static_cast<char32_t>(digit);
  }
  if (value > 0x10FFFF || (value >= 0xD800 && value <= 0xDFFF)) return std::nullopt;
  return value;
}

// Single UTF-8 encoded scalar value, or nullopt.
std::optional<char32_t> decode_utf8_char(const std::string& text) {
  if (text.empty()) return std::nullopt;
  const auto b0 = static_cast<unsigned char>(text[0]);
  std::size_t len;
  char32_t value;
  if (b0 < 0x80) { len = 1; value = b0; }
  else if ((b0 & 0xE0) == 0xC0) { len = 2; value = b0 & 0x1F; }
  else if ((b0 & 0xF0) == 0xE0) { len = 3; value = b0 & 0x0F; }
  else if ((b0 & 0xF8) == 0xF0) { len = 4; value = b0 & 0x07; }
  else return std::nullopt;
  if (text.size() != len) return std::nullopt;
  for (std::size_t i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(text[i]);
    if ((b & 0xC0) != 0x80) return std::nullopt;
    value = (value << 6) | (b & 0x3F);
  }
  static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
  if (value < kMin[len] || value > 0x10FFFF || (value >= 0xD800 && value <= 0xDFFF))
    return std::nullopt;
  return value;
}

std::optional<int> parse_positive_int(const std::string& text) {
  if (text.empty() || text.size() > 9) return std::nullopt;
  int value = 0;
  for (char c : text) {
    if (c < '0' || c > '9') return std::nullopt;
    value = value * 10 + (c - '0');
  }
  if (value < 1) return std::nullopt;
  return value;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \r\n") - b + 1);
}

}  // namespace

std::string codepoint_label(char32_t codepoint) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "U+%04X", static_cast<unsigned>(codepoint));
  return buf;
}

std::string glyph_filename(char32_t codepoint, const std::string& extension) {
  return codepoint_label(codepoint) + extension;
}

std::optional<char32_t> parse_glyph_filename(const std::string& filename) {
  const auto dot = filename.rfind('.');
  if (dot == std::string::npos) return std::nullopt;
  const auto ext = filename.substr(dot);
  if (ext != ".png" && ext != ".pgm") return std::nullopt;
  return parse_hex_codepoint(filename.substr(0, dot));
}

std::vector<std::pair<char32_t, std::filesystem::path>> list_glyph_files(
    const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec))
    throw DatasetError("glyph directory not found: " + dir.string());
  std::vector<std::pair<char32_t, std::filesystem::path>> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (auto cp = parse_glyph_filename(entry.path().filename().string()))
      files.emplace_back(*cp, entry.path());
  }
  std::sort(files.begin(), files.end());
  for (std::size_t i = 1; i < files.size(); ++i)
    if (files[i].first == files[i - 1].first)
      throw DatasetError("duplicate glyph " + codepoint_label(files[i].first) + " in " +
                         dir.string());
  return files;
}

std::vector<GlyphPair> load_pairs(const std::filesystem::path& source_dir,
                                  const std::filesystem::path& target_dir, int category_id,
                                  int image_size, std::vector<std::string>* warnings) {
  const auto sources = list_glyph_files(source_dir);
  const auto targets = list_glyph_files(target_dir);
  auto warn = [&](const std::filesystem::path& p, const std::filesystem::path& other) {
    if (warnings) warnings->push_back("unmatched glyph " + p.string() + " (no counterpart in " +
                                      other.string() + ")");
  };
  auto load = [&](const std::filesystem::path& p) {
    return image_size > 0 ? load_image(p, image_size) : load_image(p);
  };
  std::vector<GlyphPair> pairs;
  std::size_t i = 0, j = 0;
  while (i < sources.size() || j < targets.size()) {
    if (j == targets.size() || (i < sources.size() && sources[i].first < targets[j].first)) {
      warn(sources[i++].second, target_dir);
    } else if (i == sources.size() || targets[j].first < sources[i].first) {
      warn(targets[j++].second, source_dir);
    } else {
      GlyphPair pair;
      pair.source = load(sources[i].second);
      pair.target = load(targets[j].second);
      pair.codepoint = sources[i].first;
      pair.category_id = category_id;
      if (pair.source.width != pair.target.width || pair.source.height != pair.target.height)
        throw DatasetError("size mismatch between " + sources[i].second.string() + " and " +
                           targets[j].second.string());
      pairs.push_back(std::move(pair));
      ++i;
      ++j;
    }
  }
  if (pairs.empty())
    throw DatasetError("no common glyphs between " + source_dir.string() + " and " +
                       target_dir.string());
  return pairs;
}

std::vector<CharacterMeta> parse_metadata(std::istream& in, const std::string& source_name) {
  std::vector<CharacterMeta> meta;
  std::unordered_map<int, std::size_t> rank_line;
  std::set<char32_t> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = source_name + ":" + std::to_string(lineno);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(trim(field));
    if (fields.size() != 3)
      throw DatasetError(where + ": expected 3 tab-separated fields, got " +
                         std::to_string(fields.size()));
    auto cp = parse_hex_codepoint(fields[0]);
    if (!cp) cp = decode_utf8_char(fields[0]);
    if (!cp) throw DatasetError(where + ": bad codepoint '" + fields[0] + "'");
    const auto strokes = parse_positive_int(fields[1]);
    if (!strokes) throw DatasetError(where + ": bad stroke count '" + fields[1] + "'");
    const auto rank = parse_positive_int(fields[2]);
    if (!rank) throw DatasetError(where + ": bad frequency rank '" + fields[2] + "'");
    if (auto [it, fresh] = rank_line.emplace(*rank, lineno); !fresh)
      throw DatasetError(where + ": frequency rank " + fields[2] + " already used on line " +
                         std::to_string(it->second));
    if (!seen.insert(*cp).second)
      throw DatasetError(where + ": duplicate codepoint " + codepoint_label(*cp));
    meta.push_back({*cp, *strokes, *rank});
  }
  return meta;
}

std::vector<CharacterMeta> load_metadata(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open metadata file " + path.string());
  return parse_metadata(in, path.string());
}

void write_metadata(const std::vector<CharacterMeta>& meta, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "# codepoint\tstroke_count\tfrequency_rank\n";
  for (const auto& m : meta)
    out << codepoint_label(m.codepoint) << '\t' << m.stroke_count << '\t' << m.frequency_rank
        << '\n';
  if (!out) throw IoError("cannot write metadata file " + path.string());
}

Band band_for_strokes(int stroke_count) {
  if (stroke_count <= 5) return Band::easy;
  if (stroke_count <= 9) return Band::mid;
  return Band::hard;
}

bool EvalSet::contains(char32_t codepoint) const { return band_of(codepoint).has_value(); }

std::optional<Band> EvalSet::band_of(char32_t codepoint) const {
  for (std::size_t b = 0; b < 3; ++b) {
    const auto& cps = bands[b].codepoints;
    if (std::find(cps.begin(), cps.end(), codepoint) != cps.end()) return static_cast<Band>(b);
  }
  return std::nullopt;
}

std::size_t EvalSet::size() const {
  return bands[0].codepoints.size() + bands[1].codepoints.size() + bands[2].codepoints.size();
}

EvalSet build_eval_set(const std::vector<CharacterMeta>& meta, int per_band) {
  if (meta.empty()) throw DatasetError("character metadata is empty");
  if (per_band < 1) throw ConfigError("per_band must be >= 1");
  std::array<std::vector<CharacterMeta>, 3> candidates;
  for (const auto& m : meta) candidates[static_cast<int>(band_for_strokes(m.stroke_count))].push_back(m);
  EvalSet set;
  set.per_band = per_band;
  for (std::size_t b = 0; b < 3; ++b) {
    auto& c = candidates[b];
    std::sort(c.begin(), c.end(), [](const CharacterMeta& x, const CharacterMeta& y) {
      return x.frequency_rank != y.frequency_rank ? x.frequency_rank < y.frequency_rank
                                                  : x.codepoint < y.codepoint;
    });
    const auto take = std::min(c.size(), static_cast<std::size_t>(per_band));
    set.bands[b].shortfall = take < static_cast<std::size_t>(per_band);
    for (std::size_t i = 0; i < take; ++i) set.bands[b].codepoints.push_back(c[i].codepoint);
  }
  return set;
}

void to_json(nlohmann::json& j, const EvalSet& set) {
  j = nlohmann::json{{"per_band", set.per_band}};
  for (std::size_t b = 0; b < 3; ++b) {
    nlohmann::json cps = nlohmann::json::array();
    for (char32_t cp : set.bands[b].codepoints) cps.push_back(codepoint_label(cp));
    j["bands"][kBandNames[b]] = {{"codepoints", cps},
                                 {"count", set.bands[b].codepoints.size()},
                                 {"shortfall", set.bands[b].shortfall}};
  }
}

void from_json(const nlohmann::json& j, EvalSet& set) {
  try {
    set.per_band = j.at("per_band").get<int>();
    for (std::size_t b = 0; b < 3; ++b) {
      const auto& band = j.at("bands").at(kBandNames[b]);
      set.bands[b].codepoints.clear();
      for (const auto& label : band.at("codepoints")) {
        auto cp = parse_hex_codepoint(label.get<std::string>());
        if (!cp) throw DatasetError("bad codepoint " + label.dump() + " in evaluation set");
        set.bands[b].codepoints.push_back(*cp);
      }
      set.bands[b].shortfall = band.value("shortfall", false);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(std::string("malformed evaluation set: ") + e.what());
  }
}

EvalSet load_eval_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open evaluation set " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError("evaluation set " + path.string() + " is not valid JSON: " + e.what());
  }
  return j.get<EvalSet>();
}

void save_eval_set(const EvalSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << nlohmann::json(set).dump(2) << '\n';
  if (!out) throw IoError("cannot write evaluation set " + path.string());
}

DatasetSplit split_dataset(const std::vector<GlyphPair>& pairs, const EvalSet& eval_set) {
  DatasetSplit split;
  for (const auto& p : pairs) (eval_set.contains(p.codepoint) ? split.eval : split.train).push_back(p);
  return split;
}

}  // namespace pegan
