#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "evalset_check.hpp"
#include "pegan/image.hpp"
#include "pegan/synthetic.hpp"
#include "test_util.hpp"

using namespace pegan;
namespace fs = std::filesystem;

namespace {

GlyphImage random_8bit(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GlyphImage img(w, h);
  for (auto& p : img.pixels) p = static_cast<double>(rng() % 256) / 255.0;
  return img;
}

void write_pgm(const fs::path& path, const GlyphImage& img) {
  std::ofstream f(path, std::ios::binary);
  f << "P5\n" << img.width << " " << img.height << "\n255\n";
  for (double p : img.pixels) f.put(static_cast<char>(std::lround(p * 255)));
}

}  // namespace

TEST_CASE("image round trips") {
  const auto dir = testutil::fresh_dir("dataset_images");
  const auto img = random_8bit(13, 7, 1);
  save_image(img, dir / "a.png");
  save_image(img, dir / "a.pgm");
  CHECK(load_image(dir / "a.png") == img);
  CHECK(load_image(dir / "a.pgm") == img);
  write_pgm(dir / "b.pgm", img);
  CHECK(load_image(dir / "b.pgm") == load_image(dir / "a.png"));
  CHECK_THROWS_AS(load_image(dir / "missing.png"), IoError);
  {
    std::ofstream f(dir / "bad.png", std::ios::binary);
    f << "garbage";
  }
  CHECK_THROWS_AS(load_image(dir / "bad.png"), IoError);
  {
    std::ofstream f(dir / "deep.pgm", std::ios::binary);
    f << "P5\n1 1\n65535\n\x01\x02";
  }
  CHECK_THROWS_AS(load_image(dir / "deep.pgm"), IoError);
  CHECK_THROWS_AS(save_image(img, dir / "a.bmp"), IoError);
}

TEST_CASE("16-bit PNG is rejected") {
  const auto dir = testutil::fresh_dir("dataset_png16");
  // 1x1 16-bit grayscale PNG
  const unsigned char png[] = {
      0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44, 0x52,
      0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x10, 0x00, 0x00, 0x00, 0x00, 0x37, 0x6e, 0xf9,
      0x24, 0x00, 0x00, 0x00, 0x0b, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0x60, 0x60, 0x00, 0x00,
      0x00, 0x03, 0x00, 0x01, 0x2a, 0x8a, 0xa4, 0x9a, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44,
      0xae, 0x42, 0x60, 0x82};
  {
    std::ofstream f(dir / "g16.png", std::ios::binary);
    f.write(reinterpret_cast<const char*>(png), sizeof(png));
  }
  CHECK_THROWS_AS(load_image(dir / "g16.png"), IoError);
}

TEST_CASE("non-square input is padded white then resized") {
  const auto dir = testutil::fresh_dir("dataset_pad");
  GlyphImage img(100, 200, 0.0);  // black, tall
  save_image(img, dir / "tall.png");
  const auto loaded = load_image(dir / "tall.png", 256);
  CHECK(loaded.width == 256);
  CHECK(loaded.height == 256);
  // horizontal margins of 50 px at the 200 scale -> 64 px at 256
  CHECK(loaded.at(10, 128) == 1.0);
  CHECK(loaded.at(245, 128) == 1.0);
  CHECK(loaded.at(128, 10) == 0.0);
  CHECK(loaded.at(128, 245) == 0.0);
  const auto padded = pad_to_square(img);
  CHECK(padded.width == 200);
  CHECK(padded.at(49, 0) == 1.0);
  CHECK(padded.at(50, 0) == 0.0);
  CHECK(padded.at(149, 199) == 0.0);
  CHECK(padded.at(150, 199) == 1.0);
}

TEST_CASE("resampling and crops") {
  const auto img = random_8bit(16, 16, 2);
  CHECK(resize_bilinear(img, 16, 16) == img);
  CHECK(enlarge_crop(img, 1.0, 0, 0) == img);
  CHECK(enlarged_size(256, 1.125) == 288);
  CHECK_THROWS_AS(enlarged_size(256, 0.5), ConfigError);
  CHECK_THROWS_AS(enlarge_crop(img, 1.125, 3, 0), ShapeError);  // 18 - 16 = 2 max
  GlyphImage flat(8, 8, 0.25);
  const auto big = resize_bilinear(flat, 13, 11);
  for (double p : big.pixels) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));
  const auto t = image_to_tensor(img);
  CHECK(t.shape() == Shape{1, 1, 16, 16});
  CHECK(t.data()[0] == 2 * img.pixels[0] - 1);
  CHECK(quantize8(tensor_to_image(t)) == img);
  CHECK(quantize8(img) == img);
}

TEST_CASE("glyph file names") {
  CHECK(parse_glyph_filename("U+4E00.png") == char32_t(0x4E00));
  CHECK(parse_glyph_filename("U+1F600.pgm") == char32_t(0x1F600));
  CHECK_FALSE(parse_glyph_filename("4E00.png").has_value());
  CHECK_FALSE(parse_glyph_filename("U+4E00.jpg").has_value());
  CHECK_FALSE(parse_glyph_filename("U+XYZ.png").has_value());
  CHECK(glyph_filename(0x4E00) == "U+4E00.png");
  CHECK(codepoint_label(0x41) == "U+0041");
}

TEST_CASE("pairing") {
  const auto root = testutil::fresh_dir("dataset_pairs");
  fs::create_directories(root / "a");
  fs::create_directories(root / "b");
  fs::create_directories(root / "c");
  GlyphImage g(8, 8, 0.5);
  for (char32_t cp : {0x4E04, 0x4E00, 0x4E01, 0x4E02, 0x4E03}) save_image(g, root / "a" / glyph_filename(cp));
  for (char32_t cp : {0x4E01, 0x4E03, 0x4E04, 0x4E10, 0x4E11}) save_image(g, root / "b" / glyph_filename(cp));
  save_image(g, root / "c" / glyph_filename(0x5000));
  std::vector<std::string> warnings;
  const auto pairs = load_pairs(root / "a", root / "b", 3, 0, &warnings);
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0].codepoint == 0x4E01);
  CHECK(pairs[1].codepoint == 0x4E03);
  CHECK(pairs[2].codepoint == 0x4E04);
  CHECK(pairs[0].category_id == 3);
  CHECK(warnings.size() == 4);
  const auto same = load_pairs(root / "a", root / "a", 0);
  CHECK(same.size() == 5);
  CHECK(std::is_sorted(same.begin(), same.end(), [](auto& x, auto& y) { return x.codepoint < y.codepoint; }));
  CHECK_THROWS_AS(load_pairs(root / "a", root / "c", 0), DatasetError);
  CHECK_THROWS_AS(load_pairs(root / "a", root / "nope", 0), DatasetError);
  const auto resized = load_pairs(root / "a", root / "b", 0, 16);
  CHECK(resized[0].source.width == 16);
}

TEST_CASE("metadata parsing") {
  std::istringstream ok("# comment\nU+4E00\t1\t3\n\n\xE4\xB8\x81\t2\t1\n");
  const auto meta = parse_metadata(ok, "m.tsv");
  REQUIRE(meta.size() == 2);
  CHECK(meta[1].codepoint == 0x4E01);
  CHECK(meta[1].frequency_rank == 1);
  std::istringstream bad("U+4E00\t1\t3\nU+4E01\tx\t4\n");
  try {
    parse_metadata(bad, "m.tsv");
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    CHECK(std::string(e.what()).find("m.tsv:2") != std::string::npos);
  }
  std::istringstream dup("U+4E00\t1\t3\nU+4E01\t1\t3\n");
  CHECK_THROWS_AS(parse_metadata(dup, "m"), DatasetError);
  std::istringstream zero("U+4E00\t0\t3\n");
  CHECK_THROWS_AS(parse_metadata(zero, "m"), DatasetError);
}

TEST_CASE("band boundaries") {
  CHECK(band_for_strokes(5) == Band::easy);
  CHECK(band_for_strokes(6) == Band::mid);
  CHECK(band_for_strokes(9) == Band::mid);
  CHECK(band_for_strokes(10) == Band::hard);
}

TEST_CASE("evaluation set selection") {
  const auto meta = synthetic_metadata(600, 3);
  const auto set = build_eval_set(meta, 100);
  for (int b = 0; b < 3; ++b) CHECK(set.bands[b].codepoints.size() == 100);
  auto bad = testutil::eval_set_violations(set, meta, 100);
  CHECK(bad.empty());

  std::vector<CharacterMeta> small;
  int rank = 1;
  for (int s : {2, 7, 12})
    for (int i = 0; i < 50; ++i) small.push_back({char32_t(0x4E00 + rank), s, rank++});
  const auto short_set = build_eval_set(small, 100);
  for (int b = 0; b < 3; ++b) {
    CHECK(short_set.bands[b].codepoints.size() == 50);
    CHECK(short_set.bands[b].shortfall);
  }
  // equal ranks fall back to codepoint order
  std::vector<CharacterMeta> ties{{0x4E05, 1, 1}, {0x4E02, 1, 1}, {0x4E09, 1, 1}};
  const auto t = build_eval_set(ties, 2);
  CHECK(t.bands[0].codepoints == std::vector<char32_t>{0x4E02, 0x4E05});
  CHECK_THROWS_AS(build_eval_set({}, 100), DatasetError);
}

TEST_CASE("evaluation set file is stable") {
  const auto dir = testutil::fresh_dir("dataset_evalset");
  const auto set = build_eval_set(synthetic_metadata(120, 9), 10);
  save_eval_set(set, dir / "a.json");
  save_eval_set(load_eval_set(dir / "a.json"), dir / "b.json");
  std::ifstream a(dir / "a.json"), b(dir / "b.json");
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
  const auto back = load_eval_set(dir / "a.json");
  for (int i = 0; i < 3; ++i) CHECK(back.bands[i].codepoints == set.bands[i].codepoints);
}

TEST_CASE("split") {
  std::vector<GlyphPair> pairs(10);
  for (int i = 0; i < 10; ++i) pairs[i].codepoint = 0x4E00 + i;
  EvalSet empty;
  auto s = split_dataset(pairs, empty);
  CHECK(s.train.size() == 10);
  CHECK(s.eval.empty());
  EvalSet some;
  some.bands[0].codepoints = {0x4E01, 0x4E07};
  some.bands[2].codepoints = {0x4E03, 0x5000};
  s = split_dataset(pairs, some);
  CHECK(s.eval.size() == 3);
  CHECK(s.train.size() + s.eval.size() == pairs.size());
  for (const auto& p : s.train) CHECK_FALSE(some.contains(p.codepoint));
  for (const auto& p : s.eval) CHECK(some.contains(p.codepoint));
}

TEST_CASE("synthetic fonts share skeletons and differ in style") {
  const auto a = render_synthetic_glyph(0x4E00, 32, synthetic_style(0));
  const auto b = render_synthetic_glyph(0x4E00, 32, synthetic_style(1));
  const auto c = render_synthetic_glyph(0x4E01, 32, synthetic_style(0));
  CHECK(a == render_synthetic_glyph(0x4E00, 32, synthetic_style(0)));
  CHECK_FALSE(a == b);
  CHECK_FALSE(a == c);
  double ink = 0;
  for (double p : a.pixels) ink += 1 - p;
  CHECK(ink > 10);
  CHECK(ink < 32 * 32 * 0.7);
}
