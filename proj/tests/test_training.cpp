#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "pegan/image.hpp"
#include "test_util.hpp"
#include "toy.hpp"

using namespace pegan;

namespace {

std::vector<double> flat(const std::vector<NamedTensor>& ts) {
  std::vector<double> v;
  for (const auto& t : ts) v.insert(v.end(), t.tensor.data().begin(), t.tensor.data().end());
  return v;
}

std::vector<Tensor> tensors(const std::vector<NamedTensor>& ts) {
  std::vector<Tensor> out;
  for (const auto& t : ts) out.push_back(t.tensor);
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

GlyphImage ramp(int size, bool horizontal) {
  GlyphImage img(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) img.at(x, y) = (horizontal ? x : y) / double(size - 1);
  return img;
}

bool near(double a, double b) { return std::abs(a - b) < 1e-12; }

double mean_l1(Generator& gen, const std::vector<GlyphPair>& pairs) {
  double total = 0;
  for (const auto& p : pairs) {
    const auto out = tensor_to_image(gen.generate(image_to_tensor(p.source), p.category_id));
    for (std::size_t i = 0; i < out.pixels.size(); ++i) total += std::abs(out.pixels[i] - p.target.pixels[i]);
  }
  return total / (pairs.size() * pairs[0].target.pixels.size());
}

}  // namespace

TEST_CASE("train config") {
  TrainConfig c;
  CHECK(c.adam.learning_rate == 1e-3);
  CHECK(c.adam.beta1 == 0.9);
  CHECK(c.adam.beta2 == 0.999);
  CHECK(c.adam.epsilon == 1e-8);
  CHECK(c.enlarge_factor == 1.125);
  CHECK_NOTHROW(c.validate());
  c.batch_size = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.adam.learning_rate = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.stage = Stage::tune;
  c.adversarial = AdversarialForm::minimax;
  c.perceptual_weights.lambda[4] = 3;
  const auto back = nlohmann::json(c).get<TrainConfig>();
  CHECK(back.stage == Stage::tune);
  CHECK(back.adversarial == AdversarialForm::minimax);
  CHECK(back.perceptual_weights.lambda[4] == 3);
  auto j = nlohmann::json(c);
  j["learning_rat"] = 1;
  CHECK_THROWS_AS(j.get<TrainConfig>(), ConfigError);
}

TEST_CASE("augmentation") {
  Rng rng(1);
  const auto img = ramp(64, true);
  CHECK(augment(img, 1.0, rng, Mode::train) == img);
  CHECK(augment(img, 1.125, rng, Mode::eval) == img);

  SUBCASE("256 -> 288 crops stay in [0,32]^2 and cover it") {
    GlyphPair p;
    p.source = ramp(256, true);
    p.target = ramp(256, false);
    std::vector<GlyphImage> cols, rows;
    for (int o = 0; o <= 32; ++o) {
      cols.push_back(enlarge_crop(p.source, 1.125, o, 0));
      rows.push_back(enlarge_crop(p.target, 1.125, 0, o));
    }
    std::set<int> seen_x, seen_y;
    for (int draw = 0; draw < 300; ++draw) {
      const auto a = augment_pair(p, 1.125, rng, Mode::train);
      int ox = -1, oy = -1;
      for (int o = 0; o <= 32; ++o) {
        // the ramp is constant along the other axis, up to interpolation rounding
        if (near(a.source.pixels[0], cols[o].pixels[0]) && near(a.source.pixels[255], cols[o].pixels[255])) ox = o;
        if (near(a.target.pixels[0], rows[o].pixels[0]) && near(a.target.pixels[255 * 256], rows[o].pixels[255 * 256])) oy = o;
      }
      REQUIRE(ox >= 0);
      REQUIRE(oy >= 0);
      seen_x.insert(ox);
      seen_y.insert(oy);
    }
    CHECK(seen_x.size() == 33);
    CHECK(seen_y.size() == 33);
  }
  SUBCASE("source and target share the offset") {
    GlyphPair p;
    p.source = p.target = render_synthetic_glyph(0x4E00, 64, synthetic_style(0));
    for (int i = 0; i < 20; ++i) {
      const auto a = augment_pair(p, 1.125, rng, Mode::train);
      CHECK(a.source == a.target);
    }
  }
}

TEST_CASE("train_step") {
  auto m = testutil::toy_model(4, 16, 2, {4, 8, 8, 8});
  const auto pairs = testutil::toy_pairs(2, 2, 16);
  const auto perception = PerceptionNet::random_fallback(m.perception);

  SUBCASE("zero learning rate leaves parameters bit-identical") {
    Rng init(1);
    Generator g(m.gen, init);
    Discriminator d(m.disc, 16, 16, 2, init);
    const auto gp = flat(g.parameters()), dp = flat(d.parameters());
    Adam ag(AdamOptions{0.0, 0.9, 0.999, 1e-8}), ad(AdamOptions{0.0, 0.9, 0.999, 1e-8});
    Rng r(2);
    train_step(g, d, perception, ag, ad, pairs, m.train, r);
    CHECK(flat(g.parameters()) == gp);
    CHECK(flat(d.parameters()) == dp);
  }
  SUBCASE("deterministic, recomposable, and D keeps no gradient") {
    std::vector<StepReport> reports;
    for (int run = 0; run < 2; ++run) {
      Rng init(3);
      Generator g(m.gen, init);
      Discriminator d(m.disc, 16, 16, 2, init);
      Adam ag, ad;
      Rng r(4);
      reports.push_back(train_step(g, d, perception, ag, ad, pairs, m.train, r, 7));
      for (const auto& p : d.parameters()) {
        if (!p.tensor.has_grad()) continue;
        for (double v : p.tensor.grad()) CHECK(v == 0.0);
      }
    }
    CHECK(reports[0] == reports[1]);
    const auto& s = reports[0];
    CHECK(s.step == 7);
    const LossWeights w;
    CHECK(std::abs(s.loss_total - (w.adv * s.loss_adv_g + w.l1 * s.loss_l1 + w.perp * s.loss_perp +
                                   w.cate * s.loss_cate)) < 1e-9);
    CHECK(s.loss_d > 0);
  }
  SUBCASE("csv row") {
    StepReport r{3, 0.5, 0.25, 0.125, 1.0, 2.0, 15.5};
    const auto row = loss_csv_row(r);
    CHECK(row.substr(0, 2) == "3,");
    CHECK(std::count(row.begin(), row.end(), ',') == 6);
    CHECK(std::string(kLossCsvHeader) == "step,loss_d,loss_adv_g,loss_l1,loss_perp,loss_cate,loss_total");
  }
}

TEST_CASE("pre-training runs, logs and resumes bit-exactly") {
  auto m = testutil::toy_model(4, 16, 2, {4, 8, 8, 8});
  m.train.steps = 6;
  const auto pairs = testutil::toy_pairs(2, 3, 16);
  const auto perception = PerceptionNet::random_fallback(m.perception);
  const auto dir = testutil::fresh_dir("train_run");

  RunHooks hooks;
  hooks.output_dir = dir / "full";
  std::vector<StepReport> seen;
  hooks.on_step = [&](const StepReport& r) { seen.push_back(r); };
  auto full = pretrain(pairs, m.gen, m.disc, m.perception, m.train, 42, hooks);
  CHECK(full.step == 6);
  REQUIRE(seen.size() == 6);
  CHECK(seen.back().step == 6);
  std::ifstream csv(dir / "full" / "loss.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == kLossCsvHeader);
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 6);

  RunHooks half;
  half.output_dir = dir / "split";
  half.max_steps = 4;
  auto first = pretrain(pairs, m.gen, m.disc, m.perception, m.train, 42, half);
  CHECK(first.step == 4);
  first.save(dir / "mid.pegan");
  auto resumed = Checkpoint::load(dir / "mid.pegan");
  CHECK(resumed.remaining_steps() == 2);
  half.max_steps = UINT64_MAX;
  run_stage(resumed, pairs, perception, half);
  CHECK(resumed.to_archive().serialize() == full.to_archive().serialize());
  CHECK(slurp(dir / "split" / "loss.csv") == slurp(dir / "full" / "loss.csv"));

  // save -> load -> save
  full.save(dir / "a.pegan");
  Checkpoint::load(dir / "a.pegan").save(dir / "b.pegan");
  CHECK(slurp(dir / "a.pegan") == slurp(dir / "b.pegan"));

  auto other = pretrain(pairs, m.gen, m.disc, m.perception, m.train, 43);
  CHECK(other.to_archive().serialize() != full.to_archive().serialize());
}

TEST_CASE("pre-training preconditions") {
  auto m = testutil::toy_model(3, 16, 2, {4, 8, 8});
  m.train.steps = 2;
  auto only0 = testutil::toy_pairs(1, 4, 16);
  CHECK_THROWS_AS(pretrain(only0, m.gen, m.disc, m.perception, m.train, 1), DatasetError);
  auto m1 = testutil::toy_model(3, 16, 1, {4, 8, 8});
  m1.train.steps = 2;
  CHECK(pretrain(only0, m1.gen, m1.disc, m1.perception, m1.train, 1).step == 2);
  auto wrong_size = testutil::toy_pairs(2, 2, 32);
  CHECK_THROWS_AS(pretrain(wrong_size, m.gen, m.disc, m.perception, m.train, 1), DatasetError);
}

TEST_CASE("tuning freezes the encoder and the embedding") {
  auto m = testutil::toy_model(4, 16, 2, {4, 8, 8, 8});
  m.train.steps = 4;
  const auto pairs = testutil::toy_pairs(2, 4, 16);
  const auto perception = PerceptionNet::random_fallback(m.perception);
  auto ckpt = pretrain(pairs, m.gen, m.disc, m.perception, m.train, 5);
  const auto enc = hash_tensors(tensors(ckpt.generator->encoder_parameters()));
  const auto enc_buf = hash_tensors(tensors(ckpt.generator->encoder_buffers()));
  const auto emb = hash_tensors({ckpt.generator->embedding_table()});
  const auto dec = hash_tensors(tensors(ckpt.generator->decoder_parameters()));

  TrainConfig tc = m.train;
  tc.steps = 50;
  tune(ckpt, 1, pairs, tc);
  CHECK(ckpt.step == 54);
  CHECK(ckpt.train_config.stage == Stage::tune);
  CHECK(hash_tensors(tensors(ckpt.generator->encoder_parameters())) == enc);
  CHECK(hash_tensors(tensors(ckpt.generator->encoder_buffers())) == enc_buf);
  CHECK(hash_tensors({ckpt.generator->embedding_table()}) == emb);
  CHECK(hash_tensors(tensors(ckpt.generator->decoder_parameters())) != dec);

  // tune of a tune continues numbering, through a save/load
  const auto dir = testutil::fresh_dir("tune_twice");
  ckpt.save(dir / "t.pegan");
  auto again = Checkpoint::load(dir / "t.pegan");
  CHECK(again.generator->encoder_frozen());
  tc.steps = 3;
  std::vector<std::uint64_t> steps;
  RunHooks hooks;
  hooks.on_step = [&](const StepReport& r) { steps.push_back(r.step); };
  tune(again, 1, pairs, tc, hooks);
  CHECK(steps == std::vector<std::uint64_t>{55, 56, 57});
  CHECK(hash_tensors(tensors(again.generator->encoder_parameters())) == enc);

  CHECK_THROWS_AS(begin_tune(again, 2, tc), ConfigError);
  CHECK_THROWS_AS(tune(again, 0, pairs_of_category(pairs, 1), tc), DatasetError);
}

TEST_CASE("tuning lowers target-category L1 (median of 3 seeds)") {
  auto m = testutil::toy_model(4, 16, 2, {8, 16, 16, 16});
  m.train.steps = 30;
  const auto pairs = testutil::toy_pairs(2, 4, 16);
  const auto target = pairs_of_category(pairs, 1);
  std::vector<double> gains;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto ckpt = pretrain(pairs, m.gen, m.disc, m.perception, m.train, seed);
    const double before = mean_l1(*ckpt.generator, target);
    TrainConfig tc = m.train;
    tc.steps = 40;
    tune(ckpt, 1, pairs, tc);
    gains.push_back(before - mean_l1(*ckpt.generator, target));
  }
  std::sort(gains.begin(), gains.end());
  CHECK(gains[1] > 0);
}
