// One PASS/FAIL line per acceptance criterion; nonzero exit if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "arch_check.hpp"
#include "cli_fixture.hpp"
#include "evalset_check.hpp"
#include "loss_oracle.hpp"
#include "metric_oracle.hpp"
#include "pegan/gradcheck.hpp"
#include "pegan/image.hpp"
#include "pegan/losses.hpp"
#include "pegan/metrics.hpp"
#include "pegan/recognizer.hpp"
#include "pegan/synthetic.hpp"
#include "pegan/training.hpp"
#include "toy.hpp"

using namespace pegan;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

// CPU seconds since construction.
class CpuTimer {
 public:
  CpuTimer() : start_(std::clock()) {}
  double seconds() const { return double(std::clock() - start_) / CLOCKS_PER_SEC; }

 private:
  std::clock_t start_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome gradient_suite() {
  CpuTimer t;
  const auto results = run_gradcheck_suite();
  const double secs = t.seconds();
  Outcome o;
  double worst = 0;
  bool saw_g = false, saw_d = false;
  for (const auto& r : results) {
    worst = std::max(worst, r.max_rel_error);
    if (!r.passed) {
      o.ok = false;
      o.detail += r.name + " failed; ";
    }
    saw_g |= r.name.find("generator") != std::string::npos;
    saw_d |= r.name.find("discriminator") != std::string::npos;
  }
  if (!saw_g || !saw_d) {
    o.ok = false;
    o.detail += "end-to-end objectives missing; ";
  }
  if (secs >= 120) o.ok = false;
  o.detail += std::to_string(results.size()) + " checks, worst rel err " + fmt("%.2e", worst) +
              ", " + fmt("%.1f", secs) + " s";
  return o;
}

Outcome architecture() {
  Outcome o;
  struct Case {
    int depth, size;
  };
  for (const Case c : {Case{3, 16}, Case{6, 64}, Case{8, 256}}) {
    GeneratorConfig cfg;
    cfg.depth = c.depth;
    cfg.width = cfg.height = c.size;
    cfg.encoder_channels.resize(c.depth);  // default widths, truncated to the depth
    cfg.num_categories = 2;
    Rng rng(1);
    Generator gen(cfg, rng);
    const auto bad = testutil::architecture_violations(gen);
    o.detail += "(" + std::to_string(c.depth) + "," + std::to_string(c.size) + "): " +
                std::to_string(bad.size()) + " violations; ";
    if (!bad.empty()) {
      o.ok = false;
      o.detail += bad.front() + "; ";
    }
  }
  return o;
}

std::vector<double> uniform(std::size_t n, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

Tensor leaf(Shape s, std::vector<double> v) { return Tensor(std::move(s), std::move(v)); }

Outcome loss_identities() {
  std::mt19937_64 rng(21);
  double worst = 0;
  bool exact = true;
  const LossWeights w;
  exact &= w.adv == 1 && w.l1 == 100 && w.perp == 1 && w.cate == 1;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 2 + trial % 5, n = 2 + trial % 3;
    const auto pr = uniform(b, rng, 0.001, 0.999), pf = uniform(b, rng, 0.001, 0.999);
    const Tensor tr = leaf({b, 1}, pr), tf = leaf({b, 1}, pf);
    const double adv_d = adv_loss_d(tr, tf).item();
    const double adv_mm = adv_loss_g(tf, AdversarialForm::minimax).item();
    const double adv_ns = adv_loss_g(tf, AdversarialForm::non_saturating).item();
    worst = std::max({worst, std::abs(adv_d - oracle::adv_d(pr, pf)),
                      std::abs(adv_mm - oracle::adv_g_minimax(pf)),
                      std::abs(adv_ns - oracle::adv_g_nonsat(pf))});

    const auto x = uniform(b * 64, rng, -1, 1), g = uniform(b * 64, rng, -1, 1);
    const double l1 = l1_loss(leaf({b, 1, 8, 8}, x), leaf({b, 1, 8, 8}, g)).item();
    worst = std::max(worst, std::abs(l1 - oracle::l1(x, g)));

    const auto logits = uniform(b * n, rng, -6, 6);
    std::vector<int> targets(b);
    for (auto& t : targets) t = static_cast<int>(rng() % n);
    const double cate = category_loss(leaf({b, n}, logits), targets).item();
    worst = std::max(worst, std::abs(cate - oracle::category(logits, n, targets)));

    std::vector<Tensor> fx, fg;
    std::vector<std::vector<double>> vx, vg;
    PerceptualLayerWeights lw;
    double lambda[5];
    for (int l = 0; l < 5; ++l) {
      const std::size_t sz = 3 + l;
      vx.push_back(uniform(b * sz, rng, -2, 2));
      vg.push_back(uniform(b * sz, rng, -2, 2));
      fx.push_back(leaf({b, sz}, vx.back()));
      fg.push_back(leaf({b, sz}, vg.back()));
      lambda[l] = lw.lambda[l] = uniform(1, rng, 0, 2)[0];
    }
    const double perp = perceptual_loss(fx, fg, lw).item();
    worst = std::max(worst, std::abs(perp - oracle::perceptual(vx, vg, lambda)));

    const double total = total_generator_loss(Tensor(Shape{1}, {adv_ns}), Tensor(Shape{1}, {l1}),
                                              Tensor(Shape{1}, {perp}), Tensor(Shape{1}, {cate}), w)
                             .item();
    exact &= total == 1.0 * adv_ns + 100.0 * l1 + 1.0 * perp + 1.0 * cate;
  }
  return {worst < 1e-10 && exact,
          "max |loss - oracle| " + fmt("%.2e", worst) + ", total " + (exact ? "exact" : "NOT exact")};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    GlyphImage x(16, 16), y(16, 16);
    for (auto& p : x.pixels) p = u(rng);
    for (std::size_t i = 0; i < y.pixels.size(); ++i)
      y.pixels[i] = std::clamp(x.pixels[i] + (trial % 4) * 0.2 * (u(rng) - 0.5), 0.0, 1.0);
    worst = std::max({worst, std::abs(psnr(x, y) - oracle::psnr(x, y)),
                      std::abs(ssim(x, y) - oracle::ssim(x, y)),
                      std::abs(uqi(x, y) - oracle::uqi(x, y))});
  }
  GlyphImage x(16, 16);
  for (auto& p : x.pixels) p = u(rng);
  const bool identical = ssim(x, x) == 1.0 && uqi(x, x) == 1.0 && psnr(x, x) == kPsnrIdentical;
  return {worst < 1e-9 && identical, "max |metric - oracle| " + fmt("%.2e", worst) +
                                         ", identical images " + (identical ? "1/1/inf" : "WRONG")};
}

double mean_psnr(Generator& gen, const std::vector<GlyphPair>& pairs) {
  double total = 0;
  for (const auto& p : pairs)
    total += psnr(tensor_to_image(gen.generate(image_to_tensor(p.source), p.category_id)), p.target);
  return total / pairs.size();
}

Outcome micro_overfit() {
  CpuTimer t;
  auto m = testutil::toy_model(6, 64, 2, {16, 32, 64, 64, 64, 64});
  m.gen.embedding_dim = 16;
  m.train.steps = 300;
  const auto pairs = testutil::toy_pairs(2, 8, 64);
  std::vector<double> ratios, gains;
  std::string per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto untrained = initial_checkpoint(m.gen, m.disc, m.perception, m.train, seed);
    const double before = mean_psnr(*untrained.generator, pairs);
    double first = 0, last = 0;
    RunHooks hooks;
    hooks.on_step = [&](const StepReport& r) {
      if (r.step == 1) first = r.loss_total;
      last = r.loss_total;
    };
    auto trained = pretrain(pairs, m.gen, m.disc, m.perception, m.train, seed, hooks);
    const double after = mean_psnr(*trained.generator, pairs);
    ratios.push_back(last / first);
    gains.push_back(after - before);
    per_seed += "seed " + std::to_string(seed) + ": loss " + fmt("%.3f", first) + "->" +
                fmt("%.3f", last) + ", psnr " + fmt("%.2f", before) + "->" + fmt("%.2f", after) + "; ";
  }
  std::sort(ratios.begin(), ratios.end());
  std::sort(gains.begin(), gains.end());
  const double secs = t.seconds();
  return {ratios[1] < 0.5 && gains[1] >= 3.0 && secs < 900,
          per_seed + "median loss ratio " + fmt("%.3f", ratios[1]) + ", median psnr gain " +
              fmt("%.2f", gains[1]) + " dB, " + fmt("%.0f", secs) + " s"};
}

std::vector<Tensor> tensors(const std::vector<NamedTensor>& ts) {
  std::vector<Tensor> out;
  for (const auto& t : ts) out.push_back(t.tensor);
  return out;
}

Outcome two_stage() {
  auto m = testutil::toy_model(5, 32, 2, {8, 16, 16, 16, 16});
  m.train.steps = 10;
  const auto pairs = testutil::toy_pairs(2, 6, 32);
  const auto dir = testutil::fresh_dir("accept_tune");
  pretrain(pairs, m.gen, m.disc, m.perception, m.train, 7).save(dir / "pre.pegan");
  const auto pre = Checkpoint::load(dir / "pre.pegan");
  auto ckpt = Checkpoint::load(dir / "pre.pegan");
  TrainConfig tc = m.train;
  tc.steps = 10;
  tune(ckpt, 1, pairs, tc);
  ckpt.save(dir / "tuned.pegan");
  const auto tuned = Checkpoint::load(dir / "tuned.pegan");
  const bool enc = hash_tensors(tensors(pre.generator->encoder_parameters())) ==
                       hash_tensors(tensors(tuned.generator->encoder_parameters())) &&
                   hash_tensors(tensors(pre.generator->encoder_buffers())) ==
                       hash_tensors(tensors(tuned.generator->encoder_buffers()));
  const bool emb = hash_tensors({pre.generator->embedding_table()}) ==
                   hash_tensors({tuned.generator->embedding_table()});
  const bool dec = hash_tensors(tensors(pre.generator->decoder_parameters())) !=
                   hash_tensors(tensors(tuned.generator->decoder_parameters()));
  return {enc && emb && dec, std::string("encoder ") + (enc ? "identical" : "CHANGED") + ", embedding " +
                                 (emb ? "identical" : "CHANGED") + ", decoder " +
                                 (dec ? "differs" : "UNCHANGED")};
}

Outcome eval_set_builder() {
  const auto meta = synthetic_metadata(600, 17);
  const auto set = build_eval_set(meta, 100);
  const auto bad = testutil::eval_set_violations(set, meta, 100);
  std::string sizes;
  bool ok = bad.empty();
  for (int b = 0; b < 3; ++b) {
    sizes += (b ? "," : "") + std::to_string(set.bands[b].codepoints.size());
    ok &= set.bands[b].codepoints.size() == 100;
  }
  return {ok, "sizes (" + sizes + "), " + std::to_string(bad.size()) + " violations"};
}

Outcome determinism() {
  std::vector<std::map<std::string, std::string>> runs;
  for (int run = 0; run < 2; ++run) {
    const auto dir = testutil::toy_workspace("accept_det" + std::to_string(run), 8,
                                             testutil::toy_run_config(8, 11));
    const auto cfg = (dir / "cfg.json").string();
    auto r = testutil::cli({"train", "--config", cfg});
    if (r.code != 0) return {false, "train failed: " + r.err};
    const auto ckpt = (dir / "out" / "checkpoint.pegan").string();
    r = testutil::cli({"generate", "--checkpoint", ckpt, "--input-dir", (dir / "data" / "source").string(),
                       "--category", "target1", "--output-dir", (dir / "gen").string()});
    if (r.code != 0) return {false, "generate failed: " + r.err};
    r = testutil::cli({"evaluate", "--config", cfg, "--checkpoint", ckpt, "--category", "target1",
                       "--output", (dir / "report.json").string()});
    if (r.code != 0) return {false, "evaluate failed: " + r.err};
    std::map<std::string, std::string> files;
    files["checkpoint"] = testutil::slurp(ckpt);
    files["loss.csv"] = testutil::slurp(dir / "out" / "loss.csv");
    files["report"] = testutil::slurp(dir / "report.json");
    for (const auto& e : fs::directory_iterator(dir / "gen"))
      files["gen/" + e.path().filename().string()] = testutil::slurp(e.path());
    runs.push_back(std::move(files));
  }
  return {runs[0] == runs[1], std::to_string(runs[0].size()) + " files compared, " +
                                  (runs[0] == runs[1] ? "byte-identical" : "DIFFER")};
}

Outcome recognizer_sanity() {
  CpuTimer t;
  std::vector<GlyphPair> pairs;
  std::vector<char32_t> classes;
  for (int i = 0; i < 10; ++i) {
    GlyphPair p;
    p.codepoint = 0x4E00 + i;
    p.target = render_synthetic_glyph(p.codepoint, 32, synthetic_style(1));
    p.source = p.target;
    pairs.push_back(p);
    classes.push_back(p.codepoint);
  }
  auto rec = Recognizer::train(pairs, classes);
  const double train_secs = t.seconds();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::pair<GlyphImage, char32_t>> noise;
  for (int i = 0; i < 1000; ++i) {
    GlyphImage img(32, 32);
    for (auto& p : img.pixels) p = u(rng);
    noise.emplace_back(std::move(img), classes[i % 10]);
  }
  const double noise_acc = recognition_accuracy(rec, noise);
  return {rec.train_accuracy() >= 0.95 && train_secs < 300 && std::abs(noise_acc - 0.1) <= 0.05,
          "train accuracy " + fmt("%.3f", rec.train_accuracy()) + " in " + fmt("%.0f", train_secs) +
              " s, noise accuracy " + fmt("%.3f", noise_acc)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"architecture invariants", architecture},
      {"loss identities", loss_identities},
      {"metric oracles", metric_oracles},
      {"micro-overfit", micro_overfit},
      {"two-stage protocol", two_stage},
      {"evaluation-set builder", eval_set_builder},
      {"determinism", determinism},
      {"recognition metric sanity", recognizer_sanity},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.ok;
    std::cout << (o.ok ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first
              << " (" << o.detail << ")" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
