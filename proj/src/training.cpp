#include "pegan/training.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "json_util.hpp"
#include "pegan/ops.hpp"

namespace pegan {

namespace {

constexpr std::uint64_t kInitStream = 0x1217;
constexpr std::uint64_t kStepStream = 0x57E9;
constexpr std::uint64_t kOrderStream = 0x0DE5;

// Turns requires_grad off for a parameter set and restores it on exit.
class GradSuspension {
 public:
  explicit GradSuspension(const std::vector<NamedTensor>& params) : params_(params) {
    for (auto& p : params_) {
      flags_.push_back(p.tensor.requires_grad());
      p.tensor.set_requires_grad(false);
    }
  }
  ~GradSuspension() {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].tensor.set_requires_grad(flags_[i]);
  }
  GradSuspension(const GradSuspension&) = delete;
  GradSuspension& operator=(const GradSuspension&) = delete;

 private:
  std::vector<NamedTensor> params_;
  std::vector<bool> flags_;
};

void zero_grads(std::vector<NamedTensor>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

nlohmann::json adam_to_json(const AdamOptions& a) {
  return {{"learning_rate", a.learning_rate}, {"beta1", a.beta1}, {"beta2", a.beta2},
          {"epsilon", a.epsilon}};
}

}  // namespace

Stage parse_stage(const std::string& name) {
  if (name == "pretrain") return Stage::pretrain;
  if (name == "tune") return Stage::tune;
  throw ConfigError("unknown stage '" + name + "' (expected pretrain or tune)");
}

std::string to_string(Stage stage) { return stage == Stage::pretrain ? "pretrain" : "tune"; }

void TrainConfig::validate() const {
  adam.validate();
  if (!(adam.learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (batch_size < 2)
    throw ConfigError("train.batch_size must be >= 2 (batchnorm needs two samples)");
  if (steps < 1) throw ConfigError("train.steps must be >= 1");
  if (!(enlarge_factor >= 1.0) || !std::isfinite(enlarge_factor))
    throw ConfigError("train.enlarge_factor must be >= 1");
  loss_weights.validate();
  perceptual_weights.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = adam_to_json(c.adam);
  j["batch_size"] = c.batch_size;
  j["steps"] = c.steps;
  j["stage"] = to_string(c.stage);
  j["enlarge_factor"] = c.enlarge_factor;
  j["loss_weights"] = c.loss_weights;
  j["perceptual_weights"] = c.perceptual_weights.lambda;
  j["adversarial"] = to_string(c.adversarial);
  j["checkpoint_every"] = c.checkpoint_every;
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const std::string s = "train";
  json_util::reject_unknown_keys(j,
                                 {"learning_rate", "beta1", "beta2", "epsilon", "batch_size",
                                  "steps", "stage", "enlarge_factor", "loss_weights",
                                  "perceptual_weights", "adversarial", "checkpoint_every"},
                                 s);
  json_util::read(j, "learning_rate", c.adam.learning_rate, s);
  json_util::read(j, "beta1", c.adam.beta1, s);
  json_util::read(j, "beta2", c.adam.beta2, s);
  json_util::read(j, "epsilon", c.adam.epsilon, s);
  json_util::read(j, "batch_size", c.batch_size, s);
  json_util::read(j, "steps", c.steps, s);
  std::string stage = to_string(c.stage), adversarial = to_string(c.adversarial);
  json_util::read(j, "stage", stage, s);
  json_util::read(j, "adversarial", adversarial, s);
  c.stage = parse_stage(stage);
  c.adversarial = parse_adversarial_form(adversarial);
  json_util::read(j, "enlarge_factor", c.enlarge_factor, s);
  if (auto it = j.find("loss_weights"); it != j.end()) c.loss_weights = it->get<LossWeights>();
  json_util::read(j, "perceptual_weights", c.perceptual_weights.lambda, s);
  json_util::read(j, "checkpoint_every", c.checkpoint_every, s);
}

GlyphImage augment(const GlyphImage& image, double factor, Rng& rng, Mode mode) {
  if (mode == Mode::eval || factor == 1.0) return image;
  std::uniform_int_distribution<int> ox(0, enlarged_size(image.width, factor) - image.width);
  std::uniform_int_distribution<int> oy(0, enlarged_size(image.height, factor) - image.height);
  const int x = ox(rng), y = oy(rng);
  return enlarge_crop(image, factor, x, y);
}

GlyphPair augment_pair(const GlyphPair& pair, double factor, Rng& rng, Mode mode) {
  if (mode == Mode::eval || factor == 1.0) return pair;
  const int w = pair.source.width, h = pair.source.height;
  std::uniform_int_distribution<int> ox(0, enlarged_size(w, factor) - w);
  std::uniform_int_distribution<int> oy(0, enlarged_size(h, factor) - h);
  const int x = ox(rng), y = oy(rng);
  GlyphPair out;
  out.source = enlarge_crop(pair.source, factor, x, y);
  out.target = enlarge_crop(pair.target, factor, x, y);
  out.codepoint = pair.codepoint;
  out.category_id = pair.category_id;
  return out;
}

std::string loss_csv_row(const StepReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%" PRIu64 ",%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.step,
                r.loss_d, r.loss_adv_g, r.loss_l1, r.loss_perp, r.loss_cate, r.loss_total);
  return buf;
}

StepReport train_step(Generator& gen, Discriminator& disc, const PerceptionNet& perception,
                      Adam& adam_g, Adam& adam_d, const std::vector<GlyphPair>& batch,
                      const TrainConfig& cfg, Rng& rng, std::uint64_t step_number) {
  if (batch.empty()) throw UsageError("train_step needs a nonempty batch");
  std::vector<const GlyphImage*> sources, targets;
  std::vector<int> categories;
  for (const auto& p : batch) {
    sources.push_back(&p.source);
    targets.push_back(&p.target);
    categories.push_back(p.category_id);
  }
  const Tensor z = images_to_tensor(sources);
  const Tensor x = images_to_tensor(targets);
  auto d_params = disc.parameters();
  auto g_params = gen.parameters();
  const auto& w = cfg.loss_weights;

  StepReport report;
  report.step = step_number;
  try {
    Tensor fake = gen.generate(z, categories, Mode::train, rng);

    // Discriminator update on a detached copy of the generated batch.
    zero_grads(d_params);
    const Tensor fake_d = fake.detach();
    auto on_real = disc.discriminate(x, Mode::train, &z);
    auto on_fake = disc.discriminate(fake_d, Mode::train, &z);
    Tensor adv_d = adv_loss_d(on_real.real_prob, on_fake.real_prob);
    Tensor cate_d = add(category_loss(on_real.category_logits, categories),
                        category_loss(on_fake.category_logits, categories));
    Tensor loss_d = add(adv_d, scale(cate_d, w.cate));
    loss_d.backward();
    adam_d.step(d_params);
    zero_grads(d_params);
    report.loss_d = loss_d.item();

    // Generator update; the discriminator is a fixed function here.
    zero_grads(g_params);
    {
      GradSuspension frozen_d(d_params);
      auto judged = disc.discriminate(fake, Mode::train, &z);
      Tensor adv_g = adv_loss_g(judged.real_prob, cfg.adversarial);
      Tensor l1 = l1_loss(x, fake);
      Tensor perp = perceptual_loss(perception.features(x), perception.features(fake),
                                    cfg.perceptual_weights);
      Tensor cate = category_loss(judged.category_logits, categories);
      Tensor total = total_generator_loss(adv_g, l1, perp, cate, w);
      total.backward();
      report.loss_adv_g = adv_g.item();
      report.loss_l1 = l1.item();
      report.loss_perp = perp.item();
      report.loss_cate = cate.item();
      report.loss_total = total.item();
    }
    adam_g.step(g_params);
  } catch (const NumericError& e) {
    throw NumericError("training step " + std::to_string(step_number) + ": " + e.what());
  }
  return report;
}

std::uint64_t Checkpoint::remaining_steps() const {
  const std::uint64_t end = stage_start_step + train_config.steps;
  return step < end ? end - step : 0;
}

TensorArchive Checkpoint::to_archive() const {
  TensorArchive archive;
  generator->save(archive);
  discriminator->save(archive);
  adam_g.save(archive, "adam_g");
  adam_d.save(archive, "adam_d");
  archive.put_json("perception.config", perception_config);
  nlohmann::json names = nlohmann::json::object();
  for (const auto& [id, name] : category_names) names[std::to_string(id)] = name;
  archive.put_json("train.state", {{"seed", seed},
                                   {"step", step},
                                   {"stage_start_step", stage_start_step},
                                   {"target_category", target_category},
                                   {"train_config", train_config},
                                   {"category_names", names},
                                   {"image_width", generator_config.width},
                                   {"image_height", generator_config.height}});
  return archive;
}

Checkpoint Checkpoint::from_archive(const TensorArchive& archive) {
  for (const char* doc : {"gen.config", "disc.config", "perception.config", "train.state"})
    if (!archive.contains_json(doc))
      throw IoError(std::string("checkpoint lacks the '") + doc + "' entry");
  Checkpoint c;
  try {
    c.generator_config = archive.get_json("gen.config").get<GeneratorConfig>();
    c.discriminator_config = archive.get_json("disc.config").get<DiscriminatorConfig>();
    c.perception_config = archive.get_json("perception.config").get<PerceptionConfig>();
    const auto& state = archive.get_json("train.state");
    c.train_config = state.at("train_config").get<TrainConfig>();
    c.seed = state.at("seed").get<std::uint64_t>();
    c.step = state.at("step").get<std::uint64_t>();
    c.stage_start_step = state.at("stage_start_step").get<std::uint64_t>();
    c.target_category = state.at("target_category").get<int>();
    for (const auto& [id, name] : state.at("category_names").items())
      c.category_names[std::stoi(id)] = name.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed checkpoint state: ") + e.what());
  } catch (const ConfigError& e) {
    throw IoError(std::string("malformed checkpoint configuration: ") + e.what());
  }
  Rng scratch(0);
  c.generator = std::make_unique<Generator>(c.generator_config, scratch);
  c.discriminator = std::make_unique<Discriminator>(c.discriminator_config,
                                                    c.generator_config.width,
                                                    c.generator_config.height,
                                                    c.generator_config.num_categories, scratch);
  c.generator->load(archive);
  c.discriminator->load(archive);
  c.adam_g = Adam(c.train_config.adam);
  c.adam_d = Adam(c.train_config.adam);
  c.adam_g.load(archive, "adam_g");
  c.adam_d.load(archive, "adam_d");
  if (c.train_config.stage == Stage::tune) c.generator->set_encoder_frozen(true);
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const { to_archive().save(path); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  return from_archive(TensorArchive::load(path));
}

Checkpoint initial_checkpoint(const GeneratorConfig& gen_cfg, const DiscriminatorConfig& disc_cfg,
                              const PerceptionConfig& perception_cfg, const TrainConfig& train_cfg,
                              std::uint64_t seed) {
  train_cfg.validate();
  Checkpoint c;
  c.generator_config = gen_cfg;
  c.discriminator_config = disc_cfg;
  c.perception_config = perception_cfg;
  c.train_config = train_cfg;
  c.train_config.stage = Stage::pretrain;
  c.seed = seed;
  Rng rng(derive_seed(seed, kInitStream));
  c.generator = std::make_unique<Generator>(gen_cfg, rng);
  c.discriminator = std::make_unique<Discriminator>(disc_cfg, gen_cfg.width, gen_cfg.height,
                                                    gen_cfg.num_categories, rng);
  c.adam_g = Adam(train_cfg.adam);
  c.adam_d = Adam(train_cfg.adam);
  return c;
}

std::vector<GlyphPair> pairs_of_category(const std::vector<GlyphPair>& pairs, int category) {
  std::vector<GlyphPair> out;
  for (const auto& p : pairs)
    if (p.category_id == category) out.push_back(p);
  return out;
}

void run_stage(Checkpoint& ckpt, const std::vector<GlyphPair>& pairs,
               const PerceptionNet& perception, const RunHooks& hooks) {
  const TrainConfig& cfg = ckpt.train_config;
  const auto& gcfg = ckpt.generator_config;
  std::vector<GlyphPair> usable =
      cfg.stage == Stage::tune ? pairs_of_category(pairs, ckpt.target_category) : pairs;
  if (usable.empty())
    throw DatasetError(cfg.stage == Stage::tune
                           ? "no training pairs for category " + std::to_string(ckpt.target_category)
                           : std::string("no training pairs"));
  for (const auto& p : usable) {
    if (p.source.width != gcfg.width || p.source.height != gcfg.height ||
        p.target.width != gcfg.width || p.target.height != gcfg.height)
      throw DatasetError("glyph " + codepoint_label(p.codepoint) + " is not " +
                         std::to_string(gcfg.width) + "x" + std::to_string(gcfg.height));
    if (p.category_id < 0 || p.category_id >= gcfg.num_categories)
      throw DatasetError("pair " + codepoint_label(p.codepoint) + " has category " +
                         std::to_string(p.category_id) + " outside the model's " +
                         std::to_string(gcfg.num_categories));
  }

  std::ofstream csv;
  if (!hooks.output_dir.empty()) {
    std::filesystem::create_directories(hooks.output_dir);
    const auto path = hooks.output_dir / "loss.csv";
    std::error_code ec;
    const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
    csv.open(path, std::ios::app);
    if (!csv) throw IoError("cannot open loss log " + path.string());
    if (fresh) csv << kLossCsvHeader << '\n';
  }

  const std::size_t n = usable.size();
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  std::vector<std::size_t> perm(n);
  std::uint64_t perm_epoch = UINT64_MAX;
  for (std::uint64_t done = 0; ckpt.remaining_steps() > 0 && done < hooks.max_steps; ++done) {
    const std::uint64_t local = ckpt.step - ckpt.stage_start_step;
    const std::uint64_t number = ckpt.step + 1;
    Rng rng(derive_seed(ckpt.seed, kStepStream, number));
    std::vector<GlyphPair> batch;
    for (std::size_t b = 0; b < batch_size; ++b) {
      const std::uint64_t position = local * batch_size + b;
      const std::uint64_t epoch = position / n;
      if (epoch != perm_epoch) {
        std::iota(perm.begin(), perm.end(), 0);
        Rng order(derive_seed(ckpt.seed, kOrderStream ^ (ckpt.stage_start_step << 16), epoch));
        std::shuffle(perm.begin(), perm.end(), order);
        perm_epoch = epoch;
      }
      batch.push_back(augment_pair(usable[perm[position % n]], cfg.enlarge_factor, rng, Mode::train));
    }
    const StepReport report = train_step(*ckpt.generator, *ckpt.discriminator, perception,
                                         ckpt.adam_g, ckpt.adam_d, batch, cfg, rng, number);
    ckpt.step = number;
    if (csv.is_open()) {
      csv << loss_csv_row(report) << '\n';
      csv.flush();
    }
    if (hooks.on_step) hooks.on_step(report);
    if (!hooks.output_dir.empty() && cfg.checkpoint_every > 0 && number % cfg.checkpoint_every == 0)
      ckpt.save(hooks.output_dir / ("checkpoint_step" + std::to_string(number) + ".pegan"));
  }
  if (!hooks.output_dir.empty()) ckpt.save(hooks.output_dir / "checkpoint.pegan");
}

Checkpoint pretrain(const std::vector<GlyphPair>& pairs, const GeneratorConfig& gen_cfg,
                    const DiscriminatorConfig& disc_cfg, const PerceptionConfig& perception_cfg,
                    const TrainConfig& cfg, std::uint64_t seed, const RunHooks& hooks) {
  std::set<int> present;
  for (const auto& p : pairs) present.insert(p.category_id);
  for (int c = 0; c < gen_cfg.num_categories; ++c)
    if (!present.count(c))
      throw DatasetError("category " + std::to_string(c) + " has no training pairs");
  Checkpoint ckpt = initial_checkpoint(gen_cfg, disc_cfg, perception_cfg, cfg, seed);
  const PerceptionNet perception = PerceptionNet::from_config(perception_cfg);
  run_stage(ckpt, pairs, perception, hooks);
  return ckpt;
}

void begin_tune(Checkpoint& ckpt, int target_category, const TrainConfig& cfg) {
  cfg.validate();
  if (target_category < 0 || target_category >= ckpt.generator_config.num_categories)
    throw ConfigError("category " + std::to_string(target_category) +
                      " was not part of pre-training (checkpoint has " +
                      std::to_string(ckpt.generator_config.num_categories) + " categories)");
  ckpt.train_config = cfg;
  ckpt.train_config.stage = Stage::tune;
  ckpt.stage_start_step = ckpt.step;
  ckpt.target_category = target_category;
  ckpt.adam_g.set_options(cfg.adam);
  ckpt.adam_d.set_options(cfg.adam);
  ckpt.generator->set_encoder_frozen(true);
}

void tune(Checkpoint& ckpt, int target_category, const std::vector<GlyphPair>& pairs,
          const TrainConfig& cfg, const RunHooks& hooks) {
  begin_tune(ckpt, target_category, cfg);
  const PerceptionNet perception = PerceptionNet::from_config(ckpt.perception_config);
  run_stage(ckpt, pairs, perception, hooks);
}

}  // namespace pegan
