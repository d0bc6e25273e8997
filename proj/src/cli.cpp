#include "pegan/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "pegan/archive.hpp"
#include "pegan/gradcheck.hpp"
#include "pegan/metrics.hpp"
#include "pegan/recognizer.hpp"
#include "pegan/run_config.hpp"
#include "pegan/synthetic.hpp"
#include "pegan/training.hpp"
#include "pegan/turing.hpp"

namespace pegan {

namespace {

namespace fs = std::filesystem;

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

std::vector<GlyphPair> load_training_pairs(const RunConfig& cfg, const std::vector<std::string>& fonts,
                                           Streams io) {
  std::vector<GlyphPair> pairs;
  const int size = cfg.generator.width;
  for (const auto& font : fonts) {
    std::vector<std::string> warnings;
    auto loaded = load_pairs(cfg.data.root / cfg.data.source_font, cfg.data.root / font,
                             cfg.data.target_fonts.at(font), size, &warnings);
    for (const auto& w : warnings) io.err << "warning: " << w << '\n';
    pairs.insert(pairs.end(), std::make_move_iterator(loaded.begin()),
                 std::make_move_iterator(loaded.end()));
  }
  if (!cfg.eval.eval_set.empty()) {
    auto split = split_dataset(pairs, load_eval_set(cfg.eval.eval_set));
    io.err << "info: holding out " << split.eval.size() << " evaluation pairs\n";
    pairs = std::move(split.train);
    if (pairs.empty()) throw DatasetError("every pair belongs to the evaluation set");
  }
  return pairs;
}

std::vector<std::string> all_target_fonts(const RunConfig& cfg) {
  std::vector<std::string> fonts;
  for (const auto& [font, id] : cfg.data.target_fonts) fonts.push_back(font);
  return fonts;
}

void print_summary(const Checkpoint& ckpt, const fs::path& dir, Streams io) {
  io.out << "stage " << to_string(ckpt.train_config.stage) << " finished at step " << ckpt.step
         << "\ncheckpoint: " << (dir / "checkpoint.pegan").string()
         << "\nloss log: " << (dir / "loss.csv").string() << '\n';
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << v;
  return s.str();
}

std::vector<Tensor> tensors_of(const std::vector<NamedTensor>& named) {
  std::vector<Tensor> out;
  for (const auto& n : named) out.push_back(n.tensor);
  return out;
}

int cmd_train(const fs::path& config_path, const fs::path& resume, std::optional<std::uint64_t> steps,
              std::optional<std::uint64_t> seed, const std::string& output_dir, Streams io) {
  RunConfig cfg = RunConfig::load(config_path);
  if (seed) cfg.seed = *seed;
  if (steps) cfg.train.steps = *steps;
  if (!output_dir.empty()) cfg.data.output_dir = output_dir;
  if (cfg.train.stage != Stage::pretrain && resume.empty())
    throw ConfigError("train runs the pretrain stage; use the tune command for tuning");
  cfg.validate();
  cfg.validate_paths();
  RunHooks hooks;
  hooks.output_dir = cfg.data.output_dir;

  if (!resume.empty()) {
    Checkpoint ckpt = Checkpoint::load(resume);
    if (steps) ckpt.train_config.steps = *steps;
    std::vector<std::string> fonts = all_target_fonts(cfg);
    if (ckpt.train_config.stage == Stage::tune) fonts = {cfg.category_font(ckpt.target_category)};
    const auto pairs = load_training_pairs(cfg, fonts, io);
    const PerceptionNet perception = PerceptionNet::from_config(ckpt.perception_config);
    io.out << "resuming at step " << ckpt.step << ", " << ckpt.remaining_steps()
           << " steps left in stage " << to_string(ckpt.train_config.stage) << '\n';
    run_stage(ckpt, pairs, perception, hooks);
    print_summary(ckpt, hooks.output_dir, io);
    return 0;
  }

  const auto pairs = load_training_pairs(cfg, all_target_fonts(cfg), io);
  std::set<int> present;
  for (const auto& p : pairs) present.insert(p.category_id);
  for (int c = 0; c < cfg.generator.num_categories; ++c)
    if (!present.count(c))
      throw DatasetError("category " + std::to_string(c) + " has no training pairs");
  Checkpoint ckpt = initial_checkpoint(cfg.generator, cfg.discriminator, cfg.perception, cfg.train,
                                       cfg.seed);
  for (const auto& [font, id] : cfg.data.target_fonts) ckpt.category_names[id] = font;
  const PerceptionNet perception = PerceptionNet::from_config(cfg.perception);
  io.out << "pre-training on " << pairs.size() << " pairs, " << cfg.generator.num_categories
         << " categories, " << cfg.train.steps << " steps\n";
  run_stage(ckpt, pairs, perception, hooks);
  print_summary(ckpt, hooks.output_dir, io);
  return 0;
}

int cmd_tune(const fs::path& config_path, const fs::path& checkpoint, const std::string& category,
             std::optional<std::uint64_t> steps, const std::string& output_dir, Streams io) {
  RunConfig cfg = RunConfig::load(config_path);
  if (steps) cfg.train.steps = *steps;
  cfg.data.output_dir = output_dir.empty() ? cfg.data.output_dir / "tune" : fs::path(output_dir);
  cfg.validate();
  cfg.validate_paths();
  Checkpoint ckpt = Checkpoint::load(checkpoint);
  const int target = cfg.resolve_category(category);
  if (target >= ckpt.generator_config.num_categories)
    throw ConfigError("category '" + category + "' was not part of pre-training");
  const auto pairs = load_training_pairs(cfg, {cfg.category_font(target)}, io);
  const auto enc_before = hash_tensors(tensors_of(ckpt.generator->encoder_parameters()));
  const auto emb_before = hash_tensors({ckpt.generator->embedding_table()});
  RunHooks hooks;
  hooks.output_dir = cfg.data.output_dir;
  io.out << "tuning category " << target << " from step " << ckpt.step << " for " << cfg.train.steps
         << " steps\n";
  tune(ckpt, target, pairs, cfg.train, hooks);
  const auto enc_after = hash_tensors(tensors_of(ckpt.generator->encoder_parameters()));
  const auto emb_after = hash_tensors({ckpt.generator->embedding_table()});
  io.out << "encoder hash before " << hex(enc_before) << " after " << hex(enc_after)
         << (enc_before == enc_after ? " (unchanged)" : " (CHANGED)") << '\n';
  io.out << "embedding hash before " << hex(emb_before) << " after " << hex(emb_after)
         << (emb_before == emb_after ? " (unchanged)" : " (CHANGED)") << '\n';
  print_summary(ckpt, hooks.output_dir, io);
  if (enc_before != enc_after || emb_before != emb_after)
    throw NumericError("frozen tensors changed during tuning");
  return 0;
}

int checkpoint_category(const Checkpoint& ckpt, const std::string& category) {
  for (const auto& [id, name] : ckpt.category_names)
    if (name == category) return id;
  if (!category.empty() && category.size() < 10 &&
      category.find_first_not_of("0123456789") == std::string::npos) {
    const int id = std::stoi(category);
    if (id < ckpt.generator_config.num_categories) return id;
  }
  throw ConfigError("unknown category '" + category + "' for this checkpoint");
}

int cmd_generate(const fs::path& checkpoint, const fs::path& input_dir, const std::string& category,
                 const fs::path& out_dir, Streams io) {
  Checkpoint ckpt = Checkpoint::load(checkpoint);
  const int target = checkpoint_category(ckpt, category);
  const auto files = list_glyph_files(input_dir);
  if (files.empty()) {
    io.err << "warning: no glyph files in " << input_dir.string() << '\n';
    return 0;
  }
  fs::create_directories(out_dir);
  const int size = ckpt.generator_config.width;
  std::size_t failures = 0;
  for (const auto& [cp, path] : files) {
    try {
      const GlyphImage source = load_image(path, size);
      const Tensor image = ckpt.generator->generate(image_to_tensor(source), target);
      save_image(tensor_to_image(image), out_dir / glyph_filename(cp));
    } catch (const Error& e) {
      ++failures;
      io.err << "error: " << path.string() << ": " << e.what() << '\n';
    }
  }
  io.out << "generated " << files.size() - failures << " of " << files.size() << " glyphs into "
         << out_dir.string() << '\n';
  return failures == 0 ? 0 : 2;
}

int cmd_evaluate(const fs::path& config_path, const fs::path& checkpoint,
                 const fs::path& generated_dir, const std::string& category,
                 const std::string& output, Streams io) {
  RunConfig cfg = RunConfig::load(config_path);
  cfg.validate_paths();
  if (cfg.eval.eval_set.empty()) throw ConfigError("eval.eval_set must be set for evaluate");
  if (checkpoint.empty() == generated_dir.empty())
    throw UsageError("evaluate needs exactly one of --checkpoint and --generated-dir");
  int target;
  if (!category.empty()) {
    target = cfg.resolve_category(category);
  } else if (cfg.data.target_fonts.size() == 1) {
    target = cfg.data.target_fonts.begin()->second;
  } else {
    throw UsageError("--category is required when the config lists several target fonts");
  }
  const EvalSet eval_set = load_eval_set(cfg.eval.eval_set);
  const fs::path truth_dir = cfg.data.root / cfg.category_font(target);
  const int size = cfg.generator.width;

  std::optional<Checkpoint> ckpt;
  if (!checkpoint.empty()) {
    ckpt = Checkpoint::load(checkpoint);
    if (target >= ckpt->generator_config.num_categories)
      throw ConfigError("category " + std::to_string(target) + " is unknown to the checkpoint");
  }
  std::optional<Recognizer> recognizer;
  if (!cfg.eval.recognizer.empty()) {
    recognizer = Recognizer::load(cfg.eval.recognizer);
    if (!recognizer->meets_floor())
      throw ConfigError("recognizer train accuracy " + std::to_string(recognizer->train_accuracy()) +
                        " is below its floor " + std::to_string(recognizer->config().accuracy_floor));
  }

  std::vector<ImageScore> scores;
  std::vector<std::string> excluded;
  const int model_size = ckpt ? ckpt->generator_config.width : size;
  for (std::size_t b = 0; b < 3; ++b)
    for (char32_t cp : eval_set.bands[b].codepoints) {
      const fs::path truth_path = truth_dir / glyph_filename(cp);
      const fs::path input_path = ckpt ? cfg.data.root / cfg.data.source_font / glyph_filename(cp)
                                       : generated_dir / glyph_filename(cp);
      if (!fs::exists(truth_path) || !fs::exists(input_path)) {
        excluded.push_back(codepoint_label(cp));
        io.err << "warning: " << codepoint_label(cp) << " excluded (missing "
               << (fs::exists(truth_path) ? input_path : truth_path).string() << ")\n";
        continue;
      }
      const GlyphImage truth = load_image(truth_path, model_size);
      GlyphImage generated;
      if (ckpt) {
        const Tensor out =
            ckpt->generator->generate(image_to_tensor(load_image(input_path, model_size)), target);
        generated = quantize8(tensor_to_image(out));
      } else {
        generated = load_image(input_path, model_size);
      }
      ImageScore s;
      s.codepoint = cp;
      s.band = static_cast<Band>(b);
      s.psnr_db = psnr(generated, truth, cfg.eval.psnr_max_value);
      s.ssim = ssim(generated, truth, cfg.eval.ssim);
      s.uqi = uqi(generated, truth, cfg.eval.uqi_window);
      if (recognizer) s.recognized = recognizer->predict(generated) == cp;
      scores.push_back(s);
    }
  if (scores.empty()) throw DatasetError("no evaluation glyph has ground truth");
  const MetricsReport report = aggregate_scores(scores, excluded);
  const std::string text = nlohmann::json(report).dump(2) + "\n";
  const fs::path report_path = output.empty() ? cfg.data.output_dir / "report.json" : fs::path(output);
  if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
  std::ofstream file(report_path, std::ios::binary);
  file << text;
  if (!file) throw IoError("cannot write report " + report_path.string());
  io.out << text;
  return 0;
}

int cmd_build_eval_set(const fs::path& metadata, const fs::path& output, int per_band, Streams io) {
  const EvalSet set = build_eval_set(load_metadata(metadata), per_band);
  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  save_eval_set(set, output);
  for (std::size_t b = 0; b < 3; ++b)
    io.out << kBandNames[b] << ": " << set.bands[b].codepoints.size()
           << (set.bands[b].shortfall ? " (shortfall)" : "") << '\n';
  return 0;
}

std::vector<GlyphImage> pick_images(const fs::path& dir, std::size_t count, Rng& rng) {
  auto files = list_glyph_files(dir);
  if (files.size() < count)
    throw DatasetError(dir.string() + " holds " + std::to_string(files.size()) +
                       " glyphs, need " + std::to_string(count));
  std::shuffle(files.begin(), files.end(), rng);
  std::vector<GlyphImage> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(load_image(files[i].second));
  return out;
}

int cmd_turing_sheet(const fs::path& real_dir, const fs::path& generated_dir, const fs::path& out_dir,
                     std::uint64_t seed, const TuringSheetOptions& options, Streams io) {
  Rng rng(derive_seed(seed, 0x7E57));
  const auto real = pick_images(real_dir, options.per_group, rng);
  const auto generated = pick_images(generated_dir, options.per_group, rng);
  const TuringSheet sheet = make_turing_sheet(real, generated, seed, options);
  fs::create_directories(out_dir);
  save_image(sheet.sheet, out_dir / "sheet.png");
  write_answer_key(sheet.labels, out_dir / "answer_key.csv");
  io.out << "wrote " << (out_dir / "sheet.png").string() << " and "
         << (out_dir / "answer_key.csv").string() << '\n';
  return 0;
}

int cmd_gradcheck(const std::string& fault, std::uint64_t seed, Streams io) {
  debug::inject_backward_fault(fault);
  GradCheckOptions options;
  options.seed = seed;
  std::vector<GradCheckResult> results;
  try {
    results = run_gradcheck_suite(options);
  } catch (...) {
    debug::inject_backward_fault("");
    throw;
  }
  const bool fault_fired = debug::backward_fault_hits() > 0;
  debug::inject_backward_fault("");
  if (!fault.empty() && !fault_fired)
    throw UsageError("--inject-fault: no primitive named '" + fault + "' ran in the suite");
  print_gradcheck_table(results, io.out);
  const bool ok = std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
  io.out << (ok ? "all gradient checks passed\n" : "gradient check FAILED\n");
  return ok ? 0 : 3;
}

int cmd_make_toy_data(const ToyDataSpec& spec, Streams io) {
  write_toy_dataset(spec);
  io.out << "wrote " << spec.glyphs << " glyphs for " << spec.fonts.size() << " fonts under "
         << spec.root.string() << '\n';
  return 0;
}

int cmd_train_recognizer(const fs::path& font_dir, const fs::path& output, const fs::path& config,
                         Streams io) {
  RecognizerConfig rcfg;
  if (!config.empty()) {
    std::ifstream in(config);
    if (!in) throw ConfigError("cannot open recognizer config " + config.string());
    try {
      rcfg = nlohmann::json::parse(in).get<RecognizerConfig>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad recognizer config: " + std::string(e.what()));
    }
  }
  std::vector<GlyphPair> pairs;
  std::vector<char32_t> classes;
  for (const auto& [cp, path] : list_glyph_files(font_dir)) {
    GlyphPair p;
    p.target = load_image(path);
    p.source = p.target;
    p.codepoint = cp;
    pairs.push_back(std::move(p));
    classes.push_back(cp);
  }
  Recognizer rec = Recognizer::train(pairs, classes, rcfg);
  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  rec.save(output);
  io.out << "recognizer over " << classes.size() << " classes, train accuracy "
         << rec.train_accuracy() << (rec.meets_floor() ? "" : " (below floor)") << '\n';
  return 0;
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dataset:
    case ErrorKind::io:
      return 2;
    case ErrorKind::numeric:
    case ErrorKind::domain:
      return 3;
    default:
      return 1;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Streams io{out, err};
  CLI::App app{"Pyramid-embedded GAN for glyph synthesis"};
  app.require_subcommand(1);

  std::string config, resume, checkpoint, output_dir, category, input_dir, generated_dir, output;
  std::string metadata, real_dir, fault, font_dir, rec_config, fonts = "source,target0,target1";
  std::uint64_t steps_arg = 0, seed_arg = 0;
  int per_band = 100;
  std::size_t glyphs = 8;
  int toy_size = 64;
  TuringSheetOptions sheet;

  auto* train = app.add_subcommand("train", "pre-train (or resume) from a run config");
  train->add_option("--config", config, "run config JSON")->required();
  train->add_option("--resume", resume, "checkpoint to continue");
  auto* train_steps = train->add_option("--steps", steps_arg, "override train.steps");
  auto* train_seed = train->add_option("--seed", seed_arg, "override seed");
  train->add_option("--output-dir", output_dir, "override data.output_dir");

  auto* tune_cmd = app.add_subcommand("tune", "tune one category with the encoder frozen");
  tune_cmd->add_option("--config", config, "run config JSON")->required();
  tune_cmd->add_option("--checkpoint", checkpoint, "pre-trained checkpoint")->required();
  tune_cmd->add_option("--category", category, "target font name or category id")->required();
  auto* tune_steps = tune_cmd->add_option("--steps", steps_arg, "override train.steps");
  tune_cmd->add_option("--output-dir", output_dir, "default: <data.output_dir>/tune");

  auto* generate = app.add_subcommand("generate", "render one glyph per source image");
  generate->add_option("--checkpoint", checkpoint)->required();
  generate->add_option("--input-dir", input_dir, "directory of U+XXXX source glyphs")->required();
  generate->add_option("--category", category, "target font name or category id")->required();
  generate->add_option("--output-dir", output_dir)->required();

  auto* evaluate = app.add_subcommand("evaluate", "PSNR/SSIM/UQI (+ recognition) report");
  evaluate->add_option("--config", config, "run config JSON")->required();
  evaluate->add_option("--checkpoint", checkpoint, "generate with this model");
  evaluate->add_option("--generated-dir", generated_dir, "or score existing images");
  evaluate->add_option("--category", category, "target font name or category id");
  evaluate->add_option("--output", output, "report path (default <data.output_dir>/report.json)");

  auto* eval_set = app.add_subcommand("build-eval-set", "easy/mid/hard evaluation characters");
  eval_set->add_option("--metadata", metadata, "TSV codepoint, strokes, frequency rank")->required();
  eval_set->add_option("--output", output)->required();
  eval_set->add_option("--per-band", per_band, "characters per band")->check(CLI::PositiveNumber);

  auto* turing = app.add_subcommand("turing-sheet", "randomised real/generated grid and key");
  turing->add_option("--real-dir", real_dir)->required();
  turing->add_option("--generated-dir", generated_dir)->required();
  turing->add_option("--output-dir", output_dir)->required();
  turing->add_option("--seed", seed_arg);
  turing->add_option("--per-group", sheet.per_group)->check(CLI::PositiveNumber);
  turing->add_option("--columns", sheet.columns)->check(CLI::PositiveNumber);
  turing->add_option("--tile-size", sheet.tile_size)->check(CLI::PositiveNumber);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck->add_option("--inject-fault", fault, "corrupt the derivative of this primitive");
  gradcheck->add_option("--seed", seed_arg);

  auto* toy = app.add_subcommand("make-toy-data", "write a synthetic glyph dataset");
  toy->add_option("--output", output, "dataset root")->required();
  toy->add_option("--fonts", fonts, "comma-separated font names, source first");
  toy->add_option("--glyphs", glyphs)->check(CLI::PositiveNumber);
  toy->add_option("--size", toy_size)->check(CLI::PositiveNumber);

  auto* rec = app.add_subcommand("train-recognizer", "train the glyph recognizer on one font");
  rec->add_option("--font-dir", font_dir)->required();
  rec->add_option("--output", output)->required();
  rec->add_option("--config", rec_config, "recognizer config JSON");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  if (!argv.empty()) argv.pop_back();  // program name
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << "run with --help for usage\n";
    return 1;
  }

  auto optional_u64 = [](CLI::Option* opt, std::uint64_t v) {
    return opt->count() > 0 ? std::optional<std::uint64_t>(v) : std::nullopt;
  };
  try {
    if (train->parsed())
      return cmd_train(config, resume, optional_u64(train_steps, steps_arg),
                       optional_u64(train_seed, seed_arg), output_dir, io);
    if (tune_cmd->parsed())
      return cmd_tune(config, checkpoint, category, optional_u64(tune_steps, steps_arg), output_dir,
                      io);
    if (generate->parsed()) return cmd_generate(checkpoint, input_dir, category, output_dir, io);
    if (evaluate->parsed())
      return cmd_evaluate(config, checkpoint, generated_dir, category, output, io);
    if (eval_set->parsed()) return cmd_build_eval_set(metadata, output, per_band, io);
    if (turing->parsed())
      return cmd_turing_sheet(real_dir, generated_dir, output_dir, seed_arg, sheet, io);
    if (gradcheck->parsed()) return cmd_gradcheck(fault, seed_arg == 0 ? 5 : seed_arg, io);
    if (toy->parsed()) {
      ToyDataSpec spec;
      spec.root = output;
      spec.fonts.clear();
      std::stringstream ss(fonts);
      for (std::string f; std::getline(ss, f, ',');)
        if (!f.empty()) spec.fonts.push_back(f);
      spec.glyphs = glyphs;
      spec.size = toy_size;
      return cmd_make_toy_data(spec, io);
    }
    if (rec->parsed()) return cmd_train_recognizer(font_dir, output, rec_config, io);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace pegan
