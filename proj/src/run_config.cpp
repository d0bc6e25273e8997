#include "pegan/run_config.hpp"

#include <fstream>
#include <set>

#include "json_util.hpp"

namespace pegan {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string read_path(const nlohmann::json& j, const char* key, const std::string& section) {
  std::string value;
  json_util::read(j, key, value, section);
  return value;
}

}  // namespace

RunConfig RunConfig::parse(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  json_util::reject_unknown_keys(j, {"seed", "model", "train", "data", "eval"}, "config");
  RunConfig c;
  json_util::read(j, "seed", c.seed, "config");
  try {
    if (auto m = j.find("model"); m != j.end()) {
      json_util::reject_unknown_keys(*m, {"generator", "discriminator", "perception"}, "model");
      if (auto g = m->find("generator"); g != m->end()) c.generator = g->get<GeneratorConfig>();
      if (auto d = m->find("discriminator"); d != m->end())
        c.discriminator = d->get<DiscriminatorConfig>();
      if (auto p = m->find("perception"); p != m->end()) c.perception = p->get<PerceptionConfig>();
    }
    if (auto t = j.find("train"); t != j.end()) c.train = t->get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model/train section: ") + e.what());
  }
  if (!c.perception.vgg19_weights.empty())
    c.perception.vgg19_weights = resolve(base_dir, c.perception.vgg19_weights).string();

  if (auto d = j.find("data"); d != j.end()) {
    const std::string s = "data";
    json_util::reject_unknown_keys(*d, {"root", "source_font", "target_fonts", "output_dir"}, s);
    c.data.root = resolve(base_dir, read_path(*d, "root", s));
    json_util::read(*d, "source_font", c.data.source_font, s);
    json_util::read(*d, "target_fonts", c.data.target_fonts, s);
    const std::string out = read_path(*d, "output_dir", s);
    c.data.output_dir = resolve(base_dir, out.empty() ? std::string("out") : out);
  } else {
    c.data.output_dir = resolve(base_dir, "out");
  }
  if (auto e = j.find("eval"); e != j.end()) {
    const std::string s = "eval";
    json_util::reject_unknown_keys(
        *e, {"eval_set", "recognizer", "psnr_max_value", "ssim_window", "ssim_sigma", "uqi_window"},
        s);
    c.eval.eval_set = resolve(base_dir, read_path(*e, "eval_set", s));
    c.eval.recognizer = resolve(base_dir, read_path(*e, "recognizer", s));
    json_util::read(*e, "psnr_max_value", c.eval.psnr_max_value, s);
    json_util::read(*e, "ssim_window", c.eval.ssim.window, s);
    json_util::read(*e, "ssim_sigma", c.eval.ssim.sigma, s);
    json_util::read(*e, "uqi_window", c.eval.uqi_window, s);
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

void RunConfig::validate() const {
  generator.validate();
  discriminator.validate();
  train.validate();
  if (generator.width != generator.height)
    throw ConfigError("glyph images are square: model width and height must be equal");
  std::set<int> ids;
  for (const auto& [font, id] : data.target_fonts) {
    if (id < 0 || id >= generator.num_categories)
      throw ConfigError("target font '" + font + "' has category " + std::to_string(id) +
                        " outside [0," + std::to_string(generator.num_categories) + ")");
    if (!ids.insert(id).second)
      throw ConfigError("category " + std::to_string(id) + " assigned to two target fonts");
    if (font == data.source_font) throw ConfigError("source font listed as a target font");
  }
  if (!(eval.psnr_max_value > 0)) throw ConfigError("eval.psnr_max_value must be > 0");
  if (eval.uqi_window < 1 || eval.ssim.window < 1) throw ConfigError("metric windows must be >= 1");
}

void RunConfig::validate_paths() const {
  std::error_code ec;
  if (data.root.empty()) throw ConfigError("data.root is not set");
  if (!std::filesystem::is_directory(data.root, ec))
    throw DatasetError("data directory not found: " + data.root.string());
  if (!std::filesystem::is_directory(data.root / data.source_font, ec))
    throw DatasetError("source font directory not found: " + (data.root / data.source_font).string());
  if (data.target_fonts.empty()) throw ConfigError("data.target_fonts is empty");
  for (const auto& [font, id] : data.target_fonts)
    if (!std::filesystem::is_directory(data.root / font, ec))
      throw DatasetError("target font directory not found: " + (data.root / font).string());
  if (!eval.eval_set.empty() && !std::filesystem::is_regular_file(eval.eval_set, ec))
    throw DatasetError("evaluation set not found: " + eval.eval_set.string());
  if (!eval.recognizer.empty() && !std::filesystem::is_regular_file(eval.recognizer, ec))
    throw DatasetError("recognizer not found: " + eval.recognizer.string());
  if (!perception.vgg19_weights.empty() && !std::filesystem::is_regular_file(perception.vgg19_weights, ec))
    throw IoError("VGG-19 weights not found: " + perception.vgg19_weights);
}

int RunConfig::resolve_category(const std::string& name_or_id) const {
  if (auto it = data.target_fonts.find(name_or_id); it != data.target_fonts.end()) return it->second;
  if (!name_or_id.empty() && name_or_id.size() < 10 &&
      name_or_id.find_first_not_of("0123456789") == std::string::npos) {
    const int id = std::stoi(name_or_id);
    if (id < generator.num_categories) return id;
  }
  throw ConfigError("unknown category '" + name_or_id + "'");
}

std::string RunConfig::category_font(int category) const {
  for (const auto& [font, id] : data.target_fonts)
    if (id == category) return font;
  throw ConfigError("no target font has category " + std::to_string(category));
}

}  // namespace pegan
