#ifndef PEGAN_RUN_CONFIG_HPP
#define PEGAN_RUN_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"
#include "pegan/metrics.hpp"
#include "pegan/model.hpp"
#include "pegan/training.hpp"

namespace pegan {

struct DataConfig {
  std::filesystem::path root;
  std::string source_font = "source";
  /// Target font directory name -> category id.
  std::map<std::string, int> target_fonts;
  std::filesystem::path output_dir = "out";
};

struct EvalConfig {
  std::filesystem::path eval_set;    // optional
  std::filesystem::path recognizer;  // optional
  double psnr_max_value = 1.0;
  SsimOptions ssim;
  int uqi_window = 8;
};

/// JSON run description with sections seed, model{generator, discriminator,
/// perception}, train, data and eval. Unknown keys are rejected. Relative
/// paths are resolved against the directory of the config file.
struct RunConfig {
  std::uint64_t seed = 1;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  PerceptionConfig perception;
  TrainConfig train;
  DataConfig data;
  EvalConfig eval;

  static RunConfig parse(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);

  /// Checks configuration values, then that the data directories (and the
  /// optional evaluation files) exist. ConfigError / DatasetError.
  void validate() const;
  void validate_paths() const;

  /// Category id of a target font given by name or by numeric id.
  int resolve_category(const std::string& name_or_id) const;
  std::string category_font(int category) const;
};

}  // namespace pegan

#endif  // PEGAN_RUN_CONFIG_HPP
