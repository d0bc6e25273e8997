#ifndef PEGAN_TRAINING_HPP
#define PEGAN_TRAINING_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "pegan/dataset.hpp"
#include "pegan/losses.hpp"
#include "pegan/model.hpp"
#include "pegan/optim.hpp"

namespace pegan {

enum class Stage { pretrain, tune };
Stage parse_stage(const std::string& name);
std::string to_string(Stage stage);

struct TrainConfig {
  AdamOptions adam;
  int batch_size = 4;
  /// Steps of the current stage.
  std::uint64_t steps = 200;
  Stage stage = Stage::pretrain;
  double enlarge_factor = 1.125;
  LossWeights loss_weights;
  PerceptualLayerWeights perceptual_weights;
  AdversarialForm adversarial = AdversarialForm::non_saturating;
  /// Also write checkpoint_step<N>.pegan every this many steps; 0 disables.
  std::uint64_t checkpoint_every = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

/// Train mode: enlarge by `factor` (bilinear) then crop the original size at
/// an offset drawn uniformly from [0, enlarged - size] per axis. Eval mode and
/// factor 1 return the image unchanged.
GlyphImage augment(const GlyphImage& image, double factor, Rng& rng, Mode mode);

/// Source and target share one crop offset.
GlyphPair augment_pair(const GlyphPair& pair, double factor, Rng& rng, Mode mode);

struct StepReport {
  std::uint64_t step = 0;  // 1-based number of the step just taken
  double loss_d = 0;
  double loss_adv_g = 0;
  double loss_l1 = 0;
  double loss_perp = 0;
  double loss_cate = 0;
  double loss_total = 0;

  bool operator==(const StepReport&) const = default;
};

inline constexpr const char* kLossCsvHeader =
    "step,loss_d,loss_adv_g,loss_l1,loss_perp,loss_cate,loss_total";
std::string loss_csv_row(const StepReport& r);

/// Everything needed to continue a run bit-exactly.
struct Checkpoint {
  GeneratorConfig generator_config;
  DiscriminatorConfig discriminator_config;
  PerceptionConfig perception_config;
  TrainConfig train_config;
  std::unique_ptr<Generator> generator;
  std::unique_ptr<Discriminator> discriminator;
  Adam adam_g;
  Adam adam_d;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;              // steps completed over all stages
  std::uint64_t stage_start_step = 0;  // value of `step` when the stage began
  int target_category = -1;            // tune stage only
  std::map<int, std::string> category_names;

  /// Steps still to run in the current stage.
  std::uint64_t remaining_steps() const;

  TensorArchive to_archive() const;
  static Checkpoint from_archive(const TensorArchive& archive);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

/// Fresh models drawn from a seed derived from `seed`.
Checkpoint initial_checkpoint(const GeneratorConfig& gen_cfg, const DiscriminatorConfig& disc_cfg,
                              const PerceptionConfig& perception_cfg, const TrainConfig& train_cfg,
                              std::uint64_t seed);

/// One discriminator update followed by one generator update. The D update
/// minimises adv_loss_d + w_cate * (category loss on real + on generated)
/// with the generated batch detached; the G update minimises the weighted
/// four-term objective while the discriminator takes no gradient.
/// `rng` drives dropout. Non-finite losses raise NumericError naming the step.
StepReport train_step(Generator& gen, Discriminator& disc, const PerceptionNet& perception,
                      Adam& adam_g, Adam& adam_d, const std::vector<GlyphPair>& batch,
                      const TrainConfig& cfg, Rng& rng, std::uint64_t step_number = 1);

struct RunHooks {
  /// Loss CSV (appended, header written when the file is new) and
  /// periodic/final checkpoints land here when non-empty.
  std::filesystem::path output_dir;
  std::function<void(const StepReport&)> on_step;
  /// Stop after this many steps of this call even if the stage is not done.
  std::uint64_t max_steps = UINT64_MAX;
};

/// Continues the checkpoint's current stage on `pairs` until it is complete
/// (or hooks.max_steps is reached). Batch order is an epoch-wise permutation
/// derived from (seed, stage start, epoch); augmentation and dropout use a
/// stream derived from (seed, step).
void run_stage(Checkpoint& ckpt, const std::vector<GlyphPair>& pairs,
               const PerceptionNet& perception, const RunHooks& hooks = {});

/// One-to-many pre-training. Every category the generator is configured for
/// must appear in `pairs` (DatasetError otherwise).
Checkpoint pretrain(const std::vector<GlyphPair>& pairs, const GeneratorConfig& gen_cfg,
                    const DiscriminatorConfig& disc_cfg, const PerceptionConfig& perception_cfg,
                    const TrainConfig& cfg, std::uint64_t seed, const RunHooks& hooks = {});

/// Starts a tuning stage on `ckpt`: encoder frozen, only pairs of
/// `target_category` used, step numbering and optimizer state continued.
/// ConfigError for a category the checkpoint does not know.
void begin_tune(Checkpoint& ckpt, int target_category, const TrainConfig& cfg);
void tune(Checkpoint& ckpt, int target_category, const std::vector<GlyphPair>& pairs,
          const TrainConfig& cfg, const RunHooks& hooks = {});

/// Pairs of one category.
std::vector<GlyphPair> pairs_of_category(const std::vector<GlyphPair>& pairs, int category);

}  // namespace pegan

#endif  // PEGAN_TRAINING_HPP
