#ifndef PEGAN_MODEL_HPP
#define PEGAN_MODEL_HPP

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pegan/archive.hpp"
#include "pegan/ops.hpp"

namespace pegan {

struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

struct ConvLayer {
  Tensor weight;
  Tensor bias;  // undefined when a batchnorm follows
  int stride = 2;
  int padding = 2;
};

struct BatchNormLayer {
  Tensor gamma;
  Tensor beta;
  BatchNormState state;
  BatchNormOptions options;
};

struct GeneratorConfig {
  int depth = 8;
  int width = 256;
  int height = 256;
  std::vector<int> encoder_channels{64, 128, 256, 512, 512, 512, 512, 512};
  int embedding_dim = 128;
  double dropout_p = 0.5;
  int num_categories = 20;
  int kernel_size = 5;
  double leaky_slope = 0.2;
  double init_std = 0.02;
  BatchNormOptions batchnorm;

  /// Throws ConfigError when the configuration cannot be built.
  void validate() const;
};

struct DiscriminatorConfig {
  std::vector<int> channels{64, 128, 256, 512};
  /// Concatenate the source glyph with the judged image (pix2pix-style).
  bool conditional = false;
  int kernel_size = 5;
  double leaky_slope = 0.2;
  double init_std = 0.02;
  BatchNormOptions batchnorm;

  void validate() const;
};

void to_json(nlohmann::json& j, const GeneratorConfig& cfg);
void from_json(const nlohmann::json& j, GeneratorConfig& cfg);
void to_json(nlohmann::json& j, const DiscriminatorConfig& cfg);
void from_json(const nlohmann::json& j, DiscriminatorConfig& cfg);

/// Input and output shapes seen by one generator module during a forward
/// pass, for structural checks of the pyramid and skip wiring.
struct ModuleTrace {
  std::string module;
  Shape input;
  Shape output;
  std::size_t pyramid_channels = 0;
  Shape pyramid_shape;
  std::size_t skip_channels = 0;
  std::size_t embedding_channels = 0;
};
using ForwardTrace = std::vector<ModuleTrace>;

class Generator {
 public:
  /// Draws all weights from `rng`: conv N(0, init_std^2), bn gamma
  /// N(1, init_std^2), then the category table from N(0,1).
  Generator(GeneratorConfig cfg, Rng& rng);

  const GeneratorConfig& config() const { return cfg_; }

  /// F_1..F_n for a [B,1,height,width] source in [-1,1].
  std::vector<Tensor> encode(const Tensor& source, Mode mode, ForwardTrace* trace = nullptr);

  /// Image in (-1,1) from encoder features; one category per batch row.
  Tensor decode(const std::vector<Tensor>& features, std::span<const int> categories, Mode mode,
                Rng& rng, ForwardTrace* trace = nullptr);

  Tensor generate(const Tensor& source, std::span<const int> categories, Mode mode, Rng& rng,
                  ForwardTrace* trace = nullptr);
  /// Eval-mode convenience: the same category for every batch row.
  Tensor generate(const Tensor& source, int category);

  std::span<const double> category_embedding(int category) const;
  const Tensor& embedding_table() const { return embedding_; }

  /// Trainable tensors (encoder then decoder), named gen.e{i}.* / gen.d{i}.*.
  std::vector<NamedTensor> parameters() const;
  std::vector<NamedTensor> encoder_parameters() const;
  std::vector<NamedTensor> decoder_parameters() const;
  /// Non-trainable state: batchnorm running statistics and the category table.
  std::vector<NamedTensor> buffers() const;
  std::vector<NamedTensor> encoder_buffers() const;

  /// A frozen encoder takes no gradient and runs its batchnorm in eval mode.
  void set_encoder_frozen(bool frozen);
  bool encoder_frozen() const { return encoder_frozen_; }

  void save(TensorArchive& archive) const;
  void load(const TensorArchive& archive);

 private:
  struct EncoderBlock {
    bool pre_activation = true;
    bool pyramid_input = true;
    ConvLayer conv;
    std::optional<BatchNormLayer> bn;
  };
  struct DecoderBlock {
    ConvLayer deconv;
    int output_padding = 1;
    std::optional<BatchNormLayer> bn;
    bool dropout = true;
  };

  GeneratorConfig cfg_;
  std::vector<EncoderBlock> encoder_;
  std::vector<DecoderBlock> decoder_;
  Tensor embedding_;  // [num_categories, embedding_dim]
  bool encoder_frozen_ = false;
};

class Discriminator {
 public:
  struct Output {
    Tensor real_prob;        // [B,1], sigmoid of real_logit
    Tensor real_logit;       // [B,1]
    Tensor category_logits;  // [B,N]
  };

  Discriminator(DiscriminatorConfig cfg, int width, int height, int num_categories, Rng& rng);

  const DiscriminatorConfig& config() const { return cfg_; }
  int num_categories() const { return num_categories_; }

  /// `source` is required for (and only used by) a conditional discriminator.
  Output discriminate(const Tensor& image, Mode mode, const Tensor* source = nullptr);

  std::vector<NamedTensor> parameters() const;
  std::vector<NamedTensor> buffers() const;

  void save(TensorArchive& archive) const;
  void load(const TensorArchive& archive);

 private:
  DiscriminatorConfig cfg_;
  int width_, height_, num_categories_;
  std::vector<ConvLayer> convs_;
  std::vector<BatchNormLayer> norms_;  // blocks 1..3
  Tensor fc_weight_, fc_bias_;
};

struct PerceptionConfig {
  /// Channel widths of the five stages of the fallback random network.
  std::vector<int> stage_channels{16, 32, 64, 64, 64};
  std::uint64_t seed = 19;
  /// Archive with VGG-19 weights; empty selects the fallback network.
  std::string vgg19_weights;
};

void to_json(nlohmann::json& j, const PerceptionConfig& cfg);
void from_json(const nlohmann::json& j, PerceptionConfig& cfg);

/// Fixed feature extractor for the perceptual loss. Takes [B,1,H,W] images
/// in [-1,1] and returns the ReLU activations at the five tap depths
/// conv1_2, conv2_2, conv3_2, conv4_2, conv5_2.
///
/// VGG-19 archives use the entry names vgg.conv{s}_{k}.weight [out,in,3,3] and
/// vgg.conv{s}_{k}.bias for stages s=1..5 up to conv5_2; inputs are mapped to
/// [0,1], replicated to RGB and normalised with the ImageNet statistics.
/// The fallback is a He-initialised random CNN with two 3x3 convs per stage
/// and 2x2 max pooling between stages, drawn from a fixed seed.
class PerceptionNet {
 public:
  static PerceptionNet random_fallback(const PerceptionConfig& cfg);
  static PerceptionNet vgg19(const std::filesystem::path& weights);
  static PerceptionNet from_config(const PerceptionConfig& cfg);

  std::vector<Tensor> features(const Tensor& image) const;
  bool is_vgg19() const { return vgg_; }

  /// Archive entries (vgg.* names) for this network's weights.
  void save(TensorArchive& archive) const;

 private:
  struct Stage {
    std::vector<ConvLayer> convs;
  };
  bool vgg_ = false;
  ConvLayer input_map_;  // 1x1 conv: gray [-1,1] -> normalised RGB; unused by the fallback
  std::vector<Stage> stages_;
};

}  // namespace pegan

#endif  // PEGAN_MODEL_HPP
