#ifndef PEGAN_RECOGNIZER_HPP
#define PEGAN_RECOGNIZER_HPP

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pegan/dataset.hpp"
#include "pegan/model.hpp"

namespace pegan {

struct RecognizerConfig {
  int input_size = 32;
  std::vector<int> channels{16, 32, 64};
  /// Augmented training copies drawn per real image (the first is unaugmented).
  int samples_per_image = 20;
  int steps = 300;
  int batch_size = 20;
  double learning_rate = 2e-3;
  double enlarge_factor = 1.125;
  /// Minimum train accuracy for the recognizer to be used as an evaluator.
  double accuracy_floor = 0.95;
  std::uint64_t seed = 11;

  void validate() const;
};

void to_json(nlohmann::json& j, const RecognizerConfig& cfg);
void from_json(const nlohmann::json& j, RecognizerConfig& cfg);

/// Small glyph classifier: three Conv(5x5, stride 2)-BN-LReLU blocks, one
/// FC layer and softmax over a fixed codepoint set.
class Recognizer {
 public:
  /// Trains on the target images of `real_pairs`. Needs at least two
  /// classes and at least one image per class; pairs of other codepoints
  /// are ignored.
  static Recognizer train(const std::vector<GlyphPair>& real_pairs,
                          const std::vector<char32_t>& classes, const RecognizerConfig& cfg = {});

  const std::vector<char32_t>& classes() const { return classes_; }
  const RecognizerConfig& config() const { return cfg_; }
  /// Accuracy on the unaugmented training images, eval mode.
  double train_accuracy() const { return train_accuracy_; }
  bool meets_floor() const { return train_accuracy_ >= cfg_.accuracy_floor; }

  /// Top-1 codepoint per image, eval mode.
  std::vector<char32_t> predict(const std::vector<const GlyphImage*>& images);
  char32_t predict(const GlyphImage& image);

  std::vector<NamedTensor> parameters() const;

  void save(const std::filesystem::path& path) const;
  static Recognizer load(const std::filesystem::path& path);

 private:
  Recognizer(RecognizerConfig cfg, std::vector<char32_t> classes);
  Tensor logits(const Tensor& batch, Mode mode);
  Tensor prepare(const std::vector<const GlyphImage*>& images) const;

  RecognizerConfig cfg_;
  std::vector<char32_t> classes_;
  std::vector<ConvLayer> convs_;
  std::vector<BatchNormLayer> norms_;
  Tensor fc_weight_, fc_bias_;
  double train_accuracy_ = 0.0;
};

/// Fraction of images whose top-1 prediction is the listed codepoint.
/// DomainError for an empty list, LookupError for a codepoint outside the
/// recognizer's classes.
double recognition_accuracy(Recognizer& recognizer,
                            const std::vector<std::pair<GlyphImage, char32_t>>& samples);

}  // namespace pegan

#endif  // PEGAN_RECOGNIZER_HPP
