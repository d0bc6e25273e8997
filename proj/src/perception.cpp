#include <cmath>

#include "json_util.hpp"
#include "pegan/model.hpp"

namespace pegan {

namespace {

// conv counts of VGG-19 stages, truncated after the conv5_2 tap.
constexpr int kVggConvs[5] = {2, 2, 4, 4, 2};
constexpr int kVggWidths[5] = {64, 128, 256, 512, 512};
constexpr double kImagenetMean[3] = {0.485, 0.456, 0.406};
constexpr double kImagenetStd[3] = {0.229, 0.224, 0.225};

std::string vgg_name(int stage, int conv) {
  return "vgg.conv" + std::to_string(stage) + "_" + std::to_string(conv);
}

}  // namespace

void to_json(nlohmann::json& j, const PerceptionConfig& cfg) {
  j = nlohmann::json{{"stage_channels", cfg.stage_channels},
                     {"seed", cfg.seed},
                     {"vgg19_weights", cfg.vgg19_weights}};
}

void from_json(const nlohmann::json& j, PerceptionConfig& cfg) {
  const std::string s = "model.perception";
  json_util::reject_unknown_keys(j, {"stage_channels", "seed", "vgg19_weights"}, s);
  json_util::read(j, "stage_channels", cfg.stage_channels, s);
  json_util::read(j, "seed", cfg.seed, s);
  json_util::read(j, "vgg19_weights", cfg.vgg19_weights, s);
}

PerceptionNet PerceptionNet::random_fallback(const PerceptionConfig& cfg) {
  if (cfg.stage_channels.size() != 5) throw ConfigError("perception net needs 5 stage widths");
  PerceptionNet net;
  Rng rng(cfg.seed);
  std::size_t in = 1;
  for (int width : cfg.stage_channels) {
    if (width < 1) throw ConfigError("perception stage widths must be positive");
    const auto out = static_cast<std::size_t>(width);
    Stage stage;
    for (int k = 0; k < 2; ++k) {
      std::normal_distribution<double> he(0.0, std::sqrt(2.0 / static_cast<double>(in * 9)));
      std::vector<double> w(out * in * 9);
      for (auto& v : w) v = he(rng);
      ConvLayer conv;
      conv.weight = Tensor({out, in, 3, 3}, std::move(w));
      conv.bias = Tensor({out}, 0.0);
      conv.stride = 1;
      conv.padding = 1;
      stage.convs.push_back(std::move(conv));
      in = out;
    }
    net.stages_.push_back(std::move(stage));
  }
  return net;
}

PerceptionNet PerceptionNet::vgg19(const std::filesystem::path& weights) {
  TensorArchive archive;
  try {
    archive = TensorArchive::load(weights);
  } catch (const Error& e) {
    throw IoError("cannot load VGG-19 weights from " + weights.string() + ": " + e.what());
  }
  PerceptionNet net;
  net.vgg_ = true;
  std::vector<double> w(3), b(3);
  for (int c = 0; c < 3; ++c) {
    w[c] = 0.5 / kImagenetStd[c];
    b[c] = (0.5 - kImagenetMean[c]) / kImagenetStd[c];
  }
  net.input_map_.weight = Tensor({3, 1, 1, 1}, std::move(w));
  net.input_map_.bias = Tensor({3}, std::move(b));
  net.input_map_.stride = 1;
  net.input_map_.padding = 0;

  std::size_t in = 3;
  for (int s = 0; s < 5; ++s) {
    const auto out = static_cast<std::size_t>(kVggWidths[s]);
    Stage stage;
    for (int k = 0; k < kVggConvs[s]; ++k) {
      const auto name = vgg_name(s + 1, k + 1);
      ConvLayer conv;
      conv.weight = Tensor({out, in, 3, 3});
      conv.bias = Tensor({out});
      conv.stride = 1;
      conv.padding = 1;
      try {
        archive.load_into(name + ".weight", conv.weight);
        archive.load_into(name + ".bias", conv.bias);
      } catch (const Error& e) {
        throw IoError("VGG-19 archive " + weights.string() + ": " + e.what());
      }
      stage.convs.push_back(std::move(conv));
      in = out;
    }
    net.stages_.push_back(std::move(stage));
  }
  return net;
}

PerceptionNet PerceptionNet::from_config(const PerceptionConfig& cfg) {
  if (!cfg.vgg19_weights.empty()) return vgg19(cfg.vgg19_weights);
  return random_fallback(cfg);
}

std::vector<Tensor> PerceptionNet::features(const Tensor& image) const {
  if (image.rank() != 4 || image.dim(1) != 1)
    throw ShapeError("perception net expects [B,1,H,W] images, got " + shape_str(image.shape()));
  Tensor x = image;
  if (vgg_) x = conv2d(x, input_map_.weight, input_map_.bias, 1, 0);
  std::vector<Tensor> taps;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    if (s > 0) x = max_pool2d(x, 2);
    for (std::size_t k = 0; k < stages_[s].convs.size(); ++k) {
      const auto& conv = stages_[s].convs[k];
      x = relu(conv2d(x, conv.weight, conv.bias, conv.stride, conv.padding));
      if (k == 1) taps.push_back(x);
    }
  }
  return taps;
}

void PerceptionNet::save(TensorArchive& archive) const {
  for (std::size_t s = 0; s < stages_.size(); ++s)
    for (std::size_t k = 0; k < stages_[s].convs.size(); ++k) {
      const auto name = vgg_name(static_cast<int>(s + 1), static_cast<int>(k + 1));
      archive.put(name + ".weight", stages_[s].convs[k].weight);
      archive.put(name + ".bias", stages_[s].convs[k].bias);
    }
}

}  // namespace pegan
