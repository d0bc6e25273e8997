#include "pegan/model.hpp"

#include <cmath>

#include "json_util.hpp"

namespace pegan {

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

Tensor normal_tensor(Shape shape, double mean, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(mean, stddev);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = dist(rng);
  Tensor t(std::move(shape), std::move(values));
  t.set_requires_grad(true);
  return t;
}

Tensor zeros_param(Shape shape) {
  Tensor t(std::move(shape), 0.0);
  t.set_requires_grad(true);
  return t;
}

BatchNormLayer make_batchnorm(std::size_t channels, double init_std, BatchNormOptions options,
                              Rng& rng) {
  return BatchNormLayer{normal_tensor({channels}, 1.0, init_std, rng), zeros_param({channels}),
                        BatchNormState(channels), options};
}

void push_batchnorm(std::vector<NamedTensor>& out, const std::string& prefix,
                    const BatchNormLayer& bn) {
  out.push_back({prefix + ".gamma", bn.gamma, true});
  out.push_back({prefix + ".beta", bn.beta, true});
}

void push_batchnorm_state(std::vector<NamedTensor>& out, const std::string& prefix,
                          const BatchNormLayer& bn) {
  out.push_back({prefix + ".running_mean", bn.state.running_mean, false});
  out.push_back({prefix + ".running_var", bn.state.running_var, false});
}

void save_all(TensorArchive& archive, const std::vector<NamedTensor>& tensors) {
  for (const auto& t : tensors) archive.put(t.name, t.tensor);
}

void load_all(const TensorArchive& archive, std::vector<NamedTensor> tensors) {
  for (auto& t : tensors) archive.load_into(t.name, t.tensor);
}

void validate_batchnorm(const BatchNormOptions& bn, const char* owner) {
  if (!(bn.momentum >= 0.0 && bn.momentum <= 1.0))
    throw ConfigError(std::string(owner) + ": batchnorm momentum must lie in [0,1]");
  if (!(bn.epsilon > 0.0)) throw ConfigError(std::string(owner) + ": batchnorm epsilon must be > 0");
}

void write_bn(nlohmann::json& j, const BatchNormOptions& bn) {
  j["bn_momentum"] = bn.momentum;
  j["bn_epsilon"] = bn.epsilon;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (depth < 1) throw ConfigError("generator depth must be >= 1");
  if (!is_power_of_two(width) || !is_power_of_two(height))
    throw ConfigError("generator input extents must be powers of two, got " +
                      std::to_string(width) + "x" + std::to_string(height));
  if (depth >= 31 || (width >> depth) < 1 || (height >> depth) < 1)
    throw ConfigError("depth " + std::to_string(depth) + " halves " + std::to_string(width) + "x" +
                      std::to_string(height) + " below 1x1");
  if (encoder_channels.size() != static_cast<std::size_t>(depth))
    throw ConfigError("encoder_channels needs " + std::to_string(depth) + " entries, got " +
                      std::to_string(encoder_channels.size()));
  for (int c : encoder_channels)
    if (c < 1) throw ConfigError("encoder channel widths must be positive");
  if (embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p must lie in [0,1)");
  if (num_categories < 1) throw ConfigError("num_categories must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("kernel_size must be odd");
  if (!(init_std > 0.0)) throw ConfigError("init_std must be > 0");
  validate_batchnorm(batchnorm, "generator");
}

void DiscriminatorConfig::validate() const {
  if (channels.size() != 4) throw ConfigError("discriminator needs exactly 4 channel widths");
  for (int c : channels)
    if (c < 1) throw ConfigError("discriminator channel widths must be positive");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("kernel_size must be odd");
  if (!(init_std > 0.0)) throw ConfigError("init_std must be > 0");
  validate_batchnorm(batchnorm, "discriminator");
}

void to_json(nlohmann::json& j, const GeneratorConfig& cfg) {
  j = nlohmann::json{{"depth", cfg.depth},
                     {"width", cfg.width},
                     {"height", cfg.height},
                     {"encoder_channels", cfg.encoder_channels},
                     {"embedding_dim", cfg.embedding_dim},
                     {"dropout_p", cfg.dropout_p},
                     {"num_categories", cfg.num_categories},
                     {"kernel_size", cfg.kernel_size},
                     {"leaky_slope", cfg.leaky_slope},
                     {"init_std", cfg.init_std}};
  write_bn(j, cfg.batchnorm);
}

void from_json(const nlohmann::json& j, GeneratorConfig& cfg) {
  using json_util::read;
  const std::string s = "model.generator";
  json_util::reject_unknown_keys(j,
                                 {"depth", "width", "height", "encoder_channels", "embedding_dim",
                                  "dropout_p", "num_categories", "kernel_size", "leaky_slope",
                                  "init_std", "bn_momentum", "bn_epsilon"},
                                 s);
  read(j, "depth", cfg.depth, s);
  read(j, "width", cfg.width, s);
  read(j, "height", cfg.height, s);
  read(j, "encoder_channels", cfg.encoder_channels, s);
  read(j, "embedding_dim", cfg.embedding_dim, s);
  read(j, "dropout_p", cfg.dropout_p, s);
  read(j, "num_categories", cfg.num_categories, s);
  read(j, "kernel_size", cfg.kernel_size, s);
  read(j, "leaky_slope", cfg.leaky_slope, s);
  read(j, "init_std", cfg.init_std, s);
  read(j, "bn_momentum", cfg.batchnorm.momentum, s);
  read(j, "bn_epsilon", cfg.batchnorm.epsilon, s);
}

void to_json(nlohmann::json& j, const DiscriminatorConfig& cfg) {
  j = nlohmann::json{{"channels", cfg.channels},
                     {"conditional", cfg.conditional},
                     {"kernel_size", cfg.kernel_size},
                     {"leaky_slope", cfg.leaky_slope},
                     {"init_std", cfg.init_std}};
  write_bn(j, cfg.batchnorm);
}

void from_json(const nlohmann::json& j, DiscriminatorConfig& cfg) {
  using json_util::read;
  const std::string s = "model.discriminator";
  json_util::reject_unknown_keys(j,
                                 {"channels", "conditional", "kernel_size", "leaky_slope",
                                  "init_std", "bn_momentum", "bn_epsilon"},
                                 s);
  read(j, "channels", cfg.channels, s);
  read(j, "conditional", cfg.conditional, s);
  read(j, "kernel_size", cfg.kernel_size, s);
  read(j, "leaky_slope", cfg.leaky_slope, s);
  read(j, "init_std", cfg.init_std, s);
  read(j, "bn_momentum", cfg.batchnorm.momentum, s);
  read(j, "bn_epsilon", cfg.batchnorm.epsilon, s);
}

// ---------------------------------------------------------------------------
// Generator

Generator::Generator(GeneratorConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int n = cfg_.depth;
  const auto k = static_cast<std::size_t>(cfg_.kernel_size);
  const int pad = cfg_.kernel_size / 2;
  const auto& ch = cfg_.encoder_channels;
  auto width_of = [&](int i) { return static_cast<std::size_t>(ch[i]); };

  for (int i = 1; i <= n; ++i) {
    EncoderBlock block;
    block.conv.padding = pad;
    if (i == 1) {
      block.pre_activation = false;
      block.pyramid_input = false;
      block.conv.weight = normal_tensor({width_of(0), 1, k, k}, 0.0, cfg_.init_std, rng);
      block.conv.bias = zeros_param({width_of(0)});
    } else {
      block.pyramid_input = i < n;
      const std::size_t in = width_of(i - 2) + (block.pyramid_input ? 1 : 0);
      block.conv.weight = normal_tensor({width_of(i - 1), in, k, k}, 0.0, cfg_.init_std, rng);
      block.bn = make_batchnorm(width_of(i - 1), cfg_.init_std, cfg_.batchnorm, rng);
    }
    encoder_.push_back(std::move(block));
  }

  for (int i = 1; i <= n; ++i) {
    DecoderBlock block;
    block.deconv.padding = pad;
    const std::size_t in = i == 1 ? width_of(n - 1) + static_cast<std::size_t>(cfg_.embedding_dim)
                                  : 2 * width_of(n - i);
    const bool last = i == n;
    const std::size_t out = last ? 1 : width_of(n - i - 1);
    const std::size_t in_extent = static_cast<std::size_t>(cfg_.height >> (n - i + 1));
    block.output_padding =
        transpose_output_padding(in_extent, 2 * in_extent, cfg_.kernel_size, 2, pad);
    block.deconv.weight = normal_tensor({in, out, k, k}, 0.0, cfg_.init_std, rng);
    if (last) {
      block.deconv.bias = zeros_param({out});
      block.dropout = false;
    } else {
      block.bn = make_batchnorm(out, cfg_.init_std, cfg_.batchnorm, rng);
      block.dropout = cfg_.dropout_p > 0.0;
    }
    decoder_.push_back(std::move(block));
  }

  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> table(static_cast<std::size_t>(cfg_.num_categories * cfg_.embedding_dim));
  for (auto& v : table) v = unit(rng);
  embedding_ = Tensor({static_cast<std::size_t>(cfg_.num_categories),
                       static_cast<std::size_t>(cfg_.embedding_dim)},
                      std::move(table));
}

std::vector<Tensor> Generator::encode(const Tensor& source, Mode mode, ForwardTrace* trace) {
  const Shape expected{source.rank() == 4 ? source.dim(0) : 0, 1,
                       static_cast<std::size_t>(cfg_.height), static_cast<std::size_t>(cfg_.width)};
  if (source.rank() != 4 || source.shape() != expected || expected[0] == 0)
    throw ShapeError("generator expects source [B,1," + std::to_string(cfg_.height) + "," +
                     std::to_string(cfg_.width) + "], got " + shape_str(source.shape()));
  const Mode enc_mode = encoder_frozen_ ? Mode::eval : mode;

  std::vector<Tensor> features;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    auto& block = encoder_[i];
    ModuleTrace t;
    t.module = "e" + std::to_string(i + 1);
    Tensor x = i == 0 ? source : features.back();
    if (block.pyramid_input) {
      Tensor pyramid = avg_downsample(source, 1 << i);
      t.pyramid_channels = pyramid.dim(1);
      t.pyramid_shape = pyramid.shape();
      x = concat_channels(pyramid, x);
    }
    t.input = x.shape();
    if (block.pre_activation) x = leaky_relu(x, cfg_.leaky_slope);
    Tensor y = conv2d(x, block.conv.weight, block.conv.bias, block.conv.stride, block.conv.padding);
    if (block.bn) y = batchnorm2d(y, block.bn->gamma, block.bn->beta, block.bn->state, enc_mode,
                                  block.bn->options);
    t.output = y.shape();
    if (trace) trace->push_back(std::move(t));
    features.push_back(std::move(y));
  }
  return features;
}

Tensor Generator::decode(const std::vector<Tensor>& features, std::span<const int> categories,
                         Mode mode, Rng& rng, ForwardTrace* trace) {
  const auto n = static_cast<std::size_t>(cfg_.depth);
  if (features.size() != n)
    throw ShapeError("decode expects " + std::to_string(n) + " feature maps, got " +
                     std::to_string(features.size()));
  const auto batch = features.back().dim(0);
  if (categories.size() != batch)
    throw ShapeError("decode: " + std::to_string(categories.size()) + " categories for batch of " +
                     std::to_string(batch));

  const auto dim = static_cast<std::size_t>(cfg_.embedding_dim);
  std::vector<double> rows;
  rows.reserve(batch * dim);
  for (int c : categories) {
    auto v = category_embedding(c);
    rows.insert(rows.end(), v.begin(), v.end());
  }
  const auto& bottleneck = features.back();
  Tensor style = tile_spatial(Tensor({batch, dim}, std::move(rows)), bottleneck.dim(2),
                              bottleneck.dim(3));

  Tensor x;
  for (std::size_t i = 0; i < n; ++i) {
    auto& block = decoder_[i];
    ModuleTrace t;
    t.module = "d" + std::to_string(i + 1);
    if (i == 0) {
      x = concat_channels(bottleneck, style);
      t.skip_channels = bottleneck.dim(1);
      t.embedding_channels = dim;
    } else {
      const auto& skip = features[n - 1 - i];  // F_{n-i} for module d_{i+1}
      t.skip_channels = skip.dim(1);
      x = concat_channels(x, skip);
    }
    t.input = x.shape();
    x = relu(x);
    x = conv2d_transpose(x, block.deconv.weight, block.deconv.bias, block.deconv.stride,
                         block.deconv.padding, block.output_padding);
    if (block.bn)
      x = batchnorm2d(x, block.bn->gamma, block.bn->beta, block.bn->state, mode, block.bn->options);
    if (block.dropout) x = dropout(x, cfg_.dropout_p, mode, rng);
    if (i + 1 == n) x = tanh(x);
    t.output = x.shape();
    if (trace) trace->push_back(std::move(t));
  }
  return x;
}

Tensor Generator::generate(const Tensor& source, std::span<const int> categories, Mode mode,
                           Rng& rng, ForwardTrace* trace) {
  auto features = encode(source, mode, trace);
  return decode(features, categories, mode, rng, trace);
}

Tensor Generator::generate(const Tensor& source, int category) {
  Rng unused(0);
  std::vector<int> cats(source.rank() == 4 ? source.dim(0) : 1, category);
  return generate(source, cats, Mode::eval, unused);
}

std::span<const double> Generator::category_embedding(int category) const {
  if (category < 0 || category >= cfg_.num_categories)
    throw LookupError("unknown category " + std::to_string(category) + " (model has " +
                      std::to_string(cfg_.num_categories) + ")");
  const auto dim = static_cast<std::size_t>(cfg_.embedding_dim);
  return embedding_.data().subspan(static_cast<std::size_t>(category) * dim, dim);
}

std::vector<NamedTensor> Generator::encoder_parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    const auto prefix = "gen.e" + std::to_string(i + 1);
    const auto& b = encoder_[i];
    out.push_back({prefix + ".conv.weight", b.conv.weight, true});
    if (b.conv.bias.defined()) out.push_back({prefix + ".conv.bias", b.conv.bias, true});
    if (b.bn) push_batchnorm(out, prefix + ".bn", *b.bn);
  }
  return out;
}

std::vector<NamedTensor> Generator::decoder_parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    const auto prefix = "gen.d" + std::to_string(i + 1);
    const auto& b = decoder_[i];
    out.push_back({prefix + ".deconv.weight", b.deconv.weight, true});
    if (b.deconv.bias.defined()) out.push_back({prefix + ".deconv.bias", b.deconv.bias, true});
    if (b.bn) push_batchnorm(out, prefix + ".bn", *b.bn);
  }
  return out;
}

std::vector<NamedTensor> Generator::parameters() const {
  auto out = encoder_parameters();
  auto dec = decoder_parameters();
  out.insert(out.end(), dec.begin(), dec.end());
  return out;
}

std::vector<NamedTensor> Generator::encoder_buffers() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < encoder_.size(); ++i)
    if (encoder_[i].bn) push_batchnorm_state(out, "gen.e" + std::to_string(i + 1) + ".bn", *encoder_[i].bn);
  return out;
}

std::vector<NamedTensor> Generator::buffers() const {
  auto out = encoder_buffers();
  for (std::size_t i = 0; i < decoder_.size(); ++i)
    if (decoder_[i].bn) push_batchnorm_state(out, "gen.d" + std::to_string(i + 1) + ".bn", *decoder_[i].bn);
  out.push_back({"gen.embed.table", embedding_, false});
  return out;
}

void Generator::set_encoder_frozen(bool frozen) {
  encoder_frozen_ = frozen;
  for (auto& p : encoder_parameters()) p.tensor.set_requires_grad(!frozen);
}

void Generator::save(TensorArchive& archive) const {
  save_all(archive, parameters());
  save_all(archive, buffers());
  archive.put_json("gen.config", cfg_);
}

void Generator::load(const TensorArchive& archive) {
  load_all(archive, parameters());
  load_all(archive, buffers());
}

// ---------------------------------------------------------------------------
// Discriminator

Discriminator::Discriminator(DiscriminatorConfig cfg, int width, int height, int num_categories,
                             Rng& rng)
    : cfg_(std::move(cfg)), width_(width), height_(height), num_categories_(num_categories) {
  cfg_.validate();
  if (width < 1 || height < 1) throw ConfigError("discriminator input extents must be positive");
  if (num_categories < 1) throw ConfigError("discriminator needs at least one category");
  const auto k = static_cast<std::size_t>(cfg_.kernel_size);
  const int pad = cfg_.kernel_size / 2;
  std::size_t in = cfg_.conditional ? 2 : 1;
  auto h = static_cast<std::size_t>(height), w = static_cast<std::size_t>(width);
  for (std::size_t j = 0; j < 4; ++j) {
    const auto out = static_cast<std::size_t>(cfg_.channels[j]);
    ConvLayer conv;
    conv.padding = pad;
    conv.weight = normal_tensor({out, in, k, k}, 0.0, cfg_.init_std, rng);
    if (j == 0)
      conv.bias = zeros_param({out});
    else
      norms_.push_back(make_batchnorm(out, cfg_.init_std, cfg_.batchnorm, rng));
    convs_.push_back(std::move(conv));
    if (h + 2 * pad < k || w + 2 * pad < k) throw ConfigError("discriminator input too small");
    h = (h + 2 * pad - k) / 2 + 1;
    w = (w + 2 * pad - k) / 2 + 1;
    in = out;
  }
  const auto features = in * h * w;
  const auto outputs = 1 + static_cast<std::size_t>(num_categories);
  fc_weight_ = normal_tensor({outputs, features}, 0.0, cfg_.init_std, rng);
  fc_bias_ = zeros_param({outputs});
}

Discriminator::Output Discriminator::discriminate(const Tensor& image, Mode mode,
                                                  const Tensor* source) {
  if (image.rank() != 4 || image.dim(1) != 1 || image.dim(2) != static_cast<std::size_t>(height_) ||
      image.dim(3) != static_cast<std::size_t>(width_))
    throw ShapeError("discriminator expects [B,1," + std::to_string(height_) + "," +
                     std::to_string(width_) + "], got " + shape_str(image.shape()));
  Tensor x = image;
  if (cfg_.conditional) {
    if (!source) throw UsageError("conditional discriminator needs the source image");
    x = concat_channels(*source, image);
  }
  for (std::size_t j = 0; j < convs_.size(); ++j) {
    x = conv2d(x, convs_[j].weight, convs_[j].bias, convs_[j].stride, convs_[j].padding);
    if (j > 0) {
      auto& bn = norms_[j - 1];
      x = batchnorm2d(x, bn.gamma, bn.beta, bn.state, mode, bn.options);
    }
    x = leaky_relu(x, cfg_.leaky_slope);
  }
  Tensor logits = linear(flatten(x), fc_weight_, fc_bias_);
  Output out;
  out.real_logit = slice_columns(logits, 0, 1);
  out.real_prob = sigmoid(out.real_logit);
  out.category_logits = slice_columns(logits, 1, 1 + static_cast<std::size_t>(num_categories_));
  return out;
}

std::vector<NamedTensor> Discriminator::parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t j = 0; j < convs_.size(); ++j) {
    const auto prefix = "disc.block" + std::to_string(j);
    out.push_back({prefix + ".conv.weight", convs_[j].weight, true});
    if (convs_[j].bias.defined()) out.push_back({prefix + ".conv.bias", convs_[j].bias, true});
    if (j > 0) push_batchnorm(out, prefix + ".bn", norms_[j - 1]);
  }
  out.push_back({"disc.fc.weight", fc_weight_, true});
  out.push_back({"disc.fc.bias", fc_bias_, true});
  return out;
}

std::vector<NamedTensor> Discriminator::buffers() const {
  std::vector<NamedTensor> out;
  for (std::size_t j = 0; j < norms_.size(); ++j)
    push_batchnorm_state(out, "disc.block" + std::to_string(j + 1) + ".bn", norms_[j]);
  return out;
}

void Discriminator::save(TensorArchive& archive) const {
  save_all(archive, parameters());
  save_all(archive, buffers());
  archive.put_json("disc.config", cfg_);
}

void Discriminator::load(const TensorArchive& archive) {
  load_all(archive, parameters());
  load_all(archive, buffers());
}

}  // namespace pegan
