#include "pegan/recognizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "json_util.hpp"
#include "pegan/optim.hpp"

namespace pegan {

namespace {

constexpr int kKernel = 5;
constexpr int kEvalChunk = 64;

Tensor normal_tensor(Shape shape, double mean, double std, Rng& rng) {
  std::normal_distribution<double> dist(mean, std);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v)).set_requires_grad(true);
}

}  // namespace

void RecognizerConfig::validate() const {
  if (input_size < 8 || input_size % 8 != 0)
    throw ConfigError("recognizer input_size must be a positive multiple of 8");
  if (channels.size() != 3) throw ConfigError("recognizer needs exactly 3 channel widths");
  for (int c : channels)
    if (c < 1) throw ConfigError("recognizer channel widths must be positive");
  if (samples_per_image < 1 || steps < 1 || batch_size < 2)
    throw ConfigError("recognizer needs samples_per_image >= 1, steps >= 1, batch_size >= 2");
  if (!(learning_rate > 0)) throw ConfigError("recognizer learning_rate must be > 0");
  if (!(enlarge_factor >= 1.0)) throw ConfigError("recognizer enlarge_factor must be >= 1");
}

void to_json(nlohmann::json& j, const RecognizerConfig& c) {
  j = nlohmann::json{{"input_size", c.input_size},         {"channels", c.channels},
                     {"samples_per_image", c.samples_per_image}, {"steps", c.steps},
                     {"batch_size", c.batch_size},         {"learning_rate", c.learning_rate},
                     {"enlarge_factor", c.enlarge_factor}, {"accuracy_floor", c.accuracy_floor},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, RecognizerConfig& c) {
  const std::string s = "recognizer";
  json_util::reject_unknown_keys(j,
                                 {"input_size", "channels", "samples_per_image", "steps",
                                  "batch_size", "learning_rate", "enlarge_factor",
                                  "accuracy_floor", "seed"},
                                 s);
  json_util::read(j, "input_size", c.input_size, s);
  json_util::read(j, "channels", c.channels, s);
  json_util::read(j, "samples_per_image", c.samples_per_image, s);
  json_util::read(j, "steps", c.steps, s);
  json_util::read(j, "batch_size", c.batch_size, s);
  json_util::read(j, "learning_rate", c.learning_rate, s);
  json_util::read(j, "enlarge_factor", c.enlarge_factor, s);
  json_util::read(j, "accuracy_floor", c.accuracy_floor, s);
  json_util::read(j, "seed", c.seed, s);
}

Recognizer::Recognizer(RecognizerConfig cfg, std::vector<char32_t> classes)
    : cfg_(std::move(cfg)), classes_(std::move(classes)) {
  cfg_.validate();
  if (classes_.size() < 2) throw ConfigError("recognizer needs at least 2 classes");
  Rng rng(cfg_.seed);
  std::size_t in = 1;
  for (int width : cfg_.channels) {
    const auto out = static_cast<std::size_t>(width);
    ConvLayer conv;
    conv.weight = normal_tensor({out, in, kKernel, kKernel}, 0.0,
                                std::sqrt(2.0 / static_cast<double>(in * kKernel * kKernel)), rng);
    conv.stride = 2;
    conv.padding = 2;
    convs_.push_back(std::move(conv));
    BatchNormLayer bn{Tensor({out}, 1.0).set_requires_grad(true),
                      Tensor({out}, 0.0).set_requires_grad(true), BatchNormState(out), {}};
    norms_.push_back(std::move(bn));
    in = out;
  }
  const auto side = static_cast<std::size_t>(cfg_.input_size / 8);
  const auto features = in * side * side;
  fc_weight_ = normal_tensor({classes_.size(), features}, 0.0,
                             std::sqrt(1.0 / static_cast<double>(features)), rng);
  fc_bias_ = Tensor({classes_.size()}, 0.0).set_requires_grad(true);
}

std::vector<NamedTensor> Recognizer::parameters() const {
  std::vector<NamedTensor> p;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const auto base = "rec.block" + std::to_string(i);
    p.push_back({base + ".conv.weight", convs_[i].weight, true});
    p.push_back({base + ".bn.gamma", norms_[i].gamma, true});
    p.push_back({base + ".bn.beta", norms_[i].beta, true});
  }
  p.push_back({"rec.fc.weight", fc_weight_, true});
  p.push_back({"rec.fc.bias", fc_bias_, true});
  return p;
}

Tensor Recognizer::prepare(const std::vector<const GlyphImage*>& images) const {
  std::vector<GlyphImage> sized;
  sized.reserve(images.size());
  for (const GlyphImage* img : images)
    sized.push_back(resize_bilinear(pad_to_square(*img), cfg_.input_size, cfg_.input_size));
  std::vector<const GlyphImage*> ptrs;
  for (const auto& s : sized) ptrs.push_back(&s);
  return images_to_tensor(ptrs);
}

Tensor Recognizer::logits(const Tensor& batch, Mode mode) {
  Tensor x = batch;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    x = conv2d(x, convs_[i].weight, Tensor(), convs_[i].stride, convs_[i].padding);
    x = batchnorm2d(x, norms_[i].gamma, norms_[i].beta, norms_[i].state, mode, norms_[i].options);
    x = leaky_relu(x, 0.2);
  }
  return linear(flatten(x), fc_weight_, fc_bias_);
}

Recognizer Recognizer::train(const std::vector<GlyphPair>& real_pairs,
                             const std::vector<char32_t>& classes, const RecognizerConfig& cfg) {
  Recognizer rec(cfg, classes);
  std::map<char32_t, int> index;
  for (std::size_t i = 0; i < classes.size(); ++i)
    if (!index.emplace(classes[i], static_cast<int>(i)).second)
      throw ConfigError("duplicate recognizer class " + codepoint_label(classes[i]));

  std::vector<const GlyphImage*> reals;
  std::vector<int> real_labels;
  for (const auto& p : real_pairs)
    if (auto it = index.find(p.codepoint); it != index.end()) {
      reals.push_back(&p.target);
      real_labels.push_back(it->second);
    }
  for (char32_t c : classes)
    if (std::find(real_labels.begin(), real_labels.end(), index[c]) == real_labels.end())
      throw DatasetError("recognizer class " + codepoint_label(c) + " has no training image");

  // Augmented pool at the recognizer's input size.
  Rng rng(rec.cfg_.seed ^ 0xA5A5A5A5ULL);
  std::vector<GlyphImage> pool;
  std::vector<int> labels;
  const int s = rec.cfg_.input_size;
  const int slack = enlarged_size(s, rec.cfg_.enlarge_factor) - s;
  for (std::size_t r = 0; r < reals.size(); ++r) {
    const GlyphImage base = resize_bilinear(pad_to_square(*reals[r]), s, s);
    for (int k = 0; k < rec.cfg_.samples_per_image; ++k) {
      if (k == 0) {
        pool.push_back(base);
      } else {
        std::uniform_int_distribution<int> off(0, slack);
        const int ox = off(rng), oy = off(rng);
        pool.push_back(enlarge_crop(base, rec.cfg_.enlarge_factor, ox, oy));
      }
      labels.push_back(real_labels[r]);
    }
  }

  Adam adam(AdamOptions{rec.cfg_.learning_rate});
  const auto params = rec.parameters();
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const auto batch = std::min<std::size_t>(static_cast<std::size_t>(rec.cfg_.batch_size), pool.size());
  for (int step = 0; step < rec.cfg_.steps; ++step) {
    std::vector<const GlyphImage*> images;
    std::vector<int> targets;
    while (images.size() < batch) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      images.push_back(&pool[order[cursor]]);
      targets.push_back(labels[order[cursor]]);
      ++cursor;
    }
    for (auto p : params) p.tensor.zero_grad();
    Tensor loss = softmax_cross_entropy(rec.logits(images_to_tensor(images), Mode::train), targets);
    loss.backward();
    adam.step(params);
  }

  const auto predicted = rec.predict(reals);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == classes[real_labels[i]];
  rec.train_accuracy_ = static_cast<double>(hits) / static_cast<double>(predicted.size());
  return rec;
}

std::vector<char32_t> Recognizer::predict(const std::vector<const GlyphImage*>& images) {
  std::vector<char32_t> out;
  out.reserve(images.size());
  for (std::size_t begin = 0; begin < images.size(); begin += kEvalChunk) {
    const auto end = std::min(images.size(), begin + kEvalChunk);
    std::vector<const GlyphImage*> chunk(images.begin() + static_cast<std::ptrdiff_t>(begin),
                                         images.begin() + static_cast<std::ptrdiff_t>(end));
    const Tensor z = logits(prepare(chunk), Mode::eval);
    const auto c = classes_.size();
    auto v = z.data();
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      const auto row = v.subspan(b * c, c);
      out.push_back(classes_[static_cast<std::size_t>(
          std::max_element(row.begin(), row.end()) - row.begin())]);
    }
  }
  return out;
}

char32_t Recognizer::predict(const GlyphImage& image) { return predict({&image}).front(); }

void Recognizer::save(const std::filesystem::path& path) const {
  TensorArchive archive;
  for (const auto& p : parameters()) archive.put(p.name, p.tensor);
  for (std::size_t i = 0; i < norms_.size(); ++i) {
    const auto base = "rec.block" + std::to_string(i) + ".bn";
    archive.put(base + ".running_mean", norms_[i].state.running_mean);
    archive.put(base + ".running_var", norms_[i].state.running_var);
  }
  nlohmann::json labels = nlohmann::json::array();
  for (char32_t c : classes_) labels.push_back(codepoint_label(c));
  archive.put_json("rec.config", nlohmann::json{{"config", cfg_},
                                                {"classes", labels},
                                                {"train_accuracy", train_accuracy_}});
  archive.save(path);
}

Recognizer Recognizer::load(const std::filesystem::path& path) {
  const TensorArchive archive = TensorArchive::load(path);
  if (!archive.contains_json("rec.config"))
    throw IoError(path.string() + " is not a recognizer archive");
  const auto& doc = archive.get_json("rec.config");
  RecognizerConfig cfg = doc.at("config").get<RecognizerConfig>();
  std::vector<char32_t> classes;
  for (const auto& label : doc.at("classes")) {
    auto cp = parse_glyph_filename(label.get<std::string>() + ".png");
    if (!cp) throw IoError("bad class label " + label.dump() + " in " + path.string());
    classes.push_back(*cp);
  }
  Recognizer rec(cfg, classes);
  for (auto& p : rec.parameters()) {
    Tensor t = p.tensor;
    archive.load_into(p.name, t);
  }
  for (std::size_t i = 0; i < rec.norms_.size(); ++i) {
    const auto base = "rec.block" + std::to_string(i) + ".bn";
    archive.load_into(base + ".running_mean", rec.norms_[i].state.running_mean);
    archive.load_into(base + ".running_var", rec.norms_[i].state.running_var);
  }
  rec.train_accuracy_ = doc.at("train_accuracy").get<double>();
  return rec;
}

double recognition_accuracy(Recognizer& recognizer,
                            const std::vector<std::pair<GlyphImage, char32_t>>& samples) {
  if (samples.empty()) throw DomainError("recognition accuracy of an empty sample list is undefined");
  const auto& classes = recognizer.classes();
  std::vector<const GlyphImage*> images;
  for (const auto& [img, cp] : samples) {
    if (std::find(classes.begin(), classes.end(), cp) == classes.end())
      throw LookupError("codepoint " + codepoint_label(cp) + " is not a recognizer class");
    images.push_back(&img);
  }
  const auto predicted = recognizer.predict(images);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) hits += predicted[i] == samples[i].second;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

}  // namespace pegan
