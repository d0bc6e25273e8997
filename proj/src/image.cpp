#include "pegan/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

namespace pegan {

namespace {

std::string lower_extension(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

GlyphImage from_bytes(int w, int h, const unsigned char* bytes) {
  GlyphImage img(w, h);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = bytes[i] / 255.0;
  return img;
}

GlyphImage load_png(const std::filesystem::path& path) {
  auto bytes = read_bytes(path);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw IoError("unreadable PNG " + path.string() + ": " + image.message);
  // The simplified API narrows 16-bit data silently; refuse it instead.
  if (bytes.size() > 24 && bytes[24] != 8) {
    png_image_free(&image);
    throw IoError("unsupported PNG bit depth " + std::to_string(bytes[24]) + " in " +
                  path.string() + " (expected 8)");
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw IoError("unreadable PNG " + path.string() + ": " + msg);
  }
  return from_bytes(static_cast<int>(image.width), static_cast<int>(image.height), buffer.data());
}

// Next whitespace-separated header token, skipping '#' comments.
std::string pgm_token(const std::vector<unsigned char>& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string token;
  while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#')
    token += static_cast<char>(bytes[pos++]);
  return token;
}

GlyphImage load_pgm(const std::filesystem::path& path) {
  auto bytes = read_bytes(path);
  std::size_t pos = 0;
  const std::string magic = pgm_token(bytes, pos);
  if (magic != "P5" && magic != "P2") throw IoError("not a PGM file: " + path.string());
  long w = 0, h = 0, maxval = 0;
  try {
    w = std::stol(pgm_token(bytes, pos));
    h = std::stol(pgm_token(bytes, pos));
    maxval = std::stol(pgm_token(bytes, pos));
  } catch (const std::exception&) {
    throw IoError("malformed PGM header in " + path.string());
  }
  if (w <= 0 || h <= 0) throw IoError("bad PGM dimensions in " + path.string());
  if (maxval != 255)
    throw IoError("unsupported PGM maxval " + std::to_string(maxval) + " in " + path.string() +
                  " (expected 255)");
  const auto count = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  std::vector<unsigned char> levels(count);
  if (magic == "P5") {
    ++pos;  // single whitespace after maxval
    if (bytes.size() < pos + count) throw IoError("truncated PGM " + path.string());
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), count, levels.begin());
  } else {
    for (auto& level : levels) {
      const auto token = pgm_token(bytes, pos);
      int v = -1;
      try {
        v = std::stoi(token);
      } catch (const std::exception&) {
      }
      if (v < 0 || v > 255) throw IoError("bad PGM sample '" + token + "' in " + path.string());
      level = static_cast<unsigned char>(v);
    }
  }
  return from_bytes(static_cast<int>(w), static_cast<int>(h), levels.data());
}

std::vector<unsigned char> to_bytes(const GlyphImage& image) {
  std::vector<unsigned char> out(image.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<unsigned char>(std::lround(std::clamp(image.pixels[i], 0.0, 1.0) * 255.0));
  return out;
}

}  // namespace

GlyphImage::GlyphImage(int w, int h, double fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw ShapeError("image dimensions must be positive");
  pixels.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill);
}

GlyphImage load_image(const std::filesystem::path& path) {
  const auto ext = lower_extension(path);
  if (ext == ".png") return load_png(path);
  if (ext == ".pgm") return load_pgm(path);
  throw IoError("unsupported image format '" + ext + "' for " + path.string());
}

GlyphImage load_image(const std::filesystem::path& path, int size) {
  GlyphImage img = pad_to_square(load_image(path));
  return resize_bilinear(img, size, size);
}

void save_image(const GlyphImage& image, const std::filesystem::path& path) {
  const auto bytes = to_bytes(image);
  const auto ext = lower_extension(path);
  if (ext == ".png") {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr))
      throw IoError("cannot write PNG " + path.string() + ": " + png.message);
    return;
  }
  if (ext == ".pgm") {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n" << image.width << " " << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("cannot write PGM " + path.string());
    return;
  }
  throw IoError("unsupported image format '" + ext + "' for " + path.string());
}

GlyphImage pad_to_square(const GlyphImage& image, double background) {
  if (image.width == image.height) return image;
  const int side = std::max(image.width, image.height);
  GlyphImage out(side, side, background);
  const int ox = (side - image.width) / 2, oy = (side - image.height) / 2;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) out.at(x + ox, y + oy) = image.at(x, y);
  return out;
}

GlyphImage resize_bilinear(const GlyphImage& image, int width, int height) {
  if (width == image.width && height == image.height) return image;
  GlyphImage out(width, height);
  const double sx = static_cast<double>(image.width) / width;
  const double sy = static_cast<double>(image.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double tx = fx - x0;
      const double top = image.at(x0, y0) * (1 - tx) + image.at(x1, y0) * tx;
      const double bottom = image.at(x0, y1) * (1 - tx) + image.at(x1, y1) * tx;
      out.at(x, y) = top * (1 - ty) + bottom * ty;
    }
  }
  return out;
}

int enlarged_size(int size, double factor) {
  if (!(factor >= 1.0) || !std::isfinite(factor)) throw ConfigError("enlarge factor must be >= 1");
  return static_cast<int>(std::lround(size * factor));
}

GlyphImage enlarge_crop(const GlyphImage& image, double factor, int offset_x, int offset_y) {
  const int big_w = enlarged_size(image.width, factor);
  const int big_h = enlarged_size(image.height, factor);
  if (offset_x < 0 || offset_y < 0 || offset_x > big_w - image.width ||
      offset_y > big_h - image.height)
    throw ShapeError("enlarge_crop: crop offset outside the enlarged image");
  if (factor == 1.0) return image;
  const GlyphImage big = resize_bilinear(image, big_w, big_h);
  GlyphImage out(image.width, image.height);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) out.at(x, y) = big.at(x + offset_x, y + offset_y);
  return out;
}

GlyphImage quantize8(const GlyphImage& image) {
  GlyphImage out = image;
  const auto bytes = to_bytes(image);
  for (std::size_t i = 0; i < bytes.size(); ++i) out.pixels[i] = bytes[i] / 255.0;
  return out;
}

Tensor images_to_tensor(std::span<const GlyphImage* const> images) {
  if (images.empty()) throw ShapeError("images_to_tensor: empty batch");
  const int w = images[0]->width, h = images[0]->height;
  std::vector<double> values;
  values.reserve(images.size() * static_cast<std::size_t>(w * h));
  for (const GlyphImage* img : images) {
    if (img->width != w || img->height != h)
      throw ShapeError("images_to_tensor: images differ in size");
    for (double p : img->pixels) values.push_back(2.0 * p - 1.0);
  }
  return Tensor({images.size(), 1, static_cast<std::size_t>(h), static_cast<std::size_t>(w)},
                std::move(values));
}

Tensor image_to_tensor(const GlyphImage& image) {
  const GlyphImage* one[] = {&image};
  return images_to_tensor(one);
}

GlyphImage tensor_to_image(const Tensor& tensor, std::size_t index) {
  if (tensor.rank() != 4 || tensor.dim(1) != 1)
    throw ShapeError("tensor_to_image expects [B,1,H,W], got " + shape_str(tensor.shape()));
  if (index >= tensor.dim(0)) throw ShapeError("tensor_to_image: batch index out of range");
  const auto h = tensor.dim(2), w = tensor.dim(3);
  GlyphImage img(static_cast<int>(w), static_cast<int>(h));
  auto v = tensor.data().subspan(index * h * w, h * w);
  for (std::size_t i = 0; i < v.size(); ++i) img.pixels[i] = std::clamp((v[i] + 1.0) / 2.0, 0.0, 1.0);
  return img;
}

}  // namespace pegan
