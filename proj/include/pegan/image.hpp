#ifndef PEGAN_IMAGE_HPP
#define PEGAN_IMAGE_HPP

#include <filesystem>
#include <span>
#include <vector>

#include "pegan/tensor.hpp"

namespace pegan {

/// Grayscale image, row-major, pixel values in [0,1] (1 is white).
struct GlyphImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  GlyphImage() = default;
  GlyphImage(int w, int h, double fill = 1.0);

  double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const GlyphImage&) const = default;
};

/// Reads an 8-bit PNG (gray or colour, converted to gray) or a PGM (P2/P5,
/// maxval 255). Throws IoError for unreadable files or other bit depths.
GlyphImage load_image(const std::filesystem::path& path);

/// As above, then pads to a square with white and resizes to size x size.
GlyphImage load_image(const std::filesystem::path& path, int size);

/// Writes 8-bit grayscale; the format follows the extension (.png or .pgm).
/// Pixels are clamped to [0,1] and rounded to the nearest level.
void save_image(const GlyphImage& image, const std::filesystem::path& path);

/// Centres the image on a square canvas of the larger side.
GlyphImage pad_to_square(const GlyphImage& image, double background = 1.0);

/// Bilinear resampling with pixel-centre alignment. Returns a copy when the
/// size is unchanged.
GlyphImage resize_bilinear(const GlyphImage& image, int width, int height);

/// Side length after enlarging `size` by `factor`: round(size * factor).
int enlarged_size(int size, double factor);

/// Bilinear enlarge to enlarged_size() then crop the original size at
/// (offset_x, offset_y). factor == 1 returns the image unchanged.
GlyphImage enlarge_crop(const GlyphImage& image, double factor, int offset_x, int offset_y);

/// Quantises to 8-bit levels, the same values a save/load round-trip gives.
GlyphImage quantize8(const GlyphImage& image);

/// Stacks equally sized images into [B,1,H,W] with values 2p-1.
Tensor images_to_tensor(std::span<const GlyphImage* const> images);
Tensor image_to_tensor(const GlyphImage& image);

/// Batch row `index` of a [B,1,H,W] tensor mapped back with (v+1)/2,
/// clamped to [0,1].
GlyphImage tensor_to_image(const Tensor& tensor, std::size_t index = 0);

}  // namespace pegan

#endif  // PEGAN_IMAGE_HPP
