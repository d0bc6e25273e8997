#ifndef PEGAN_METRICS_HPP
#define PEGAN_METRICS_HPP

#include <array>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pegan/dataset.hpp"
#include "pegan/image.hpp"

namespace pegan {

/// PSNR of identical images. Serialised as the string "inf".
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

double psnr(const GlyphImage& x, const GlyphImage& y, double max_value = 1.0);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Normalised 2-D Gaussian weights, row-major window x window.
std::vector<double> gaussian_window(int window, double sigma);

/// Mean SSIM over all fully contained windows (no padding).
double ssim(const GlyphImage& x, const GlyphImage& y, const SsimOptions& options = {});

/// Mean universal quality index over all fully contained uniform windows.
/// A window where both patches are constant counts as 1 if they are equal
/// and is skipped otherwise; DomainError if every window is skipped.
double uqi(const GlyphImage& x, const GlyphImage& y, int window = 8);

/// Compensated running sum.
class KahanSum {
 public:
  void add(double v);
  double value() const { return sum_; }

 private:
  double sum_ = 0.0, c_ = 0.0;
};

struct ImageScore {
  char32_t codepoint = 0;
  Band band = Band::easy;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double uqi = 0.0;
  std::optional<bool> recognized;
};

struct MetricSummary {
  std::size_t count = 0;
  double psnr_db = 0.0;  // mean of per-image dB; kPsnrIdentical if any image is identical
  double ssim = 0.0;
  double uqi = 0.0;
  std::optional<double> recognition_accuracy;

  bool operator==(const MetricSummary&) const = default;
};

struct MetricsReport {
  MetricSummary overall;
  std::array<MetricSummary, 3> bands;
  /// Evaluation codepoints without ground truth, "U+XXXX" labels.
  std::vector<std::string> excluded;

  bool operator==(const MetricsReport&) const = default;
};

/// Arithmetic means per band and overall. Throws DomainError if `scores` is empty.
MetricsReport aggregate_scores(const std::vector<ImageScore>& scores,
                               std::vector<std::string> excluded = {});

void to_json(nlohmann::json& j, const MetricSummary& s);
void from_json(const nlohmann::json& j, MetricSummary& s);
void to_json(nlohmann::json& j, const MetricsReport& r);
void from_json(const nlohmann::json& j, MetricsReport& r);

}  // namespace pegan

#endif  // PEGAN_METRICS_HPP
