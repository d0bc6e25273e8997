#include "pegan/metrics.hpp"

#include <cmath>

namespace pegan {

namespace {

void require_same_size(const char* op, const GlyphImage& x, const GlyphImage& y) {
  if (x.width != y.width || x.height != y.height)
    throw ShapeError(std::string(op) + ": image sizes differ (" + std::to_string(x.width) + "x" +
                     std::to_string(x.height) + " vs " + std::to_string(y.width) + "x" +
                     std::to_string(y.height) + ")");
}

void require_window(const char* op, const GlyphImage& x, int window) {
  if (window < 1) throw ConfigError(std::string(op) + ": window must be >= 1");
  if (x.width < window || x.height < window)
    throw ShapeError(std::string(op) + ": image " + std::to_string(x.width) + "x" +
                     std::to_string(x.height) + " smaller than the " + std::to_string(window) +
                     "x" + std::to_string(window) + " window");
}

nlohmann::json psnr_to_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double psnr_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kPsnrIdentical;
    if (s == "-inf") return -kPsnrIdentical;
    throw DomainError("bad PSNR value '" + s + "'");
  }
  return j.get<double>();
}

}  // namespace

void KahanSum::add(double v) {
  const double y = v - c_;
  const double t = sum_ + y;
  c_ = (t - sum_) - y;
  sum_ = t;
}

double psnr(const GlyphImage& x, const GlyphImage& y, double max_value) {
  require_same_size("psnr", x, y);
  if (!(max_value > 0)) throw DomainError("psnr: max_value must be > 0");
  KahanSum se;
  for (std::size_t i = 0; i < x.pixels.size(); ++i) {
    const double d = x.pixels[i] - y.pixels[i];
    se.add(d * d);
  }
  const double mse = se.value() / static_cast<double>(x.pixels.size());
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(max_value * max_value / mse);
}

std::vector<double> gaussian_window(int window, double sigma) {
  if (window < 1 || !(sigma > 0)) throw ConfigError("gaussian window needs size >= 1 and sigma > 0");
  std::vector<double> g(static_cast<std::size_t>(window));
  const double c = (window - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < window; ++i) {
    g[i] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  std::vector<double> w(g.size() * g.size());
  for (int i = 0; i < window; ++i)
    for (int j = 0; j < window; ++j) w[i * window + j] = g[i] * g[j];
  return w;
}

double ssim(const GlyphImage& x, const GlyphImage& y, const SsimOptions& o) {
  require_same_size("ssim", x, y);
  require_window("ssim", x, o.window);
  const auto w = gaussian_window(o.window, o.sigma);
  const double c1 = (o.k1 * o.dynamic_range) * (o.k1 * o.dynamic_range);
  const double c2 = (o.k2 * o.dynamic_range) * (o.k2 * o.dynamic_range);
  const int win = o.window;
  KahanSum total;
  std::size_t windows = 0;
  for (int top = 0; top + win <= x.height; ++top)
    for (int left = 0; left + win <= x.width; ++left) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double wt = w[i * win + j];
          const double a = x.at(left + j, top + i), b = y.at(left + j, top + i);
          mx += wt * a;
          my += wt * b;
          sxx += wt * a * a;
          syy += wt * b * b;
          sxy += wt * a * b;
        }
      const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
      total.add(((2 * mx * my + c1) * (2 * cov + c2)) /
                ((mx * mx + my * my + c1) * (vx + vy + c2)));
      ++windows;
    }
  return total.value() / static_cast<double>(windows);
}

double uqi(const GlyphImage& x, const GlyphImage& y, int window) {
  require_same_size("uqi", x, y);
  require_window("uqi", x, window);
  const double n = static_cast<double>(window) * window;
  KahanSum total;
  std::size_t counted = 0;
  for (int top = 0; top + window <= x.height; ++top)
    for (int left = 0; left + window <= x.width; ++left) {
      double mx = 0, my = 0;
      for (int i = 0; i < window; ++i)
        for (int j = 0; j < window; ++j) {
          mx += x.at(left + j, top + i);
          my += y.at(left + j, top + i);
        }
      mx /= n;
      my /= n;
      double vx = 0, vy = 0, cov = 0;
      bool equal = true, constant = true;
      const double x0 = x.at(left, top), y0 = y.at(left, top);
      for (int i = 0; i < window; ++i)
        for (int j = 0; j < window; ++j) {
          const double a = x.at(left + j, top + i), b = y.at(left + j, top + i);
          equal = equal && a == b;
          constant = constant && a == x0 && b == y0;
          vx += (a - mx) * (a - mx);
          vy += (b - my) * (b - my);
          cov += (a - mx) * (b - my);
        }
      vx /= n;
      vy /= n;
      cov /= n;
      const double var_sum = vx + vy, mean_sq = mx * mx + my * my;
      if (constant || var_sum == 0.0 || mean_sq == 0.0) {
        if (equal) {
          total.add(1.0);
          ++counted;
        }
        continue;
      }
      // Product of two ratios so identical patches give exactly 1.
      total.add((2 * cov / var_sum) * (2 * mx * my / mean_sq));
      ++counted;
    }
  if (counted == 0)
    throw DomainError("uqi: undefined, every window has constant differing patches");
  return total.value() / static_cast<double>(counted);
}

MetricsReport aggregate_scores(const std::vector<ImageScore>& scores,
                               std::vector<std::string> excluded) {
  if (scores.empty()) throw DomainError("no images to aggregate");
  struct Acc {
    KahanSum psnr, ssim, uqi;
    std::size_t count = 0, infinite = 0, rec_total = 0, rec_hits = 0;
  };
  std::array<Acc, 4> acc;  // three bands, then overall
  for (const auto& s : scores) {
    for (Acc* a : {&acc[static_cast<int>(s.band)], &acc[3]}) {
      ++a->count;
      if (std::isinf(s.psnr_db) && s.psnr_db > 0) ++a->infinite;
      else a->psnr.add(s.psnr_db);
      a->ssim.add(s.ssim);
      a->uqi.add(s.uqi);
      if (s.recognized) {
        ++a->rec_total;
        a->rec_hits += *s.recognized ? 1 : 0;
      }
    }
  }
  auto summarize = [](const Acc& a) {
    MetricSummary m;
    m.count = a.count;
    if (a.count == 0) return m;
    const double n = static_cast<double>(a.count);
    m.psnr_db = a.infinite > 0 ? kPsnrIdentical : a.psnr.value() / n;
    m.ssim = a.ssim.value() / n;
    m.uqi = a.uqi.value() / n;
    if (a.rec_total > 0)
      m.recognition_accuracy = static_cast<double>(a.rec_hits) / static_cast<double>(a.rec_total);
    return m;
  };
  MetricsReport report;
  for (int b = 0; b < 3; ++b) report.bands[b] = summarize(acc[b]);
  report.overall = summarize(acc[3]);
  report.excluded = std::move(excluded);
  return report;
}

void to_json(nlohmann::json& j, const MetricSummary& s) {
  j = nlohmann::json{{"count", s.count}, {"psnr_db", psnr_to_json(s.psnr_db)}, {"ssim", s.ssim},
                     {"uqi", s.uqi}};
  j["recognition_accuracy"] =
      s.recognition_accuracy ? nlohmann::json(*s.recognition_accuracy) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, MetricSummary& s) {
  s.count = j.at("count").get<std::size_t>();
  s.psnr_db = psnr_from_json(j.at("psnr_db"));
  s.ssim = j.at("ssim").get<double>();
  s.uqi = j.at("uqi").get<double>();
  const auto& rec = j.at("recognition_accuracy");
  s.recognition_accuracy = rec.is_null() ? std::nullopt : std::optional<double>(rec.get<double>());
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = nlohmann::json{{"overall", r.overall}, {"excluded", r.excluded}};
  for (int b = 0; b < 3; ++b) j["bands"][kBandNames[b]] = r.bands[b];
}

void from_json(const nlohmann::json& j, MetricsReport& r) {
  r.overall = j.at("overall").get<MetricSummary>();
  for (int b = 0; b < 3; ++b) r.bands[b] = j.at("bands").at(kBandNames[b]).get<MetricSummary>();
  r.excluded = j.at("excluded").get<std::vector<std::string>>();
}

}  // namespace pegan
