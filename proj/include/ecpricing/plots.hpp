#pragma once

// Minimal static SVG charts for experiment reports.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ecpricing/errors.hpp"

namespace ecpricing::plots {

namespace detail {

constexpr double W = 720, H = 420, L = 70, R = 20, Tm = 40, B = 50;

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return L + (x - x0) / (x1 - x0 == 0 ? 1 : x1 - x0) * (W - L - R); }
  double py(double y) const { return H - B - (y - y0) / (y1 - y0 == 0 ? 1 : y1 - y0) * (H - Tm - B); }
};

inline void header(std::ostream& os, const std::string& title, double w = W, double h = H) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << esc(title) << "</text>\n";
}

inline void axes(std::ostream& os, const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << L << "\" y1=\"" << Tm << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 5.0, yv = f.y0 + (f.y1 - f.y0) * i / 5.0;
    os << "<text x=\"" << f.px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << num(xv) << "</text>\n"
       << "<text x=\"" << L - 6 << "\" y=\"" << f.py(yv) + 4 << "\" text-anchor=\"end\">" << num(yv) << "</text>\n"
       << "<line x1=\"" << L << "\" y1=\"" << f.py(yv) << "\" x2=\"" << W - R << "\" y2=\"" << f.py(yv)
       << "\" stroke=\"#ddd\"/>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << esc(xlabel) << "</text>\n"
     << "<text transform=\"translate(16," << (Tm + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << esc(ylabel)
     << "</text>\n";
}

inline void write(const std::string& path, const std::string& svg) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << svg;
}

}  // namespace detail

/// Line with a shaded band, e.g. mean cumulative regret with 5-95% quantiles.
inline void band_chart(const std::string& path, const std::string& title, const std::vector<double>& mean,
                       const std::vector<double>& lo, const std::vector<double>& hi, const std::string& ylabel,
                       double marker_x = NAN) {
  using namespace detail;
  if (mean.empty()) return;
  double y0 = std::min(0.0, *std::min_element(lo.begin(), lo.end()));
  double y1 = *std::max_element(hi.begin(), hi.end());
  if (y1 <= y0) y1 = y0 + 1.0;
  const Frame f{1.0, double(mean.size()), y0, y1 + 0.05 * (y1 - y0)};
  std::ostringstream os;
  header(os, title);
  axes(os, f, "day", ylabel);
  os << "<polygon fill=\"#9ecae1\" fill-opacity=\"0.6\" stroke=\"none\" points=\"";
  for (std::size_t i = 0; i < hi.size(); ++i) os << f.px(double(i + 1)) << ',' << f.py(hi[i]) << ' ';
  for (std::size_t i = lo.size(); i-- > 0;) os << f.px(double(i + 1)) << ',' << f.py(lo[i]) << ' ';
  os << "\"/>\n<polyline fill=\"none\" stroke=\"#08519c\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < mean.size(); ++i) os << f.px(double(i + 1)) << ',' << f.py(mean[i]) << ' ';
  os << "\"/>\n";
  if (std::isfinite(marker_x))
    os << "<line x1=\"" << f.px(marker_x) << "\" y1=\"" << Tm << "\" x2=\"" << f.px(marker_x) << "\" y2=\"" << H - B
       << "\" stroke=\"#d62728\" stroke-dasharray=\"4 3\"/>\n";
  os << "</svg>\n";
  write(path, os.str());
}

/// Heatmap of values[row][col]: rows are days (x axis), columns periods.
inline void heatmap(const std::string& path, const std::string& title, const std::vector<std::vector<double>>& values,
                    const std::string& unit) {
  using namespace detail;
  if (values.empty() || values[0].empty()) return;
  double vmax = 0.0;
  for (const auto& r : values)
    for (double v : r) vmax = std::max(vmax, v);
  const std::size_t D = values.size(), T = values[0].size();
  const Frame f{0.0, double(D), 0.0, double(T)};
  std::ostringstream os;
  header(os, title);
  axes(os, f, "day", "hour");
  const double cw = (W - L - R) / double(D), ch = (H - Tm - B) / double(T);
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t t = 0; t < T; ++t) {
      const double v = values[d][t];
      if (v <= 0.0) continue;
      const double a = vmax > 0 ? std::min(1.0, v / vmax) : 0.0;
      const int g = static_cast<int>(std::lround(255 * (1.0 - a)));
      os << "<rect x=\"" << f.px(double(d)) << "\" y=\"" << f.py(double(t + 1)) << "\" width=\"" << cw + 0.3
         << "\" height=\"" << ch + 0.3 << "\" fill=\"rgb(255," << g << ',' << g << ")\"/>\n";
    }
  os << "<text x=\"" << W - R << "\" y=\"" << Tm - 6 << "\" text-anchor=\"end\">max " << num(vmax) << ' ' << esc(unit)
     << "</text>\n</svg>\n";
  write(path, os.str());
}

struct BoxGroup {
  std::string label;
  std::vector<double> values;
};

/// Box plots (min, quartiles, max) per group, laid out left to right.
inline void boxplot(const std::string& path, const std::string& title, const std::vector<BoxGroup>& groups,
                    const std::string& ylabel) {
  using namespace detail;
  if (groups.empty()) return;
  double y0 = 0.0, y1 = 0.0;
  for (const auto& g : groups)
    for (double v : g.values) y0 = std::min(y0, v), y1 = std::max(y1, v);
  if (y1 <= y0) y1 = y0 + 1.0;
  const double width = std::max(W, 40.0 * double(groups.size()) + L + R);
  const double span = width - L - R, slot = span / double(groups.size());
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - Tm - B); };
  std::ostringstream os;
  header(os, title, width, H + 40);
  os << "<line x1=\"" << L << "\" y1=\"" << py(0) << "\" x2=\"" << width - R << "\" y2=\"" << py(0) << "\" stroke=\"#888\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double yv = y0 + (y1 - y0) * i / 5.0;
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << num(yv) << "</text>\n";
  }
  os << "<text transform=\"translate(16," << (Tm + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << esc(ylabel)
     << "</text>\n";
  for (std::size_t i = 0; i < groups.size(); ++i) {
    auto v = groups[i].values;
    const double cx = L + slot * (double(i) + 0.5);
    os << "<text transform=\"translate(" << cx << ',' << H - B + 12 << ") rotate(45)\" font-size=\"10\">"
       << esc(groups[i].label) << "</text>\n";
    if (v.empty()) continue;
    std::sort(v.begin(), v.end());
    auto q = [&](double p) {
      const double h = p * double(v.size() - 1);
      const auto a = static_cast<std::size_t>(h);
      const auto b = std::min(a + 1, v.size() - 1);
      return v[a] + (h - double(a)) * (v[b] - v[a]);
    };
    const double bw = slot * 0.6;
    os << "<line x1=\"" << cx << "\" y1=\"" << py(v.front()) << "\" x2=\"" << cx << "\" y2=\"" << py(v.back())
       << "\" stroke=\"black\"/>\n"
       << "<rect x=\"" << cx - bw / 2 << "\" y=\"" << py(q(0.75)) << "\" width=\"" << bw << "\" height=\""
       << std::max(0.5, py(q(0.25)) - py(q(0.75))) << "\" fill=\"#c6dbef\" stroke=\"black\"/>\n"
       << "<line x1=\"" << cx - bw / 2 << "\" y1=\"" << py(q(0.5)) << "\" x2=\"" << cx + bw / 2 << "\" y2=\""
       << py(q(0.5)) << "\" stroke=\"#08519c\" stroke-width=\"2\"/>\n";
  }
  os << "</svg>\n";
  write(path, os.str());
}

}  // namespace ecpricing::plots
