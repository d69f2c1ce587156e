// Copyright 2026 The skilldisc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "skilldisc/plot.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace skilldisc {
namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 400;
constexpr double kLeft = 70;
constexpr double kRight = 20;
constexpr double kTop = 40;
constexpr double kBottom = 50;

const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

double interpolate(const Series& s, double step) {
  const auto& x = s.steps;
  const auto& y = s.smoothed;
  if (step <= static_cast<double>(x.front())) return y.front();
  if (step >= static_cast<double>(x.back())) return y.back();
  auto it = std::upper_bound(x.begin(), x.end(), static_cast<int64_t>(std::floor(step)));
  const auto hi = static_cast<std::size_t>(it - x.begin());
  const auto lo = hi - 1;
  const double x0 = static_cast<double>(x[lo]);
  const double x1 = static_cast<double>(x[hi]);
  if (x1 == x0) return y[hi];
  const double t = (step - x0) / (x1 - x0);
  return y[lo] + t * (y[hi] - y[lo]);
}

}  // namespace

Series median_series(const std::vector<Series>& runs) {
  if (runs.empty()) throw ValidationError("no series to plot");
  int64_t lo = std::numeric_limits<int64_t>::min();
  int64_t hi = std::numeric_limits<int64_t>::max();
  for (const auto& r : runs) {
    if (r.steps.empty()) throw ValidationError("series '" + r.key + "' is empty");
    lo = std::max(lo, r.steps.front());
    hi = std::min(hi, r.steps.back());
  }
  Series out;
  out.key = runs.front().key;
  for (int64_t step : runs.front().steps) {
    if (step < lo || step > hi) continue;
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(interpolate(r, static_cast<double>(step)));
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    const double med = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    out.steps.push_back(step);
    out.values.push_back(med);
    out.smoothed.push_back(med);
  }
  return out;
}

std::string line_chart_svg(const std::string& title, const std::vector<Series>& runs) {
  const Series median = median_series(runs);
  double x_min = std::numeric_limits<double>::infinity();
  double x_max = -x_min;
  double y_min = x_min;
  double y_max = -x_min;
  for (const auto& r : runs) {
    for (std::size_t i = 0; i < r.steps.size(); ++i) {
      x_min = std::min(x_min, static_cast<double>(r.steps[i]));
      x_max = std::max(x_max, static_cast<double>(r.steps[i]));
      y_min = std::min(y_min, r.smoothed[i]);
      y_max = std::max(y_max, r.smoothed[i]);
    }
  }
  if (x_max == x_min) x_max = x_min + 1;
  if (y_max == y_min) {
    y_min -= 0.5;
    y_max += 0.5;
  }
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * plot_w; };
  auto py = [&](double y) { return kTop + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h; };
  auto polyline = [&](const Series& s, const std::string& color, double width) {
    std::ostringstream pts;
    for (std::size_t i = 0; i < s.steps.size(); ++i) {
      if (i) pts << ' ';
      pts << num(px(static_cast<double>(s.steps[i]))) << ',' << num(py(s.smoothed[i]));
    }
    return "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"" + num(width) +
           "\" points=\"" + pts.str() + "\"/>\n";
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << num(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"16\">" << escape(title) << "</text>\n";
  svg << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(plot_w)
      << "\" height=\"" << num(plot_h) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = x_min + (x_max - x_min) * k / 4.0;
    const double fy = y_min + (y_max - y_min) * k / 4.0;
    svg << "<text x=\"" << num(px(fx)) << "\" y=\"" << num(kHeight - kBottom + 18)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << label(fx) << "</text>\n";
    svg << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(py(fy) + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << label(fy)
        << "</text>\n";
  }
  svg << "<text x=\"" << num(kLeft + plot_w / 2) << "\" y=\"" << num(kHeight - 10)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">step</text>\n";
  for (std::size_t r = 0; r < runs.size(); ++r) {
    svg << polyline(runs[r], kPalette[r % std::size(kPalette)], 1.0);
  }
  svg << polyline(median, "black", 2.5);
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace skilldisc
