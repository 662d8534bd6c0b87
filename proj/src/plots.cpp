#include "bcgan/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace bcgan {

namespace {

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c; break;
    }
  }
  return out;
}

}  // namespace

void save_curve_csv(const CurveSeries& curve, const std::string& path) {
  if (curve.x.size() != curve.y.size()) {
    throw std::invalid_argument("curve '" + curve.name + "' has mismatched x/y lengths");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open " + path + " for writing");
  }
  out << curve.x_name << "," << curve.y_name << "\n";
  for (std::size_t i = 0; i < curve.x.size(); ++i) {
    out << fmt_g(curve.x[i]) << "," << fmt_g(curve.y[i]) << "\n";
  }
  if (!out) {
    throw std::runtime_error("write failed for " + path);
  }
}

void save_curve_svg(const std::vector<CurveSeries>& curves, const std::string& path) {
  if (curves.empty()) {
    throw std::invalid_argument("save_curve_svg needs at least one series");
  }
  for (const CurveSeries& c : curves) {
    if (c.x.size() != c.y.size()) {
      throw std::invalid_argument("curve '" + c.name + "' has mismatched x/y lengths");
    }
    if (c.x.empty()) {
      throw std::invalid_argument("curve '" + c.name + "' is empty");
    }
  }

  double x_min = curves[0].x[0], x_max = x_min;
  double y_min = curves[0].y[0], y_max = y_min;
  for (const CurveSeries& c : curves) {
    for (double v : c.x) {
      x_min = std::min(x_min, v);
      x_max = std::max(x_max, v);
    }
    for (double v : c.y) {
      y_min = std::min(y_min, v);
      y_max = std::max(y_max, v);
    }
  }
  // degenerate ranges still need a nonzero span to map onto pixels
  if (x_max - x_min < 1e-12) {
    x_min -= 0.5;
    x_max += 0.5;
  }
  if (y_max - y_min < 1e-12) {
    y_min -= 0.5;
    y_max += 0.5;
  }

  const double width = 640.0, height = 480.0;
  const double ml = 72.0, mr = 24.0, mt = 44.0, mb = 52.0;
  const double pw = width - ml - mr;
  const double ph = height - mt - mb;
  auto px = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * pw; };
  auto py = [&](double y) { return mt + ph - (y - y_min) / (y_max - y_min) * ph; };

  static const char* kColors[] = {"#2c6fbb", "#c23b22", "#3a8f5d", "#8a5fb0"};
  const int n_colors = 4;

  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open " + path + " for writing");
  }
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
         "viewBox=\"0 0 640 480\">\n";
  out << "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";

  // axes
  out << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw
      << "\" y2=\"" << mt + ph << "\" stroke=\"#333\" stroke-width=\"1\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
      << mt + ph << "\" stroke=\"#333\" stroke-width=\"1\"/>\n";

  // min/max tick labels
  out << "<text x=\"" << ml << "\" y=\"" << mt + ph + 18
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">"
      << fmt_short(x_min) << "</text>\n";
  out << "<text x=\"" << ml + pw << "\" y=\"" << mt + ph + 18
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">"
      << fmt_short(x_max) << "</text>\n";
  out << "<text x=\"" << ml - 6 << "\" y=\"" << mt + ph + 4
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">"
      << fmt_short(y_min) << "</text>\n";
  out << "<text x=\"" << ml - 6 << "\" y=\"" << mt + 4
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">"
      << fmt_short(y_max) << "</text>\n";

  // axis names from the first series
  out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 12
      << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">"
      << xml_escape(curves[0].x_name) << "</text>\n";
  out << "<text x=\"18\" y=\"" << mt + ph / 2
      << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" "
         "transform=\"rotate(-90 18 "
      << mt + ph / 2 << ")\">" << xml_escape(curves[0].y_name) << "</text>\n";

  // polylines
  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    const CurveSeries& c = curves[ci];
    const char* color = kColors[ci % n_colors];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
    if (ci % 2 == 1) {
      out << " stroke-dasharray=\"6 3\"";
    }
    out << " points=\"";
    for (std::size_t i = 0; i < c.x.size(); ++i) {
      if (i) out << " ";
      out << fmt_short(px(c.x[i])) << "," << fmt_short(py(c.y[i]));
    }
    out << "\"/>\n";
  }

  // legend, top right inside the plot area
  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    const char* color = kColors[ci % n_colors];
    double ly = mt + 14 + 16.0 * static_cast<double>(ci);
    out << "<line x1=\"" << ml + pw - 150 << "\" y1=\"" << ly - 4 << "\" x2=\""
        << ml + pw - 126 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color
        << "\" stroke-width=\"1.5\"";
    if (ci % 2 == 1) {
      out << " stroke-dasharray=\"6 3\"";
    }
    out << "/>\n";
    out << "<text x=\"" << ml + pw - 120 << "\" y=\"" << ly
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(curves[ci].name)
        << "</text>\n";
  }

  // title
  out << "<text x=\"" << width / 2 << "\" y=\"24\" font-family=\"sans-serif\" "
         "font-size=\"15\" text-anchor=\"middle\">"
      << xml_escape(curves[0].name) << "</text>\n";
  out << "</svg>\n";
  if (!out) {
    throw std::runtime_error("write failed for " + path);
  }
}

}  // namespace bcgan
