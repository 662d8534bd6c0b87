#pragma once

#include <string>
#include <vector>

#include "bcgan/metrics.hpp"

// Curve output: CSV for downstream tooling and a small standalone SVG line
// chart for eyeballing.

namespace bcgan {

void save_curve_csv(const CurveSeries& curve, const std::string& path);

// one chart, one or two series (second drawn dashed); axes with min/max
// tick labels and the series names as a legend
void save_curve_svg(const std::vector<CurveSeries>& curves, const std::string& path);

}  // namespace bcgan
