#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

// Probabilistic recalibration: fit an empirical map from nominal to observed
// coverage on (prediction, truth) pairs, then reshape credible intervals
// with it.

namespace bcgan {

struct VoxelPosterior {
    double mu = 0.0;
    double sigma = 0.0;  // >= 0
};

// sigma below this (byte scale) is treated as degenerate; the PIT collapses
// to 0 or 1 by the sign of (y - mu)
inline constexpr double kSigmaFloor = 1e-6;

struct CalibrationMap {
    std::vector<double> grid;    // ascending, grid.front()=0, grid.back()=1
    std::vector<double> values;  // nondecreasing, values.front()=0, values.back()=1
    int64_t calibration_set_size = 0;

    // piecewise-linear interpolation at p in [0,1]
    double apply(double p) const;

    // leftmost p with apply(p) = f; flat segments resolve to their left edge
    double inverse(double f) const;
};

// Empirical coverage map: PIT values z_t = Phi((y_t - mu_t)/sigma_t) counted
// against a uniform probability grid of grid_size segments; endpoints pinned
// to f(0)=0, f(1)=1.
CalibrationMap fit_calibration(const std::vector<VoxelPosterior>& posteriors,
                               const std::vector<double>& truths, int grid_size = 100);

// central credible interval at the given mass, reshaped through the map:
// quantile levels are pulled back through map^{-1} before the normal
// quantile is applied
std::pair<double, double> calibrated_interval(const VoxelPosterior& post,
                                              const CalibrationMap& map, double level);

void save_calibration(const CalibrationMap& map, const std::string& path);
CalibrationMap load_calibration(const std::string& path);

}  // namespace bcgan
