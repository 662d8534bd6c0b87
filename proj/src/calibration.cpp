#include "bcgan/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "bcgan/stats.hpp"

namespace bcgan {

double CalibrationMap::apply(double p) const {
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("apply_calibration: p outside [0,1]: " + std::to_string(p));
    if (p >= grid.back()) return values.back();
    size_t hi = size_t(std::upper_bound(grid.begin(), grid.end(), p) - grid.begin());
    if (hi == 0) return values.front();
    size_t lo = hi - 1;
    double t = (p - grid[lo]) / (grid[hi] - grid[lo]);
    return values[lo] + t * (values[hi] - values[lo]);
}

double CalibrationMap::inverse(double f) const {
    if (f <= values.front()) return grid.front();
    // first knot reaching f; the map first attains f inside or at the end of
    // the segment entering that knot, never later (values are nondecreasing)
    size_t k = size_t(std::lower_bound(values.begin(), values.end(), f) - values.begin());
    if (k >= values.size()) return grid.back();
    if (values[k] == f || k == 0) return grid[k];
    double rise = values[k] - values[k - 1];
    double t = (f - values[k - 1]) / rise;
    return grid[k - 1] + t * (grid[k] - grid[k - 1]);
}

CalibrationMap fit_calibration(const std::vector<VoxelPosterior>& posteriors,
                               const std::vector<double>& truths, int grid_size) {
    if (posteriors.empty()) throw std::invalid_argument("fit_calibration: empty calibration set");
    if (posteriors.size() != truths.size())
        throw std::invalid_argument("fit_calibration: " + std::to_string(posteriors.size()) +
                                    " posteriors vs " + std::to_string(truths.size()) + " truths");
    if (grid_size < 2) throw std::invalid_argument("fit_calibration: grid_size must be >= 2");

    std::vector<double> zs(posteriors.size());
    for (size_t i = 0; i < posteriors.size(); ++i) {
        const VoxelPosterior& vp = posteriors[i];
        if (vp.sigma < 0.0)
            throw std::invalid_argument("fit_calibration: negative sigma at voxel " +
                                        std::to_string(i));
        double sigma = std::max(vp.sigma, kSigmaFloor);
        zs[i] = stats::normal_cdf((truths[i] - vp.mu) / sigma);
    }
    std::sort(zs.begin(), zs.end());

    CalibrationMap map;
    map.calibration_set_size = int64_t(posteriors.size());
    map.grid.resize(size_t(grid_size) + 1);
    map.values.resize(size_t(grid_size) + 1);
    const double t_cal = double(posteriors.size());
    for (int k = 0; k <= grid_size; ++k) {
        double p = double(k) / grid_size;
        map.grid[size_t(k)] = p;
        auto le = std::upper_bound(zs.begin(), zs.end(), p) - zs.begin();
        map.values[size_t(k)] = double(le) / t_cal;
    }
    map.values.front() = 0.0;  // pinned endpoints keep inverses finite
    map.values.back() = 1.0;
    return map;
}

std::pair<double, double> calibrated_interval(const VoxelPosterior& post,
                                              const CalibrationMap& map, double level) {
    if (!(level > 0.0 && level < 1.0))
        throw std::invalid_argument("calibrated_interval: level outside (0,1)");
    double p_lo = map.inverse((1.0 - level) / 2.0);
    double p_hi = map.inverse((1.0 + level) / 2.0);
    double sigma = std::max(post.sigma, kSigmaFloor);
    // pinned endpoints make both pullbacks interior, so the quantiles are
    // finite; if numerics still degenerate the interval falls back to the
    // byte data range
    if (p_lo <= 0.0 || p_hi >= 1.0 || p_lo > p_hi) {
        std::fprintf(stderr,
                     "warning: calibrated_interval at level %.4f fell off the map "
                     "(pullbacks %.6g, %.6g); widening to the data range\n",
                     level, p_lo, p_hi);
        return {0.0, 255.0};
    }
    double lo = post.mu + sigma * stats::normal_quantile(p_lo);
    double hi = post.mu + sigma * stats::normal_quantile(p_hi);
    return {lo, hi};
}

void save_calibration(const CalibrationMap& map, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write calibration map: " + path);
    os << "# calibration_map v1, T_cal=" << map.calibration_set_size << "\n";
    char buf[80];
    for (size_t k = 0; k < map.grid.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", map.grid[k], map.values[k]);
        os << buf;
    }
}

CalibrationMap load_calibration(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open calibration map: " + path);
    std::string header;
    std::getline(is, header);
    const std::string prefix = "# calibration_map v1, T_cal=";
    if (header.rfind(prefix, 0) != 0)
        throw std::runtime_error("not a calibration map file: " + path);
    CalibrationMap map;
    map.calibration_set_size = std::stoll(header.substr(prefix.size()));
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string p, f;
        if (!std::getline(ss, p, ',') || !std::getline(ss, f))
            throw std::runtime_error("malformed calibration map row in " + path);
        map.grid.push_back(std::stod(p));
        map.values.push_back(std::stod(f));
    }
    if (map.grid.size() < 2 || map.grid.front() != 0.0 || map.grid.back() != 1.0)
        throw std::runtime_error("calibration map grid in " + path +
                                 " does not span [0,1] or is too short");
    for (size_t k = 1; k < map.grid.size(); ++k) {
        if (map.grid[k] <= map.grid[k - 1])
            throw std::runtime_error("calibration map grid in " + path + " is not ascending");
        if (map.values[k] < map.values[k - 1])
            throw std::runtime_error("calibration map values in " + path + " decrease");
    }
    return map;
}

}  // namespace bcgan
