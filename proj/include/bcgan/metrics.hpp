#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bcgan/calibration.hpp"
#include "bcgan/stats.hpp"
#include "bcgan/volume.hpp"

// Quantitative evaluation: masked error metrics, the sparsification curve,
// calibration curves, and the report document that collects them.

namespace bcgan {

struct CurveSeries {
    std::string name;
    std::string x_name = "x", y_name = "y";
    std::vector<double> x, y;
};

// masked spans (n contiguous voxels); the volume overloads cover the whole grid
double rmse_span(const float* pred, const float* truth, const uint8_t* mask, int64_t n);
double nrmse_span(const float* pred, const float* truth, const uint8_t* mask, int64_t n);
double nstd_span(const float* stddev, const uint8_t* mask, int64_t n);

double rmse(const Volume& pred, const Volume& truth, const std::vector<uint8_t>& mask);
double nrmse(const Volume& pred, const Volume& truth, const std::vector<uint8_t>& mask);
double nstd(const Volume& stddev, const std::vector<uint8_t>& mask);

// 1.0 down to 0.05 in steps of 0.05
std::vector<double> default_recalls();

// RMSE over the ceil(r*N) voxels with smallest std, per recall r; ties in
// std resolve by original index
CurveSeries sparsification_curve(const std::vector<double>& abs_errors,
                                 const std::vector<double>& stds,
                                 const std::vector<double>& recalls = default_recalls());

struct CalibrationCurve {
    CurveSeries curve;            // x: nominal probability, y: observed frequency
    double rms_vs_diagonal = 0.0; // over interior knots
};

// Observed-coverage curve of the (posterior, truth) pairs. With recalib the
// PIT values are first pushed through the fitted map (the after-recalibration
// diagnostic); without it the y values equal fit_calibration's map exactly.
CalibrationCurve calibration_curve(const std::vector<VoxelPosterior>& posteriors,
                                   const std::vector<double>& truths, int grid_size = 100,
                                   const CalibrationMap* recalib = nullptr);

struct SubjectMetrics {
    std::string subject_id;
    double rmse = 0.0, nrmse = 0.0, nstd = 0.0;
    // per slice along z, skipping slices whose mask is empty
    std::vector<double> nrmse_slices, nstd_slices;
};

struct MetricReport {
    std::vector<SubjectMetrics> subjects;
    double mean_rmse = 0.0, mean_nrmse = 0.0, mean_nstd = 0.0;
    double identity_nrmse = 0.0;  // baseline: source passed through unchanged
    double calibration_rms_before = 0.0, calibration_rms_after = 0.0;
    bool has_ttest = false;
    stats::TTestResult ttest;
    std::string ttest_against;  // label of the compared run

    void validate() const;  // all finite, errors non-negative
};

void save_metric_report(const MetricReport& report, const std::string& path);

}  // namespace bcgan
