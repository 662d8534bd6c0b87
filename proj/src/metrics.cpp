#include "bcgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace bcgan {

namespace {

void check_same_extent(const Volume& a, const Volume& b, const char* what) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": volume shapes differ");
}

}  // namespace

double rmse_span(const float* pred, const float* truth, const uint8_t* mask, int64_t n) {
    double sq = 0.0;
    int64_t count = 0;
    for (int64_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        double d = double(pred[i]) - double(truth[i]);
        sq += d * d;
        ++count;
    }
    if (count == 0) throw std::invalid_argument("rmse: empty mask");
    return std::sqrt(sq / double(count));
}

double nrmse_span(const float* pred, const float* truth, const uint8_t* mask, int64_t n) {
    double err = 0.0, ref = 0.0;
    int64_t count = 0;
    for (int64_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        double d = double(truth[i]) - double(pred[i]);
        err += d * d;
        ref += double(truth[i]) * double(truth[i]);
        ++count;
    }
    if (count == 0) throw std::invalid_argument("nrmse: empty mask");
    if (ref == 0.0) throw std::invalid_argument("nrmse: truth is all zero inside the mask");
    return std::sqrt(err / ref);
}

double nstd_span(const float* stddev, const uint8_t* mask, int64_t n) {
    double sq = 0.0;
    int64_t count = 0;
    for (int64_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        sq += double(stddev[i]) * double(stddev[i]);
        ++count;
    }
    if (count == 0) throw std::invalid_argument("nstd: empty mask");
    return std::sqrt(sq / double(count));
}

double rmse(const Volume& pred, const Volume& truth, const std::vector<uint8_t>& mask) {
    check_same_extent(pred, truth, "rmse");
    if (int64_t(mask.size()) != pred.size()) throw std::invalid_argument("rmse: mask length mismatch");
    return rmse_span(pred.v.data(), truth.v.data(), mask.data(), pred.size());
}

double nrmse(const Volume& pred, const Volume& truth, const std::vector<uint8_t>& mask) {
    check_same_extent(pred, truth, "nrmse");
    if (int64_t(mask.size()) != pred.size()) throw std::invalid_argument("nrmse: mask length mismatch");
    return nrmse_span(pred.v.data(), truth.v.data(), mask.data(), pred.size());
}

double nstd(const Volume& stddev, const std::vector<uint8_t>& mask) {
    if (int64_t(mask.size()) != stddev.size()) throw std::invalid_argument("nstd: mask length mismatch");
    return nstd_span(stddev.v.data(), mask.data(), stddev.size());
}

std::vector<double> default_recalls() {
    std::vector<double> r;
    for (int k = 20; k >= 1; --k) r.push_back(0.05 * k);
    return r;
}

CurveSeries sparsification_curve(const std::vector<double>& abs_errors,
                                 const std::vector<double>& stds,
                                 const std::vector<double>& recalls) {
    if (abs_errors.empty()) throw std::invalid_argument("sparsification_curve: empty input");
    if (abs_errors.size() != stds.size())
        throw std::invalid_argument("sparsification_curve: errors and stds differ in length");
    if (recalls.empty()) throw std::invalid_argument("sparsification_curve: no recall levels");
    for (double r : recalls)
        if (!(r > 0.0 && r <= 1.0))
            throw std::invalid_argument("sparsification_curve: recall outside (0,1]: " +
                                        std::to_string(r));

    const int64_t n = int64_t(abs_errors.size());
    std::vector<int64_t> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int64_t a, int64_t b) { return stds[size_t(a)] < stds[size_t(b)]; });
    // prefix sums of squared error in ascending-std order
    std::vector<double> prefix(size_t(n) + 1, 0.0);
    for (int64_t i = 0; i < n; ++i)
        prefix[size_t(i) + 1] =
            prefix[size_t(i)] + abs_errors[size_t(idx[size_t(i)])] * abs_errors[size_t(idx[size_t(i)])];

    CurveSeries curve;
    curve.name = "sparsification";
    curve.x_name = "recall";
    curve.y_name = "rmse";
    for (double r : recalls) {
        int64_t keep = int64_t(std::ceil(r * double(n)));
        keep = std::clamp<int64_t>(keep, 1, n);
        curve.x.push_back(r);
        curve.y.push_back(std::sqrt(prefix[size_t(keep)] / double(keep)));
    }
    return curve;
}

CalibrationCurve calibration_curve(const std::vector<VoxelPosterior>& posteriors,
                                   const std::vector<double>& truths, int grid_size,
                                   const CalibrationMap* recalib) {
    CalibrationCurve out;
    out.curve.name = recalib ? "calibration_after" : "calibration_before";
    out.curve.x_name = "nominal";
    out.curve.y_name = "observed";

    if (recalib == nullptr) {
        CalibrationMap map = fit_calibration(posteriors, truths, grid_size);
        out.curve.x = map.grid;
        out.curve.y = map.values;
    } else {
        if (posteriors.empty()) throw std::invalid_argument("calibration_curve: empty set");
        if (posteriors.size() != truths.size())
            throw std::invalid_argument("calibration_curve: length mismatch");
        std::vector<double> zs(posteriors.size());
        for (size_t i = 0; i < posteriors.size(); ++i) {
            double sigma = std::max(posteriors[i].sigma, kSigmaFloor);
            zs[i] = recalib->apply(stats::normal_cdf((truths[i] - posteriors[i].mu) / sigma));
        }
        std::sort(zs.begin(), zs.end());
        const double t_cal = double(zs.size());
        for (int k = 0; k <= grid_size; ++k) {
            double p = double(k) / grid_size;
            auto le = std::upper_bound(zs.begin(), zs.end(), p) - zs.begin();
            out.curve.x.push_back(p);
            out.curve.y.push_back(double(le) / t_cal);
        }
        out.curve.y.front() = 0.0;
        out.curve.y.back() = 1.0;
    }

    double sq = 0.0;
    int64_t count = 0;
    for (size_t k = 1; k + 1 < out.curve.x.size(); ++k) {
        double d = out.curve.y[k] - out.curve.x[k];
        sq += d * d;
        ++count;
    }
    out.rms_vs_diagonal = count > 0 ? std::sqrt(sq / double(count)) : 0.0;
    return out;
}

void MetricReport::validate() const {
    auto check = [](double v, const char* what) {
        if (!std::isfinite(v)) throw std::logic_error(std::string("metric report: ") + what + " is not finite");
    };
    for (const SubjectMetrics& s : subjects) {
        check(s.rmse, "rmse");
        check(s.nrmse, "nrmse");
        check(s.nstd, "nstd");
        if (s.rmse < 0.0) throw std::logic_error("metric report: negative rmse");
        for (double v : s.nrmse_slices) check(v, "slice nrmse");
        for (double v : s.nstd_slices) check(v, "slice nstd");
    }
    check(mean_rmse, "mean rmse");
    check(mean_nrmse, "mean nrmse");
    check(mean_nstd, "mean nstd");
    check(identity_nrmse, "identity nrmse");
    check(calibration_rms_before, "calibration rms (before)");
    check(calibration_rms_after, "calibration rms (after)");
    if (has_ttest) {
        check(ttest.t, "t statistic");
        check(ttest.p, "p value");
    }
}

void save_metric_report(const MetricReport& report, const std::string& path) {
    report.validate();
    nlohmann::ordered_json j;
    j["subjects"] = nlohmann::ordered_json::array();
    for (const SubjectMetrics& s : report.subjects) {
        nlohmann::ordered_json js;
        js["subject_id"] = s.subject_id;
        js["rmse"] = s.rmse;
        js["nrmse"] = s.nrmse;
        js["nstd"] = s.nstd;
        js["nrmse_slices"] = s.nrmse_slices;
        js["nstd_slices"] = s.nstd_slices;
        j["subjects"].push_back(std::move(js));
    }
    j["mean_rmse"] = report.mean_rmse;
    j["mean_nrmse"] = report.mean_nrmse;
    j["mean_nstd"] = report.mean_nstd;
    j["identity_nrmse"] = report.identity_nrmse;
    j["calibration_rms_before"] = report.calibration_rms_before;
    j["calibration_rms_after"] = report.calibration_rms_after;
    if (report.has_ttest) {
        nlohmann::ordered_json jt;
        jt["against"] = report.ttest_against;
        jt["t"] = report.ttest.t;
        jt["df"] = report.ttest.df;
        jt["p"] = report.ttest.p;
        j["paired_ttest"] = std::move(jt);
    }
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write metric report: " + path);
    os << j.dump(2) << "\n";
}

}  // namespace bcgan
