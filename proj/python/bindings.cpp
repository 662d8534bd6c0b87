#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bcgan/calibration.hpp"
#include "bcgan/dropout.hpp"
#include "bcgan/metrics.hpp"
#include "bcgan/phantom.hpp"
#include "bcgan/pipeline.hpp"
#include "bcgan/posterior.hpp"
#include "bcgan/runconfig.hpp"
#include "bcgan/stats.hpp"
#include "bcgan/volume.hpp"

// Python face of the toolkit: scalar numerics (normal CDF/quantile, Student
// p-values, concrete-dropout laws), recalibration maps, evaluation metrics,
// the phantom generator, RVOL volume I/O and the five pipeline commands.
// Vectors cross the boundary as plain lists; volumes travel as (shape, flat
// values) pairs with x fastest.

namespace py = pybind11;

namespace {

std::vector<bcgan::VoxelPosterior> zip_posteriors(const std::vector<double>& mu,
                                                  const std::vector<double>& sigma) {
    if (mu.size() != sigma.size())
        throw std::invalid_argument("mu and sigma lengths differ");
    std::vector<bcgan::VoxelPosterior> post(mu.size());
    for (size_t i = 0; i < mu.size(); ++i) post[i] = {mu[i], sigma[i]};
    return post;
}

void check_span_lengths(size_t a, size_t b, size_t mask, const char* what) {
    if (a != b || a != mask)
        throw std::invalid_argument(std::string(what) + ": input lengths differ");
}

py::dict volume_pair_dict(const bcgan::VolumePair& pair) {
    py::dict d;
    d["shape"] = py::make_tuple(pair.contrast_a.nx, pair.contrast_a.ny, pair.contrast_a.nz);
    d["contrast_a"] = pair.contrast_a.v;
    d["contrast_b"] = pair.contrast_b.v;
    d["labels"] = pair.labels;
    d["lesion_mask"] = pair.lesion_mask;
    d["seed"] = pair.seed;
    return d;
}

py::dict report_dict(const bcgan::MetricReport& report) {
    py::dict d;
    py::list subjects;
    for (const bcgan::SubjectMetrics& s : report.subjects) {
        py::dict js;
        js["subject_id"] = s.subject_id;
        js["rmse"] = s.rmse;
        js["nrmse"] = s.nrmse;
        js["nstd"] = s.nstd;
        subjects.append(js);
    }
    d["subjects"] = subjects;
    d["mean_rmse"] = report.mean_rmse;
    d["mean_nrmse"] = report.mean_nrmse;
    d["mean_nstd"] = report.mean_nstd;
    d["identity_nrmse"] = report.identity_nrmse;
    d["calibration_rms_before"] = report.calibration_rms_before;
    d["calibration_rms_after"] = report.calibration_rms_after;
    if (report.has_ttest) {
        py::dict tt;
        tt["against"] = report.ttest_against;
        tt["t"] = report.ttest.t;
        tt["df"] = report.ttest.df;
        tt["p"] = report.ttest.p;
        d["ttest"] = tt;
    }
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "paired image translation with calibrated per-voxel uncertainty";

    py::register_exception<bcgan::ConfigError>(m, "ConfigError");
    py::register_exception<bcgan::PipelineError>(m, "PipelineError");

    // ---- scalar numerics -------------------------------------------------
    m.def("normal_cdf", &bcgan::stats::normal_cdf, py::arg("x"),
          "standard normal CDF");
    m.def("normal_quantile", &bcgan::stats::normal_quantile, py::arg("p"),
          "inverse standard normal CDF on (0,1)");
    m.def("student_t_pvalue", &bcgan::stats::student_t_pvalue, py::arg("t"), py::arg("df"),
          "two-sided Student p-value");
    m.def(
        "paired_ttest",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            bcgan::stats::TTestResult r = bcgan::stats::paired_ttest(a, b);
            return py::make_tuple(r.t, r.df, r.p);
        },
        py::arg("a"), py::arg("b"), "paired two-sided t-test, returns (t, df, p)");

    m.def("concrete_gate", &bcgan::concrete_gate, py::arg("p"), py::arg("t"), py::arg("u"),
          "relaxed dropout gate; near 1 means dropped");
    m.def("bernoulli_entropy", &bcgan::bernoulli_entropy, py::arg("p"),
          "binary entropy in nats");
    m.def(
        "concrete_regularizer",
        [](double p, double weight_sq_norm, int channels, double c_w, double c_d) {
            bcgan::ConcreteDropoutParamsT<double> params;
            params.logit_p = bcgan::TensorT<double>::scalar(bcgan::logit(p));
            params.weight_reg_coeff = c_w;
            params.dropout_reg_coeff = c_d;
            params.input_channels = channels;
            return bcgan::concrete_regularizer(params, weight_sq_norm);
        },
        py::arg("p"), py::arg("weight_sq_norm"), py::arg("channels"), py::arg("c_w") = 1e-6,
        py::arg("c_d") = 1e-5, "c_w*(1-p)*||w||^2 - c_d*K*H(p)");

    // ---- recalibration ---------------------------------------------------
    py::class_<bcgan::CalibrationMap>(m, "CalibrationMap")
        .def_readonly("grid", &bcgan::CalibrationMap::grid)
        .def_readonly("values", &bcgan::CalibrationMap::values)
        .def_readonly("calibration_set_size", &bcgan::CalibrationMap::calibration_set_size)
        .def("apply", &bcgan::CalibrationMap::apply, py::arg("p"))
        .def("inverse", &bcgan::CalibrationMap::inverse, py::arg("f"));

    m.def(
        "fit_calibration",
        [](const std::vector<double>& mu, const std::vector<double>& sigma,
           const std::vector<double>& truth, int grid_size) {
            return bcgan::fit_calibration(zip_posteriors(mu, sigma), truth, grid_size);
        },
        py::arg("mu"), py::arg("sigma"), py::arg("truth"), py::arg("grid_size") = 100,
        "empirical coverage map from per-voxel Gaussian posteriors");
    m.def(
        "calibrated_interval",
        [](double mu, double sigma, const bcgan::CalibrationMap& map, double level) {
            return bcgan::calibrated_interval({mu, sigma}, map, level);
        },
        py::arg("mu"), py::arg("sigma"), py::arg("map"), py::arg("level"),
        "central credible interval reshaped through the map");
    m.def("save_calibration", &bcgan::save_calibration, py::arg("map"), py::arg("path"));
    m.def("load_calibration", &bcgan::load_calibration, py::arg("path"));

    // ---- metrics -----------------------------------------------------------
    m.def(
        "rmse",
        [](const std::vector<float>& pred, const std::vector<float>& truth,
           const std::vector<uint8_t>& mask) {
            check_span_lengths(pred.size(), truth.size(), mask.size(), "rmse");
            return bcgan::rmse_span(pred.data(), truth.data(), mask.data(),
                                    int64_t(pred.size()));
        },
        py::arg("pred"), py::arg("truth"), py::arg("mask"));
    m.def(
        "nrmse",
        [](const std::vector<float>& pred, const std::vector<float>& truth,
           const std::vector<uint8_t>& mask) {
            check_span_lengths(pred.size(), truth.size(), mask.size(), "nrmse");
            return bcgan::nrmse_span(pred.data(), truth.data(), mask.data(),
                                     int64_t(pred.size()));
        },
        py::arg("pred"), py::arg("truth"), py::arg("mask"));
    m.def(
        "nstd",
        [](const std::vector<float>& stddev, const std::vector<uint8_t>& mask) {
            if (stddev.size() != mask.size())
                throw std::invalid_argument("nstd: input lengths differ");
            return bcgan::nstd_span(stddev.data(), mask.data(), int64_t(stddev.size()));
        },
        py::arg("stddev"), py::arg("mask"));
    m.def("default_recalls", &bcgan::default_recalls);
    m.def(
        "sparsification_curve",
        [](const std::vector<double>& abs_errors, const std::vector<double>& stds,
           const std::vector<double>& recalls) {
            bcgan::CurveSeries c = recalls.empty()
                                       ? bcgan::sparsification_curve(abs_errors, stds)
                                       : bcgan::sparsification_curve(abs_errors, stds, recalls);
            return py::make_tuple(c.x, c.y);
        },
        py::arg("abs_errors"), py::arg("stds"), py::arg("recalls") = std::vector<double>{},
        "returns (recalls, rmse) of the kept-lowest-std subsets");
    m.def(
        "calibration_curve",
        [](const std::vector<double>& mu, const std::vector<double>& sigma,
           const std::vector<double>& truth, int grid_size, const bcgan::CalibrationMap* map) {
            bcgan::CalibrationCurve c =
                bcgan::calibration_curve(zip_posteriors(mu, sigma), truth, grid_size, map);
            py::dict d;
            d["nominal"] = c.curve.x;
            d["observed"] = c.curve.y;
            d["rms_vs_diagonal"] = c.rms_vs_diagonal;
            return d;
        },
        py::arg("mu"), py::arg("sigma"), py::arg("truth"), py::arg("grid_size") = 100,
        py::arg("map") = nullptr,
        "observed-coverage curve; pass map for the after-recalibration diagnostic");

    // ---- phantoms and volumes ---------------------------------------------
    m.def(
        "generate_phantom",
        [](uint64_t seed, int nx, int ny, int nz, double noise_sigma,
           double bias_field_amplitude, double lesion_probability, bool lesion_contrast_flip) {
            bcgan::PhantomConfig cfg;
            cfg.nx = nx;
            cfg.ny = ny;
            cfg.nz = nz;
            cfg.noise_sigma = noise_sigma;
            cfg.bias_field_amplitude = bias_field_amplitude;
            cfg.lesion_probability = lesion_probability;
            cfg.lesion_contrast_flip = lesion_contrast_flip;
            return volume_pair_dict(bcgan::generate_subject(seed, cfg));
        },
        py::arg("seed"), py::arg("nx") = 32, py::arg("ny") = 32, py::arg("nz") = 32,
        py::arg("noise_sigma") = 0.02, py::arg("bias_field_amplitude") = 0.1,
        py::arg("lesion_probability") = 0.5, py::arg("lesion_contrast_flip") = true,
        "paired-contrast phantom as a dict of flat x-fastest volumes");
    m.def(
        "read_rvol",
        [](const std::string& path) {
            bcgan::Volume vol = bcgan::read_rvol(path);
            return py::make_tuple(py::make_tuple(vol.nx, vol.ny, vol.nz), vol.v);
        },
        py::arg("path"), "returns ((nx, ny, nz), flat values)");
    m.def(
        "write_rvol",
        [](const std::string& path, std::tuple<int, int, int> shape,
           const std::vector<float>& values) {
            bcgan::Volume vol(std::get<0>(shape), std::get<1>(shape), std::get<2>(shape));
            if (int64_t(values.size()) != vol.size())
                throw std::invalid_argument("write_rvol: values do not fill the shape");
            vol.v = values;
            bcgan::write_rvol(vol, path);
        },
        py::arg("path"), py::arg("shape"), py::arg("values"));
    m.def(
        "read_posterior",
        [](const std::string& dir, const std::string& subject_id) {
            bcgan::PosteriorVolume pv = bcgan::load_posterior(dir, subject_id);
            py::dict d;
            d["shape"] = py::make_tuple(pv.mean.nx, pv.mean.ny, pv.mean.nz);
            d["mean"] = pv.mean.v;
            d["std"] = pv.stddev.v;
            d["mask"] = pv.foreground_mask;
            d["num_passes"] = pv.num_passes;
            d["scale_domain"] = pv.scale_domain == bcgan::ScaleDomain::byte ? "byte" : "unit";
            d["clamp_events"] = pv.clamp_events;
            return d;
        },
        py::arg("dir"), py::arg("subject_id"));

    // ---- pipeline commands -------------------------------------------------
    m.def(
        "run_gen_data",
        [](const std::string& config_json, const std::string& out_dir, bool force) {
            bcgan::RunConfig cfg = bcgan::parse_run_config(config_json);
            py::gil_scoped_release release;
            bcgan::run_gen_data(cfg, out_dir, force);
        },
        py::arg("config_json"), py::arg("out_dir"), py::arg("force") = false);
    m.def(
        "run_train",
        [](const std::string& config_json, const std::string& data_dir,
           const std::string& out_dir, bool force, bool resume, bool quiet) {
            bcgan::RunConfig cfg = bcgan::parse_run_config(config_json);
            bcgan::TrainResult result;
            {
                py::gil_scoped_release release;
                result = bcgan::run_train(cfg, {data_dir, out_dir, force, resume, quiet});
            }
            py::dict d;
            d["final_checkpoint"] = result.final_checkpoint;
            py::list history;
            for (const bcgan::EpochStats& e : result.history) {
                py::dict row;
                row["epoch"] = e.epoch;
                row["d_loss"] = e.d_loss;
                row["g_gan"] = e.g_gan;
                row["g_l1"] = e.g_l1;
                row["g_kl"] = e.g_kl;
                row["dropout_p"] = e.dropout_p;
                history.append(row);
            }
            d["history"] = history;
            return d;
        },
        py::arg("config_json"), py::arg("data_dir"), py::arg("out_dir"),
        py::arg("force") = false, py::arg("resume") = false, py::arg("quiet") = true);
    m.def(
        "run_predict",
        [](const std::string& config_json, const std::string& data_dir,
           const std::string& checkpoint, const std::string& out_dir, const std::string& split,
           const std::string& subject, int passes, bool force) {
            bcgan::RunConfig cfg = bcgan::parse_run_config(config_json);
            py::gil_scoped_release release;
            bcgan::run_predict(cfg,
                               {data_dir, checkpoint, out_dir, split, subject, passes, force});
        },
        py::arg("config_json"), py::arg("data_dir"), py::arg("checkpoint"), py::arg("out_dir"),
        py::arg("split") = "test", py::arg("subject") = "", py::arg("passes") = 0,
        py::arg("force") = false);
    m.def(
        "run_calibrate",
        [](const std::string& config_json, const std::string& data_dir,
           const std::string& posterior_dir, const std::string& out_path,
           const std::string& split, bool force) {
            bcgan::RunConfig cfg = bcgan::parse_run_config(config_json);
            py::gil_scoped_release release;
            bcgan::run_calibrate(cfg, {data_dir, posterior_dir, out_path, split, force});
        },
        py::arg("config_json"), py::arg("data_dir"), py::arg("posterior_dir"),
        py::arg("out_path"), py::arg("split") = "train", py::arg("force") = false);
    m.def(
        "run_evaluate",
        [](const std::string& config_json, const std::string& data_dir,
           const std::string& posterior_dir, const std::string& out_dir,
           const std::string& split, const std::string& map_path,
           const std::string& compare_dir, bool force) {
            bcgan::RunConfig cfg = bcgan::parse_run_config(config_json);
            bcgan::MetricReport report;
            {
                py::gil_scoped_release release;
                report = bcgan::run_evaluate(
                    cfg, {data_dir, posterior_dir, out_dir, split, map_path, compare_dir,
                          force});
            }
            return report_dict(report);
        },
        py::arg("config_json"), py::arg("data_dir"), py::arg("posterior_dir"),
        py::arg("out_dir"), py::arg("split") = "test", py::arg("map_path") = "",
        py::arg("compare_dir") = "", py::arg("force") = false);
}
