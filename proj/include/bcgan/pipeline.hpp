#pragma once

#include <stdexcept>
#include <string>

#include "bcgan/metrics.hpp"
#include "bcgan/runconfig.hpp"
#include "bcgan/training.hpp"

// Command implementations shared by the CLI and the end-to-end tests. Each
// run_* call is one subcommand: it reads its inputs from disk, does the work
// and writes its outputs, so a pipeline is a plain sequence of calls. Bad
// flag combinations throw ConfigError, everything else PipelineError.

namespace bcgan {

struct PipelineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// creates the directory (parents included); an existing one is refused
// unless force, which wipes it first
void prepare_output_dir(const std::string& path, bool force);

// full synthetic dataset: four RVOL volumes per subject plus manifest.json
void run_gen_data(const RunConfig& cfg, const std::string& out_dir, bool force);

struct TrainOptions {
    std::string data_dir;
    std::string out_dir;
    bool force = false;
    bool resume = false;
    bool quiet = false;
};
TrainResult run_train(const RunConfig& cfg, const TrainOptions& opt);

struct PredictOptions {
    std::string data_dir;
    std::string checkpoint;  // generator checkpoint file
    std::string out_dir;
    std::string split = "test";
    std::string subject;  // optional: restrict to one subject id
    int passes = 0;       // 0: use cfg.t_mc
    bool force = false;
};
void run_predict(const RunConfig& cfg, const PredictOptions& opt);

struct CalibrateOptions {
    std::string data_dir;       // truths
    std::string posterior_dir;  // predictions of the calibration split
    std::string out_path;       // map CSV
    std::string split = "train";
    bool force = false;
};
void run_calibrate(const RunConfig& cfg, const CalibrateOptions& opt);

struct EvaluateOptions {
    std::string data_dir;
    std::string posterior_dir;
    std::string out_dir;
    std::string split = "test";
    std::string map_path;     // optional calibration map for the after-curve
    std::string compare_dir;  // optional second posterior dir for a paired t-test
    bool force = false;
};
MetricReport run_evaluate(const RunConfig& cfg, const EvaluateOptions& opt);

}  // namespace bcgan
