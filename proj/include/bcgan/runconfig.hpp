#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "bcgan/networks.hpp"
#include "bcgan/phantom.hpp"
#include "bcgan/training.hpp"

// One JSON config drives every command. A "preset" key picks the baseline
// ("desk" by default, "paper" for the full-size shapes) and the remaining
// keys override individual fields. Unknown keys anywhere are an error, as
// is any cross-field inconsistency: a config either loads clean or the run
// stops before touching data.

namespace bcgan {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DatasetConfig {
    int num_subjects = 40;
    double train_ratio = 0.8;

    void validate() const;
};

struct RunConfig {
    uint64_t seed = 1234;
    DatasetConfig dataset;
    PhantomConfig phantom;
    GeneratorSpec generator;
    DiscriminatorSpec discriminator;
    TrainConfig train;
    int t_mc = 50;  // stochastic forward passes per predicted volume

    // propagates the shared fields (seed into train, the dropout
    // regularizer coefficients and temperature from train into the
    // generator spec) and validates every section plus the cross-field
    // constraints; throws ConfigError
    void finalize();
};

RunConfig desk_run_config();
RunConfig paper_run_config();

// parse + finalize; all failures surface as ConfigError
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);

}  // namespace bcgan
