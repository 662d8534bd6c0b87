#include "bcgan/runconfig.hpp"

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace bcgan {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ConfigError("config: " + msg); }

void require_object(const json& v, const char* where) {
    if (!v.is_object()) fail(std::string(where) + " must be a JSON object");
}

void check_keys(const json& obj, const char* where, std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) fail("unknown key '" + it.key() + "' in " + where);
    }
}

std::string key_path(const char* where, const char* key) {
    return std::string(where) + "." + key;
}

void fetch_int(const json& obj, const char* where, const char* key, int& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) fail(key_path(where, key) + " must be an integer");
    out = v.get<int>();
}

void fetch_double(const json& obj, const char* where, const char* key, double& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number()) fail(key_path(where, key) + " must be a number");
    out = v.get<double>();
}

void fetch_float(const json& obj, const char* where, const char* key, float& out) {
    double d = out;
    fetch_double(obj, where, key, d);
    out = static_cast<float>(d);
}

void fetch_bool(const json& obj, const char* where, const char* key, bool& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_boolean()) fail(key_path(where, key) + " must be true or false");
    out = v.get<bool>();
}

void fetch_seed(const json& obj, const char* where, const char* key, uint64_t& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                   v.get<int64_t>() < 0))
        fail(key_path(where, key) + " must be a non-negative integer");
    out = v.get<uint64_t>();
}

void fetch_int_list(const json& obj, const char* where, const char* key, std::vector<int>& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_array()) fail(key_path(where, key) + " must be an array of integers");
    std::vector<int> parsed;
    for (const json& e : v) {
        if (!e.is_number_integer()) fail(key_path(where, key) + " must be an array of integers");
        parsed.push_back(e.get<int>());
    }
    out = std::move(parsed);
}

void fetch_pair_table(const json& obj, const char* where, const char* key,
                      std::vector<std::pair<double, double>>& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_array()) fail(key_path(where, key) + " must be an array of [mean_a, mean_b] pairs");
    std::vector<std::pair<double, double>> parsed;
    for (const json& row : v) {
        if (!row.is_array() || row.size() != 2 || !row[0].is_number() || !row[1].is_number())
            fail(key_path(where, key) + " rows must be [mean_a, mean_b] number pairs");
        parsed.emplace_back(row[0].get<double>(), row[1].get<double>());
    }
    out = std::move(parsed);
}

void fetch_dropout_kind(const json& obj, const char* where, const char* key, DropoutKind& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_string()) fail(key_path(where, key) + " must be a string");
    const std::string s = v.get<std::string>();
    if (s == "none")
        out = DropoutKind::none;
    else if (s == "concrete")
        out = DropoutKind::concrete;
    else if (s == "monte_carlo")
        out = DropoutKind::monte_carlo;
    else
        fail(key_path(where, key) + " must be one of none, concrete, monte_carlo; got '" + s + "'");
}

void apply_dataset(const json& obj, DatasetConfig& d) {
    require_object(obj, "dataset");
    check_keys(obj, "dataset", {"num_subjects", "train_ratio"});
    fetch_int(obj, "dataset", "num_subjects", d.num_subjects);
    fetch_double(obj, "dataset", "train_ratio", d.train_ratio);
}

void apply_phantom(const json& obj, PhantomConfig& p) {
    require_object(obj, "phantom");
    check_keys(obj, "phantom",
               {"nx", "ny", "nz", "num_classes", "class_intensity_table", "noise_sigma",
                "bias_field_amplitude", "lesion_probability", "lesion_contrast_flip"});
    fetch_int(obj, "phantom", "nx", p.nx);
    fetch_int(obj, "phantom", "ny", p.ny);
    fetch_int(obj, "phantom", "nz", p.nz);
    fetch_int(obj, "phantom", "num_classes", p.num_classes);
    fetch_pair_table(obj, "phantom", "class_intensity_table", p.class_intensity_table);
    fetch_double(obj, "phantom", "noise_sigma", p.noise_sigma);
    fetch_double(obj, "phantom", "bias_field_amplitude", p.bias_field_amplitude);
    fetch_double(obj, "phantom", "lesion_probability", p.lesion_probability);
    fetch_bool(obj, "phantom", "lesion_contrast_flip", p.lesion_contrast_flip);
}

void apply_generator(const json& obj, GeneratorSpec& g) {
    require_object(obj, "generator");
    check_keys(obj, "generator",
               {"input_size", "levels", "base_channels", "in_channels", "out_channels", "dropout",
                "dropout_positions", "mc_rate", "init_dropout_p"});
    fetch_int(obj, "generator", "input_size", g.input_size);
    fetch_int(obj, "generator", "levels", g.levels);
    fetch_int(obj, "generator", "base_channels", g.base_channels);
    fetch_int(obj, "generator", "in_channels", g.in_channels);
    fetch_int(obj, "generator", "out_channels", g.out_channels);
    fetch_dropout_kind(obj, "generator", "dropout", g.dropout_kind);
    fetch_int_list(obj, "generator", "dropout_positions", g.dropout_positions);
    fetch_double(obj, "generator", "mc_rate", g.mc_rate);
    fetch_double(obj, "generator", "init_dropout_p", g.init_dropout_p);
}

void apply_discriminator(const json& obj, DiscriminatorSpec& d) {
    require_object(obj, "discriminator");
    check_keys(obj, "discriminator", {"base_channels", "in_channels"});
    fetch_int(obj, "discriminator", "base_channels", d.base_channels);
    fetch_int(obj, "discriminator", "in_channels", d.in_channels);
}

void apply_train(const json& obj, TrainConfig& t) {
    require_object(obj, "train");
    check_keys(obj, "train",
               {"learning_rate", "beta1", "beta2", "adam_epsilon", "batch_size", "epochs",
                "lambda_l1", "lambda_kl", "temperature", "c_w", "c_d", "resize_to", "crop_to"});
    fetch_float(obj, "train", "learning_rate", t.learning_rate);
    fetch_float(obj, "train", "beta1", t.beta1);
    fetch_float(obj, "train", "beta2", t.beta2);
    fetch_float(obj, "train", "adam_epsilon", t.adam_epsilon);
    fetch_int(obj, "train", "batch_size", t.batch_size);
    fetch_int(obj, "train", "epochs", t.epochs);
    fetch_double(obj, "train", "lambda_l1", t.lambda_l1);
    fetch_double(obj, "train", "lambda_kl", t.lambda_kl);
    fetch_double(obj, "train", "temperature", t.temperature);
    fetch_double(obj, "train", "c_w", t.c_w);
    fetch_double(obj, "train", "c_d", t.c_d);
    fetch_int(obj, "train", "resize_to", t.resize_to);
    fetch_int(obj, "train", "crop_to", t.crop_to);
}

}  // namespace

void DatasetConfig::validate() const {
    if (num_subjects < 2)
        throw std::invalid_argument("dataset: need at least two subjects to split");
    if (!(train_ratio > 0.0 && train_ratio < 1.0))
        throw std::invalid_argument("dataset: train_ratio must lie strictly inside (0,1)");
}

void RunConfig::finalize() {
    // the training block owns the shared knobs; copy them into the
    // generator spec so the two can never drift apart
    train.seed = seed;
    generator.temperature = train.temperature;
    generator.weight_reg_coeff = train.c_w;
    generator.dropout_reg_coeff = train.c_d;
    try {
        dataset.validate();
        phantom.validate();
        generator.validate();
        discriminator.validate();
        train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (t_mc < 2) fail("t_mc must be at least 2");
    if (phantom.nx != phantom.ny)
        fail("slices must be square, got nx=" + std::to_string(phantom.nx) +
             " ny=" + std::to_string(phantom.ny));
    if (generator.input_size != train.crop_to)
        fail("generator input_size " + std::to_string(generator.input_size) +
             " must equal train crop_to " + std::to_string(train.crop_to));
    if (discriminator.in_channels != generator.in_channels + generator.out_channels)
        fail("discriminator in_channels " + std::to_string(discriminator.in_channels) +
             " must equal generator in+out channels " +
             std::to_string(generator.in_channels + generator.out_channels));
}

RunConfig desk_run_config() {
    return RunConfig{};  // struct defaults are the desk preset
}

RunConfig paper_run_config() {
    RunConfig cfg;
    cfg.dataset.num_subjects = 102;
    cfg.phantom.nx = cfg.phantom.ny = cfg.phantom.nz = 256;
    cfg.generator.input_size = 256;
    cfg.generator.levels = 8;
    cfg.generator.base_channels = 64;
    cfg.discriminator.base_channels = 64;
    cfg.train.batch_size = 16;
    cfg.train.epochs = 40;
    cfg.train.resize_to = 286;
    cfg.train.crop_to = 256;
    return cfg;
}

RunConfig parse_run_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        fail(std::string("JSON parse error: ") + e.what());
    }
    require_object(doc, "top level");
    check_keys(doc, "top level",
               {"preset", "seed", "t_mc", "dataset", "phantom", "generator", "discriminator",
                "train"});

    RunConfig cfg = desk_run_config();
    if (doc.contains("preset")) {
        const json& v = doc.at("preset");
        if (!v.is_string()) fail("preset must be a string");
        const std::string p = v.get<std::string>();
        if (p == "desk")
            cfg = desk_run_config();
        else if (p == "paper")
            cfg = paper_run_config();
        else
            fail("preset must be 'desk' or 'paper', got '" + p + "'");
    }

    fetch_seed(doc, "top level", "seed", cfg.seed);
    fetch_int(doc, "top level", "t_mc", cfg.t_mc);
    if (doc.contains("dataset")) apply_dataset(doc.at("dataset"), cfg.dataset);
    if (doc.contains("phantom")) apply_phantom(doc.at("phantom"), cfg.phantom);
    if (doc.contains("generator")) apply_generator(doc.at("generator"), cfg.generator);
    if (doc.contains("discriminator")) apply_discriminator(doc.at("discriminator"), cfg.discriminator);
    if (doc.contains("train")) apply_train(doc.at("train"), cfg.train);

    cfg.finalize();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

}  // namespace bcgan
