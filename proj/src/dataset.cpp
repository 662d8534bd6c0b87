#include "bcgan/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "bcgan/rng.hpp"

namespace bcgan {

using nlohmann::ordered_json;

std::vector<ManifestEntry> Manifest::of_split(const std::string& split) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (e.split == split) out.push_back(e);
    return out;
}

std::vector<std::string> make_split_assignment(int num_subjects, double train_ratio,
                                               uint64_t seed) {
    if (num_subjects <= 0) throw std::invalid_argument("split: no subjects");
    if (!(train_ratio > 0.0 && train_ratio < 1.0))
        throw std::invalid_argument("split: train ratio must lie strictly inside (0,1)");
    std::vector<int> order(num_subjects);
    for (int i = 0; i < num_subjects; ++i) order[i] = i;
    auto rs = derive_stream(seed, "split", 0);
    // Fisher-Yates with the deterministic stream
    for (int i = num_subjects - 1; i > 0; --i) {
        int j = int(rs.uniform_int(uint64_t(i) + 1));
        std::swap(order[i], order[j]);
    }
    int n_train = int(std::llround(train_ratio * num_subjects));
    n_train = std::clamp(n_train, 1, num_subjects - 1);
    std::vector<std::string> assignment(num_subjects);
    for (int k = 0; k < num_subjects; ++k)
        assignment[order[k]] = k < n_train ? "train" : "test";
    return assignment;
}

void save_manifest(const Manifest& m, const std::string& path) {
    ordered_json j;
    j["seed"] = m.seed;
    j["subjects"] = ordered_json::array();
    for (const auto& e : m.entries) {
        j["subjects"].push_back({{"subject_id", e.subject_id},
                                 {"split", e.split},
                                 {"contrast_a", e.contrast_a},
                                 {"contrast_b", e.contrast_b},
                                 {"labels", e.labels},
                                 {"lesion_mask", e.lesion_mask}});
    }
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write manifest: " + path);
    os << j.dump(2) << "\n";
}

Manifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open manifest: " + path);
    ordered_json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("manifest parse error in " + path + ": " + e.what());
    }
    Manifest m;
    m.seed = j.at("seed").get<uint64_t>();
    for (const auto& s : j.at("subjects")) {
        ManifestEntry e;
        e.subject_id = s.at("subject_id").get<std::string>();
        e.split = s.at("split").get<std::string>();
        e.contrast_a = s.at("contrast_a").get<std::string>();
        e.contrast_b = s.at("contrast_b").get<std::string>();
        e.labels = s.at("labels").get<std::string>();
        e.lesion_mask = s.at("lesion_mask").get<std::string>();
        m.entries.push_back(std::move(e));
    }
    return m;
}

namespace {

Volume mask_to_volume(const std::vector<uint8_t>& mask, int nx, int ny, int nz) {
    Volume v(nx, ny, nz);
    for (size_t i = 0; i < mask.size(); ++i) v.v[i] = float(mask[i]);
    return v;
}

std::vector<uint8_t> volume_to_bytes(const Volume& v) {
    std::vector<uint8_t> out(size_t(v.size()));
    for (size_t i = 0; i < out.size(); ++i) out[i] = uint8_t(std::lround(v.v[i]));
    return out;
}

}  // namespace

SubjectData load_subject(const std::string& data_dir, const ManifestEntry& entry) {
    SubjectData s;
    s.subject_id = entry.subject_id;
    s.contrast_a = read_rvol(data_dir + "/" + entry.contrast_a);
    s.contrast_b = read_rvol(data_dir + "/" + entry.contrast_b);
    Volume labels = read_rvol(data_dir + "/" + entry.labels);
    Volume lesion = read_rvol(data_dir + "/" + entry.lesion_mask);
    if (!s.contrast_a.same_shape(s.contrast_b) || !s.contrast_a.same_shape(labels) ||
        !s.contrast_a.same_shape(lesion))
        throw std::runtime_error("subject " + entry.subject_id + ": volume shapes disagree");
    s.labels = volume_to_bytes(labels);
    s.lesion_mask = volume_to_bytes(lesion);
    return s;
}

ManifestEntry write_subject(const VolumePair& pair, const std::string& subject_id,
                            const std::string& split, const std::string& data_dir) {
    ManifestEntry e;
    e.subject_id = subject_id;
    e.split = split;
    e.contrast_a = subject_id + "_a.rvol";
    e.contrast_b = subject_id + "_b.rvol";
    e.labels = subject_id + "_labels.rvol";
    e.lesion_mask = subject_id + "_lesion.rvol";
    write_rvol(pair.contrast_a, data_dir + "/" + e.contrast_a);
    write_rvol(pair.contrast_b, data_dir + "/" + e.contrast_b);
    write_rvol(mask_to_volume(pair.labels, pair.contrast_a.nx, pair.contrast_a.ny,
                              pair.contrast_a.nz),
               data_dir + "/" + e.labels);
    write_rvol(mask_to_volume(pair.lesion_mask, pair.contrast_a.nx, pair.contrast_a.ny,
                              pair.contrast_a.nz),
               data_dir + "/" + e.lesion_mask);
    return e;
}

}  // namespace bcgan
