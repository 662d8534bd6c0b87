#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bcgan/phantom.hpp"
#include "bcgan/volume.hpp"

// Dataset on disk: one manifest JSON plus four RVOL files per subject.
// Splits are by subject, never by slice.

namespace bcgan {

struct ManifestEntry {
    std::string subject_id;
    std::string split;  // "train" or "test"
    std::string contrast_a, contrast_b, labels, lesion_mask;  // paths relative to the manifest
};

struct Manifest {
    uint64_t seed = 0;
    std::vector<ManifestEntry> entries;

    std::vector<ManifestEntry> of_split(const std::string& split) const;
};

// deterministic subject-level split; ratios must sum to 1 and both splits
// must end up non-empty
std::vector<std::string> make_split_assignment(int num_subjects, double train_ratio,
                                               uint64_t seed);

void save_manifest(const Manifest& m, const std::string& path);
Manifest load_manifest(const std::string& path);

struct SubjectData {
    std::string subject_id;
    Volume contrast_a, contrast_b;
    std::vector<uint8_t> labels, lesion_mask;
};

SubjectData load_subject(const std::string& data_dir, const ManifestEntry& entry);

// write the four volumes of one subject next to the manifest; returns the entry
ManifestEntry write_subject(const VolumePair& pair, const std::string& subject_id,
                            const std::string& split, const std::string& data_dir);

}  // namespace bcgan
