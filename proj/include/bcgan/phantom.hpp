#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bcgan/volume.hpp"

// Synthetic paired-contrast phantoms: an ellipsoidal head filled with nested
// wavy tissue shells, each tissue class carrying a fixed (A, B) intensity
// pair so contrast A to contrast B is a learnable per-class mapping. An
// optional lesion overrides a blob with an out-of-table pair, giving the
// uncertainty pipeline a known anomaly to find.

namespace bcgan {

struct PhantomConfig {
    int nx = 32, ny = 32, nz = 32;
    int num_classes = 4;
    // per class (mean_A, mean_B); defaults scramble B against A so the map
    // is non-monotone but injective
    std::vector<std::pair<double, double>> class_intensity_table{
        {0.25, 0.75}, {0.45, 0.30}, {0.65, 0.85}, {0.85, 0.40}};
    double noise_sigma = 0.02;
    double bias_field_amplitude = 0.1;
    double lesion_probability = 0.5;
    bool lesion_contrast_flip = true;

    void validate() const;
};

// lesion intensities, deliberately outside the class table
constexpr double kLesionMeanA = 0.95;
constexpr double kLesionMeanBFlip = 0.10;
constexpr double kLesionMeanBNoFlip = 0.90;

struct VolumePair {
    Volume contrast_a, contrast_b;
    std::vector<uint8_t> labels;       // 0 = background, 1..C tissue classes
    std::vector<uint8_t> lesion_mask;  // 1 where the lesion overrides
    std::string subject_id;
    uint64_t seed = 0;
};

VolumePair generate_subject(uint64_t seed, const PhantomConfig& cfg);

}  // namespace bcgan
