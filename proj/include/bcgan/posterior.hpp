#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bcgan/networks.hpp"
#include "bcgan/volume.hpp"

// Dropout testing: repeated stochastic forward passes over a source volume,
// slice by slice, reduced to per-voxel predictive mean and standard
// deviation.

namespace bcgan {

enum class ScaleDomain { unit, byte };

struct PosteriorVolume {
    Volume mean, stddev;
    std::vector<uint8_t> foreground_mask;  // 1 inside the evaluation region
    int num_passes = 0;
    ScaleDomain scale_domain = ScaleDomain::unit;
    int64_t clamp_events = 0;  // mean voxels clipped by rescale_to_byte
};

// T_mc stochastic passes per slice chunk (batchnorm in eval mode, dropout
// live); mean and Bessel-corrected std from double accumulators. The
// foreground mask marks source voxels > 0. Pass seed: noise streams are
// derived per (chunk, pass), disjoint from the training streams.
PosteriorVolume mc_predict(const UNetGenerator& net, const Volume& volume_a, int t_mc,
                           uint64_t seed);

// multiply mean and std by 255, clamp mean into [0,255] (counted); only
// valid once
void rescale_to_byte(PosteriorVolume& pv);

// three RVOL files (<id>_mean/_std/_mask.rvol) plus <id>_posterior.json
void save_posterior(const PosteriorVolume& pv, const std::string& dir,
                    const std::string& subject_id, uint64_t seed);
PosteriorVolume load_posterior(const std::string& dir, const std::string& subject_id);

}  // namespace bcgan
