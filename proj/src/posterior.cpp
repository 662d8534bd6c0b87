#include "bcgan/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "bcgan/graph.hpp"
#include "bcgan/rng.hpp"

namespace bcgan {

namespace {

constexpr int kMaxChunk = 32;  // slices per forward pass

struct ChunkGraph {
    Graph g;
    Tensor x;
    UNetGenerator::Built built;

    ChunkGraph(const UNetGenerator& net, int batch, int size)
        : x({batch, 1, size, size}) {
        built = net.build(g, g.leaf(x), RunMode::eval_stochastic);
    }
};

}  // namespace

PosteriorVolume mc_predict(const UNetGenerator& net, const Volume& volume_a, int t_mc,
                           uint64_t seed) {
    if (t_mc < 2)
        throw std::invalid_argument("mc_predict: need at least 2 passes for a sample std, got " +
                                    std::to_string(t_mc));
    const int size = net.spec().input_size;
    if (volume_a.nx != size || volume_a.ny != size)
        throw std::invalid_argument("mc_predict: volume slices are " +
                                    std::to_string(volume_a.nx) + "x" +
                                    std::to_string(volume_a.ny) + " but the network expects " +
                                    std::to_string(size) + "x" + std::to_string(size));
    if (net.spec().dropout_kind == DropoutKind::none)
        std::fprintf(stderr,
                     "warning: mc_predict on a network without dropout; std will be zero\n");

    // noise streams must not collide with the training counter, which also
    // starts at 1 under the same config seed
    const uint64_t noise_seed = hash_combine(seed, hash_str("predict/noise"));

    PosteriorVolume pv;
    pv.num_passes = t_mc;
    pv.mean = Volume(volume_a.nx, volume_a.ny, volume_a.nz);
    pv.stddev = Volume(volume_a.nx, volume_a.ny, volume_a.nz);
    pv.foreground_mask.resize(size_t(volume_a.size()));
    for (int64_t i = 0; i < volume_a.size(); ++i)
        pv.foreground_mask[size_t(i)] = volume_a.v[size_t(i)] > 0.0f ? 1 : 0;

    const int64_t plane = int64_t(volume_a.nx) * volume_a.ny;
    std::vector<double> sum, sumsq;

    std::unique_ptr<ChunkGraph> full, tail;
    uint64_t pass_counter = 0;
    for (int z0 = 0; z0 < volume_a.nz; z0 += kMaxChunk) {
        const int batch = std::min(kMaxChunk, volume_a.nz - z0);
        std::unique_ptr<ChunkGraph>& holder = batch == kMaxChunk ? full : tail;
        if (!holder) holder = std::make_unique<ChunkGraph>(net, batch, size);
        ChunkGraph& cg = *holder;
        for (int b = 0; b < batch; ++b)
            std::copy(volume_a.slice(z0 + b), volume_a.slice(z0 + b) + plane,
                      cg.x.data() + int64_t(b) * plane);

        sum.assign(size_t(plane) * batch, 0.0);
        sumsq.assign(size_t(plane) * batch, 0.0);
        Eval ev(cg.g);
        for (int t = 0; t < t_mc; ++t) {
            net.fill_noise(cg.built.noise, noise_seed, ++pass_counter);
            ev.reset();
            const auto& out = ev.forward(cg.built.out);
            for (size_t i = 0; i < sum.size(); ++i) {
                double v = out[i];
                sum[i] += v;
                sumsq[i] += v * v;
            }
        }
        for (int b = 0; b < batch; ++b) {
            float* m = pv.mean.slice(z0 + b);
            float* s = pv.stddev.slice(z0 + b);
            for (int64_t i = 0; i < plane; ++i) {
                double mu = sum[size_t(b) * plane + i] / t_mc;
                double var =
                    (sumsq[size_t(b) * plane + i] - double(t_mc) * mu * mu) / (t_mc - 1.0);
                m[i] = float(mu);
                s[i] = float(std::sqrt(std::max(var, 0.0)));
            }
        }
    }
    return pv;
}

void rescale_to_byte(PosteriorVolume& pv) {
    if (pv.scale_domain == ScaleDomain::byte)
        throw std::logic_error("rescale_to_byte: posterior is already in the byte domain");
    for (int64_t i = 0; i < pv.mean.size(); ++i) {
        float v = pv.mean.v[size_t(i)] * 255.0f;
        if (v < 0.0f || v > 255.0f) {
            ++pv.clamp_events;
            v = std::clamp(v, 0.0f, 255.0f);
        }
        pv.mean.v[size_t(i)] = v;
        pv.stddev.v[size_t(i)] *= 255.0f;
    }
    pv.scale_domain = ScaleDomain::byte;
}

void save_posterior(const PosteriorVolume& pv, const std::string& dir,
                    const std::string& subject_id, uint64_t seed) {
    write_rvol(pv.mean, dir + "/" + subject_id + "_mean.rvol");
    write_rvol(pv.stddev, dir + "/" + subject_id + "_std.rvol");
    Volume mask(pv.mean.nx, pv.mean.ny, pv.mean.nz);
    for (size_t i = 0; i < pv.foreground_mask.size(); ++i)
        mask.v[i] = pv.foreground_mask[i] ? 1.0f : 0.0f;
    write_rvol(mask, dir + "/" + subject_id + "_mask.rvol");

    nlohmann::ordered_json j;
    j["subject_id"] = subject_id;
    j["t_mc"] = pv.num_passes;
    j["seed"] = seed;
    j["scale_domain"] = pv.scale_domain == ScaleDomain::byte ? "byte" : "unit";
    j["clamp_events"] = pv.clamp_events;
    std::ofstream os(dir + "/" + subject_id + "_posterior.json", std::ios::trunc);
    if (!os) throw VolumeIoError("cannot write posterior sidecar for " + subject_id);
    os << j.dump(2) << "\n";
}

PosteriorVolume load_posterior(const std::string& dir, const std::string& subject_id) {
    PosteriorVolume pv;
    pv.mean = read_rvol(dir + "/" + subject_id + "_mean.rvol");
    pv.stddev = read_rvol(dir + "/" + subject_id + "_std.rvol");
    Volume mask = read_rvol(dir + "/" + subject_id + "_mask.rvol");
    if (!pv.mean.same_shape(pv.stddev) || !pv.mean.same_shape(mask))
        throw VolumeIoError("posterior volumes of " + subject_id + " disagree in shape");
    pv.foreground_mask.resize(size_t(mask.size()));
    for (int64_t i = 0; i < mask.size(); ++i)
        pv.foreground_mask[size_t(i)] = mask.v[size_t(i)] > 0.5f ? 1 : 0;

    std::ifstream is(dir + "/" + subject_id + "_posterior.json");
    if (!is) throw VolumeIoError("missing posterior sidecar for " + subject_id);
    nlohmann::json j = nlohmann::json::parse(is);
    pv.num_passes = j.at("t_mc").get<int>();
    std::string domain = j.at("scale_domain").get<std::string>();
    if (domain != "unit" && domain != "byte")
        throw VolumeIoError("posterior sidecar of " + subject_id + ": unknown scale domain '" +
                            domain + "'");
    pv.scale_domain = domain == "byte" ? ScaleDomain::byte : ScaleDomain::unit;
    pv.clamp_events = j.at("clamp_events").get<int64_t>();
    return pv;
}

}  // namespace bcgan
