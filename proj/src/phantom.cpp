#include "bcgan/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bcgan/rng.hpp"

namespace bcgan {

void PhantomConfig::validate() const {
    if (nx <= 0 || ny <= 0 || nz <= 0)
        throw std::invalid_argument("phantom: volume extents must be positive");
    if (num_classes < 1) throw std::invalid_argument("phantom: need at least one tissue class");
    if (int(class_intensity_table.size()) != num_classes)
        throw std::invalid_argument("phantom: intensity table must have one row per class");
    for (auto [a, b] : class_intensity_table) {
        if (!(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0))
            throw std::invalid_argument("phantom: class means must lie in (0,1)");
    }
    // the A->B map must be injective so a perfect non-lesion predictor exists
    for (size_t i = 0; i < class_intensity_table.size(); ++i)
        for (size_t j = i + 1; j < class_intensity_table.size(); ++j)
            if (std::abs(class_intensity_table[i].first - class_intensity_table[j].first) < 1e-6)
                throw std::invalid_argument(
                    "phantom: duplicate mean_A values make the A->B map ambiguous");
    if (noise_sigma < 0.0) throw std::invalid_argument("phantom: noise_sigma must be >= 0");
    if (bias_field_amplitude < 0.0 || bias_field_amplitude >= 1.0)
        throw std::invalid_argument("phantom: bias_field_amplitude outside [0,1)");
    if (lesion_probability < 0.0 || lesion_probability > 1.0)
        throw std::invalid_argument("phantom: lesion_probability outside [0,1]");
}

namespace {

constexpr double kTwoPi = 6.283185307179586;

struct BiasField {
    double amp, fx, fy, fz, px, py, pz;
    double at(double u, double v, double w) const {
        return 1.0 + amp * std::sin(kTwoPi * (fx * u + px)) * std::sin(kTwoPi * (fy * v + py)) *
                         std::sin(kTwoPi * (fz * w + pz));
    }
};

BiasField random_bias(double amp, RngStream& rs) {
    return {amp,          1.0 + rs.uniform(), 1.0 + rs.uniform(), 1.0 + rs.uniform(),
            rs.uniform(), rs.uniform(),       rs.uniform()};
}

}  // namespace

VolumePair generate_subject(uint64_t seed, const PhantomConfig& cfg) {
    cfg.validate();
    auto rs = derive_stream(seed, "phantom", 0);

    VolumePair out;
    out.seed = seed;
    out.contrast_a = Volume(cfg.nx, cfg.ny, cfg.nz);
    out.contrast_b = Volume(cfg.nx, cfg.ny, cfg.nz);
    out.labels.assign(size_t(out.contrast_a.size()), 0);
    out.lesion_mask.assign(size_t(out.contrast_a.size()), 0);

    // head ellipsoid: radii chosen so the foreground fraction stays in a
    // sane band (roughly 0.23 .. 0.38 of the volume) and never clips
    double cx = 0.5 + (rs.uniform() - 0.5) * 0.04;
    double cy = 0.5 + (rs.uniform() - 0.5) * 0.04;
    double cz = 0.5 + (rs.uniform() - 0.5) * 0.04;
    double rx = rs.uniform(0.38, 0.45);
    double ry = rs.uniform(0.38, 0.45);
    double rz = rs.uniform(0.38, 0.45);

    // wavy shell boundaries: a smooth angular perturbation of the radial
    // coordinate keeps the tissue regions nested but non-spherical
    double warp_amp = rs.uniform(0.06, 0.12);
    double warp_kx = rs.uniform_int(2) + 1.0;
    double warp_ky = rs.uniform_int(2) + 1.0;
    double warp_px = rs.uniform(), warp_py = rs.uniform(), warp_pz = rs.uniform();

    bool has_lesion = rs.uniform() < cfg.lesion_probability;
    // lesion center stays well inside the head so the blob never leaks out
    double lx = cx + (rs.uniform() - 0.5) * rx;
    double ly = cy + (rs.uniform() - 0.5) * ry;
    double lz = cz + (rs.uniform() - 0.5) * rz;
    double lr = rs.uniform(0.10, 0.16);

    BiasField bias_a = random_bias(cfg.bias_field_amplitude, rs);
    BiasField bias_b = random_bias(cfg.bias_field_amplitude, rs);

    const double lesion_b = cfg.lesion_contrast_flip ? kLesionMeanBFlip : kLesionMeanBNoFlip;
    const int C = cfg.num_classes;

    for (int z = 0; z < cfg.nz; ++z) {
        double w = (z + 0.5) / cfg.nz;
        for (int y = 0; y < cfg.ny; ++y) {
            double v = (y + 0.5) / cfg.ny;
            for (int x = 0; x < cfg.nx; ++x) {
                double u = (x + 0.5) / cfg.nx;
                int64_t i = out.contrast_a.index(x, y, z);
                double du = (u - cx) / rx, dv = (v - cy) / ry, dw = (w - cz) / rz;
                double rho = std::sqrt(du * du + dv * dv + dw * dw);
                // two independent noise draws per voxel keep the stream
                // position independent of the voxel's class
                double na = rs.normal() * cfg.noise_sigma;
                double nb = rs.normal() * cfg.noise_sigma;
                if (rho > 1.0) continue;  // background stays exactly zero

                double wav = warp_amp * std::sin(kTwoPi * (warp_kx * u + warp_px)) *
                             std::sin(kTwoPi * (warp_ky * v + warp_py)) *
                             std::cos(kTwoPi * (w + warp_pz));
                double shell = std::clamp(rho + wav, 0.0, 0.999);
                int cls = 1 + int(shell * C);
                cls = std::min(cls, C);
                out.labels[size_t(i)] = uint8_t(cls);

                double ma = cfg.class_intensity_table[cls - 1].first;
                double mb = cfg.class_intensity_table[cls - 1].second;

                if (has_lesion) {
                    double eu = (u - lx) / lr, ev = (v - ly) / lr, ew = (w - lz) / lr;
                    if (eu * eu + ev * ev + ew * ew <= 1.0) {
                        out.lesion_mask[size_t(i)] = 1;
                        ma = kLesionMeanA;
                        mb = lesion_b;
                    }
                }

                double a = ma * bias_a.at(u, v, w) + na;
                double b = mb * bias_b.at(u, v, w) + nb;
                out.contrast_a.v[size_t(i)] = float(std::clamp(a, 0.0, 1.0));
                out.contrast_b.v[size_t(i)] = float(std::clamp(b, 0.0, 1.0));
            }
        }
    }
    return out;
}

}  // namespace bcgan
