#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

// 3-D float volume with x as the fastest-varying index, plus the RVOL file
// container and the 2-D slice helpers (min-max normalization, bilinear
// resize) used by preprocessing and augmentation.

namespace bcgan {

struct Volume {
    int nx = 0, ny = 0, nz = 0;
    std::vector<float> v;

    Volume() = default;
    Volume(int x, int y, int z, float fill = 0.0f) : nx(x), ny(y), nz(z) {
        if (x <= 0 || y <= 0 || z <= 0)
            throw std::invalid_argument("volume extents must be positive");
        v.assign(size_t(x) * y * z, fill);
    }

    int64_t size() const { return int64_t(nx) * ny * nz; }
    int64_t index(int x, int y, int z) const { return x + int64_t(nx) * (y + int64_t(ny) * z); }
    float& at(int x, int y, int z) { return v[index(x, y, z)]; }
    float at(int x, int y, int z) const { return v[index(x, y, z)]; }

    // contiguous [ny*nx] plane at height z (slicing along the z axis)
    const float* slice(int z) const { return v.data() + int64_t(nx) * ny * z; }
    float* slice(int z) { return v.data() + int64_t(nx) * ny * z; }

    bool same_shape(const Volume& o) const { return nx == o.nx && ny == o.ny && nz == o.nz; }
};

struct VolumeIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct BadMagicError : VolumeIoError {
    using VolumeIoError::VolumeIoError;
};
struct DimOverflowError : VolumeIoError {
    using VolumeIoError::VolumeIoError;
};
struct TruncatedPayloadError : VolumeIoError {
    using VolumeIoError::VolumeIoError;
};

void write_rvol(const Volume& vol, const std::string& path);
Volume read_rvol(const std::string& path);

// per-slice min-max rescale to [0,1]; a constant slice maps to all zeros
void normalize_slice(float* data, int64_t count);
void normalize_volume_slices(Volume& vol);

// align-corners bilinear resize of one [h,w] image to [dh,dw]
void bilinear_resize(const float* src, int h, int w, float* dst, int dh, int dw);

}  // namespace bcgan
