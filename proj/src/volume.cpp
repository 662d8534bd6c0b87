#include "bcgan/volume.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace bcgan {

namespace {

constexpr char kMagic[5] = {'R', 'V', 'O', 'L', '1'};
constexpr uint8_t kDtypeF32 = 0x01;
// generous per-volume cap; anything near it is a corrupt header, not data
constexpr uint64_t kMaxVoxels = uint64_t(1) << 31;

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw TruncatedPayloadError(path + ": truncated header");
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

}  // namespace

void write_rvol(const Volume& vol, const std::string& path) {
    if (vol.nx <= 0 || vol.ny <= 0 || vol.nz <= 0)
        throw std::invalid_argument("write_rvol: volume has no extent");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw VolumeIoError("cannot open for writing: " + path);
    os.write(kMagic, sizeof kMagic);
    os.put(char(kDtypeF32));
    put_u32(os, uint32_t(vol.nx));
    put_u32(os, uint32_t(vol.ny));
    put_u32(os, uint32_t(vol.nz));
    static_assert(sizeof(float) == 4);
    os.write(reinterpret_cast<const char*>(vol.v.data()),
             std::streamsize(vol.v.size() * sizeof(float)));
    if (!os) throw VolumeIoError("write failed: " + path);
}

Volume read_rvol(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw VolumeIoError("cannot open: " + path);
    char magic[5];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw BadMagicError(path + ": bad magic");
    int dtype = is.get();
    if (dtype != kDtypeF32)
        throw BadMagicError(path + ": unsupported dtype tag " + std::to_string(dtype));
    uint32_t nx = get_u32(is, path), ny = get_u32(is, path), nz = get_u32(is, path);
    if (nx == 0 || ny == 0 || nz == 0)
        throw DimOverflowError(path + ": zero extent in header");
    uint64_t count = uint64_t(nx) * ny * nz;
    if (count > kMaxVoxels)
        throw DimOverflowError(path + ": header extents overflow (" + std::to_string(nx) + "x" +
                               std::to_string(ny) + "x" + std::to_string(nz) + ")");
    Volume vol(static_cast<int>(nx), static_cast<int>(ny), static_cast<int>(nz));
    if (!is.read(reinterpret_cast<char*>(vol.v.data()), std::streamsize(count * sizeof(float))))
        throw TruncatedPayloadError(path + ": truncated payload");
    // trailing garbage is also a malformed file
    is.peek();
    if (!is.eof()) throw TruncatedPayloadError(path + ": payload longer than header extents");
    return vol;
}

void normalize_slice(float* data, int64_t count) {
    if (count <= 0) return;
    float lo = data[0], hi = data[0];
    for (int64_t i = 1; i < count; ++i) {
        lo = std::min(lo, data[i]);
        hi = std::max(hi, data[i]);
    }
    if (hi <= lo) {
        std::fill(data, data + count, 0.0f);
        return;
    }
    float inv = 1.0f / (hi - lo);
    for (int64_t i = 0; i < count; ++i) data[i] = (data[i] - lo) * inv;
}

void normalize_volume_slices(Volume& vol) {
    for (int z = 0; z < vol.nz; ++z) normalize_slice(vol.slice(z), int64_t(vol.nx) * vol.ny);
}

void bilinear_resize(const float* src, int h, int w, float* dst, int dh, int dw) {
    if (h <= 0 || w <= 0 || dh <= 0 || dw <= 0)
        throw std::invalid_argument("bilinear_resize: extents must be positive");
    double sy = dh > 1 ? double(h - 1) / double(dh - 1) : 0.0;
    double sx = dw > 1 ? double(w - 1) / double(dw - 1) : 0.0;
    for (int y = 0; y < dh; ++y) {
        double fy = y * sy;
        int y0 = int(fy);
        int y1 = std::min(y0 + 1, h - 1);
        double wy = fy - y0;
        for (int x = 0; x < dw; ++x) {
            double fx = x * sx;
            int x0 = int(fx);
            int x1 = std::min(x0 + 1, w - 1);
            double wx = fx - x0;
            double top = (1.0 - wx) * src[y0 * w + x0] + wx * src[y0 * w + x1];
            double bot = (1.0 - wx) * src[y1 * w + x0] + wx * src[y1 * w + x1];
            dst[y * dw + x] = float((1.0 - wy) * top + wy * bot);
        }
    }
}

}  // namespace bcgan
