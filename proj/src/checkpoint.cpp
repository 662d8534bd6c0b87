#include "bcgan/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <map>

namespace bcgan {

namespace {

constexpr char kMagic[5] = {'B', 'C', 'G', 'W', '1'};

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_u32(std::FILE* f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    if (std::fwrite(b, 1, 4, f) != 4) throw CheckpointError("checkpoint: short write");
}

uint32_t read_u32(std::FILE* f, const std::string& what) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4)
        throw CheckpointError("checkpoint: truncated while reading " + what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_floats(std::FILE* f, const float* data, size_t count) {
    // float payloads are stored little-endian; this code targets
    // little-endian hosts and writes the in-memory representation directly
    if (count > 0 && std::fwrite(data, sizeof(float), count, f) != count)
        throw CheckpointError("checkpoint: short write");
}

void read_floats(std::FILE* f, float* data, size_t count, const std::string& name) {
    if (count > 0 && std::fread(data, sizeof(float), count, f) != count)
        throw CheckpointError("checkpoint: truncated payload for tensor '" + name + "'");
}

std::string read_name(std::FILE* f) {
    uint32_t len = read_u32(f, "name length");
    if (len > 4096) throw CheckpointError("checkpoint: implausible name length");
    std::string name(len, '\0');
    if (len > 0 && std::fread(name.data(), 1, len, f) != len)
        throw CheckpointError("checkpoint: truncated tensor name");
    return name;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedBufferRef>& refs) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw CheckpointError("checkpoint: cannot open for writing: " + path);
    if (std::fwrite(kMagic, 1, 5, f.get()) != 5)
        throw CheckpointError("checkpoint: short write");
    write_u32(f.get(), static_cast<uint32_t>(refs.size()));
    for (const auto& r : refs) {
        write_u32(f.get(), static_cast<uint32_t>(r.name.size()));
        if (!r.name.empty() &&
            std::fwrite(r.name.data(), 1, r.name.size(), f.get()) != r.name.size())
            throw CheckpointError("checkpoint: short write");
        write_u32(f.get(), static_cast<uint32_t>(r.extents.size()));
        size_t count = 1;
        for (uint32_t e : r.extents) {
            write_u32(f.get(), e);
            count *= e;
        }
        if (count != r.count)
            throw CheckpointError("checkpoint: extents of '" + r.name +
                                  "' do not match its element count");
        write_floats(f.get(), r.data, r.count);
    }
    if (std::fflush(f.get()) != 0) throw CheckpointError("checkpoint: flush failed");
}

void load_checkpoint(const std::string& path, std::vector<NamedBufferRef>& refs) {
    auto stored = read_checkpoint(path);
    std::map<std::string, const NamedTensorData*> by_name;
    for (const auto& t : stored) {
        if (!by_name.emplace(t.name, &t).second)
            throw CheckpointError("checkpoint: duplicate tensor '" + t.name + "' in " + path);
    }
    std::vector<bool> used(stored.size(), false);
    for (auto& r : refs) {
        auto it = by_name.find(r.name);
        if (it == by_name.end())
            throw CheckpointError("checkpoint: missing tensor '" + r.name + "' in " + path);
        const NamedTensorData& t = *it->second;
        if (t.extents != r.extents) {
            std::string want, got;
            for (uint32_t e : r.extents) want += std::to_string(e) + " ";
            for (uint32_t e : t.extents) got += std::to_string(e) + " ";
            throw CheckpointError("checkpoint: shape mismatch for '" + r.name + "': expected [ " +
                                  want + "], file has [ " + got + "]");
        }
        std::memcpy(r.data, t.data.data(), t.data.size() * sizeof(float));
        used[static_cast<size_t>(it->second - stored.data())] = true;
    }
    for (size_t i = 0; i < stored.size(); ++i) {
        if (!used[i])
            throw CheckpointError("checkpoint: unexpected tensor '" + stored[i].name + "' in " +
                                  path);
    }
}

std::vector<NamedTensorData> read_checkpoint(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw CheckpointError("checkpoint: cannot open: " + path);
    char magic[5];
    if (std::fread(magic, 1, 5, f.get()) != 5 || std::memcmp(magic, kMagic, 5) != 0)
        throw CheckpointError("checkpoint: bad magic in " + path);
    uint32_t count = read_u32(f.get(), "tensor count");
    std::vector<NamedTensorData> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        NamedTensorData t;
        t.name = read_name(f.get());
        uint32_t rank = read_u32(f.get(), "rank of '" + t.name + "'");
        if (rank > 8) throw CheckpointError("checkpoint: implausible rank for '" + t.name + "'");
        size_t n = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            uint32_t e = read_u32(f.get(), "extent of '" + t.name + "'");
            if (e == 0 || n > (1u << 28) / std::max<uint32_t>(e, 1))
                throw CheckpointError("checkpoint: bad extents for '" + t.name + "'");
            t.extents.push_back(e);
            n *= e;
        }
        t.data.resize(n);
        read_floats(f.get(), t.data.data(), n, t.name);
        out.push_back(std::move(t));
    }
    // the container must end exactly after the last payload
    unsigned char extra;
    if (std::fread(&extra, 1, 1, f.get()) == 1)
        throw CheckpointError("checkpoint: trailing bytes after last tensor in " + path);
    return out;
}

}  // namespace bcgan
