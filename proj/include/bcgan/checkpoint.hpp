#pragma once

#include <string>
#include <vector>

#include "bcgan/networks.hpp"

// Named-tensor checkpoint container: magic "BCGW1", a tensor count, then per
// tensor its name, rank, extents and raw float32 payload (all little-endian).
// Also used for the optimizer-state sidecar, which is just another set of
// named buffers.

namespace bcgan {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void save_checkpoint(const std::string& path, const std::vector<NamedBufferRef>& refs);

// load into the given buffers by name; every ref must be present with the
// exact extents, and the file must not carry unknown names
void load_checkpoint(const std::string& path, std::vector<NamedBufferRef>& refs);

struct NamedTensorData {
    std::string name;
    std::vector<uint32_t> extents;
    std::vector<float> data;
};

std::vector<NamedTensorData> read_checkpoint(const std::string& path);

}  // namespace bcgan
