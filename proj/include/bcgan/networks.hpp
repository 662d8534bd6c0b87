#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "bcgan/dropout.hpp"
#include "bcgan/graph.hpp"
#include "bcgan/tensor.hpp"

// UNet-style generator and 5-layer patch discriminator. The classes own the
// parameter tensors; graphs are built on demand per batch shape and mode, so
// one network can serve training and inference graphs simultaneously (they
// share parameters and batchnorm running statistics).

namespace bcgan {

enum class DropoutKind { none, concrete, monte_carlo };
enum class RunMode { train, eval_stochastic, eval_deterministic };

struct GeneratorSpec {
    int input_size = 32;
    int levels = 4;
    int base_channels = 16;
    int in_channels = 1;
    int out_channels = 1;
    DropoutKind dropout_kind = DropoutKind::concrete;
    std::vector<int> dropout_positions{2, 3, 4};  // deepest decoder block = 1
    double mc_rate = 0.5;
    double temperature = 0.1;
    double weight_reg_coeff = 1e-6;   // c_w
    double dropout_reg_coeff = 1e-5;  // c_d
    double init_dropout_p = 0.1;

    void validate() const;
};

struct DiscriminatorSpec {
    int base_channels = 16;
    int in_channels = 2;  // channel-concatenated (source, target)

    void validate() const;
};

struct Param {
    std::string name;
    Tensor tensor;
};

// named view of a float buffer for checkpointing (parameters + bn stats)
struct NamedBufferRef {
    std::string name;
    std::vector<uint32_t> extents;
    float* data = nullptr;
    int64_t count = 0;
};

class UNetGenerator {
  public:
    UNetGenerator(GeneratorSpec spec, uint64_t seed);

    struct Built {
        Node out;
        // one noise tensor per dropout layer, ordered by position; refill via
        // fill_noise before every stochastic pass
        std::vector<Tensor> noise;
    };
    Built build(Graph& g, Node x, RunMode mode) const;

    // per-layer concrete regularizers summed; constant zero for other kinds
    Node regularizer(Graph& g) const;

    void fill_noise(std::vector<Tensor>& noise, uint64_t seed, uint64_t pass) const;

    std::vector<Param>& parameters() { return params_; }
    const std::vector<Param>& parameters() const { return params_; }
    std::vector<NamedBufferRef> checkpoint_refs();
    const GeneratorSpec& spec() const { return spec_; }

    // learned drop probabilities, one per concrete layer (position order)
    std::vector<double> dropout_probabilities() const;

    // sum of output channels over concrete-dropout layers; the entropy term
    // of the regularizer is bounded below by -c_d * this * ln 2
    int64_t dropout_channel_total() const;

  private:
    struct Block {
        Tensor w, b, gamma, beta;
        bool has_bias = false, has_bn = false;
        std::shared_ptr<BnStateT<float>> bn;
        int in_c = 0, out_c = 0;
        bool has_dropout = false;
        Tensor logit_p;  // concrete only
    };

    GeneratorSpec spec_;
    std::vector<Block> enc_, dec_;
    std::vector<Param> params_;
    Tensor zero_reg_;
};

class PatchDiscriminator {
  public:
    PatchDiscriminator(DiscriminatorSpec spec, uint64_t seed);

    // xy: channel-concatenated (source, target) batch; returns the logit map
    Node build(Graph& g, Node xy, RunMode mode) const;

    std::vector<Param>& parameters() { return params_; }
    const std::vector<Param>& parameters() const { return params_; }
    std::vector<NamedBufferRef> checkpoint_refs();
    const DiscriminatorSpec& spec() const { return spec_; }

    // spatial extent of the logit map for a given square input
    static int logit_map_extent(int input_size);

  private:
    struct Layer {
        Tensor w, b, gamma, beta;
        bool has_bias = false, has_bn = false;
        std::shared_ptr<BnStateT<float>> bn;
        int stride = 1;
    };

    DiscriminatorSpec spec_;
    std::vector<Layer> layers_;
    std::vector<Param> params_;
};

// one-shot eager forward; builds a fresh graph internally
Tensor generator_forward(const UNetGenerator& net, const Tensor& x, RunMode mode, uint64_t seed,
                         uint64_t pass);

}  // namespace bcgan
