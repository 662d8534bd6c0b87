#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bcgan/dataset.hpp"
#include "bcgan/graph.hpp"
#include "bcgan/networks.hpp"
#include "bcgan/rng.hpp"

namespace bcgan {

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    float learning_rate = 2e-4f;
    float beta1 = 0.5f;
    float beta2 = 0.999f;
    float adam_epsilon = 1e-8f;
    int batch_size = 8;
    int epochs = 20;
    double lambda_l1 = 100.0;
    double lambda_kl = 100.0;
    double temperature = 0.1;
    double c_w = 1e-6;  // weight-decay coefficient of the dropout regularizer
    double c_d = 1e-5;  // entropy coefficient of the dropout regularizer
    int resize_to = 36;
    int crop_to = 32;
    uint64_t seed = 1234;

    void validate() const;
};

// graph builders for the loss terms, shared by the training loop and tests

Node bce_with_logits(Graph& g, Node logits, double target);

struct GenLossNodes {
    Node total;  // gan + lambda_l1 * l1 + lambda_kl * kl
    Node gan;    // bce(d_fake_logits, 1)
    Node l1;     // mean |fake - real|, unweighted
    Node kl;     // regularizer value, unweighted
};
GenLossNodes generator_loss(Graph& g, Node d_fake_logits, Node fake, Node real, Node kl_reg,
                            double lambda_l1, double lambda_kl);

Node discriminator_loss(Graph& g, Node d_real_logits, Node d_fake_logits);

// bilinear-resize both images to resize_to^2, then cut one shared random
// crop_to^2 window; out buffers hold crop_to^2 floats each
void augment_pair(const float* a, const float* b, int h, int w, int resize_to, int crop_to,
                  RngStream& rs, float* out_a, float* out_b);

struct EpochStats {
    int epoch = 0;  // 1-based
    double d_loss = 0.0, g_gan = 0.0, g_l1 = 0.0, g_kl = 0.0;
    std::vector<double> dropout_p;  // learned p per concrete layer at epoch end
};

struct TrainResult {
    std::vector<EpochStats> history;
    std::string final_checkpoint;  // empty when out_dir was empty
};

struct TrainIo {
    std::string out_dir;  // empty: keep everything in memory (tests)
    bool resume = false;
    bool quiet = false;
};

// Alternating GAN training over all slices of the given subjects. Per batch:
// one discriminator Adam step on (x,y) vs (x, G(x)) with the generator output
// detached, then one generator Adam step against the just-updated
// discriminator. Writes loss_history.csv plus per-epoch checkpoints and a
// training-state sidecar (optimizer moments, discriminator, counters) that
// makes an interrupted run resumable.
TrainResult train(const std::vector<SubjectData>& subjects, UNetGenerator& gen,
                  PatchDiscriminator& disc, const TrainConfig& cfg, const TrainIo& io);

}  // namespace bcgan
