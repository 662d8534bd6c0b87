#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "bcgan/networks.hpp"
#include "bcgan/threads.hpp"

namespace bcgan {

struct AdamConfig {
    float learning_rate = 2e-4f;
    float beta1 = 0.5f;
    float beta2 = 0.999f;
    float epsilon = 1e-8f;
};

// Bias-corrected Adam over a fixed parameter list. Moment buffers are stored
// as float32 (so the optimizer sidecar round-trips exactly); the per-element
// update arithmetic runs in double.
class Adam {
   public:
    Adam(std::vector<Param> params, AdamConfig cfg, std::string state_prefix)
        : params_(std::move(params)), cfg_(cfg), prefix_(std::move(state_prefix)) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            size_t n = static_cast<size_t>(params_[i].tensor.size());
            m_[i].assign(n, 0.0f);
            v_[i].assign(n, 0.0f);
        }
    }

    void step() {
        steps_[0] += 1.0f;
        const double t = steps_[0];
        const double b1 = cfg_.beta1;
        const double b2 = cfg_.beta2;
        const double corr1 = 1.0 - std::pow(b1, t);
        const double corr2 = 1.0 - std::pow(b2, t);
        const double lr = cfg_.learning_rate;
        const double eps = cfg_.epsilon;
        for (size_t i = 0; i < params_.size(); ++i) {
            TensorT<float>& p = params_[i].tensor;
            if (!p.requires_grad())
                throw std::logic_error("adam: parameter '" + params_[i].name +
                                       "' has no gradient buffer");
            const float* g = p.grad();
            float* theta = p.data();
            float* m = m_[i].data();
            float* v = v_[i].data();
            parallel_for(p.size(), [&](int64_t lo, int64_t hi) {
                for (int64_t j = lo; j < hi; ++j) {
                    double gj = g[j];
                    double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * gj;
                    double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * gj * gj;
                    m[j] = static_cast<float>(mj);
                    v[j] = static_cast<float>(vj);
                    double mhat = static_cast<double>(m[j]) / corr1;
                    double vhat = static_cast<double>(v[j]) / corr2;
                    theta[j] = static_cast<float>(static_cast<double>(theta[j]) -
                                                  lr * mhat / (std::sqrt(vhat) + eps));
                }
            });
        }
    }

    int64_t steps() const { return static_cast<int64_t>(steps_[0]); }

    // named views of the moment buffers and step counter, for the sidecar
    std::vector<NamedBufferRef> state_refs() {
        std::vector<NamedBufferRef> refs;
        for (size_t i = 0; i < params_.size(); ++i) {
            const auto& shape = params_[i].tensor.shape();
            std::vector<uint32_t> ext;
            for (int e : shape) ext.push_back(static_cast<uint32_t>(e));
            refs.push_back(
                {prefix_ + "." + params_[i].name + ".m", ext, m_[i].data(), int64_t(m_[i].size())});
            refs.push_back(
                {prefix_ + "." + params_[i].name + ".v", ext, v_[i].data(), int64_t(v_[i].size())});
        }
        refs.push_back({prefix_ + ".steps", {1}, steps_, 1});
        return refs;
    }

   private:
    std::vector<Param> params_;
    AdamConfig cfg_;
    std::string prefix_;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
    float steps_[1] = {0.0f};
};

}  // namespace bcgan
