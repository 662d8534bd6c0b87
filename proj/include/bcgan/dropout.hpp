#pragma once

#include <cmath>
#include <stdexcept>

#include "bcgan/graph.hpp"
#include "bcgan/rng.hpp"
#include "bcgan/tensor.hpp"

// Concrete dropout (learned drop probability via a sigmoid relaxation) and
// the fixed-rate Monte Carlo dropout baseline. Masks are per (batch, channel)
// and kept channels are rescaled by 1/(1-p) so activation expectations stay
// put at train and test time alike.

namespace bcgan {

enum class DropoutMode { stochastic, deterministic };

template <class T>
struct ConcreteDropoutParamsT {
    TensorT<T> logit_p;              // trainable scalar, p = sigmoid(logit_p)
    double temperature = 0.1;        // t
    double weight_reg_coeff = 1e-6;  // c_w
    double dropout_reg_coeff = 1e-5; // c_d
    int input_channels = 0;          // K, gated channel count

    double p() const { return 1.0 / (1.0 + std::exp(-double(logit_p.item()))); }
};
using ConcreteDropoutParams = ConcreteDropoutParamsT<float>;

struct BernoulliDropoutParams {
    double rate = 0.5;
};

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

// relaxed gate; z near 1 means the channel is dropped
inline double concrete_gate(double p, double t, double u) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("concrete_gate: p outside (0,1)");
    if (!(t > 0.0)) throw std::invalid_argument("concrete_gate: temperature must be positive");
    if (!(u > 0.0 && u < 1.0))
        throw std::invalid_argument("concrete_gate: u in {0,1} has an infinite logit");
    double z = (logit(p) + logit(u)) / t;
    return 1.0 / (1.0 + std::exp(-z));
}

// binary entropy in nats, with 0*log(0) := 0
inline double bernoulli_entropy(double p) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("bernoulli_entropy: p outside [0,1]");
    double h = 0.0;
    if (p > 0.0) h -= p * std::log(p);
    if (p < 1.0) h -= (1.0 - p) * std::log(1.0 - p);
    return h;
}

// c_w * (1-p) * ||M||^2 - c_d * K * H(p)
template <class T>
double concrete_regularizer(const ConcreteDropoutParamsT<T>& params, double weight_sq_norm) {
    if (weight_sq_norm < 0.0)
        throw std::invalid_argument("concrete_regularizer: negative squared norm");
    double p = params.p();
    return params.weight_reg_coeff * (1.0 - p) * weight_sq_norm -
           params.dropout_reg_coeff * double(params.input_channels) * bernoulli_entropy(p);
}

// uniform noise in logit space, clamped away from the edges the gate rejects
template <class T>
void fill_concrete_noise(TensorT<T>& noise, RngStream& rs) {
    T* d = noise.data();
    for (int64_t i = 0; i < noise.size(); ++i) {
        double u = rs.uniform();
        u = std::min(std::max(u, 1e-7), 1.0 - 1e-7);
        d[i] = T(logit(u));
    }
}

// hard Bernoulli masks with inverted scaling baked in: 0 or 1/(1-rate)
template <class T>
void fill_mc_mask(TensorT<T>& mask, double rate, RngStream& rs) {
    T* d = mask.data();
    T keep = T(1.0 / (1.0 - rate));
    for (int64_t i = 0; i < mask.size(); ++i) d[i] = rs.uniform() < rate ? T(0) : keep;
}

// Graph attachment for one concrete layer. The returned noise tensor holds
// logit(u) per (batch, channel); refill it before every stochastic pass.
// p reaches the gradient through the gate and through the 1/(1-p) rescale.
template <class T>
struct DropoutTapT {
    TensorT<T> noise;  // logit(u) for concrete, premultiplied mask for MC
    NodePtrT<T> out;
};

template <class T>
DropoutTapT<T> attach_concrete(GraphT<T>& g, NodePtrT<T> x, const TensorT<T>& logit_p,
                               double temperature) {
    if (x->shape.size() != 4)
        throw std::invalid_argument("attach_concrete: input must be 4-D");
    if (numel(logit_p.shape()) != 1)
        throw std::invalid_argument("attach_concrete: logit_p must be a scalar tensor");
    Shape gate_shape{x->shape[0], x->shape[1], 1, 1};
    DropoutTapT<T> tap;
    tap.noise = TensorT<T>(gate_shape);
    auto lp = g.leaf(logit_p);
    auto u = g.leaf(tap.noise);
    auto pre = g.scalar_mul(g.add(g.broadcast_to(lp, gate_shape), u), 1.0 / temperature);
    auto keep = g.scalar_affine(g.sigmoid(pre), -1.0, 1.0);  // 1 - gate
    auto inv = g.reciprocal(g.scalar_affine(g.sigmoid(lp), -1.0, 1.0));  // 1/(1-p)
    auto scale = g.mul(keep, g.broadcast_to(inv, gate_shape));
    tap.out = g.channel_mul(x, scale);
    return tap;
}

template <class T>
DropoutTapT<T> attach_mc(GraphT<T>& g, NodePtrT<T> x) {
    if (x->shape.size() != 4) throw std::invalid_argument("attach_mc: input must be 4-D");
    DropoutTapT<T> tap;
    tap.noise = TensorT<T>({x->shape[0], x->shape[1], 1, 1}, T(1));
    tap.out = g.channel_mul(x, g.leaf(tap.noise));
    return tap;
}

// Regularizer subgraph for one layer: weights enter via a shared leaf so the
// same tensor also drives the data path. The 1e-12 shift keeps log total
// when a learned p saturates.
template <class T>
NodePtrT<T> concrete_regularizer_node(GraphT<T>& g, const TensorT<T>& logit_p,
                                      const TensorT<T>& weights, double c_w, double c_d, int k) {
    auto p = g.sigmoid(g.leaf(logit_p));
    auto q = g.scalar_affine(p, -1.0, 1.0);  // 1 - p
    auto wsq = g.sum(g.square(g.leaf(weights)));
    auto wterm = g.scalar_mul(g.mul(q, wsq), c_w);
    auto plogp = g.mul(p, g.log(g.scalar_affine(p, 1.0, 1e-12)));
    auto qlogq = g.mul(q, g.log(g.scalar_affine(q, 1.0, 1e-12)));
    auto entropy = g.scalar_mul(g.add(plogp, qlogq), -1.0);
    return g.sub(wterm, g.scalar_mul(entropy, c_d * double(k)));
}

// Eager application used by the relaxation-law tests; the training path goes
// through attach_concrete instead.
template <class T>
TensorT<T> concrete_apply(const TensorT<T>& x, const ConcreteDropoutParamsT<T>& params,
                          RngStream& rs, DropoutMode mode) {
    if (x.shape().size() != 4) throw std::invalid_argument("concrete_apply: input must be 4-D");
    if (x.shape()[1] != params.input_channels)
        throw std::invalid_argument("concrete_apply: channel count does not match params K");
    if (mode == DropoutMode::deterministic) return x.clone();
    double p = params.p();
    TensorT<T> out(x.shape());
    int64_t plane = int64_t(x.shape()[2]) * x.shape()[3];
    const T* src = x.data();
    T* dst = out.data();
    for (int64_t r = 0; r < int64_t(x.shape()[0]) * x.shape()[1]; ++r) {
        double u = std::min(std::max(rs.uniform(), 1e-7), 1.0 - 1e-7);
        T s = T((1.0 - concrete_gate(p, params.temperature, u)) / (1.0 - p));
        for (int64_t i = 0; i < plane; ++i) dst[r * plane + i] = src[r * plane + i] * s;
    }
    return out;
}

template <class T>
TensorT<T> mc_dropout_apply(const TensorT<T>& x, const BernoulliDropoutParams& params,
                            RngStream& rs, DropoutMode mode) {
    if (x.shape().size() != 4) throw std::invalid_argument("mc_dropout_apply: input must be 4-D");
    if (!(params.rate >= 0.0 && params.rate < 1.0))
        throw std::invalid_argument("mc_dropout_apply: rate outside [0,1)");
    if (mode == DropoutMode::deterministic || params.rate == 0.0) return x.clone();
    TensorT<T> out(x.shape());
    int64_t plane = int64_t(x.shape()[2]) * x.shape()[3];
    const T* src = x.data();
    T* dst = out.data();
    T keep = T(1.0 / (1.0 - params.rate));
    for (int64_t r = 0; r < int64_t(x.shape()[0]) * x.shape()[1]; ++r) {
        T s = rs.uniform() < params.rate ? T(0) : keep;
        for (int64_t i = 0; i < plane; ++i) dst[r * plane + i] = src[r * plane + i] * s;
    }
    return out;
}

}  // namespace bcgan
