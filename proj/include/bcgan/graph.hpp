#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "bcgan/kernels.hpp"
#include "bcgan/tensor.hpp"
#include "bcgan/threads.hpp"

// Lazy computation graph with reverse-mode differentiation. Nodes get dense
// ids in construction order, inputs always precede outputs, and evaluation
// walks ids in ascending order while backprop walks them descending. That
// fixed order (plus the static chunking in kernels.hpp) is what makes runs
// reproducible.

namespace bcgan {

struct GraphError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class OpKind : uint8_t {
    leaf,
    conv2d,
    conv_transpose2d,
    batchnorm2d,
    leaky_relu,
    relu,
    sigmoid,
    tanh_op,
    concat_channels,
    add,
    sub,
    mul,
    abs_op,
    square,
    log_op,
    reciprocal,
    scalar_affine,
    mean_all,
    sum_all,
    broadcast_to,
    channel_mul,
    bce_logits,
};

inline const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::leaf: return "leaf";
        case OpKind::conv2d: return "conv2d";
        case OpKind::conv_transpose2d: return "conv_transpose2d";
        case OpKind::batchnorm2d: return "batchnorm2d";
        case OpKind::leaky_relu: return "leaky_relu";
        case OpKind::relu: return "relu";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::tanh_op: return "tanh";
        case OpKind::concat_channels: return "concat_channels";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::abs_op: return "abs";
        case OpKind::square: return "square";
        case OpKind::log_op: return "log";
        case OpKind::reciprocal: return "reciprocal";
        case OpKind::scalar_affine: return "scalar_affine";
        case OpKind::mean_all: return "mean";
        case OpKind::sum_all: return "sum";
        case OpKind::broadcast_to: return "broadcast_to";
        case OpKind::channel_mul: return "channel_mul";
        case OpKind::bce_logits: return "bce_logits";
    }
    return "?";
}

// Running statistics shared between every graph application of one batchnorm
// layer. The per-forward moments needed by backward live per node inside the
// Evaluation, because several applications of the same layer (e.g. the
// discriminator run on real and fake pairs) would trample a single buffer.
template <class T>
struct BnStateT {
    std::vector<T> running_mean, running_var;

    explicit BnStateT(int channels) : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

template <class T>
struct NodeT {
    int id = -1;
    OpKind kind = OpKind::leaf;
    Shape shape;
    std::vector<std::shared_ptr<NodeT<T>>> inputs;

    TensorT<T> value;  // leaf payload only

    // op attributes (used by the kinds that need them)
    int stride = 1, pad = 0;
    double eps = 1e-5, momentum = 0.1;
    bool training = true;
    std::shared_ptr<BnStateT<T>> bn;
    double alpha = 1.0, beta = 0.0;  // scalar_affine: alpha*x + beta; leaky slope in alpha
    double target = 0.0;             // bce_logits label
};

template <class T>
using NodePtrT = std::shared_ptr<NodeT<T>>;

using Node = NodePtrT<float>;
using NodeD = NodePtrT<double>;

template <class T>
class GraphT {
  public:
    // Leaves are cached per underlying tensor storage, so the same parameter
    // referenced from several places is one node and its gradient
    // contributions accumulate.
    NodePtrT<T> leaf(const TensorT<T>& t) {
        auto it = leaf_by_storage_.find(t.storage_id());
        if (it != leaf_by_storage_.end()) return nodes_[it->second];
        auto n = make(OpKind::leaf, t.shape(), {});
        n->value = t;
        leaf_by_storage_[t.storage_id()] = n->id;
        return n;
    }

    NodePtrT<T> conv2d(NodePtrT<T> x, NodePtrT<T> w, NodePtrT<T> bias, int stride, int pad) {
        require_rank(x, 4, "conv2d input");
        require_rank(w, 4, "conv2d weight");
        if (w->shape[2] != w->shape[3]) throw std::invalid_argument("conv2d: kernel must be square");
        if (x->shape[1] != w->shape[1])
            throw std::invalid_argument("conv2d: input has " + std::to_string(x->shape[1]) +
                                        " channels, weight expects " + std::to_string(w->shape[1]));
        auto d = kernels::Conv2dDims::make(x->shape[0], x->shape[1], x->shape[2], x->shape[3],
                                           w->shape[0], w->shape[2], stride, pad);
        if (bias && (bias->shape.size() != 1 || bias->shape[0] != d.out_c))
            throw std::invalid_argument("conv2d: bias shape must be [out_channels]");
        std::vector<NodePtrT<T>> in{x, w};
        if (bias) in.push_back(bias);
        auto n = make(OpKind::conv2d, {d.batch, d.out_c, d.out_h, d.out_w}, std::move(in));
        n->stride = stride;
        n->pad = pad;
        return n;
    }

    NodePtrT<T> conv_transpose2d(NodePtrT<T> x, NodePtrT<T> w, NodePtrT<T> bias, int stride,
                                 int pad) {
        require_rank(x, 4, "conv_transpose2d input");
        require_rank(w, 4, "conv_transpose2d weight");
        if (w->shape[2] != w->shape[3])
            throw std::invalid_argument("conv_transpose2d: kernel must be square");
        if (x->shape[1] != w->shape[0])
            throw std::invalid_argument("conv_transpose2d: input channels do not match weight");
        auto d = kernels::ConvT2dDims::make(x->shape[0], x->shape[1], x->shape[2], x->shape[3],
                                            w->shape[1], w->shape[2], stride, pad);
        if (bias && (bias->shape.size() != 1 || bias->shape[0] != d.out_c))
            throw std::invalid_argument("conv_transpose2d: bias shape must be [out_channels]");
        std::vector<NodePtrT<T>> in{x, w};
        if (bias) in.push_back(bias);
        auto n = make(OpKind::conv_transpose2d, {d.batch, d.out_c, d.out_h, d.out_w}, std::move(in));
        n->stride = stride;
        n->pad = pad;
        return n;
    }

    NodePtrT<T> batchnorm2d(NodePtrT<T> x, NodePtrT<T> gamma, NodePtrT<T> beta,
                            std::shared_ptr<BnStateT<T>> state, bool training, double eps = 1e-5,
                            double momentum = 0.1) {
        require_rank(x, 4, "batchnorm2d input");
        int c = x->shape[1];
        if (gamma->shape != Shape{c} || beta->shape != Shape{c})
            throw std::invalid_argument("batchnorm2d: gamma/beta must be [channels]");
        if (!state || int(state->running_mean.size()) != c)
            throw std::invalid_argument("batchnorm2d: state channel count mismatch");
        auto n = make(OpKind::batchnorm2d, x->shape, {x, gamma, beta});
        n->bn = std::move(state);
        n->training = training;
        n->eps = eps;
        n->momentum = momentum;
        return n;
    }

    NodePtrT<T> leaky_relu(NodePtrT<T> x, double slope) {
        auto n = make(OpKind::leaky_relu, x->shape, {x});
        n->alpha = slope;
        return n;
    }
    NodePtrT<T> relu(NodePtrT<T> x) { return make(OpKind::relu, x->shape, {x}); }
    NodePtrT<T> sigmoid(NodePtrT<T> x) { return make(OpKind::sigmoid, x->shape, {x}); }
    NodePtrT<T> tanh(NodePtrT<T> x) { return make(OpKind::tanh_op, x->shape, {x}); }
    NodePtrT<T> abs(NodePtrT<T> x) { return make(OpKind::abs_op, x->shape, {x}); }
    NodePtrT<T> square(NodePtrT<T> x) { return make(OpKind::square, x->shape, {x}); }
    NodePtrT<T> log(NodePtrT<T> x) { return make(OpKind::log_op, x->shape, {x}); }
    NodePtrT<T> reciprocal(NodePtrT<T> x) { return make(OpKind::reciprocal, x->shape, {x}); }

    NodePtrT<T> concat_channels(NodePtrT<T> a, NodePtrT<T> b) {
        require_rank(a, 4, "concat_channels lhs");
        require_rank(b, 4, "concat_channels rhs");
        if (a->shape[0] != b->shape[0] || a->shape[2] != b->shape[2] || a->shape[3] != b->shape[3])
            throw std::invalid_argument("concat_channels: batch/spatial extents differ: " +
                                        shape_str(a->shape) + " vs " + shape_str(b->shape));
        Shape s = a->shape;
        s[1] += b->shape[1];
        return make(OpKind::concat_channels, s, {a, b});
    }

    NodePtrT<T> add(NodePtrT<T> a, NodePtrT<T> b) { return binary(OpKind::add, a, b); }
    NodePtrT<T> sub(NodePtrT<T> a, NodePtrT<T> b) { return binary(OpKind::sub, a, b); }
    NodePtrT<T> mul(NodePtrT<T> a, NodePtrT<T> b) { return binary(OpKind::mul, a, b); }

    NodePtrT<T> scalar_mul(NodePtrT<T> x, double s) { return scalar_affine(x, s, 0.0); }
    NodePtrT<T> scalar_affine(NodePtrT<T> x, double a, double b) {
        auto n = make(OpKind::scalar_affine, x->shape, {x});
        n->alpha = a;
        n->beta = b;
        return n;
    }

    NodePtrT<T> mean(NodePtrT<T> x) { return make(OpKind::mean_all, {1}, {x}); }
    NodePtrT<T> sum(NodePtrT<T> x) { return make(OpKind::sum_all, {1}, {x}); }

    NodePtrT<T> broadcast_to(NodePtrT<T> x, Shape target) {
        if (numel(x->shape) != 1)
            throw std::invalid_argument("broadcast_to: source must be a single element");
        return make(OpKind::broadcast_to, std::move(target), {x});
    }

    // x[B,C,H,W] scaled per (batch, channel) by s[B,C,1,1]
    NodePtrT<T> channel_mul(NodePtrT<T> x, NodePtrT<T> s) {
        require_rank(x, 4, "channel_mul input");
        if (s->shape != Shape{x->shape[0], x->shape[1], 1, 1})
            throw std::invalid_argument("channel_mul: scale must be [B,C,1,1], got " +
                                        shape_str(s->shape));
        return make(OpKind::channel_mul, x->shape, {x, s});
    }

    // mean over elements of sigmoid cross-entropy against a constant label
    NodePtrT<T> bce_logits(NodePtrT<T> logits, double target) {
        auto n = make(OpKind::bce_logits, Shape{1}, {logits});
        n->target = target;
        return n;
    }

    int node_count() const { return int(nodes_.size()); }
    const NodePtrT<T>& node(int id) const { return nodes_[id]; }

  private:
    NodePtrT<T> binary(OpKind k, NodePtrT<T> a, NodePtrT<T> b) {
        if (a->shape != b->shape)
            throw std::invalid_argument(std::string(op_name(k)) + ": shapes differ: " +
                                        shape_str(a->shape) + " vs " + shape_str(b->shape));
        return make(k, a->shape, {a, b});
    }

    void require_rank(const NodePtrT<T>& n, int rank, const char* what) {
        if (int(n->shape.size()) != rank)
            throw std::invalid_argument(std::string(what) + " must have rank " +
                                        std::to_string(rank) + ", got " + shape_str(n->shape));
    }

    NodePtrT<T> make(OpKind k, Shape shape, std::vector<NodePtrT<T>> inputs) {
        auto n = std::make_shared<NodeT<T>>();
        n->id = int(nodes_.size());
        n->kind = k;
        n->shape = std::move(shape);
        n->inputs = std::move(inputs);
        nodes_.push_back(n);
        return n;
    }

    std::vector<NodePtrT<T>> nodes_;
    std::unordered_map<const void*, int> leaf_by_storage_;
};

using Graph = GraphT<float>;
using GraphD = GraphT<double>;

// One evaluation pass over a graph: per-node memo for forward values and a
// separate buffer for adjoints. Reusable across roots of the same graph;
// values computed for one root are reused for another within the same
// Evaluation.
template <class T>
class EvalT {
  public:
    explicit EvalT(GraphT<T>& g) : graph_(g) {}

    const std::vector<T>& forward(const NodePtrT<T>& out) {
        grow();
        std::vector<int> order = pending_ascending(out);
        for (int id : order) compute(graph_.node(id));
        return values_[out->id];
    }

    // Backprop d(loss)/d(leaf) into every reachable leaf tensor that has
    // requires_grad set. loss must be a single element and already forwarded
    // (forward() is called here if not).
    void backward(const NodePtrT<T>& loss) {
        if (numel(loss->shape) != 1) throw GraphError("backward: loss must be a single element");
        forward(loss);
        std::vector<int> reach = reachable_descending(loss);
        if (grads_.size() < values_.size()) grads_.resize(values_.size());
        for (int id : reach) {
            grads_[id].assign(values_[id].size(), T(0));
        }
        grads_[loss->id][0] = T(1);
        for (int id : reach) {
            const auto& n = graph_.node(id);
            if (n->kind == OpKind::leaf) {
                if (n->value.requires_grad()) {
                    T* g = n->value.grad();
                    const auto& gin = grads_[id];
                    for (size_t i = 0; i < gin.size(); ++i) g[i] += gin[i];
                }
                continue;
            }
            propagate(n);
        }
    }

    const std::vector<T>& value(const NodePtrT<T>& n) const {
        if (n->id >= int(computed_.size()) || !computed_[n->id])
            throw GraphError("value requested for a node that was not evaluated");
        return values_[n->id];
    }

    // forget all memoized values (buffers are kept for reuse)
    void reset() { std::fill(computed_.begin(), computed_.end(), 0); }

    // Import already-computed values for root's subgraph from another
    // evaluation of the same graph. Lets a later evaluation reuse a forward
    // pass made before some unrelated leaves were mutated.
    void adopt(const EvalT<T>& src, const NodePtrT<T>& root) {
        grow();
        std::vector<int> stack{root->id};
        std::vector<uint8_t> seen(values_.size(), 0);
        while (!stack.empty()) {
            int id = stack.back();
            stack.pop_back();
            if (seen[id] || computed_[id]) continue;
            seen[id] = 1;
            if (id >= int(src.computed_.size()) || !src.computed_[id])
                throw GraphError("adopt: source evaluation never computed node " +
                                 std::to_string(id));
            values_[id] = src.values_[id];
            bn_scratch_[id] = src.bn_scratch_[id];
            computed_[id] = 1;
            for (const auto& in : graph_.node(id)->inputs)
                if (!seen[in->id] && !computed_[in->id]) stack.push_back(in->id);
        }
    }

    TensorT<T> tensor_value(const NodePtrT<T>& n) {
        forward(n);
        TensorT<T> t(n->shape);
        const auto& v = values_[n->id];
        std::copy(v.begin(), v.end(), t.data());
        return t;
    }

  private:
    void grow() {
        size_t n = size_t(graph_.node_count());
        if (values_.size() < n) {
            values_.resize(n);
            bn_scratch_.resize(n);
            computed_.resize(n, 0);
        }
    }

    // ids of not-yet-computed nodes reachable from out, ascending
    std::vector<int> pending_ascending(const NodePtrT<T>& out) {
        std::vector<int> order;
        std::vector<int> stack{out->id};
        std::vector<uint8_t> seen(values_.size(), 0);
        while (!stack.empty()) {
            int id = stack.back();
            stack.pop_back();
            if (seen[id] || computed_[id]) continue;
            seen[id] = 1;
            order.push_back(id);
            for (const auto& in : graph_.node(id)->inputs)
                if (!seen[in->id] && !computed_[in->id]) stack.push_back(in->id);
        }
        std::sort(order.begin(), order.end());
        return order;
    }

    std::vector<int> reachable_descending(const NodePtrT<T>& out) {
        std::vector<int> order;
        std::vector<int> stack{out->id};
        std::vector<uint8_t> seen(values_.size(), 0);
        while (!stack.empty()) {
            int id = stack.back();
            stack.pop_back();
            if (seen[id]) continue;
            seen[id] = 1;
            order.push_back(id);
            for (const auto& in : graph_.node(id)->inputs)
                if (!seen[in->id]) stack.push_back(in->id);
        }
        std::sort(order.begin(), order.end(), std::greater<int>());
        return order;
    }

    void compute(const NodePtrT<T>& n) {
        auto& out = values_[n->id];
        out.assign(size_t(numel(n->shape)), T(0));
        switch (n->kind) {
            case OpKind::leaf: {
                const T* src = n->value.data();
                std::copy(src, src + out.size(), out.begin());
                break;
            }
            case OpKind::conv2d: {
                auto d = conv_dims(n);
                const T* bias = n->inputs.size() > 2 ? in(n, 2) : nullptr;
                kernels::conv2d_forward(in(n, 0), in(n, 1), bias, out.data(), d);
                break;
            }
            case OpKind::conv_transpose2d: {
                auto d = convt_dims(n);
                const T* bias = n->inputs.size() > 2 ? in(n, 2) : nullptr;
                kernels::convt2d_forward(in(n, 0), in(n, 1), bias, out.data(), d);
                break;
            }
            case OpKind::batchnorm2d: {
                const Shape& s = n->inputs[0]->shape;
                int c = s[1];
                auto& scratch = bn_scratch_[n->id];
                scratch.assign(size_t(2) * c, T(0));  // batch mean, then invstd
                kernels::bn_forward(in(n, 0), in(n, 1), in(n, 2), out.data(), s[0], s[1], s[2],
                                    s[3], n->eps, n->training, n->momentum,
                                    n->bn->running_mean.data(), n->bn->running_var.data(),
                                    scratch.data(), scratch.data() + c);
                break;
            }
            case OpKind::leaky_relu: {
                const T* x = in(n, 0);
                T slope = T(n->alpha);
                map(out, [&](size_t i) { return x[i] > T(0) ? x[i] : slope * x[i]; });
                break;
            }
            case OpKind::relu: {
                const T* x = in(n, 0);
                map(out, [&](size_t i) { return x[i] > T(0) ? x[i] : T(0); });
                break;
            }
            case OpKind::sigmoid: {
                const T* x = in(n, 0);
                map(out, [&](size_t i) { return stable_sigmoid(x[i]); });
                break;
            }
            case OpKind::tanh_op: {
                const T* x = in(n, 0);
                map(out, [&](size_t i) { return std::tanh(x[i]); });
                break;
            }
            case OpKind::concat_channels: {
                copy_concat(n, out);
                break;
            }
            case OpKind::add: {
                const T* a = in(n, 0);
                const T* b = in(n, 1);
                map(out, [&](size_t i) { return a[i] + b[i]; });
                break;
            }
            case OpKind::sub: {
                const T* a = in(n, 0);
                const T* b = in(n, 1);
                map(out, [&](size_t i) { return a[i] - b[i]; });
                break;
            }
            case OpKind::mul: {
                const T* a = in(n, 0);
                const T* b = in(n, 1);
                map(out, [&](size_t i) { return a[i] * b[i]; });
                break;
            }
            case OpKind::abs_op: {
                const T* x = in(n, 0);
                map(out, [&](size_t i) { return std::abs(x[i]); });
                break;
            }
            case OpKind::square: {
                const T* x = in(n, 0);
                map(out, [&](size_t i) { return x[i] * x[i]; });
                break;
            }
            case OpKind::log_op: {
                const T* x = in(n, 0);
                map(out, [&](size_t i) { return std::log(x[i]); });
                break;
            }
            case OpKind::reciprocal: {
                const T* x = in(n, 0);
                map(out, [&](size_t i) { return T(1) / x[i]; });
                break;
            }
            case OpKind::scalar_affine: {
                const T* x = in(n, 0);
                T a = T(n->alpha), b = T(n->beta);
                map(out, [&](size_t i) { return a * x[i] + b; });
                break;
            }
            case OpKind::mean_all: {
                const auto& v = values_[n->inputs[0]->id];
                out[0] = T(parallel_reduce_sum(int64_t(v.size()),
                                               [&](int64_t i) { return double(v[i]); }) /
                           double(v.size()));
                break;
            }
            case OpKind::sum_all: {
                const auto& v = values_[n->inputs[0]->id];
                out[0] = T(parallel_reduce_sum(int64_t(v.size()),
                                               [&](int64_t i) { return double(v[i]); }));
                break;
            }
            case OpKind::broadcast_to: {
                T v = values_[n->inputs[0]->id][0];
                std::fill(out.begin(), out.end(), v);
                break;
            }
            case OpKind::channel_mul: {
                const T* x = in(n, 0);
                const T* s = in(n, 1);
                const Shape& sh = n->shape;
                int64_t plane = int64_t(sh[2]) * sh[3];
                parallel_for(int64_t(sh[0]) * sh[1], [&](int64_t r0, int64_t r1) {
                    for (int64_t r = r0; r < r1; ++r) {
                        T sc = s[r];
                        for (int64_t p = 0; p < plane; ++p) out[r * plane + p] = x[r * plane + p] * sc;
                    }
                });
                break;
            }
            case OpKind::bce_logits: {
                const auto& z = values_[n->inputs[0]->id];
                T t = T(n->target);
                double acc = parallel_reduce_sum(int64_t(z.size()), [&](int64_t i) {
                    double zi = double(z[i]);
                    // max(z,0) - z*t + log(1+exp(-|z|))
                    return (zi > 0 ? zi : 0.0) - zi * double(t) + std::log1p(std::exp(-std::abs(zi)));
                });
                out[0] = T(acc / double(z.size()));
                break;
            }
        }
        for (T v : out)
            if (!std::isfinite(double(v)))
                throw GraphError(std::string("non-finite value produced by op '") +
                                 op_name(n->kind) + "' (node " + std::to_string(n->id) + ")");
        computed_[n->id] = 1;
    }

    void propagate(const NodePtrT<T>& n) {
        const auto& g = grads_[n->id];
        switch (n->kind) {
            case OpKind::leaf:
                break;
            case OpKind::conv2d: {
                auto d = conv_dims(n);
                kernels::conv2d_backward(in(n, 0), in(n, 1), g.data(), gin_or_null(n, 0),
                                         gin_or_null(n, 1), gin_or_null(n, 2), d);
                break;
            }
            case OpKind::conv_transpose2d: {
                auto d = convt_dims(n);
                kernels::convt2d_backward(in(n, 0), in(n, 1), g.data(), gin_or_null(n, 0),
                                          gin_or_null(n, 1), gin_or_null(n, 2), d);
                break;
            }
            case OpKind::batchnorm2d: {
                const Shape& s = n->inputs[0]->shape;
                const auto& scratch = bn_scratch_[n->id];
                kernels::bn_backward(in(n, 0), in(n, 1), g.data(), gin_or_null(n, 0),
                                     gin_or_null(n, 1), gin_or_null(n, 2), s[0], s[1], s[2], s[3],
                                     n->training, scratch.data(), scratch.data() + s[1]);
                break;
            }
            case OpKind::leaky_relu: {
                const T* x = in(n, 0);
                T slope = T(n->alpha);
                accum(n, 0, [&](size_t i) { return g[i] * (x[i] > T(0) ? T(1) : slope); });
                break;
            }
            case OpKind::relu: {
                const T* x = in(n, 0);
                accum(n, 0, [&](size_t i) { return x[i] > T(0) ? g[i] : T(0); });
                break;
            }
            case OpKind::sigmoid: {
                const auto& y = values_[n->id];
                accum(n, 0, [&](size_t i) { return g[i] * y[i] * (T(1) - y[i]); });
                break;
            }
            case OpKind::tanh_op: {
                const auto& y = values_[n->id];
                accum(n, 0, [&](size_t i) { return g[i] * (T(1) - y[i] * y[i]); });
                break;
            }
            case OpKind::concat_channels: {
                backward_concat(n);
                break;
            }
            case OpKind::add: {
                accum(n, 0, [&](size_t i) { return g[i]; });
                accum(n, 1, [&](size_t i) { return g[i]; });
                break;
            }
            case OpKind::sub: {
                accum(n, 0, [&](size_t i) { return g[i]; });
                accum(n, 1, [&](size_t i) { return -g[i]; });
                break;
            }
            case OpKind::mul: {
                const T* a = in(n, 0);
                const T* b = in(n, 1);
                accum(n, 0, [&](size_t i) { return g[i] * b[i]; });
                accum(n, 1, [&](size_t i) { return g[i] * a[i]; });
                break;
            }
            case OpKind::abs_op: {
                const T* x = in(n, 0);
                accum(n, 0, [&](size_t i) { return x[i] > T(0) ? g[i] : (x[i] < T(0) ? -g[i] : T(0)); });
                break;
            }
            case OpKind::square: {
                const T* x = in(n, 0);
                accum(n, 0, [&](size_t i) { return T(2) * g[i] * x[i]; });
                break;
            }
            case OpKind::log_op: {
                const T* x = in(n, 0);
                accum(n, 0, [&](size_t i) { return g[i] / x[i]; });
                break;
            }
            case OpKind::reciprocal: {
                const auto& y = values_[n->id];
                accum(n, 0, [&](size_t i) { return -g[i] * y[i] * y[i]; });
                break;
            }
            case OpKind::scalar_affine: {
                T a = T(n->alpha);
                accum(n, 0, [&](size_t i) { return g[i] * a; });
                break;
            }
            case OpKind::mean_all: {
                auto& dst = grads_[n->inputs[0]->id];
                T s = g[0] / T(double(dst.size()));
                for (auto& v : dst) v += s;
                break;
            }
            case OpKind::sum_all: {
                auto& dst = grads_[n->inputs[0]->id];
                for (auto& v : dst) v += g[0];
                break;
            }
            case OpKind::broadcast_to: {
                double acc = 0.0;
                for (T v : g) acc += double(v);
                grads_[n->inputs[0]->id][0] += T(acc);
                break;
            }
            case OpKind::channel_mul: {
                const T* x = in(n, 0);
                const T* s = in(n, 1);
                auto& gx = grads_[n->inputs[0]->id];
                auto& gs = grads_[n->inputs[1]->id];
                const Shape& sh = n->shape;
                int64_t plane = int64_t(sh[2]) * sh[3];
                for (int64_t r = 0; r < int64_t(sh[0]) * sh[1]; ++r) {
                    double acc = 0.0;
                    for (int64_t p = 0; p < plane; ++p) {
                        gx[r * plane + p] += g[r * plane + p] * s[r];
                        acc += double(g[r * plane + p]) * double(x[r * plane + p]);
                    }
                    gs[r] += T(acc);
                }
                break;
            }
            case OpKind::bce_logits: {
                const auto& z = values_[n->inputs[0]->id];
                auto& gz = grads_[n->inputs[0]->id];
                T t = T(n->target);
                T s = g[0] / T(double(z.size()));
                for (size_t i = 0; i < z.size(); ++i) gz[i] += s * (stable_sigmoid(z[i]) - t);
                break;
            }
        }
    }

    static T stable_sigmoid(T x) {
        if (x >= T(0)) {
            T e = std::exp(-x);
            return T(1) / (T(1) + e);
        }
        T e = std::exp(x);
        return e / (T(1) + e);
    }

    kernels::Conv2dDims conv_dims(const NodePtrT<T>& n) const {
        const Shape& xs = n->inputs[0]->shape;
        const Shape& ws = n->inputs[1]->shape;
        return kernels::Conv2dDims::make(xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], n->stride,
                                         n->pad);
    }
    kernels::ConvT2dDims convt_dims(const NodePtrT<T>& n) const {
        const Shape& xs = n->inputs[0]->shape;
        const Shape& ws = n->inputs[1]->shape;
        return kernels::ConvT2dDims::make(xs[0], xs[1], xs[2], xs[3], ws[1], ws[2], n->stride,
                                          n->pad);
    }

    const T* in(const NodePtrT<T>& n, int i) const { return values_[n->inputs[i]->id].data(); }
    T* gin(const NodePtrT<T>& n, int i) { return grads_[n->inputs[i]->id].data(); }

    // a leaf that does not require grad absorbs nothing: skip the work
    static bool wants_grad(const NodePtrT<T>& n) {
        return n->kind != OpKind::leaf || n->value.requires_grad();
    }
    T* gin_or_null(const NodePtrT<T>& n, size_t i) {
        if (i >= n->inputs.size() || !wants_grad(n->inputs[i])) return nullptr;
        return grads_[n->inputs[i]->id].data();
    }

    template <class F>
    void map(std::vector<T>& out, F f) {
        parallel_for(int64_t(out.size()), [&](int64_t lo, int64_t hi) {
            for (int64_t i = lo; i < hi; ++i) out[size_t(i)] = f(size_t(i));
        });
    }

    template <class F>
    void accum(const NodePtrT<T>& n, int input, F f) {
        if (!wants_grad(n->inputs[input])) return;
        auto& dst = grads_[n->inputs[input]->id];
        parallel_for(int64_t(dst.size()), [&](int64_t lo, int64_t hi) {
            for (int64_t i = lo; i < hi; ++i) dst[size_t(i)] += f(size_t(i));
        });
    }

    void copy_concat(const NodePtrT<T>& n, std::vector<T>& out) {
        const Shape& s = n->shape;
        int64_t plane = int64_t(s[2]) * s[3];
        int ca = n->inputs[0]->shape[1], cb = n->inputs[1]->shape[1];
        const T* a = in(n, 0);
        const T* b = in(n, 1);
        for (int bi = 0; bi < s[0]; ++bi) {
            std::copy(a + int64_t(bi) * ca * plane, a + int64_t(bi + 1) * ca * plane,
                      out.begin() + int64_t(bi) * (ca + cb) * plane);
            std::copy(b + int64_t(bi) * cb * plane, b + int64_t(bi + 1) * cb * plane,
                      out.begin() + (int64_t(bi) * (ca + cb) + ca) * plane);
        }
    }

    void backward_concat(const NodePtrT<T>& n) {
        const auto& g = grads_[n->id];
        auto& ga = grads_[n->inputs[0]->id];
        auto& gb = grads_[n->inputs[1]->id];
        const Shape& s = n->shape;
        int64_t plane = int64_t(s[2]) * s[3];
        int ca = n->inputs[0]->shape[1], cb = n->inputs[1]->shape[1];
        for (int bi = 0; bi < s[0]; ++bi) {
            for (int64_t i = 0; i < int64_t(ca) * plane; ++i)
                ga[int64_t(bi) * ca * plane + i] += g[int64_t(bi) * (ca + cb) * plane + i];
            for (int64_t i = 0; i < int64_t(cb) * plane; ++i)
                gb[int64_t(bi) * cb * plane + i] += g[(int64_t(bi) * (ca + cb) + ca) * plane + i];
        }
    }

    GraphT<T>& graph_;
    std::vector<std::vector<T>> values_;
    std::vector<std::vector<T>> grads_;
    std::vector<std::vector<T>> bn_scratch_;
    std::vector<uint8_t> computed_;
};

using Eval = EvalT<float>;
using EvalD = EvalT<double>;

// one-shot evaluation of a single root
template <class T>
TensorT<T> evaluate(GraphT<T>& g, const NodePtrT<T>& out) {
    EvalT<T> ev(g);
    return ev.tensor_value(out);
}

// Central-difference gradient of a scalar-valued function of one tensor.
// Used by the gradient test oracles; deliberately independent of the graph
// machinery above.
template <class T, class F>
TensorT<T> finite_difference_gradient(F&& f, TensorT<T>& x, T h) {
    if (h <= T(0)) throw std::invalid_argument("finite_difference_gradient: h must be positive");
    TensorT<T> grad(x.shape());
    T* xd = x.data();
    for (int64_t i = 0; i < x.size(); ++i) {
        T keep = xd[i];
        xd[i] = keep + h;
        T up = f(x);
        xd[i] = keep - h;
        T dn = f(x);
        xd[i] = keep;
        if (!std::isfinite(double(up)) || !std::isfinite(double(dn)))
            throw GraphError("finite_difference_gradient: function returned a non-finite value");
        grad.data()[i] = (up - dn) / (T(2) * h);
    }
    return grad;
}

}  // namespace bcgan
