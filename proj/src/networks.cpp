#include "bcgan/networks.hpp"

#include <algorithm>
#include <stdexcept>

#include "bcgan/rng.hpp"

namespace bcgan {

namespace {

Tensor normal_init(Shape shape, RngStream& rs, double stddev) {
    Tensor t(std::move(shape));
    float* d = t.data();
    for (int64_t i = 0; i < t.size(); ++i) d[i] = float(rs.normal() * stddev);
    return t;
}

std::vector<uint32_t> extents_of(const Tensor& t) {
    std::vector<uint32_t> e;
    for (int v : t.shape()) e.push_back(uint32_t(v));
    return e;
}

}  // namespace

void GeneratorSpec::validate() const {
    if (input_size <= 0 || levels <= 0 || base_channels <= 0 || in_channels <= 0 ||
        out_channels <= 0)
        throw std::invalid_argument("generator spec: extents and channel counts must be positive");
    int div = 1 << levels;
    if (input_size % div != 0)
        throw std::invalid_argument("generator spec: input_size " + std::to_string(input_size) +
                                    " is not divisible by 2^levels = " + std::to_string(div));
    for (int p : dropout_positions)
        if (p < 1 || p > levels)
            throw std::invalid_argument("generator spec: dropout position " + std::to_string(p) +
                                        " outside 1.." + std::to_string(levels));
    if (!(mc_rate >= 0.0 && mc_rate < 1.0))
        throw std::invalid_argument("generator spec: mc_rate outside [0,1)");
    if (!(temperature > 0.0))
        throw std::invalid_argument("generator spec: temperature must be positive");
    if (!(init_dropout_p > 0.0 && init_dropout_p < 1.0))
        throw std::invalid_argument("generator spec: init_dropout_p outside (0,1)");
}

void DiscriminatorSpec::validate() const {
    if (base_channels <= 0 || in_channels <= 0)
        throw std::invalid_argument("discriminator spec: channel counts must be positive");
}

UNetGenerator::UNetGenerator(GeneratorSpec spec, uint64_t seed) : spec_(std::move(spec)) {
    spec_.validate();
    auto init_rs = derive_stream(seed, "init/gen", 0);
    const int L = spec_.levels;
    const int cap = 8 * spec_.base_channels;
    auto enc_out = [&](int i) { return std::min(spec_.base_channels << (i - 1), cap); };

    for (int i = 1; i <= L; ++i) {
        Block b;
        b.in_c = i == 1 ? spec_.in_channels : enc_[i - 2].out_c;
        b.out_c = enc_out(i);
        b.has_bn = i > 1;
        b.has_bias = !b.has_bn;
        b.w = normal_init({b.out_c, b.in_c, 4, 4}, init_rs, 0.02);
        std::string base = "g.enc" + std::to_string(i);
        params_.push_back({base + ".w", b.w});
        if (b.has_bias) {
            b.b = Tensor({b.out_c}, 0.0f);
            params_.push_back({base + ".b", b.b});
        }
        if (b.has_bn) {
            b.gamma = Tensor({b.out_c}, 1.0f);
            b.beta = Tensor({b.out_c}, 0.0f);
            b.bn = std::make_shared<BnStateT<float>>(b.out_c);
            params_.push_back({base + ".bn.gamma", b.gamma});
            params_.push_back({base + ".bn.beta", b.beta});
        }
        enc_.push_back(std::move(b));
    }

    for (int j = 1; j <= L; ++j) {
        Block b;
        bool final_block = j == L;
        b.in_c = j == 1 ? enc_[L - 1].out_c : dec_[j - 2].out_c + enc_[L - j].out_c;
        b.out_c = final_block ? spec_.out_channels : enc_out(L - j);
        b.has_bn = !final_block;
        b.has_bias = !b.has_bn;
        b.w = normal_init({b.in_c, b.out_c, 4, 4}, init_rs, 0.02);
        b.has_dropout = spec_.dropout_kind != DropoutKind::none &&
                        std::find(spec_.dropout_positions.begin(), spec_.dropout_positions.end(),
                                  j) != spec_.dropout_positions.end();
        std::string base = "g.dec" + std::to_string(j);
        params_.push_back({base + ".w", b.w});
        if (b.has_bias) {
            b.b = Tensor({b.out_c}, 0.0f);
            params_.push_back({base + ".b", b.b});
        }
        if (b.has_bn) {
            b.gamma = Tensor({b.out_c}, 1.0f);
            b.beta = Tensor({b.out_c}, 0.0f);
            b.bn = std::make_shared<BnStateT<float>>(b.out_c);
            params_.push_back({base + ".bn.gamma", b.gamma});
            params_.push_back({base + ".bn.beta", b.beta});
        }
        if (b.has_dropout && spec_.dropout_kind == DropoutKind::concrete) {
            b.logit_p = Tensor::scalar(float(logit(spec_.init_dropout_p)));
            params_.push_back({"concrete." + std::to_string(j) + ".logit_p", b.logit_p});
        }
        dec_.push_back(std::move(b));
    }

    zero_reg_ = Tensor::scalar(0.0f);
}

UNetGenerator::Built UNetGenerator::build(Graph& g, Node x, RunMode mode) const {
    if (x->shape.size() != 4 || x->shape[1] != spec_.in_channels ||
        x->shape[2] != spec_.input_size || x->shape[3] != spec_.input_size)
        throw std::invalid_argument("generator input must be [B," +
                                    std::to_string(spec_.in_channels) + "," +
                                    std::to_string(spec_.input_size) + "," +
                                    std::to_string(spec_.input_size) + "], got " +
                                    shape_str(x->shape));
    const int L = spec_.levels;
    const bool bn_training = mode == RunMode::train;
    const bool stochastic = mode != RunMode::eval_deterministic;

    Built built;
    std::vector<Node> skips;
    Node h = x;
    for (int i = 0; i < L; ++i) {
        const Block& b = enc_[i];
        h = g.conv2d(h, g.leaf(b.w), b.has_bias ? g.leaf(b.b) : nullptr, 2, 1);
        if (b.has_bn) h = g.batchnorm2d(h, g.leaf(b.gamma), g.leaf(b.beta), b.bn, bn_training);
        h = g.leaky_relu(h, 0.2);
        skips.push_back(h);
    }

    auto apply_dropout = [&](Node in, const Block& b) {
        if (!b.has_dropout || !stochastic) return in;
        DropoutTapT<float> tap = spec_.dropout_kind == DropoutKind::concrete
                                     ? attach_concrete(g, in, b.logit_p, spec_.temperature)
                                     : attach_mc(g, in);
        built.noise.push_back(tap.noise);
        return tap.out;
    };

    for (int j = 1; j <= L; ++j) {
        const Block& b = dec_[j - 1];
        Node in = j == 1 ? skips[L - 1] : g.concat_channels(h, skips[L - j]);
        h = g.conv_transpose2d(in, g.leaf(b.w), b.has_bias ? g.leaf(b.b) : nullptr, 2, 1);
        if (j < L) {
            h = g.batchnorm2d(h, g.leaf(b.gamma), g.leaf(b.beta), b.bn, bn_training);
            h = g.relu(h);
            h = apply_dropout(h, b);
        } else {
            // final block: dropout (if configured here) gates the pre-tanh
            // activations so the [0,1] output range survives the rescale
            h = apply_dropout(h, b);
            h = g.scalar_affine(g.tanh(h), 0.5, 0.5);
        }
    }
    built.out = h;
    return built;
}

Node UNetGenerator::regularizer(Graph& g) const {
    if (spec_.dropout_kind != DropoutKind::concrete) return g.leaf(zero_reg_);
    Node total;
    for (const Block& b : dec_) {
        if (!b.has_dropout) continue;
        Node r = concrete_regularizer_node(g, b.logit_p, b.w, spec_.weight_reg_coeff,
                                           spec_.dropout_reg_coeff, b.out_c);
        total = total ? g.add(total, r) : r;
    }
    return total ? total : g.leaf(zero_reg_);
}

void UNetGenerator::fill_noise(std::vector<Tensor>& noise, uint64_t seed, uint64_t pass) const {
    size_t k = 0;
    for (size_t j = 0; j < dec_.size(); ++j) {
        if (!dec_[j].has_dropout) continue;
        if (k >= noise.size()) break;  // deterministic build carries no taps
        auto rs = derive_stream(seed, ("dropout/g" + std::to_string(j + 1)).c_str(), pass);
        if (spec_.dropout_kind == DropoutKind::concrete)
            fill_concrete_noise(noise[k], rs);
        else
            fill_mc_mask(noise[k], spec_.mc_rate, rs);
        ++k;
    }
}

std::vector<NamedBufferRef> UNetGenerator::checkpoint_refs() {
    std::vector<NamedBufferRef> refs;
    for (auto& p : params_)
        refs.push_back({p.name, extents_of(p.tensor), p.tensor.data(), p.tensor.size()});
    auto add_bn = [&](const std::string& base, Block& b) {
        if (!b.has_bn) return;
        uint32_t c = uint32_t(b.out_c);
        refs.push_back({base + ".bn.running_mean", {c}, b.bn->running_mean.data(), b.out_c});
        refs.push_back({base + ".bn.running_var", {c}, b.bn->running_var.data(), b.out_c});
    };
    for (size_t i = 0; i < enc_.size(); ++i) add_bn("g.enc" + std::to_string(i + 1), enc_[i]);
    for (size_t j = 0; j < dec_.size(); ++j) add_bn("g.dec" + std::to_string(j + 1), dec_[j]);
    return refs;
}

int64_t UNetGenerator::dropout_channel_total() const {
    if (spec_.dropout_kind != DropoutKind::concrete) return 0;
    int64_t total = 0;
    for (const Block& b : dec_)
        if (b.has_dropout) total += b.out_c;
    return total;
}

std::vector<double> UNetGenerator::dropout_probabilities() const {
    std::vector<double> ps;
    if (spec_.dropout_kind != DropoutKind::concrete) return ps;
    for (const Block& b : dec_)
        if (b.has_dropout) ps.push_back(1.0 / (1.0 + std::exp(-double(b.logit_p.item()))));
    return ps;
}

PatchDiscriminator::PatchDiscriminator(DiscriminatorSpec spec, uint64_t seed)
    : spec_(std::move(spec)) {
    spec_.validate();
    auto init_rs = derive_stream(seed, "init/disc", 0);
    const int strides[5] = {2, 2, 2, 1, 1};
    int in_c = spec_.in_channels;
    for (int i = 1; i <= 5; ++i) {
        Layer l;
        l.stride = strides[i - 1];
        int out_c = i == 5 ? 1 : spec_.base_channels << (i - 1);
        l.has_bn = i >= 2 && i <= 4;
        l.has_bias = !l.has_bn;
        l.w = normal_init({out_c, in_c, 4, 4}, init_rs, 0.02);
        std::string base = "d.conv" + std::to_string(i);
        params_.push_back({base + ".w", l.w});
        if (l.has_bias) {
            l.b = Tensor({out_c}, 0.0f);
            params_.push_back({base + ".b", l.b});
        }
        if (l.has_bn) {
            l.gamma = Tensor({out_c}, 1.0f);
            l.beta = Tensor({out_c}, 0.0f);
            l.bn = std::make_shared<BnStateT<float>>(out_c);
            params_.push_back({base + ".bn.gamma", l.gamma});
            params_.push_back({base + ".bn.beta", l.beta});
        }
        in_c = out_c;
        layers_.push_back(std::move(l));
    }
}

Node PatchDiscriminator::build(Graph& g, Node xy, RunMode mode) const {
    if (xy->shape.size() != 4 || xy->shape[1] != spec_.in_channels)
        throw std::invalid_argument("discriminator input must have " +
                                    std::to_string(spec_.in_channels) + " channels, got " +
                                    shape_str(xy->shape));
    const bool bn_training = mode == RunMode::train;
    Node h = xy;
    for (size_t i = 0; i < layers_.size(); ++i) {
        const Layer& l = layers_[i];
        h = g.conv2d(h, g.leaf(l.w), l.has_bias ? g.leaf(l.b) : nullptr, l.stride, 1);
        if (l.has_bn) h = g.batchnorm2d(h, g.leaf(l.gamma), g.leaf(l.beta), l.bn, bn_training);
        if (i + 1 < layers_.size()) h = g.leaky_relu(h, 0.2);
    }
    return h;
}

std::vector<NamedBufferRef> PatchDiscriminator::checkpoint_refs() {
    std::vector<NamedBufferRef> refs;
    for (auto& p : params_)
        refs.push_back({p.name, extents_of(p.tensor), p.tensor.data(), p.tensor.size()});
    for (size_t i = 0; i < layers_.size(); ++i) {
        Layer& l = layers_[i];
        if (!l.has_bn) continue;
        uint32_t c = uint32_t(l.gamma.shape()[0]);
        std::string base = "d.conv" + std::to_string(i + 1);
        refs.push_back({base + ".bn.running_mean", {c}, l.bn->running_mean.data(), int64_t(c)});
        refs.push_back({base + ".bn.running_var", {c}, l.bn->running_var.data(), int64_t(c)});
    }
    return refs;
}

int PatchDiscriminator::logit_map_extent(int input_size) {
    int e = input_size;
    const int strides[5] = {2, 2, 2, 1, 1};
    for (int s : strides) e = kernels::conv_out_extent(e, 4, s, 1);
    return e;
}

Tensor generator_forward(const UNetGenerator& net, const Tensor& x, RunMode mode, uint64_t seed,
                         uint64_t pass) {
    Graph g;
    auto built = net.build(g, g.leaf(x), mode);
    if (mode != RunMode::eval_deterministic) net.fill_noise(built.noise, seed, pass);
    return evaluate(g, built.out);
}

}  // namespace bcgan
