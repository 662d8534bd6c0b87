#include "bcgan/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bcgan/adam.hpp"
#include "bcgan/checkpoint.hpp"

namespace fs = std::filesystem;

namespace bcgan {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0f)) throw std::invalid_argument("train config: learning_rate must be positive");
    if (!(beta1 > 0.0f && beta1 < 1.0f) || !(beta2 > 0.0f && beta2 < 1.0f))
        throw std::invalid_argument("train config: betas must lie in (0,1)");
    if (!(adam_epsilon > 0.0f)) throw std::invalid_argument("train config: adam_epsilon must be positive");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be at least 1");
    if (epochs < 1) throw std::invalid_argument("train config: epochs must be at least 1");
    if (lambda_l1 < 0.0 || lambda_kl < 0.0)
        throw std::invalid_argument("train config: loss weights must be non-negative");
    if (!(temperature > 0.0)) throw std::invalid_argument("train config: temperature must be positive");
    if (c_w < 0.0 || c_d < 0.0)
        throw std::invalid_argument("train config: regularizer coefficients must be non-negative");
    if (crop_to < 1) throw std::invalid_argument("train config: crop_to must be positive");
    if (resize_to <= crop_to)
        throw std::invalid_argument("train config: resize_to must exceed crop_to, got " +
                                    std::to_string(resize_to) + " vs " + std::to_string(crop_to));
}

Node bce_with_logits(Graph& g, Node logits, double target) { return g.bce_logits(logits, target); }

GenLossNodes generator_loss(Graph& g, Node d_fake_logits, Node fake, Node real, Node kl_reg,
                            double lambda_l1, double lambda_kl) {
    if (fake->shape != real->shape)
        throw std::invalid_argument("generator_loss: fake " + shape_str(fake->shape) +
                                    " and real " + shape_str(real->shape) + " differ");
    GenLossNodes nodes;
    nodes.gan = g.bce_logits(d_fake_logits, 1.0);
    nodes.l1 = g.mean(g.abs(g.sub(fake, real)));
    nodes.kl = kl_reg;
    nodes.total =
        g.add(nodes.gan, g.add(g.scalar_mul(nodes.l1, lambda_l1), g.scalar_mul(nodes.kl, lambda_kl)));
    return nodes;
}

Node discriminator_loss(Graph& g, Node d_real_logits, Node d_fake_logits) {
    return g.scalar_mul(g.add(g.bce_logits(d_real_logits, 1.0), g.bce_logits(d_fake_logits, 0.0)),
                        0.5);
}

void augment_pair(const float* a, const float* b, int h, int w, int resize_to, int crop_to,
                  RngStream& rs, float* out_a, float* out_b) {
    if (resize_to < crop_to)
        throw std::invalid_argument("augment: resize target smaller than crop target");
    std::vector<float> ra(size_t(resize_to) * resize_to), rb(ra.size());
    bilinear_resize(a, h, w, ra.data(), resize_to, resize_to);
    bilinear_resize(b, h, w, rb.data(), resize_to, resize_to);
    int span = resize_to - crop_to + 1;
    int oy = int(rs.uniform_int(uint64_t(span)));
    int ox = int(rs.uniform_int(uint64_t(span)));
    for (int i = 0; i < crop_to; ++i) {
        const float* ra_row = ra.data() + size_t(oy + i) * resize_to + ox;
        const float* rb_row = rb.data() + size_t(oy + i) * resize_to + ox;
        std::copy(ra_row, ra_row + crop_to, out_a + size_t(i) * crop_to);
        std::copy(rb_row, rb_row + crop_to, out_b + size_t(i) * crop_to);
    }
}

namespace {

std::string epoch_checkpoint_path(const std::string& dir, int epoch) {
    return dir + "/checkpoint_epoch_" + std::to_string(epoch) + ".bcgw";
}

std::string sidecar_path(const std::string& dir, int epoch) {
    return dir + "/checkpoint_epoch_" + std::to_string(epoch) + ".opt.bcgw";
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history,
                       size_t n_dropout) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw TrainingError("cannot write loss history: " + path);
    os << "epoch,d_loss,g_gan,g_l1,g_kl";
    for (size_t i = 1; i <= n_dropout; ++i) os << ",p_" << i;
    os << "\n";
    char buf[64];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, ",%.9g", v);
        os << buf;
    };
    for (const EpochStats& e : history) {
        os << e.epoch;
        put(e.d_loss);
        put(e.g_gan);
        put(e.g_l1);
        put(e.g_kl);
        for (double p : e.dropout_p) put(p);
        os << "\n";
    }
}

std::vector<EpochStats> parse_history_csv(const std::string& path, int up_to_epoch) {
    std::vector<EpochStats> rows;
    std::ifstream is(path);
    if (!is) return rows;
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<double> vals;
        while (std::getline(ss, field, ',')) vals.push_back(std::stod(field));
        if (vals.size() < 5) continue;
        EpochStats e;
        e.epoch = int(vals[0]);
        e.d_loss = vals[1];
        e.g_gan = vals[2];
        e.g_l1 = vals[3];
        e.g_kl = vals[4];
        e.dropout_p.assign(vals.begin() + 5, vals.end());
        if (e.epoch <= up_to_epoch) rows.push_back(std::move(e));
    }
    return rows;
}

}  // namespace

TrainResult train(const std::vector<SubjectData>& subjects, UNetGenerator& gen,
                  PatchDiscriminator& disc, const TrainConfig& cfg, const TrainIo& io) {
    cfg.validate();
    if (subjects.empty()) throw TrainingError("train: no subjects");
    if (gen.spec().input_size != cfg.crop_to)
        throw TrainingError("train: generator input size " +
                            std::to_string(gen.spec().input_size) + " does not match crop_to " +
                            std::to_string(cfg.crop_to));

    // slice inventory: every z plane of every training subject
    std::vector<std::pair<int, int>> slices;
    for (size_t s = 0; s < subjects.size(); ++s) {
        const Volume& a = subjects[s].contrast_a;
        if (!a.same_shape(subjects[s].contrast_b))
            throw TrainingError("train: contrast volumes of subject " + subjects[s].subject_id +
                                " differ in shape");
        for (int z = 0; z < a.nz; ++z) slices.emplace_back(int(s), z);
    }
    const int B = cfg.batch_size;
    const int C = cfg.crop_to;
    const int64_t n_batches = int64_t(slices.size()) / B;  // partial tail batch is dropped
    if (n_batches == 0)
        throw TrainingError("train: " + std::to_string(slices.size()) +
                            " slices cannot fill one batch of " + std::to_string(B));

    for (auto& p : gen.parameters()) p.tensor.set_requires_grad(true);
    for (auto& p : disc.parameters()) p.tensor.set_requires_grad(true);

    // one persistent graph reused for every batch; leaves are refilled in place
    Graph g;
    Tensor x({B, 1, C, C}), y({B, 1, C, C}), fake_det({B, 1, C, C});
    Node nx = g.leaf(x), ny = g.leaf(y), nfd = g.leaf(fake_det);
    auto gb = gen.build(g, nx, RunMode::train);
    Node d_real = disc.build(g, g.concat_channels(nx, ny), RunMode::train);
    Node d_fake_det = disc.build(g, g.concat_channels(nx, nfd), RunMode::train);
    Node d_loss = discriminator_loss(g, d_real, d_fake_det);
    Node d_fake_live = disc.build(g, g.concat_channels(nx, gb.out), RunMode::train);
    auto gl = generator_loss(g, d_fake_live, gb.out, ny, gen.regularizer(g), cfg.lambda_l1,
                             cfg.lambda_kl);

    AdamConfig acfg{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon};
    Adam adam_g(gen.parameters(), acfg, "opt.g");
    Adam adam_d(disc.parameters(), acfg, "opt.d");

    auto gen_refs = gen.checkpoint_refs();
    float epoch_done[1] = {0.0f};
    float pass_count[1] = {0.0f};  // exact while below 2^24 passes
    std::vector<NamedBufferRef> side_refs = disc.checkpoint_refs();
    for (auto& r : adam_g.state_refs()) side_refs.push_back(r);
    for (auto& r : adam_d.state_refs()) side_refs.push_back(r);
    side_refs.push_back({"train.epoch", {1}, epoch_done, 1});
    side_refs.push_back({"train.global_pass", {1}, pass_count, 1});

    const size_t n_dropout = gen.dropout_probabilities().size();
    TrainResult result;
    int epoch_start = 0;

    if (io.resume && !io.out_dir.empty()) {
        for (int e = cfg.epochs; e >= 1; --e) {
            if (!fs::exists(epoch_checkpoint_path(io.out_dir, e)) ||
                !fs::exists(sidecar_path(io.out_dir, e)))
                continue;
            load_checkpoint(epoch_checkpoint_path(io.out_dir, e), gen_refs);
            load_checkpoint(sidecar_path(io.out_dir, e), side_refs);
            epoch_start = int(epoch_done[0]);
            result.history = parse_history_csv(io.out_dir + "/loss_history.csv", epoch_start);
            if (!io.quiet)
                std::fprintf(stderr, "resuming after epoch %d (%s)\n", epoch_start,
                             epoch_checkpoint_path(io.out_dir, e).c_str());
            break;
        }
    }

    uint64_t global_pass = uint64_t(pass_count[0]);

    // entropy is the only negative loss contribution; everything recorded per
    // batch must stay above this bound
    const double kl_floor =
        -gen.spec().dropout_reg_coeff * double(gen.dropout_channel_total()) * std::log(2.0);
    const double term_floor = cfg.lambda_kl * kl_floor;
    const double floor_slack = 1e-9 + 1e-6 * std::fabs(term_floor);

    Eval ev_d(g), ev_g(g);

    for (int epoch = epoch_start + 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<int64_t> order(slices.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = int64_t(i);
        auto shuffle_rs = derive_stream(cfg.seed, "batch_order", uint64_t(epoch));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rs.uniform_int(i)]);
        auto aug_rs = derive_stream(cfg.seed, "augment", uint64_t(epoch));

        EpochStats stats;
        stats.epoch = epoch;

        for (int64_t batch = 0; batch < n_batches; ++batch) {
            for (int k = 0; k < B; ++k) {
                auto [si, z] = slices[size_t(order[batch * B + k])];
                const Volume& va = subjects[size_t(si)].contrast_a;
                const Volume& vb = subjects[size_t(si)].contrast_b;
                augment_pair(va.slice(z), vb.slice(z), va.ny, va.nx, cfg.resize_to, cfg.crop_to,
                             aug_rs, x.data() + int64_t(k) * C * C, y.data() + int64_t(k) * C * C);
            }
            ++global_pass;
            gen.fill_noise(gb.noise, cfg.seed, global_pass);
            for (auto& p : gen.parameters()) p.tensor.zero_grad();
            for (auto& p : disc.parameters()) p.tensor.zero_grad();

            double d_v, gan_v, l1_v, kl_v;
            try {
                // discriminator step; the generator output is copied into a
                // detached leaf so no gradient reaches the generator
                ev_d.reset();
                ev_d.forward(gb.out);
                const auto& fake = ev_d.value(gb.out);
                std::copy(fake.begin(), fake.end(), fake_det.data());
                ev_d.forward(d_loss);
                ev_d.backward(d_loss);
                adam_d.step();

                // generator step against the just-updated discriminator,
                // reusing the generator forward pass from above
                ev_g.reset();
                ev_g.adopt(ev_d, gb.out);
                for (auto& p : disc.parameters()) p.tensor.set_requires_grad(false);
                ev_g.forward(gl.total);
                d_v = double(ev_d.value(d_loss)[0]);
                gan_v = double(ev_g.value(gl.gan)[0]);
                l1_v = double(ev_g.value(gl.l1)[0]);
                kl_v = double(ev_g.value(gl.kl)[0]);
                ev_g.backward(gl.total);
                for (auto& p : disc.parameters()) p.tensor.set_requires_grad(true);
                adam_g.step();
            } catch (const GraphError& err) {
                for (auto& p : disc.parameters()) p.tensor.set_requires_grad(true);
                throw TrainingError("training aborted at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(batch) + ": " + err.what());
            }

            const double terms[4] = {d_v, gan_v, l1_v, cfg.lambda_kl * kl_v};
            const char* names[4] = {"d_loss", "g_gan", "g_l1", "g_kl_weighted"};
            for (int t = 0; t < 4; ++t) {
                if (!std::isfinite(terms[t]) || terms[t] < term_floor - floor_slack)
                    throw TrainingError(
                        "non-finite or impossible loss at epoch " + std::to_string(epoch) +
                        ", batch " + std::to_string(batch) + ": " + names[t] + "=" +
                        std::to_string(terms[t]) + " (d_loss=" + std::to_string(d_v) +
                        " g_gan=" + std::to_string(gan_v) + " g_l1=" + std::to_string(l1_v) +
                        " g_kl=" + std::to_string(kl_v) + ")");
            }
            stats.d_loss += d_v;
            stats.g_gan += gan_v;
            stats.g_l1 += l1_v;
            stats.g_kl += kl_v;
        }

        stats.d_loss /= double(n_batches);
        stats.g_gan /= double(n_batches);
        stats.g_l1 /= double(n_batches);
        stats.g_kl /= double(n_batches);
        stats.dropout_p = gen.dropout_probabilities();
        for (double p : stats.dropout_p) {
            if (!std::isfinite(p) || p <= 0.0 || p >= 1.0)
                throw TrainingError("learned dropout probability left (0,1) at epoch " +
                                    std::to_string(epoch) + ": p=" + std::to_string(p));
        }
        result.history.push_back(stats);

        if (!io.quiet)
            std::fprintf(stderr, "epoch %d/%d  d_loss=%.4f  g_gan=%.4f  g_l1=%.4f  g_kl=%.4g\n",
                         epoch, cfg.epochs, stats.d_loss, stats.g_gan, stats.g_l1, stats.g_kl);

        if (!io.out_dir.empty()) {
            epoch_done[0] = float(epoch);
            pass_count[0] = float(global_pass);
            save_checkpoint(epoch_checkpoint_path(io.out_dir, epoch), gen_refs);
            save_checkpoint(sidecar_path(io.out_dir, epoch), side_refs);
            write_history_csv(io.out_dir + "/loss_history.csv", result.history, n_dropout);
        }
    }

    if (!io.out_dir.empty()) {
        result.final_checkpoint = io.out_dir + "/checkpoint_final.bcgw";
        save_checkpoint(result.final_checkpoint, gen_refs);
    }
    return result;
}

}  // namespace bcgan
