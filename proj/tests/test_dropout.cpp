#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bcgan/dropout.hpp"

using namespace bcgan;

TEST_CASE("logit inverts sigmoid") {
    CHECK(logit(0.5) == doctest::Approx(0.0));
    CHECK(logit(0.9) == doctest::Approx(-logit(0.1)).epsilon(1e-12));
    double p = 0.37;
    CHECK(1.0 / (1.0 + std::exp(-logit(p))) == doctest::Approx(p).epsilon(1e-12));
}

TEST_CASE("concrete gate frozen values and domain") {
    // u = 0.5 makes the noise logit vanish, so the gate is sigmoid(logit(p)/t)
    CHECK(concrete_gate(0.1, 0.1, 0.5) == doctest::Approx(2.867971989969927e-10).epsilon(1e-9));
    CHECK(concrete_gate(0.9, 1.0, 0.9) == doctest::Approx(0.9878048780487805).epsilon(1e-12));
    CHECK(concrete_gate(0.5, 1.0, 0.5) == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(concrete_gate(0.0, 1.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(concrete_gate(1.0, 1.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(concrete_gate(0.5, 0.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(concrete_gate(0.5, 1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(concrete_gate(0.5, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("gate is monotone in the noise") {
    double prev = 0.0;
    for (double u : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        double z = concrete_gate(0.4, 0.5, u);
        CHECK(z > prev);
        prev = z;
    }
}

TEST_CASE("bernoulli entropy frozen values and edges") {
    CHECK(bernoulli_entropy(0.1) == doctest::Approx(0.3250829733914482).epsilon(1e-14));
    CHECK(bernoulli_entropy(0.2) == doctest::Approx(0.5004024235381879).epsilon(1e-14));
    CHECK(bernoulli_entropy(0.5) == doctest::Approx(0.6931471805599453).epsilon(1e-14));
    CHECK(bernoulli_entropy(0.0) == 0.0);
    CHECK(bernoulli_entropy(1.0) == 0.0);
    CHECK_THROWS_AS(bernoulli_entropy(-0.1), std::invalid_argument);
    CHECK_THROWS_AS(bernoulli_entropy(1.1), std::invalid_argument);
}

TEST_CASE("regularizer frozen values") {
    ConcreteDropoutParamsT<double> params;
    params.logit_p = TensorD::scalar(logit(0.2));
    params.weight_reg_coeff = 1e-6;
    params.dropout_reg_coeff = 1e-5;
    params.input_channels = 4;
    CHECK(concrete_regularizer(params, 10.0) ==
          doctest::Approx(-1.2016096941527518e-05).epsilon(1e-10));

    ConcreteDropoutParamsT<double> half;
    half.logit_p = TensorD::scalar(0.0);
    half.dropout_reg_coeff = 1e-5;
    half.input_channels = 1;
    CHECK(concrete_regularizer(half, 0.0) ==
          doctest::Approx(-6.931471805599453e-06).epsilon(1e-12));
    CHECK_THROWS_AS(concrete_regularizer(half, -1.0), std::invalid_argument);
}

TEST_CASE("regularizer node agrees with the scalar form") {
    GraphD g;
    TensorD logit_p = TensorD::scalar(logit(0.2));
    TensorD w({2, 3}, std::vector<double>{0.5, -1.0, 2.0, 0.25, -0.75, 1.5});
    double wsq = 0.0;
    for (int64_t i = 0; i < w.size(); ++i) wsq += w.data()[i] * w.data()[i];

    auto node = concrete_regularizer_node(g, logit_p, w, 1e-6, 1e-5, 4);
    EvalD ev(g);
    double got = ev.forward(node)[0];

    ConcreteDropoutParamsT<double> params;
    params.logit_p = logit_p;
    params.weight_reg_coeff = 1e-6;
    params.dropout_reg_coeff = 1e-5;
    params.input_channels = 4;
    CHECK(got == doctest::Approx(concrete_regularizer(params, wsq)).epsilon(1e-9));
}

TEST_CASE("concrete noise stays inside the gate domain") {
    TensorD noise({1000});
    auto rs = derive_stream(3, "dropout/noise", 0);
    fill_concrete_noise(noise, rs);
    double lim = logit(1.0 - 1e-7);
    for (int64_t i = 0; i < noise.size(); ++i) {
        CHECK(std::isfinite(noise.data()[i]));
        CHECK(std::abs(noise.data()[i]) <= lim + 1e-9);
    }
}

TEST_CASE("mc mask holds 0 or the inverted keep scale") {
    TensorD mask({4000});
    auto rs = derive_stream(3, "dropout/mask", 0);
    fill_mc_mask(mask, 0.25, rs);
    int dropped = 0;
    for (int64_t i = 0; i < mask.size(); ++i) {
        double v = mask.data()[i];
        CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75).epsilon(1e-12)));
        dropped += v == 0.0;
    }
    // se of the drop count at n=4000 is ~27; allow 4 se
    CHECK(std::abs(dropped - 1000) < 110);
}

TEST_CASE("graph attachment reproduces the eager path given the same noise") {
    auto rs_data = derive_stream(3, "dropout/equiv", 0);
    TensorD x({2, 3, 4, 4});
    for (int64_t i = 0; i < x.size(); ++i) x.data()[i] = rs_data.uniform(-1.0, 1.0);

    ConcreteDropoutParamsT<double> params;
    params.logit_p = TensorD::scalar(logit(0.3));
    params.temperature = 0.4;
    params.input_channels = 3;

    auto rs_eager = derive_stream(3, "dropout/u", 0);
    TensorD eager = concrete_apply(x, params, rs_eager, DropoutMode::stochastic);

    GraphD g;
    auto tap = attach_concrete(g, g.leaf(x), params.logit_p, params.temperature);
    auto rs_graph = derive_stream(3, "dropout/u", 0);
    fill_concrete_noise(tap.noise, rs_graph);
    EvalD ev(g);
    const auto& got = ev.forward(tap.out);
    for (int64_t i = 0; i < x.size(); ++i)
        CHECK(got[size_t(i)] == doctest::Approx(eager.data()[i]).epsilon(1e-9));
}

TEST_CASE("gate exceedance frequency tracks p") {
    // quick version of the relaxation law; the acceptance run uses 1e5 draws
    auto rs = derive_stream(3, "dropout/law", 0);
    const int n = 5000;
    for (double p : {0.2, 0.5, 0.8}) {
        int over = 0;
        for (int i = 0; i < n; ++i) over += concrete_gate(p, 0.1, rs.uniform()) > 0.5;
        double se = std::sqrt(p * (1.0 - p) / n);
        CHECK(std::abs(double(over) / n - p) < 5.0 * se);
    }
}

TEST_CASE("cold gate keeps expectation near 1-p") {
    auto rs = derive_stream(3, "dropout/cold", 0);
    const int n = 20000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += 1.0 - concrete_gate(0.3, 0.01, rs.uniform());
    CHECK(std::abs(acc / n - 0.7) < 0.01);
}

TEST_CASE("deterministic mode is a clean pass-through copy") {
    TensorD x({1, 2, 2, 2}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
    ConcreteDropoutParamsT<double> params;
    params.logit_p = TensorD::scalar(0.0);
    params.input_channels = 2;
    auto rs = derive_stream(3, "dropout/det", 0);
    TensorD out = concrete_apply(x, params, rs, DropoutMode::deterministic);
    CHECK(out.vec() == x.vec());
    CHECK(out.storage_id() != x.storage_id());

    BernoulliDropoutParams mc;
    TensorD out2 = mc_dropout_apply(x, mc, rs, DropoutMode::deterministic);
    CHECK(out2.vec() == x.vec());
    CHECK(out2.storage_id() != x.storage_id());
}

TEST_CASE("mc dropout zeroes whole channels and rescales the rest") {
    TensorD x({2, 4, 3, 3}, 1.0);
    BernoulliDropoutParams params{0.5};
    auto rs = derive_stream(3, "dropout/mc", 1);
    TensorD out = mc_dropout_apply(x, params, rs, DropoutMode::stochastic);
    for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 4; ++c) {
            double first = out.at(b, c, 0, 0);
            CHECK((first == 0.0 || first == doctest::Approx(2.0)));
            for (int h = 0; h < 3; ++h)
                for (int w = 0; w < 3; ++w) CHECK(out.at(b, c, h, w) == first);
        }
    CHECK_THROWS_AS(mc_dropout_apply(x, BernoulliDropoutParams{1.0}, rs, DropoutMode::stochastic),
                    std::invalid_argument);
}

TEST_CASE("attach_mc starts as identity until a mask is filled") {
    Graph g;
    Tensor x({1, 2, 2, 2}, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8});
    auto tap = attach_mc(g, g.leaf(x));
    Eval ev(g);
    CHECK(ev.forward(tap.out) == x.vec());

    auto rs = derive_stream(3, "dropout/mcmask", 0);
    fill_mc_mask(tap.noise, 0.5, rs);
    ev.reset();
    const auto& got = ev.forward(tap.out);
    for (int c = 0; c < 2; ++c) {
        float m = tap.noise.at(0, c, 0, 0);
        for (int i = 0; i < 4; ++i) CHECK(got[size_t(c * 4 + i)] == x.vec()[size_t(c * 4 + i)] * m);
    }
}

TEST_CASE("attachment rejects non-4d inputs") {
    GraphD g;
    TensorD x({3, 3});
    TensorD lp = TensorD::scalar(0.0);
    CHECK_THROWS_AS(attach_concrete(g, g.leaf(x), lp, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(attach_mc(g, g.leaf(x)), std::invalid_argument);
    TensorD x4({1, 2, 2, 2});
    TensorD bad({2});
    CHECK_THROWS_AS(attach_concrete(g, g.leaf(x4), bad, 0.1), std::invalid_argument);
}
