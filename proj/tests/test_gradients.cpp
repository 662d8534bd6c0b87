#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gradient_suite.hpp"

// Every differentiable op against central differences, 10 random points each.

TEST_CASE("autodiff matches finite differences for every op") {
    for (const auto& c : gradcheck::all_cases()) {
        for (uint64_t pt = 0; pt < 10; ++pt) {
            double rel = c.run(pt);
            INFO(c.name << " point " << pt);
            CHECK(rel < 1e-4);
        }
    }
}

TEST_CASE("suite covers the full op list") {
    // guards against an op silently dropping out of the shared suite
    std::vector<std::string> expected = {
        "conv2d",         "conv_transpose2d", "batchnorm2d_train", "batchnorm2d_eval",
        "leaky_relu",     "relu",             "sigmoid",           "tanh",
        "concat_channels", "add",             "sub",               "mul",
        "abs",            "square",           "log",               "reciprocal",
        "scalar_affine",  "mean",             "sum",               "broadcast_to",
        "channel_mul",    "bce_logits",       "concrete_gate_path", "concrete_regularizer"};
    auto cases = gradcheck::all_cases();
    REQUIRE(cases.size() == expected.size());
    for (size_t i = 0; i < cases.size(); ++i) CHECK(cases[i].name == expected[i]);
}
