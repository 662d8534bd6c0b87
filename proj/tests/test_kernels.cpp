#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "bcgan/kernels.hpp"
#include "bcgan/rng.hpp"

using namespace bcgan;
namespace k = bcgan::kernels;

namespace {

std::vector<double> random_vec(size_t n, RngStream& rs, double mag = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rs.uniform(-mag, mag);
    return v;
}

// direct sliding-window convolution, no im2col, used as the oracle
std::vector<double> naive_conv(const std::vector<double>& x, const std::vector<double>& w,
                               const std::vector<double>& bias, const k::Conv2dDims& d) {
    std::vector<double> y(size_t(d.batch) * d.out_c * d.out_h * d.out_w, 0.0);
    for (int b = 0; b < d.batch; ++b)
        for (int f = 0; f < d.out_c; ++f)
            for (int oy = 0; oy < d.out_h; ++oy)
                for (int ox = 0; ox < d.out_w; ++ox) {
                    double acc = bias.empty() ? 0.0 : bias[f];
                    for (int c = 0; c < d.in_c; ++c)
                        for (int ki = 0; ki < d.kernel; ++ki)
                            for (int kj = 0; kj < d.kernel; ++kj) {
                                int iy = oy * d.stride - d.pad + ki;
                                int ix = ox * d.stride - d.pad + kj;
                                if (iy < 0 || iy >= d.in_h || ix < 0 || ix >= d.in_w) continue;
                                acc += x[((size_t(b) * d.in_c + c) * d.in_h + iy) * d.in_w + ix] *
                                       w[((size_t(f) * d.in_c + c) * d.kernel + ki) * d.kernel + kj];
                            }
                    y[((size_t(b) * d.out_c + f) * d.out_h + oy) * d.out_w + ox] = acc;
                }
    return y;
}

// transposed convolution as input-driven scatter, used as the oracle
std::vector<double> naive_convt(const std::vector<double>& x, const std::vector<double>& w,
                                const std::vector<double>& bias, const k::ConvT2dDims& d) {
    std::vector<double> y(size_t(d.batch) * d.out_c * d.out_h * d.out_w, 0.0);
    for (int b = 0; b < d.batch; ++b)
        for (int c = 0; c < d.in_c; ++c)
            for (int iy = 0; iy < d.in_h; ++iy)
                for (int ix = 0; ix < d.in_w; ++ix) {
                    double xv = x[((size_t(b) * d.in_c + c) * d.in_h + iy) * d.in_w + ix];
                    for (int f = 0; f < d.out_c; ++f)
                        for (int ki = 0; ki < d.kernel; ++ki)
                            for (int kj = 0; kj < d.kernel; ++kj) {
                                int oy = iy * d.stride - d.pad + ki;
                                int ox = ix * d.stride - d.pad + kj;
                                if (oy < 0 || oy >= d.out_h || ox < 0 || ox >= d.out_w) continue;
                                y[((size_t(b) * d.out_c + f) * d.out_h + oy) * d.out_w + ox] +=
                                    xv *
                                    w[((size_t(c) * d.out_c + f) * d.kernel + ki) * d.kernel + kj];
                            }
                }
    if (!bias.empty())
        for (int b = 0; b < d.batch; ++b)
            for (int f = 0; f < d.out_c; ++f)
                for (int64_t p = 0; p < int64_t(d.out_h) * d.out_w; ++p)
                    y[(size_t(b) * d.out_c + f) * d.out_h * d.out_w + p] += bias[f];
    return y;
}

}  // namespace

TEST_CASE("output extent formulas") {
    CHECK(k::conv_out_extent(32, 4, 2, 1) == 16);
    CHECK(k::conv_out_extent(5, 3, 1, 0) == 3);
    CHECK(k::conv_out_extent(4, 4, 1, 0) == 1);
    CHECK(k::convt_out_extent(16, 4, 2, 1) == 32);
    CHECK(k::convt_out_extent(1, 4, 2, 1) == 2);
    CHECK_THROWS_AS(k::conv_out_extent(2, 5, 1, 0), std::invalid_argument);
}

TEST_CASE("hand-checked 2x2 convolution") {
    // [[1,2],[3,4]] against kernel [[1,0],[0,1]] picks the main diagonal
    auto d = k::Conv2dDims::make(1, 1, 2, 2, 1, 2, 1, 0);
    std::vector<double> x{1, 2, 3, 4}, w{1, 0, 0, 1}, y(1);
    k::conv2d_forward<double>(x.data(), w.data(), nullptr, y.data(), d);
    CHECK(y[0] == doctest::Approx(5.0));
}

TEST_CASE("conv2d matches the naive oracle") {
    auto rs = derive_stream(11, "kernels/conv", 0);
    for (auto [stride, pad] : {std::pair{1, 0}, {1, 1}, {2, 1}}) {
        auto d = k::Conv2dDims::make(2, 3, 5, 5, 4, 3, stride, pad);
        auto x = random_vec(size_t(d.batch) * d.in_c * d.in_h * d.in_w, rs);
        auto w = random_vec(size_t(d.out_c) * d.in_c * d.kernel * d.kernel, rs);
        auto b = random_vec(d.out_c, rs);
        std::vector<double> y(size_t(d.batch) * d.out_c * d.out_h * d.out_w);
        k::conv2d_forward<double>(x.data(), w.data(), b.data(), y.data(), d);
        auto ref = naive_conv(x, w, b, d);
        for (size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv_transpose2d matches the naive oracle") {
    auto rs = derive_stream(11, "kernels/convt", 0);
    for (auto [stride, pad] : {std::pair{1, 0}, {2, 1}}) {
        auto d = k::ConvT2dDims::make(2, 3, 4, 4, 2, 3, stride, pad);
        auto x = random_vec(size_t(d.batch) * d.in_c * d.in_h * d.in_w, rs);
        auto w = random_vec(size_t(d.in_c) * d.out_c * d.kernel * d.kernel, rs);
        auto b = random_vec(d.out_c, rs);
        std::vector<double> y(size_t(d.batch) * d.out_c * d.out_h * d.out_w);
        k::convt2d_forward<double>(x.data(), w.data(), b.data(), y.data(), d);
        auto ref = naive_convt(x, w, b, d);
        for (size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv_transpose upsamples 16 to 32 with the standard k4 s2 p1 block") {
    auto d = k::ConvT2dDims::make(1, 2, 16, 16, 3, 4, 2, 1);
    CHECK(d.out_h == 32);
    CHECK(d.out_w == 32);
}

TEST_CASE("bias lands on the right channel") {
    auto d = k::Conv2dDims::make(1, 1, 3, 3, 2, 3, 1, 1);
    std::vector<double> x(9, 0.0), w(2 * 9, 0.0), b{1.5, -2.0};
    std::vector<double> y(size_t(2) * 3 * 3);
    k::conv2d_forward<double>(x.data(), w.data(), b.data(), y.data(), d);
    for (int p = 0; p < 9; ++p) {
        CHECK(y[p] == doctest::Approx(1.5));
        CHECK(y[9 + p] == doctest::Approx(-2.0));
    }
}

TEST_CASE("batchnorm training normalizes with the biased batch variance") {
    const int B = 3, C = 2, H = 4, W = 4;
    auto rs = derive_stream(11, "kernels/bn", 0);
    auto x = random_vec(size_t(B) * C * H * W, rs, 2.0);
    std::vector<double> gamma{1.0, 1.0}, beta{0.0, 0.0};
    std::vector<double> y(x.size()), rm(C, 0.0), rv(C, 1.0), sm(C), si(C);
    k::bn_forward<double>(x.data(), gamma.data(), beta.data(), y.data(), B, C, H, W, 1e-5, true,
                          0.1, rm.data(), rv.data(), sm.data(), si.data());

    const int64_t n = int64_t(B) * H * W;
    for (int c = 0; c < C; ++c) {
        double mean = 0.0, var = 0.0, batch_mean = 0.0, batch_var = 0.0;
        for (int b = 0; b < B; ++b)
            for (int64_t p = 0; p < int64_t(H) * W; ++p) {
                double xv = x[(size_t(b) * C + c) * H * W + p];
                double yv = y[(size_t(b) * C + c) * H * W + p];
                mean += yv;
                var += yv * yv;
                batch_mean += xv;
                batch_var += xv * xv;
            }
        mean /= double(n);
        var = var / double(n) - mean * mean;
        batch_mean /= double(n);
        batch_var = batch_var / double(n) - batch_mean * batch_mean;

        CHECK(std::abs(mean) < 1e-10);
        CHECK(var == doctest::Approx(batch_var / (batch_var + 1e-5)).epsilon(1e-8));
        // running stats blend toward the batch stats with momentum 0.1
        CHECK(rm[c] == doctest::Approx(0.1 * batch_mean).epsilon(1e-12));
        CHECK(rv[c] == doctest::Approx(0.9 * 1.0 + 0.1 * batch_var).epsilon(1e-12));
    }
}

TEST_CASE("batchnorm eval uses running statistics, not batch statistics") {
    const int B = 2, C = 1, H = 2, W = 2;
    std::vector<double> x{10, 12, 14, 16, 18, 20, 22, 24};
    std::vector<double> gamma{2.0}, beta{0.5};
    std::vector<double> rm{1.0}, rv{4.0}, sm(1), si(1);
    std::vector<double> y(x.size());
    k::bn_forward<double>(x.data(), gamma.data(), beta.data(), y.data(), B, C, H, W, 1e-5, false,
                          0.1, rm.data(), rv.data(), sm.data(), si.data());
    for (size_t i = 0; i < x.size(); ++i)
        CHECK(y[i] == doctest::Approx(2.0 * (x[i] - 1.0) / std::sqrt(4.0 + 1e-5) + 0.5));
    // eval mode leaves the running stats untouched
    CHECK(rm[0] == 1.0);
    CHECK(rv[0] == 4.0);
}

TEST_CASE("gemm handles all transpose combinations and accumulate") {
    // A = [[1,2,3],[4,5,6]], B = [[7,8],[9,10],[11,12]]
    std::vector<double> a{1, 2, 3, 4, 5, 6}, b{7, 8, 9, 10, 11, 12};
    std::vector<double> c(4, 0.0);
    k::gemm<double>(false, false, 2, 2, 3, a.data(), 3, b.data(), 2, c.data(), 2, false);
    CHECK(c == std::vector<double>{58, 64, 139, 154});

    // accumulate on top of the previous result
    k::gemm<double>(false, false, 2, 2, 3, a.data(), 3, b.data(), 2, c.data(), 2, true);
    CHECK(c == std::vector<double>{116, 128, 278, 308});

    // A^T path: store A as [3,2] and ask for the transpose
    std::vector<double> at{1, 4, 2, 5, 3, 6};
    std::vector<double> c2(4, 0.0);
    k::gemm<double>(true, false, 2, 2, 3, at.data(), 2, b.data(), 2, c2.data(), 2, false);
    CHECK(c2 == std::vector<double>{58, 64, 139, 154});

    // B^T path: store B as [2,3]
    std::vector<double> bt{7, 9, 11, 8, 10, 12};
    std::vector<double> c3(4, 0.0);
    k::gemm<double>(false, true, 2, 2, 3, a.data(), 3, bt.data(), 3, c3.data(), 2, false);
    CHECK(c3 == std::vector<double>{58, 64, 139, 154});
}

TEST_CASE("im2col and col2im are adjoint") {
    // <im2col(x), y> == <x, col2im(y)> pins the scatter as the exact
    // transpose of the gather, which is what the conv backward relies on
    auto rs = derive_stream(11, "kernels/adjoint", 0);
    k::ConvGeom g{3, 5, 5, 3, 2, 1, 3, 3};
    const int64_t rows = int64_t(g.channels) * g.kernel * g.kernel;
    const int64_t grid = int64_t(g.grid_h) * g.grid_w;
    auto x = random_vec(size_t(g.channels) * g.img_h * g.img_w, rs);
    auto y = random_vec(size_t(rows) * grid, rs);

    std::vector<double> cols(size_t(rows) * grid);
    k::im2col(x.data(), g, cols.data(), grid, 0);
    std::vector<double> img(x.size(), 0.0);
    k::col2im(y.data(), g, grid, 0, img.data());

    double lhs = 0.0, rhs = 0.0;
    for (size_t i = 0; i < cols.size(); ++i) lhs += cols[i] * y[i];
    for (size_t i = 0; i < x.size(); ++i) rhs += x[i] * img[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("conv backward accumulates into provided buffers") {
    // gb accumulates sum of gy per filter; checked directly
    auto d = k::Conv2dDims::make(1, 1, 3, 3, 2, 3, 1, 1);
    auto rs = derive_stream(11, "kernels/back", 0);
    auto x = random_vec(9, rs);
    auto w = random_vec(2 * 9, rs);
    auto gy = random_vec(2 * 9, rs);
    std::vector<double> gb(2, 0.25);  // pre-seeded to verify accumulation
    k::conv2d_backward<double>(x.data(), w.data(), gy.data(), nullptr, nullptr, gb.data(), d);
    double s0 = 0.0, s1 = 0.0;
    for (int p = 0; p < 9; ++p) {
        s0 += gy[p];
        s1 += gy[9 + p];
    }
    CHECK(gb[0] == doctest::Approx(0.25 + s0));
    CHECK(gb[1] == doctest::Approx(0.25 + s1));
}
