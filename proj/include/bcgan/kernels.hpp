#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <vector>

#include "bcgan/threads.hpp"

// Low-level numeric kernels behind the graph ops. Convolutions are
// im2col + GEMM; every GEMM is chunked over output columns with a fixed
// static split, so results are bitwise reproducible for a fixed chunk
// layout and exactly reproducible in single-thread mode.

namespace bcgan::kernels {

template <class T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0,
                          Eigen::OuterStride<>>;
template <class T>
using CMatMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>,
                           0, Eigen::OuterStride<>>;

// C[M,N] (+)= op(A) * op(B); row-major with explicit leading dimensions
template <class T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, const T* a, int64_t lda,
          const T* b, int64_t ldb, T* c, int64_t ldc, bool accumulate) {
    auto run_block = [&](int64_t col0, int64_t col1) {
        int64_t nb = col1 - col0;
        if (nb <= 0) return;
        MatMap<T> cm(c + col0, m, nb, Eigen::OuterStride<>(ldc));
        CMatMap<T> am(a, trans_a ? k : m, trans_a ? m : k, Eigen::OuterStride<>(lda));
        // column block of op(B): for plain B skip col0 along the row,
        // for transposed B skip whole rows
        const T* bptr = trans_b ? b + col0 * ldb : b + col0;
        CMatMap<T> bm(bptr, trans_b ? nb : k, trans_b ? k : nb, Eigen::OuterStride<>(ldb));

        if (!trans_a && !trans_b) {
            if (accumulate) cm.noalias() += am * bm;
            else cm.noalias() = am * bm;
        } else if (trans_a && !trans_b) {
            if (accumulate) cm.noalias() += am.transpose() * bm;
            else cm.noalias() = am.transpose() * bm;
        } else if (!trans_a && trans_b) {
            if (accumulate) cm.noalias() += am * bm.transpose();
            else cm.noalias() = am * bm.transpose();
        } else {
            if (accumulate) cm.noalias() += am.transpose() * bm.transpose();
            else cm.noalias() = am.transpose() * bm.transpose();
        }
    };

    int workers = num_threads();
    double flops = double(m) * double(n) * double(k);
    if (workers <= 1 || flops < 2e5 || n < workers) {
        run_block(0, n);
        return;
    }
    int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) {
        int64_t lo = w * chunk, hi = std::min<int64_t>(lo + chunk, n);
        if (lo >= hi) break;
        pool.emplace_back([=] { run_block(lo, hi); });
    }
    run_block(0, std::min<int64_t>(chunk, n));
    for (auto& t : pool) t.join();
}

struct ConvGeom {
    int channels, img_h, img_w;  // dense image side
    int kernel, stride, pad;
    int grid_h, grid_w;  // sliding-window grid side
};

inline int conv_out_extent(int in, int kernel, int stride, int pad) {
    int span = in + 2 * pad - kernel;
    if (span < 0) throw std::invalid_argument("conv kernel larger than padded input");
    return span / stride + 1;
}

inline int convt_out_extent(int in, int kernel, int stride, int pad) {
    int out = (in - 1) * stride - 2 * pad + kernel;
    if (out < 1) throw std::invalid_argument("conv_transpose output extent would be < 1");
    return out;
}

// one item: img[C,H,W] -> cols rows [C*k*k], columns are grid positions.
// cols is a row-major [C*k*k, col_stride] matrix; this item's columns start
// at col_offset.
template <class T>
void im2col(const T* img, const ConvGeom& g, T* cols, int64_t col_stride, int64_t col_offset) {
    const int64_t plane = int64_t(g.img_h) * g.img_w;
    const int64_t grid = int64_t(g.grid_h) * g.grid_w;
    for (int c = 0; c < g.channels; ++c) {
        for (int ki = 0; ki < g.kernel; ++ki) {
            for (int kj = 0; kj < g.kernel; ++kj) {
                int64_t row = (int64_t(c) * g.kernel + ki) * g.kernel + kj;
                T* dst = cols + row * col_stride + col_offset;
                const T* src = img + c * plane;
                for (int gy = 0; gy < g.grid_h; ++gy) {
                    int iy = gy * g.stride - g.pad + ki;
                    if (iy < 0 || iy >= g.img_h) {
                        for (int gx = 0; gx < g.grid_w; ++gx) dst[int64_t(gy) * g.grid_w + gx] = T(0);
                        continue;
                    }
                    for (int gx = 0; gx < g.grid_w; ++gx) {
                        int ix = gx * g.stride - g.pad + kj;
                        dst[int64_t(gy) * g.grid_w + gx] =
                            (ix >= 0 && ix < g.img_w) ? src[int64_t(iy) * g.img_w + ix] : T(0);
                    }
                }
                (void)grid;
            }
        }
    }
}

// scatter-add transpose of im2col; img must be zeroed by the caller
template <class T>
void col2im(const T* cols, const ConvGeom& g, int64_t col_stride, int64_t col_offset, T* img) {
    const int64_t plane = int64_t(g.img_h) * g.img_w;
    for (int c = 0; c < g.channels; ++c) {
        for (int ki = 0; ki < g.kernel; ++ki) {
            for (int kj = 0; kj < g.kernel; ++kj) {
                int64_t row = (int64_t(c) * g.kernel + ki) * g.kernel + kj;
                const T* src = cols + row * col_stride + col_offset;
                T* dst = img + c * plane;
                for (int gy = 0; gy < g.grid_h; ++gy) {
                    int iy = gy * g.stride - g.pad + ki;
                    if (iy < 0 || iy >= g.img_h) continue;
                    for (int gx = 0; gx < g.grid_w; ++gx) {
                        int ix = gx * g.stride - g.pad + kj;
                        if (ix >= 0 && ix < g.img_w) dst[int64_t(iy) * g.img_w + ix] += src[int64_t(gy) * g.grid_w + gx];
                    }
                }
            }
        }
    }
}

struct Conv2dDims {
    int batch, in_c, in_h, in_w;
    int out_c, kernel, stride, pad;
    int out_h, out_w;

    static Conv2dDims make(int b, int c, int h, int w, int f, int k, int s, int p) {
        Conv2dDims d{b, c, h, w, f, k, s, p, 0, 0};
        d.out_h = conv_out_extent(h, k, s, p);
        d.out_w = conv_out_extent(w, k, s, p);
        return d;
    }
    ConvGeom geom() const { return {in_c, in_h, in_w, kernel, stride, pad, out_h, out_w}; }
    int64_t grid() const { return int64_t(out_h) * out_w; }
    int64_t ckk() const { return int64_t(in_c) * kernel * kernel; }
};

// y[B,F,oH,oW] = conv(x[B,C,H,W], w[F,C,k,k]) + bias
template <class T>
void conv2d_forward(const T* x, const T* w, const T* bias, T* y, const Conv2dDims& d) {
    const int64_t P = d.grid(), CKK = d.ckk(), BP = int64_t(d.batch) * P;
    std::vector<T> cols(CKK * BP);
    parallel_for(d.batch, [&](int64_t b0, int64_t b1) {
        for (int64_t b = b0; b < b1; ++b)
            im2col(x + b * d.in_c * d.in_h * d.in_w, d.geom(), cols.data(), BP, b * P);
    });
    std::vector<T> ymat(int64_t(d.out_c) * BP);
    gemm<T>(false, false, d.out_c, BP, CKK, w, CKK, cols.data(), BP, ymat.data(), BP, false);
    parallel_for(int64_t(d.batch) * d.out_c, [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            int64_t b = i / d.out_c, f = i % d.out_c;
            const T* src = ymat.data() + f * BP + b * P;
            T* dst = y + (b * d.out_c + f) * P;
            T add = bias ? bias[f] : T(0);
            for (int64_t p = 0; p < P; ++p) dst[p] = src[p] + add;
        }
    });
}

template <class T>
void conv2d_backward(const T* x, const T* w, const T* gy, T* gx, T* gw, T* gb,
                     const Conv2dDims& d) {
    const int64_t P = d.grid(), CKK = d.ckk(), BP = int64_t(d.batch) * P;
    // gather gy into [F, B*P]
    std::vector<T> gymat(int64_t(d.out_c) * BP);
    parallel_for(int64_t(d.batch) * d.out_c, [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            int64_t b = i / d.out_c, f = i % d.out_c;
            const T* src = gy + (b * d.out_c + f) * P;
            T* dst = gymat.data() + f * BP + b * P;
            for (int64_t p = 0; p < P; ++p) dst[p] = src[p];
        }
    });
    if (gw) {
        std::vector<T> cols(CKK * BP);
        parallel_for(d.batch, [&](int64_t b0, int64_t b1) {
            for (int64_t b = b0; b < b1; ++b)
                im2col(x + b * d.in_c * d.in_h * d.in_w, d.geom(), cols.data(), BP, b * P);
        });
        gemm<T>(false, true, d.out_c, CKK, BP, gymat.data(), BP, cols.data(), BP, gw, CKK, true);
    }
    if (gb) {
        for (int f = 0; f < d.out_c; ++f) {
            double acc = 0.0;
            const T* row = gymat.data() + f * BP;
            for (int64_t p = 0; p < BP; ++p) acc += double(row[p]);
            gb[f] += T(acc);
        }
    }
    if (gx) {
        std::vector<T> dcols(CKK * BP);
        gemm<T>(true, false, CKK, BP, d.out_c, w, CKK, gymat.data(), BP, dcols.data(), BP, false);
        parallel_for(d.batch, [&](int64_t b0, int64_t b1) {
            for (int64_t b = b0; b < b1; ++b)
                col2im(dcols.data(), d.geom(), BP, b * P, gx + b * d.in_c * d.in_h * d.in_w);
        });
    }
}

struct ConvT2dDims {
    int batch, in_c, in_h, in_w;
    int out_c, kernel, stride, pad;
    int out_h, out_w;

    static ConvT2dDims make(int b, int c, int h, int w, int f, int k, int s, int p) {
        ConvT2dDims d{b, c, h, w, f, k, s, p, 0, 0};
        d.out_h = convt_out_extent(h, k, s, p);
        d.out_w = convt_out_extent(w, k, s, p);
        return d;
    }
    // the matching forward-conv geometry: output image, gridded by the input
    ConvGeom geom() const { return {out_c, out_h, out_w, kernel, stride, pad, in_h, in_w}; }
    int64_t grid() const { return int64_t(in_h) * in_w; }
    int64_t fkk() const { return int64_t(out_c) * kernel * kernel; }
};

// y[B,F,oH,oW] = conv_transpose(x[B,C,H,W], w[C,F,k,k]) + bias
template <class T>
void convt2d_forward(const T* x, const T* w, const T* bias, T* y, const ConvT2dDims& d) {
    const int64_t P = d.grid(), FKK = d.fkk(), BP = int64_t(d.batch) * P;
    std::vector<T> xmat(int64_t(d.in_c) * BP);
    parallel_for(int64_t(d.batch) * d.in_c, [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            int64_t b = i / d.in_c, c = i % d.in_c;
            const T* src = x + (b * d.in_c + c) * P;
            T* dst = xmat.data() + c * BP + b * P;
            for (int64_t p = 0; p < P; ++p) dst[p] = src[p];
        }
    });
    std::vector<T> cols(FKK * BP);
    gemm<T>(true, false, FKK, BP, d.in_c, w, FKK, xmat.data(), BP, cols.data(), BP, false);
    const int64_t oplane = int64_t(d.out_h) * d.out_w;
    parallel_for(d.batch, [&](int64_t b0, int64_t b1) {
        for (int64_t b = b0; b < b1; ++b) {
            T* img = y + b * d.out_c * oplane;
            std::fill(img, img + d.out_c * oplane, T(0));
            col2im(cols.data(), d.geom(), BP, b * P, img);
            if (bias)
                for (int f = 0; f < d.out_c; ++f)
                    for (int64_t p = 0; p < oplane; ++p) img[f * oplane + p] += bias[f];
        }
    });
}

template <class T>
void convt2d_backward(const T* x, const T* w, const T* gy, T* gx, T* gw, T* gb,
                      const ConvT2dDims& d) {
    const int64_t P = d.grid(), FKK = d.fkk(), BP = int64_t(d.batch) * P;
    const int64_t oplane = int64_t(d.out_h) * d.out_w;
    // im2col over gy with the forward-conv geometry
    std::vector<T> gycols(FKK * BP);
    parallel_for(d.batch, [&](int64_t b0, int64_t b1) {
        for (int64_t b = b0; b < b1; ++b)
            im2col(gy + b * d.out_c * oplane, d.geom(), gycols.data(), BP, b * P);
    });
    if (gx) {
        std::vector<T> gxmat(int64_t(d.in_c) * BP);
        gemm<T>(false, false, d.in_c, BP, FKK, w, FKK, gycols.data(), BP, gxmat.data(), BP, false);
        parallel_for(int64_t(d.batch) * d.in_c, [&](int64_t i0, int64_t i1) {
            for (int64_t i = i0; i < i1; ++i) {
                int64_t b = i / d.in_c, c = i % d.in_c;
                const T* src = gxmat.data() + c * BP + b * P;
                T* dst = gx + (b * d.in_c + c) * P;
                for (int64_t p = 0; p < P; ++p) dst[p] += src[p];
            }
        });
    }
    if (gw) {
        std::vector<T> xmat(int64_t(d.in_c) * BP);
        parallel_for(int64_t(d.batch) * d.in_c, [&](int64_t i0, int64_t i1) {
            for (int64_t i = i0; i < i1; ++i) {
                int64_t b = i / d.in_c, c = i % d.in_c;
                const T* src = x + (b * d.in_c + c) * P;
                T* dst = xmat.data() + c * BP + b * P;
                for (int64_t p = 0; p < P; ++p) dst[p] = src[p];
            }
        });
        gemm<T>(false, true, d.in_c, FKK, BP, xmat.data(), BP, gycols.data(), BP, gw, FKK, true);
    }
    if (gb) {
        for (int f = 0; f < d.out_c; ++f) {
            double acc = 0.0;
            for (int b = 0; b < d.batch; ++b) {
                const T* src = gy + (int64_t(b) * d.out_c + f) * oplane;
                for (int64_t p = 0; p < oplane; ++p) acc += double(src[p]);
            }
            gb[f] += T(acc);
        }
    }
}

// Batchnorm over (B,H,W) per channel; biased batch variance.
template <class T>
void bn_forward(const T* x, const T* gamma, const T* beta, T* y, int B, int C, int H, int W,
                double eps, bool training, double momentum, T* running_mean, T* running_var,
                T* saved_mean, T* saved_invstd) {
    const int64_t plane = int64_t(H) * W;
    const int64_t n = int64_t(B) * plane;
    parallel_for(C, [&](int64_t c0, int64_t c1) {
        for (int64_t c = c0; c < c1; ++c) {
            double mean, var;
            if (training) {
                double s = 0.0;
                for (int b = 0; b < B; ++b) {
                    const T* src = x + (int64_t(b) * C + c) * plane;
                    for (int64_t p = 0; p < plane; ++p) s += double(src[p]);
                }
                mean = s / double(n);
                double sq = 0.0;
                for (int b = 0; b < B; ++b) {
                    const T* src = x + (int64_t(b) * C + c) * plane;
                    for (int64_t p = 0; p < plane; ++p) {
                        double d = double(src[p]) - mean;
                        sq += d * d;
                    }
                }
                var = sq / double(n);
                running_mean[c] = T((1.0 - momentum) * double(running_mean[c]) + momentum * mean);
                running_var[c] = T((1.0 - momentum) * double(running_var[c]) + momentum * var);
            } else {
                mean = double(running_mean[c]);
                var = double(running_var[c]);
            }
            T inv = T(1.0 / std::sqrt(var + eps));
            saved_mean[c] = T(mean);
            saved_invstd[c] = inv;
            T g = gamma[c], bt = beta[c], mu = T(mean);
            for (int b = 0; b < B; ++b) {
                const T* src = x + (int64_t(b) * C + c) * plane;
                T* dst = y + (int64_t(b) * C + c) * plane;
                for (int64_t p = 0; p < plane; ++p) dst[p] = g * (src[p] - mu) * inv + bt;
            }
        }
    });
}

template <class T>
void bn_backward(const T* x, const T* gamma, const T* gy, T* gx, T* ggamma, T* gbeta, int B,
                 int C, int H, int W, bool training, const T* saved_mean, const T* saved_invstd) {
    const int64_t plane = int64_t(H) * W;
    const int64_t n = int64_t(B) * plane;
    parallel_for(C, [&](int64_t c0, int64_t c1) {
        for (int64_t c = c0; c < c1; ++c) {
            const T mu = saved_mean[c], inv = saved_invstd[c], g = gamma[c];
            double s1 = 0.0, s2 = 0.0;
            for (int b = 0; b < B; ++b) {
                const T* xs = x + (int64_t(b) * C + c) * plane;
                const T* gs = gy + (int64_t(b) * C + c) * plane;
                for (int64_t p = 0; p < plane; ++p) {
                    s1 += double(gs[p]);
                    s2 += double(gs[p]) * double((xs[p] - mu) * inv);
                }
            }
            if (gbeta) gbeta[c] += T(s1);
            if (ggamma) ggamma[c] += T(s2);
            if (!gx) continue;
            if (training) {
                const T m1 = T(s1 / double(n)), m2 = T(s2 / double(n));
                for (int b = 0; b < B; ++b) {
                    const T* xs = x + (int64_t(b) * C + c) * plane;
                    const T* gs = gy + (int64_t(b) * C + c) * plane;
                    T* gd = gx + (int64_t(b) * C + c) * plane;
                    for (int64_t p = 0; p < plane; ++p) {
                        T xhat = (xs[p] - mu) * inv;
                        gd[p] += g * inv * (gs[p] - m1 - xhat * m2);
                    }
                }
            } else {
                for (int b = 0; b < B; ++b) {
                    const T* gs = gy + (int64_t(b) * C + c) * plane;
                    T* gd = gx + (int64_t(b) * C + c) * plane;
                    for (int64_t p = 0; p < plane; ++p) gd[p] += g * inv * gs[p];
                }
            }
        }
    });
}

}  // namespace bcgan::kernels
