#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "mgnet/common.hpp"

namespace mgnet {

namespace detail {
// Shared contraction kernel: for a block of up to 8 outputs,
//   outs[b][i] = float( bias8[b] + sum_k wpack[k*8 + b] * srcs[k][i] )
// over a contiguous run of `len` elements. Every output element owns one
// 64-bit accumulator and the k terms are added in index order, so the result
// does not depend on the SIMD tiling or on how work is split across threads.
inline void plane_gemm8(const float* const* srcs, int num_k, const double* wpack,
                        const double* bias8, float* const* outs, int bc, int64_t len) {
    int64_t i0 = 0;
#if defined(__AVX512F__)
    for (; i0 + 16 <= len; i0 += 16) {
        __m512d a[16];
        for (int b = 0; b < 8; ++b) {
            a[2 * b] = _mm512_set1_pd(bias8[b]);
            a[2 * b + 1] = a[2 * b];
        }
        for (int k = 0; k < num_k; ++k) {
            const float* s = srcs[k] + i0;
            __m512d s0 = _mm512_cvtps_pd(_mm256_loadu_ps(s));
            __m512d s1 = _mm512_cvtps_pd(_mm256_loadu_ps(s + 8));
            const double* w = wpack + static_cast<int64_t>(k) * 8;
            for (int b = 0; b < 8; ++b) {
                __m512d wb = _mm512_set1_pd(w[b]);
                a[2 * b] = _mm512_fmadd_pd(wb, s0, a[2 * b]);
                a[2 * b + 1] = _mm512_fmadd_pd(wb, s1, a[2 * b + 1]);
            }
        }
        for (int b = 0; b < bc; ++b) {
            _mm256_storeu_ps(outs[b] + i0, _mm512_cvtpd_ps(a[2 * b]));
            _mm256_storeu_ps(outs[b] + i0 + 8, _mm512_cvtpd_ps(a[2 * b + 1]));
        }
    }
#endif
    for (; i0 < len; ++i0) {
        double acc[8];
        for (int b = 0; b < 8; ++b) acc[b] = bias8[b];
        for (int k = 0; k < num_k; ++k) {
            double sv = srcs[k][i0];
            const double* w = wpack + static_cast<int64_t>(k) * 8;
            for (int b = 0; b < 8; ++b) acc[b] = std::fma(w[b], sv, acc[b]);
        }
        for (int b = 0; b < bc; ++b) outs[b][i0] = static_cast<float>(acc[b]);
    }
}
}  // namespace detail

// Dense rank-4 tensor, 32-bit floats, contiguous row-major (n, c, h, w).
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<float> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, float fill = 0.0f)
        : n(n_), c(c_), h(h_), w(w_) {
        if (n < 0 || c < 0 || h < 0 || w < 0)
            throw DimensionError("Tensor: negative extent");
        data.assign(static_cast<size_t>(n) * c * h * w, fill);
    }

    int64_t size() const { return static_cast<int64_t>(n) * c * h * w; }

    int64_t index(int ni, int ci, int y, int x) const {
        return ((static_cast<int64_t>(ni) * c + ci) * h + y) * w + x;
    }
    float& at(int ni, int ci, int y, int x) { return data[index(ni, ci, y, x)]; }
    float at(int ni, int ci, int y, int x) const { return data[index(ni, ci, y, x)]; }

    const float* plane(int ni, int ci) const { return data.data() + index(ni, ci, 0, 0); }
    float* plane(int ni, int ci) { return data.data() + index(ni, ci, 0, 0); }

    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    std::string shape_str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

struct ConvSpec {
    int kh = 1, kw = 1;
    int stride_h = 1, stride_w = 1;
    int pad_h = 0, pad_w = 0;
    int groups = 1;
};

inline int conv_out_extent(int in, int pad, int k, int stride) {
    return (in + 2 * pad - k) / stride + 1;
}

// Cross-correlation with zero padding. Weights are (out_c, in_c/groups, kh, kw);
// groups must be 1 (dense) or in_c (depthwise). Each output element accumulates
// in a 64-bit double.
inline Tensor conv2d(const Tensor& input, const Tensor& weights,
                     const std::optional<std::vector<float>>& bias,
                     const ConvSpec& spec) {
    if (spec.kh <= 0 || spec.kw <= 0 || spec.stride_h <= 0 || spec.stride_w <= 0 ||
        spec.pad_h < 0 || spec.pad_w < 0)
        throw DimensionError("conv2d: invalid kernel/stride/padding spec");
    if (spec.groups != 1 && spec.groups != input.c)
        throw DimensionError("conv2d: groups must be 1 or in_channels, got " +
                             std::to_string(spec.groups));
    if (input.c % spec.groups != 0)
        throw DimensionError("conv2d: input channel axis (" + std::to_string(input.c) +
                             ") not divisible by groups");
    if (weights.h != spec.kh || weights.w != spec.kw)
        throw DimensionError("conv2d: weight spatial axes " + weights.shape_str() +
                             " do not match kernel " + std::to_string(spec.kh) + "x" +
                             std::to_string(spec.kw));
    if (weights.c != input.c / spec.groups)
        throw DimensionError("conv2d: weight channel axis " + std::to_string(weights.c) +
                             " != in_channels/groups " +
                             std::to_string(input.c / spec.groups));
    int out_c = weights.n;
    if (out_c % spec.groups != 0)
        throw DimensionError("conv2d: output channel axis not divisible by groups");
    if (bias && static_cast<int>(bias->size()) != out_c)
        throw DimensionError("conv2d: bias length != out_channels");

    int out_h = conv_out_extent(input.h, spec.pad_h, spec.kh, spec.stride_h);
    int out_w = conv_out_extent(input.w, spec.pad_w, spec.kw, spec.stride_w);
    if (out_h <= 0 || out_w <= 0)
        throw DimensionError("conv2d: non-positive output spatial axis for input " +
                             input.shape_str());

    Tensor out(input.n, out_c, out_h, out_w);
    int ic_per_group = input.c / spec.groups;
    int oc_per_group = out_c / spec.groups;

    // Fast path for dense same-resolution convolutions (stride 1, "same"
    // padding, groups 1): pre-shift the input once per kernel tap so the whole
    // conv becomes a plane-level GEMM handled by the register-tiled kernel.
    if (spec.stride_h == 1 && spec.stride_w == 1 && out_h == input.h && out_w == input.w &&
        spec.groups == 1) {
        int num_k = input.c * spec.kh * spec.kw;
        // full zero-filled shifted copies per (ky, kx); the identity tap reads
        // the input directly
        std::vector<Tensor> tap_src(static_cast<size_t>(spec.kh) * spec.kw);
        for (int ky = 0; ky < spec.kh; ++ky)
            for (int kx = 0; kx < spec.kw; ++kx) {
                int dy = ky - spec.pad_h, dx = kx - spec.pad_w;
                if (dy == 0 && dx == 0) continue;
                Tensor s(input.n, input.c, input.h, input.w);
                int y_lo = std::max(0, -dy), y_hi = std::min(input.h, input.h - dy);
                int x_lo = std::max(0, -dx), x_hi = std::min(input.w, input.w - dx);
                for (int ni = 0; ni < input.n; ++ni)
                    for (int ic = 0; ic < input.c; ++ic) {
                        const float* sp = input.plane(ni, ic);
                        float* dp = s.plane(ni, ic);
                        for (int y = y_lo; y < y_hi; ++y)
                            std::copy(sp + static_cast<int64_t>(y + dy) * input.w + x_lo + dx,
                                      sp + static_cast<int64_t>(y + dy) * input.w + x_hi + dx,
                                      dp + static_cast<int64_t>(y) * input.w + x_lo);
                    }
                tap_src[static_cast<size_t>(ky) * spec.kw + kx] = std::move(s);
            }
        int nblocks = (out_c + 7) / 8;
        std::vector<double> wpack(static_cast<size_t>(nblocks) * num_k * 8, 0.0);
        std::vector<double> bias8(static_cast<size_t>(nblocks) * 8, 0.0);
        for (int oc = 0; oc < out_c; ++oc) {
            int blk = oc / 8, b = oc % 8;
            for (int ic = 0; ic < input.c; ++ic)
                for (int ky = 0; ky < spec.kh; ++ky)
                    for (int kx = 0; kx < spec.kw; ++kx) {
                        int k = (ic * spec.kh + ky) * spec.kw + kx;
                        wpack[(static_cast<size_t>(blk) * num_k + k) * 8 + b] =
                            weights.at(oc, ic, ky, kx);
                    }
            if (bias) bias8[static_cast<size_t>(blk) * 8 + b] = (*bias)[oc];
        }
        int64_t plane_elems = static_cast<int64_t>(out_h) * out_w;
        parallel_for(static_cast<int64_t>(input.n) * nblocks, [&](int64_t job) {
            int ni = static_cast<int>(job / nblocks);
            int blk = static_cast<int>(job % nblocks);
            int oc0 = blk * 8;
            int bc = std::min(8, out_c - oc0);
            std::vector<const float*> srcs(num_k);
            for (int ic = 0; ic < input.c; ++ic)
                for (int kt = 0; kt < spec.kh * spec.kw; ++kt) {
                    const Tensor& t = tap_src[kt].data.empty() ? input : tap_src[kt];
                    srcs[ic * spec.kh * spec.kw + kt] = t.plane(ni, ic);
                }
            float* outs[8] = {};
            for (int b = 0; b < bc; ++b) outs[b] = out.plane(ni, oc0 + b);
            detail::plane_gemm8(srcs.data(), num_k,
                                wpack.data() + static_cast<size_t>(blk) * num_k * 8,
                                bias8.data() + static_cast<size_t>(blk) * 8, outs, bc,
                                plane_elems);
        });
        return out;
    }

    // Same-resolution depthwise convolutions: pre-shift per kernel column so
    // every tap is a flat pass over the whole plane.
    if (spec.stride_h == 1 && spec.stride_w == 1 && out_h == input.h && out_w == input.w) {
        std::vector<Tensor> shifted;  // index kx; empty tensor means "use input"
        shifted.resize(spec.kw);
        for (int kx = 0; kx < spec.kw; ++kx) {
            int off = kx - spec.pad_w;
            if (off == 0) continue;
            Tensor s(input.n, input.c, input.h, input.w);
            for (int ni = 0; ni < input.n; ++ni)
                for (int ic = 0; ic < input.c; ++ic) {
                    const float* src = input.plane(ni, ic);
                    float* dst = s.plane(ni, ic);
                    for (int y = 0; y < input.h; ++y) {
                        const float* sr = src + static_cast<int64_t>(y) * input.w;
                        float* dr = dst + static_cast<int64_t>(y) * input.w;
                        int x_lo = std::max(0, -off);
                        int x_hi = std::min(input.w, input.w - off);
                        for (int x = x_lo; x < x_hi; ++x) dr[x] = sr[x + off];
                    }
                }
            shifted[kx] = std::move(s);
        }
        int64_t plane_elems = static_cast<int64_t>(out_h) * out_w;
        // Output channels are processed in blocks of up to 4 inside one group,
        // sharing each loaded input value across 4 accumulator chains. Every
        // output element still has its own 64-bit accumulator with the same
        // tap order, so values are independent of the blocking.
        constexpr int kOcBlock = 4;
        std::vector<std::pair<int, int>> blocks;  // (oc_begin, count) within one group
        for (int oc = 0; oc < out_c;) {
            int g = oc / oc_per_group;
            int group_end = (g + 1) * oc_per_group;
            int cnt = std::min({kOcBlock, out_c - oc, group_end - oc});
            blocks.emplace_back(oc, cnt);
            oc += cnt;
        }
        int64_t nblocks = static_cast<int64_t>(blocks.size());
        parallel_for(static_cast<int64_t>(input.n) * nblocks, [&](int64_t job) {
            int ni = static_cast<int>(job / nblocks);
            auto [oc0, bc] = blocks[static_cast<size_t>(job % nblocks)];
            int g = oc0 / oc_per_group;
            std::vector<double> acc(static_cast<size_t>(plane_elems) * bc);
            for (int b = 0; b < bc; ++b) {
                double init = bias ? static_cast<double>((*bias)[oc0 + b]) : 0.0;
                std::fill(acc.begin() + b * plane_elems, acc.begin() + (b + 1) * plane_elems,
                          init);
            }
            for (int icg = 0; icg < ic_per_group; ++icg) {
                int ic = g * ic_per_group + icg;
                for (int ky = 0; ky < spec.kh; ++ky) {
                    int oy_lo = std::max(0, spec.pad_h - ky);
                    int oy_hi = std::min(out_h, input.h + spec.pad_h - ky);
                    if (oy_lo >= oy_hi) continue;
                    for (int kx = 0; kx < spec.kw; ++kx) {
                        const Tensor& src_t = shifted[kx].data.empty() ? input : shifted[kx];
                        const float* src = src_t.plane(ni, ic) +
                                           static_cast<int64_t>(oy_lo - spec.pad_h + ky) *
                                               input.w;
                        int64_t base = static_cast<int64_t>(oy_lo) * out_w;
                        int64_t len = static_cast<int64_t>(oy_hi - oy_lo) * out_w;
                        if (bc == kOcBlock) {
                            double w0 = weights.at(oc0 + 0, icg, ky, kx);
                            double w1 = weights.at(oc0 + 1, icg, ky, kx);
                            double w2 = weights.at(oc0 + 2, icg, ky, kx);
                            double w3 = weights.at(oc0 + 3, icg, ky, kx);
                            double* d0 = acc.data() + base;
                            double* d1 = d0 + plane_elems;
                            double* d2 = d1 + plane_elems;
                            double* d3 = d2 + plane_elems;
                            for (int64_t i = 0; i < len; ++i) {
                                double s = src[i];
                                d0[i] += w0 * s;
                                d1[i] += w1 * s;
                                d2[i] += w2 * s;
                                d3[i] += w3 * s;
                            }
                        } else {
                            for (int b = 0; b < bc; ++b) {
                                double wv = weights.at(oc0 + b, icg, ky, kx);
                                if (wv == 0.0) continue;
                                double* dst = acc.data() + b * plane_elems + base;
                                for (int64_t i = 0; i < len; ++i) dst[i] += wv * src[i];
                            }
                        }
                    }
                }
            }
            for (int b = 0; b < bc; ++b) {
                float* out_plane = out.plane(ni, oc0 + b);
                const double* a = acc.data() + b * plane_elems;
                for (int64_t i = 0; i < plane_elems; ++i)
                    out_plane[i] = static_cast<float>(a[i]);
            }
        });
        return out;
    }

    // Strided dense convolutions: gather each tap into an output-resolution
    // plane (zero-filled outside the input), then run the same plane kernel.
    if (spec.groups == 1) {
        int ktaps = spec.kh * spec.kw;
        int num_k = input.c * ktaps;
        int64_t plane_elems = static_cast<int64_t>(out_h) * out_w;
        Tensor gathered(input.n, num_k, out_h, out_w);
        for (int ni = 0; ni < input.n; ++ni)
            for (int ic = 0; ic < input.c; ++ic) {
                const float* sp = input.plane(ni, ic);
                for (int ky = 0; ky < spec.kh; ++ky)
                    for (int kx = 0; kx < spec.kw; ++kx) {
                        float* dp = gathered.plane(ni, (ic * spec.kh + ky) * spec.kw + kx);
                        for (int oy = 0; oy < out_h; ++oy) {
                            int iy = oy * spec.stride_h - spec.pad_h + ky;
                            if (iy < 0 || iy >= input.h) continue;
                            const float* sr = sp + static_cast<int64_t>(iy) * input.w;
                            float* dr = dp + static_cast<int64_t>(oy) * out_w;
                            for (int ox = 0; ox < out_w; ++ox) {
                                int ix = ox * spec.stride_w - spec.pad_w + kx;
                                if (ix >= 0 && ix < input.w) dr[ox] = sr[ix];
                            }
                        }
                    }
            }
        int nblocks = (out_c + 7) / 8;
        std::vector<double> wpack(static_cast<size_t>(nblocks) * num_k * 8, 0.0);
        std::vector<double> bias8(static_cast<size_t>(nblocks) * 8, 0.0);
        for (int oc = 0; oc < out_c; ++oc) {
            int blk = oc / 8, b = oc % 8;
            for (int ic = 0; ic < input.c; ++ic)
                for (int ky = 0; ky < spec.kh; ++ky)
                    for (int kx = 0; kx < spec.kw; ++kx)
                        wpack[(static_cast<size_t>(blk) * num_k + (ic * spec.kh + ky) * spec.kw +
                               kx) * 8 + b] = weights.at(oc, ic, ky, kx);
            if (bias) bias8[static_cast<size_t>(blk) * 8 + b] = (*bias)[oc];
        }
        parallel_for(static_cast<int64_t>(input.n) * nblocks, [&](int64_t job) {
            int ni = static_cast<int>(job / nblocks);
            int blk = static_cast<int>(job % nblocks);
            int oc0 = blk * 8;
            int bc = std::min(8, out_c - oc0);
            std::vector<const float*> srcs(num_k);
            for (int k = 0; k < num_k; ++k) srcs[k] = gathered.plane(ni, k);
            float* outs[8] = {};
            for (int b = 0; b < bc; ++b) outs[b] = out.plane(ni, oc0 + b);
            detail::plane_gemm8(srcs.data(), num_k,
                                wpack.data() + static_cast<size_t>(blk) * num_k * 8,
                                bias8.data() + static_cast<size_t>(blk) * 8, outs, bc,
                                plane_elems);
        });
        return out;
    }

    parallel_for(static_cast<int64_t>(input.n) * out_c, [&](int64_t job) {
        int ni = static_cast<int>(job / out_c);
        int oc = static_cast<int>(job % out_c);
        int g = oc / oc_per_group;
        std::vector<double> acc(static_cast<size_t>(out_h) * out_w,
                                bias ? static_cast<double>((*bias)[oc]) : 0.0);
        for (int icg = 0; icg < ic_per_group; ++icg) {
            int ic = g * ic_per_group + icg;
            const float* in_plane = input.plane(ni, ic);
            for (int ky = 0; ky < spec.kh; ++ky) {
                for (int kx = 0; kx < spec.kw; ++kx) {
                    double wv = weights.at(oc, icg, ky, kx);
                    if (wv == 0.0) continue;
                    for (int oy = 0; oy < out_h; ++oy) {
                        int iy = oy * spec.stride_h - spec.pad_h + ky;
                        if (iy < 0 || iy >= input.h) continue;
                        // valid ox range so that ix = ox*sw - pw + kx in [0, w)
                        int off = kx - spec.pad_w;
                        int ox_lo = 0, ox_hi = out_w;
                        if (off < 0) ox_lo = (-off + spec.stride_w - 1) / spec.stride_w;
                        int max_ix = input.w - 1 - off;
                        if (max_ix < 0)
                            ox_hi = 0;
                        else if (max_ix / spec.stride_w + 1 < ox_hi)
                            ox_hi = max_ix / spec.stride_w + 1;
                        const float* in_row = in_plane + static_cast<int64_t>(iy) * input.w;
                        double* acc_row = acc.data() + static_cast<int64_t>(oy) * out_w;
                        if (spec.stride_w == 1) {
                            const float* src = in_row + off + ox_lo;
                            for (int ox = ox_lo; ox < ox_hi; ++ox)
                                acc_row[ox] += wv * src[ox - ox_lo];
                        } else {
                            for (int ox = ox_lo; ox < ox_hi; ++ox)
                                acc_row[ox] += wv * in_row[ox * spec.stride_w + off];
                        }
                    }
                }
            }
        }
        float* out_plane = out.plane(ni, oc);
        for (int64_t i = 0; i < static_cast<int64_t>(out_h) * out_w; ++i)
            out_plane[i] = static_cast<float>(acc[i]);
    });
    return out;
}

inline Tensor global_avg_pool(const Tensor& input) {
    if (input.h < 1 || input.w < 1)
        throw DimensionError("global_avg_pool: empty spatial extent " + input.shape_str());
    Tensor out(input.n, input.c, 1, 1);
    int64_t hw = static_cast<int64_t>(input.h) * input.w;
    for (int ni = 0; ni < input.n; ++ni)
        for (int ci = 0; ci < input.c; ++ci) {
            const float* p = input.plane(ni, ci);
            double s = 0.0;
            for (int64_t i = 0; i < hw; ++i) s += p[i];
            out.at(ni, ci, 0, 0) = static_cast<float>(s / static_cast<double>(hw));
        }
    return out;
}

// Bilinear sample at fractional (x, y); grid points outside [0,w-1]x[0,h-1]
// contribute zero. Total for any finite coordinates.
inline float bilinear_sample(const Tensor& t, float x, float y, int ni, int ci) {
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    float fx = x - static_cast<float>(x0);
    float fy = y - static_cast<float>(y0);
    auto v = [&](int xx, int yy) -> float {
        if (xx < 0 || xx >= t.w || yy < 0 || yy >= t.h) return 0.0f;
        return t.at(ni, ci, yy, xx);
    };
    return (1.0f - fx) * (1.0f - fy) * v(x0, y0) + fx * (1.0f - fy) * v(x0 + 1, y0) +
           (1.0f - fx) * fy * v(x0, y0 + 1) + fx * fy * v(x0 + 1, y0 + 1);
}

// Spatial derivative of bilinear_sample w.r.t. (x, y). Piecewise constant per
// cell; at an exact integer coordinate the left/lower one-sided derivative is
// taken on the differentiated axis.
inline void bilinear_sample_grad(const Tensor& t, float x, float y, int ni, int ci,
                                 float& dx, float& dy) {
    auto v = [&](int xx, int yy) -> float {
        if (xx < 0 || xx >= t.w || yy < 0 || yy >= t.h) return 0.0f;
        return t.at(ni, ci, yy, xx);
    };
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    float fx = x - static_cast<float>(x0);
    float fy = y - static_cast<float>(y0);
    int gx0 = (fx == 0.0f) ? x0 - 1 : x0;
    int gy0 = (fy == 0.0f) ? y0 - 1 : y0;
    dx = (1.0f - fy) * (v(gx0 + 1, y0) - v(gx0, y0)) +
         fy * (v(gx0 + 1, y0 + 1) - v(gx0, y0 + 1));
    dy = (1.0f - fx) * (v(x0, gy0 + 1) - v(x0, gy0)) +
         fx * (v(x0 + 1, gy0 + 1) - v(x0 + 1, gy0));
}

namespace detail {
// Catmull-Rom cubic kernel (a = -0.5).
inline double cubic_weight(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}
}  // namespace detail

// Bicubic resize, edge-clamped, half-pixel center alignment.
inline Tensor resize_bicubic(const Tensor& image, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1)
        throw DimensionError("resize_bicubic: target extent < 1");
    if (image.h < 4 || image.w < 4)
        throw DimensionError("resize_bicubic: source must be at least 4x4, got " +
                             image.shape_str());
    Tensor out(image.n, image.c, out_h, out_w);
    double sy = static_cast<double>(image.h) / out_h;
    double sx = static_cast<double>(image.w) / out_w;

    struct TapSet {
        int idx[4];
        double wgt[4];
    };
    auto make_taps = [](int out_extent, int in_extent, double scale) {
        std::vector<TapSet> taps(out_extent);
        for (int o = 0; o < out_extent; ++o) {
            double src = (o + 0.5) * scale - 0.5;
            int base = static_cast<int>(std::floor(src));
            double frac = src - base;
            for (int j = 0; j < 4; ++j) {
                taps[o].idx[j] = std::clamp(base - 1 + j, 0, in_extent - 1);
                taps[o].wgt[j] = detail::cubic_weight(frac - (j - 1));
            }
        }
        return taps;
    };
    auto ty = make_taps(out_h, image.h, sy);
    auto tx = make_taps(out_w, image.w, sx);

    parallel_for(static_cast<int64_t>(image.n) * image.c, [&](int64_t job) {
        int ni = static_cast<int>(job / image.c);
        int ci = static_cast<int>(job % image.c);
        const float* in_plane = image.plane(ni, ci);
        float* out_plane = out.plane(ni, ci);
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                double acc = 0.0;
                for (int j = 0; j < 4; ++j) {
                    const float* row = in_plane + static_cast<int64_t>(ty[oy].idx[j]) * image.w;
                    double racc = 0.0;
                    for (int i = 0; i < 4; ++i)
                        racc += tx[ox].wgt[i] * row[tx[ox].idx[i]];
                    acc += ty[oy].wgt[j] * racc;
                }
                out_plane[static_cast<int64_t>(oy) * out_w + ox] = static_cast<float>(acc);
            }
        }
    });
    return out;
}

inline Tensor map_elementwise(const Tensor& x, float (*fn)(float)) {
    Tensor out = x;
    for (auto& v : out.data) v = fn(v);
    return out;
}

inline float relu_scalar(float x) { return x > 0.0f ? x : 0.0f; }

inline float softplus_scalar(float x) {
    if (x > 20.0f) return x;
    if (x < -20.0f) return std::exp(x);
    return std::log1p(std::exp(x));
}

inline float sigmoid_scalar(float x) { return 1.0f / (1.0f + std::exp(-x)); }

inline Tensor relu(const Tensor& x) { return map_elementwise(x, relu_scalar); }

}  // namespace mgnet
