#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mgnet/fpn.hpp"
#include "mgnet/tensor.hpp"
#include "mgnet/weights.hpp"

namespace mgnet {

inline constexpr int kDeformKernel = 3;

// Per-location 2D displacements for each kernel tap, stored as a tensor of
// shape (n, 2*k*k, h, w): channel 2q is dx and 2q+1 is dy for tap
// q = ky*k + kx (row-major over the kernel grid). Fractional pixel units,
// unclamped; out-of-range samples resolve to zero via the bilinear contract.
struct OffsetField {
    Tensor field;
    int kernel = kDeformKernel;

    int taps() const { return kernel * kernel; }
    float dx(int ni, int q, int y, int x) const { return field.at(ni, 2 * q, y, x); }
    float dy(int ni, int q, int y, int x) const { return field.at(ni, 2 * q + 1, y, x); }
};

inline OffsetField make_offset_field(Tensor t, int kernel = kDeformKernel) {
    if (t.c != 2 * kernel * kernel)
        throw DimensionError("OffsetField: channel axis " + std::to_string(t.c) +
                             " != 2*k*k = " + std::to_string(2 * kernel * kernel));
    return OffsetField{std::move(t), kernel};
}

struct DisentangledFeatures {
    Tensor f_cls;
    Tensor f_reg;
};

// Raw per-level scalars, normalized with a softmax before use.
struct FusionWeights {
    std::vector<float> raw;

    std::vector<double> normalized() const {
        double mx = raw.empty() ? 0.0 : raw[0];
        for (float v : raw) mx = std::max(mx, static_cast<double>(v));
        std::vector<double> out(raw.size());
        double sum = 0.0;
        for (size_t i = 0; i < raw.size(); ++i) {
            out[i] = std::exp(static_cast<double>(raw[i]) - mx);
            sum += out[i];
        }
        for (auto& v : out) v /= sum;
        return out;
    }
};

// Offset sub-network: one 3x3 same-pad conv with 2*2*k*k output channels,
// split on the channel axis into the classification and regression fields.
inline std::pair<OffsetField, OffsetField> offset_gen(const Tensor& f,
                                                      const Tensor& phi_weights,
                                                      const std::vector<float>& phi_bias,
                                                      int kernel = kDeformKernel) {
    int half = 2 * kernel * kernel;
    if (phi_weights.n != 2 * half)
        throw DimensionError("offset_gen: phi output channels " + std::to_string(phi_weights.n) +
                             " != 4*k*k = " + std::to_string(2 * half));
    Tensor raw = conv2d(f, phi_weights, phi_bias, ConvSpec{3, 3, 1, 1, 1, 1, 1});
    Tensor cls(raw.n, half, raw.h, raw.w), reg(raw.n, half, raw.h, raw.w);
    int64_t plane = static_cast<int64_t>(raw.h) * raw.w;
    for (int ni = 0; ni < raw.n; ++ni)
        for (int ci = 0; ci < half; ++ci) {
            std::copy(raw.plane(ni, ci), raw.plane(ni, ci) + plane, cls.plane(ni, ci));
            std::copy(raw.plane(ni, half + ci), raw.plane(ni, half + ci) + plane,
                      reg.plane(ni, ci));
        }
    return {make_offset_field(std::move(cls), kernel), make_offset_field(std::move(reg), kernel)};
}

namespace detail {
inline void check_deform_shapes(const Tensor& f, const Tensor& weights,
                                const OffsetField& offsets) {
    int k = offsets.kernel;
    if (weights.h != k || weights.w != k)
        throw DimensionError("deform_conv: kernel " + weights.shape_str() +
                             " does not match offset grid k=" + std::to_string(k));
    if (weights.c != f.c)
        throw DimensionError("deform_conv: weight channel axis " + std::to_string(weights.c) +
                             " != input channels " + std::to_string(f.c));
    if (offsets.field.n != f.n || offsets.field.h != f.h || offsets.field.w != f.w)
        throw DimensionError("deform_conv: offset field shape " + offsets.field.shape_str() +
                             " does not match input " + f.shape_str());
}

// Bilinear gather of every tap: S has shape (n, in_c * k*k, h, w).
inline Tensor gather_taps(const Tensor& f, const OffsetField& offsets) {
    int k = offsets.kernel;
    int taps = k * k;
    int pad = k / 2;
    Tensor s(f.n, f.c * taps, f.h, f.w);
    parallel_for(static_cast<int64_t>(f.n) * f.c, [&](int64_t job) {
        int ni = static_cast<int>(job / f.c);
        int ic = static_cast<int>(job % f.c);
        const float* fp = f.plane(ni, ic);
        for (int q = 0; q < taps; ++q) {
            int ky = q / k, kx = q % k;
            const float* dxp = offsets.field.plane(ni, 2 * q);
            const float* dyp = offsets.field.plane(ni, 2 * q + 1);
            float* dst = s.plane(ni, ic * taps + q);
            for (int oy = 0; oy < f.h; ++oy) {
                int64_t row = static_cast<int64_t>(oy) * f.w;
                for (int ox = 0; ox < f.w; ++ox) {
                    float x = static_cast<float>(ox - pad + kx) + dxp[row + ox];
                    float y = static_cast<float>(oy - pad + ky) + dyp[row + ox];
                    int x0 = static_cast<int>(std::floor(x));
                    int y0 = static_cast<int>(std::floor(y));
                    float out_v;
                    if (x0 >= 0 && x0 + 1 < f.w && y0 >= 0 && y0 + 1 < f.h) {
                        // interior: all four corners in range, no bounds checks
                        float fx = x - static_cast<float>(x0);
                        float fy = y - static_cast<float>(y0);
                        const float* r0 = fp + static_cast<int64_t>(y0) * f.w + x0;
                        const float* r1 = r0 + f.w;
                        out_v = (1.0f - fx) * (1.0f - fy) * r0[0] + fx * (1.0f - fy) * r0[1] +
                                (1.0f - fx) * fy * r1[0] + fx * fy * r1[1];
                    } else {
                        out_v = bilinear_sample(f, x, y, ni, ic);
                    }
                    dst[row + ox] = out_v;
                }
            }
        }
    });
    return s;
}
}  // namespace detail

// Deformable convolution: stride 1, same padding; each output value is the
// sum over taps and channels of W(q) * F(p + q + dp_q), with F read through
// zero-padded bilinear sampling.
inline Tensor deform_conv_forward(const Tensor& f, const Tensor& weights,
                                  const OffsetField& offsets) {
    detail::check_deform_shapes(f, weights, offsets);
    int taps = offsets.taps();
    Tensor s = detail::gather_taps(f, offsets);
    Tensor out(f.n, weights.n, f.h, f.w);
    int64_t plane = static_cast<int64_t>(f.h) * f.w;
    // The gathered layout (ic * taps + q) is already the contraction order, so
    // the conv's register-tiled plane kernel applies directly.
    int num_k = f.c * taps;
    int nblocks = (weights.n + 7) / 8;
    std::vector<double> wpack(static_cast<size_t>(nblocks) * num_k * 8, 0.0);
    std::vector<double> bias8(static_cast<size_t>(nblocks) * 8, 0.0);
    for (int oc = 0; oc < weights.n; ++oc) {
        int blk = oc / 8, b = oc % 8;
        for (int ic = 0; ic < f.c; ++ic)
            for (int q = 0; q < taps; ++q)
                wpack[(static_cast<size_t>(blk) * num_k + ic * taps + q) * 8 + b] =
                    weights.at(oc, ic, q / offsets.kernel, q % offsets.kernel);
    }
    parallel_for(static_cast<int64_t>(f.n) * nblocks, [&](int64_t job) {
        int ni = static_cast<int>(job / nblocks);
        int blk = static_cast<int>(job % nblocks);
        int oc0 = blk * 8;
        int bc = std::min(8, weights.n - oc0);
        std::vector<const float*> srcs(num_k);
        for (int k = 0; k < num_k; ++k) srcs[k] = s.plane(ni, k);
        float* outs[8] = {};
        for (int b = 0; b < bc; ++b) outs[b] = out.plane(ni, oc0 + b);
        detail::plane_gemm8(srcs.data(), num_k,
                            wpack.data() + static_cast<size_t>(blk) * num_k * 8,
                            bias8.data() + static_cast<size_t>(blk) * 8, outs, bc, plane);
    });
    return out;
}

struct DeformGrads {
    Tensor grad_f;
    Tensor grad_weights;
    Tensor grad_offsets;  // same layout as the OffsetField tensor
};

// Analytical backward pass. grad_offsets applies the kernel weight times the
// bilinear spatial derivative (piecewise constant per cell), grad_f scatters
// the bilinear corner weights, grad_weights gathers the sampled values.
inline DeformGrads deform_conv_backward(const Tensor& f, const Tensor& weights,
                                        const OffsetField& offsets, const Tensor& grad_out) {
    detail::check_deform_shapes(f, weights, offsets);
    if (grad_out.n != f.n || grad_out.c != weights.n || grad_out.h != f.h || grad_out.w != f.w)
        throw DimensionError("deform_conv_backward: grad_out shape " + grad_out.shape_str() +
                             " does not match forward output");
    int k = offsets.kernel;
    int taps = k * k;
    int pad = k / 2;
    int64_t plane = static_cast<int64_t>(f.h) * f.w;

    DeformGrads g;
    g.grad_f = Tensor(f.n, f.c, f.h, f.w);
    g.grad_weights = Tensor(weights.n, weights.c, weights.h, weights.w);
    g.grad_offsets = Tensor(offsets.field.n, offsets.field.c, offsets.field.h, offsets.field.w);

    Tensor s = detail::gather_taps(f, offsets);

    // grad_weights(oc, ic, q) = sum_{n,p} grad_out(n, oc, p) * S(n, ic, q, p)
    for (int oc = 0; oc < weights.n; ++oc)
        for (int ic = 0; ic < f.c; ++ic)
            for (int q = 0; q < taps; ++q) {
                double acc = 0.0;
                for (int ni = 0; ni < f.n; ++ni) {
                    const float* go = grad_out.plane(ni, oc);
                    const float* sp = s.plane(ni, ic * taps + q);
                    for (int64_t i = 0; i < plane; ++i) acc += go[i] * sp[i];
                }
                g.grad_weights.at(oc, ic, q / k, q % k) = static_cast<float>(acc);
            }

    for (int ni = 0; ni < f.n; ++ni)
        for (int oy = 0; oy < f.h; ++oy)
            for (int ox = 0; ox < f.w; ++ox)
                for (int q = 0; q < taps; ++q) {
                    int ky = q / k, kx = q % k;
                    float x = static_cast<float>(ox - pad + kx) + offsets.dx(ni, q, oy, ox);
                    float y = static_cast<float>(oy - pad + ky) + offsets.dy(ni, q, oy, ox);
                    double gdx = 0.0, gdy = 0.0;
                    for (int ic = 0; ic < f.c; ++ic) {
                        // upstream coefficient for this (tap, channel, position)
                        double coef = 0.0;
                        for (int oc = 0; oc < weights.n; ++oc)
                            coef += static_cast<double>(grad_out.at(ni, oc, oy, ox)) *
                                    weights.at(oc, ic, ky, kx);
                        if (coef == 0.0) continue;
                        float dsx, dsy;
                        bilinear_sample_grad(f, x, y, ni, ic, dsx, dsy);
                        gdx += coef * dsx;
                        gdy += coef * dsy;
                        // scatter bilinear corner weights into grad_f
                        int x0 = static_cast<int>(std::floor(x));
                        int y0 = static_cast<int>(std::floor(y));
                        float fx = x - static_cast<float>(x0);
                        float fy = y - static_cast<float>(y0);
                        const float cw[4] = {(1 - fx) * (1 - fy), fx * (1 - fy),
                                             (1 - fx) * fy, fx * fy};
                        const int cx[4] = {x0, x0 + 1, x0, x0 + 1};
                        const int cy[4] = {y0, y0, y0 + 1, y0 + 1};
                        for (int c4 = 0; c4 < 4; ++c4)
                            if (cx[c4] >= 0 && cx[c4] < f.w && cy[c4] >= 0 && cy[c4] < f.h)
                                g.grad_f.at(ni, ic, cy[c4], cx[c4]) +=
                                    static_cast<float>(coef * cw[c4]);
                    }
                    g.grad_offsets.at(ni, 2 * q, oy, ox) = static_cast<float>(gdx);
                    g.grad_offsets.at(ni, 2 * q + 1, oy, ox) = static_cast<float>(gdy);
                }
    return g;
}

// Per level: generate task-specific offsets, then one deformable conv per
// branch (separate kernels and offsets), plus a per-branch bias.
inline std::vector<DisentangledFeatures> disentangle_forward(const Pyramid& pyramid,
                                                             const WeightStore& store) {
    std::vector<DisentangledFeatures> out;
    out.reserve(pyramid.levels.size());
    for (size_t l = 0; l < pyramid.levels.size(); ++l) {
        const Tensor& f = pyramid.levels[l];
        std::string prefix = "deform.l" + std::to_string(l);
        auto [off_cls, off_reg] = offset_gen(f, store.get(prefix + ".phi.weight"),
                                             store.get_vector(prefix + ".phi.bias"));
        DisentangledFeatures df;
        df.f_cls = deform_conv_forward(f, store.get(prefix + ".cls.weight"), off_cls);
        df.f_reg = deform_conv_forward(f, store.get(prefix + ".reg.weight"), off_reg);
        auto add_bias = [](Tensor& t, const std::vector<float>& b) {
            for (int ni = 0; ni < t.n; ++ni)
                for (int ci = 0; ci < t.c; ++ci) {
                    float* p = t.plane(ni, ci);
                    int64_t hw = static_cast<int64_t>(t.h) * t.w;
                    for (int64_t i = 0; i < hw; ++i) p[i] += b[ci];
                }
        };
        add_bias(df.f_cls, store.get_vector(prefix + ".cls.bias"));
        add_bias(df.f_reg, store.get_vector(prefix + ".reg.bias"));
        out.push_back(std::move(df));
    }
    return out;
}

// Nearest resample to an arbitrary target resolution (pixel-center mapping).
inline Tensor resize_nearest(const Tensor& x, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw DimensionError("resize_nearest: target extent < 1");
    if (x.h == out_h && x.w == out_w) return x;
    Tensor out(x.n, x.c, out_h, out_w);
    std::vector<int> sy(out_h), sx(out_w);
    for (int y = 0; y < out_h; ++y)
        sy[y] = std::min(x.h - 1, static_cast<int>((y + 0.5) * x.h / out_h));
    for (int xx = 0; xx < out_w; ++xx)
        sx[xx] = std::min(x.w - 1, static_cast<int>((xx + 0.5) * x.w / out_w));
    for (int ni = 0; ni < x.n; ++ni)
        for (int ci = 0; ci < x.c; ++ci) {
            const float* src = x.plane(ni, ci);
            float* dst = out.plane(ni, ci);
            for (int y = 0; y < out_h; ++y)
                for (int xx = 0; xx < out_w; ++xx)
                    dst[static_cast<int64_t>(y) * out_w + xx] =
                        src[static_cast<int64_t>(sy[y]) * x.w + sx[xx]];
        }
    return out;
}

// Softmax-weighted sum of the levels, all resampled (nearest) to the first
// level's resolution. Normalized weights are strictly positive and sum to 1.
inline Tensor dynamic_fuse(const std::vector<Tensor>& levels, const FusionWeights& fusion) {
    if (levels.empty()) throw DimensionError("dynamic_fuse: no levels");
    if (fusion.raw.size() != levels.size())
        throw DimensionError("dynamic_fuse: " + std::to_string(fusion.raw.size()) +
                             " weights for " + std::to_string(levels.size()) + " levels");
    int ref_h = levels[0].h, ref_w = levels[0].w;
    std::vector<double> wn = fusion.normalized();
    Tensor out(levels[0].n, levels[0].c, ref_h, ref_w);
    for (size_t l = 0; l < levels.size(); ++l) {
        if (levels[l].n != out.n || levels[l].c != out.c)
            throw DimensionError("dynamic_fuse: level " + std::to_string(l) +
                                 " batch/channel mismatch");
        Tensor r = resize_nearest(levels[l], ref_h, ref_w);
        for (int64_t i = 0; i < out.size(); ++i)
            out.data[i] += static_cast<float>(wn[l] * r.data[i]);
    }
    return out;
}

// Mean offset magnitude per spatial location across both task fields, used by
// the inspect command.
inline Tensor offset_magnitude_map(const OffsetField& cls, const OffsetField& reg) {
    const Tensor& a = cls.field;
    Tensor out(a.n, 1, a.h, a.w);
    int taps = cls.taps();
    for (int ni = 0; ni < a.n; ++ni)
        for (int y = 0; y < a.h; ++y)
            for (int x = 0; x < a.w; ++x) {
                double s = 0.0;
                for (int q = 0; q < taps; ++q) {
                    s += std::hypot(cls.dx(ni, q, y, x), cls.dy(ni, q, y, x));
                    s += std::hypot(reg.dx(ni, q, y, x), reg.dy(ni, q, y, x));
                }
                out.at(ni, 0, y, x) = static_cast<float>(s / (2.0 * taps));
            }
    return out;
}

}  // namespace mgnet
