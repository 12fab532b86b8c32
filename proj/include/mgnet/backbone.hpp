#pragma once

#include <array>
#include <string>
#include <vector>

#include "mgnet/tensor.hpp"
#include "mgnet/weights.hpp"

namespace mgnet {

enum class Act { kRelu, kHSwish };

inline float hard_sigmoid_scalar(float x) {
    return std::clamp(x + 3.0f, 0.0f, 6.0f) / 6.0f;
}

inline float h_swish_scalar(float x) { return x * hard_sigmoid_scalar(x); }

inline Tensor hard_sigmoid(const Tensor& x) { return map_elementwise(x, hard_sigmoid_scalar); }

inline Tensor h_swish(const Tensor& x) { return map_elementwise(x, h_swish_scalar); }

inline Tensor apply_act(const Tensor& x, Act act) {
    return act == Act::kRelu ? relu(x) : h_swish(x);
}

struct BlockSpec {
    int in_channels;
    int expand_channels;
    int out_channels;
    int kernel;   // 3 or 5
    int stride;   // 1 or 2
    bool use_se;
    Act activation;
};

// MobileNetV3-Small inverted-residual stages; the stem (3 -> 16, stride 2,
// h-swish) precedes these. Feature taps for the neck come after blocks 2, 7
// and 10 (strides 8, 16, 32).
inline const std::vector<BlockSpec>& backbone_stage_table() {
    static const std::vector<BlockSpec> table = {
        {16, 16, 16, 3, 2, true, Act::kRelu},
        {16, 72, 24, 3, 2, false, Act::kRelu},
        {24, 88, 24, 3, 1, false, Act::kRelu},
        {24, 96, 40, 5, 2, true, Act::kHSwish},
        {40, 240, 40, 5, 1, true, Act::kHSwish},
        {40, 240, 40, 5, 1, true, Act::kHSwish},
        {40, 120, 48, 5, 1, true, Act::kHSwish},
        {48, 144, 48, 5, 1, true, Act::kHSwish},
        {48, 288, 96, 5, 2, true, Act::kHSwish},
        {96, 576, 96, 5, 1, true, Act::kHSwish},
        {96, 576, 96, 5, 1, true, Act::kHSwish},
    };
    return table;
}

inline constexpr int kStemChannels = 16;
inline constexpr std::array<int, 3> kBackboneTapBlocks = {2, 7, 10};
inline constexpr std::array<int, 3> kBackboneTapChannels = {24, 48, 96};
inline constexpr std::array<int, 3> kBackboneStrides = {8, 16, 32};
inline constexpr int kSeReduction = 4;

struct BackboneOutput {
    std::vector<Tensor> levels;  // strides 8, 16, 32
};

// Channel gate: x scaled by hard_sigmoid(W_e . relu(W_r . gap(x))).
inline Tensor se_block(const Tensor& x, const Tensor& reduce_w,
                       const std::vector<float>& reduce_b, const Tensor& expand_w,
                       const std::vector<float>& expand_b) {
    if (reduce_w.c != x.c)
        throw DimensionError("se_block: reduce weight channel axis " +
                             std::to_string(reduce_w.c) + " != input channels " +
                             std::to_string(x.c));
    if (expand_w.n != x.c)
        throw DimensionError("se_block: expand weight output axis != input channels");
    if (expand_w.c != reduce_w.n)
        throw DimensionError("se_block: bottleneck width mismatch");
    Tensor pooled = global_avg_pool(x);
    Tensor mid = relu(conv2d(pooled, reduce_w, reduce_b, ConvSpec{1, 1, 1, 1, 0, 0, 1}));
    Tensor gate = hard_sigmoid(conv2d(mid, expand_w, expand_b, ConvSpec{1, 1, 1, 1, 0, 0, 1}));
    Tensor out = x;
    for (int ni = 0; ni < x.n; ++ni)
        for (int ci = 0; ci < x.c; ++ci) {
            float g = gate.at(ni, ci, 0, 0);
            float* p = out.plane(ni, ci);
            int64_t hw = static_cast<int64_t>(x.h) * x.w;
            for (int64_t i = 0; i < hw; ++i) p[i] *= g;
        }
    return out;
}

namespace detail {
inline Tensor conv_bn(const Tensor& x, const WeightStore& store, const std::string& prefix,
                      const ConvSpec& spec) {
    return conv2d(x, store.get(prefix + ".weight"), store.get_vector(prefix + ".bias"), spec);
}
}  // namespace detail

// Expand 1x1 -> depthwise kxk (stride s) -> optional SE -> project 1x1, with a
// skip connection when stride 1 and in == out. The expand conv is omitted when
// expand_channels == in_channels (first stage convention).
inline Tensor inverted_residual(const Tensor& x, const BlockSpec& spec,
                                const WeightStore& store, const std::string& prefix) {
    if (x.c != spec.in_channels)
        throw DimensionError("inverted_residual: input channel axis " + std::to_string(x.c) +
                             " != spec in_channels " + std::to_string(spec.in_channels));
    Tensor t = x;
    if (spec.expand_channels != spec.in_channels) {
        t = detail::conv_bn(t, store, prefix + ".expand", ConvSpec{1, 1, 1, 1, 0, 0, 1});
        t = apply_act(t, spec.activation);
    }
    int pad = spec.kernel / 2;
    t = detail::conv_bn(t, store, prefix + ".dw",
                        ConvSpec{spec.kernel, spec.kernel, spec.stride, spec.stride, pad, pad,
                                 spec.expand_channels});
    t = apply_act(t, spec.activation);
    if (spec.use_se) {
        t = se_block(t, store.get(prefix + ".se.reduce.weight"),
                     store.get_vector(prefix + ".se.reduce.bias"),
                     store.get(prefix + ".se.expand.weight"),
                     store.get_vector(prefix + ".se.expand.bias"));
    }
    t = detail::conv_bn(t, store, prefix + ".project", ConvSpec{1, 1, 1, 1, 0, 0, 1});
    if (spec.stride == 1 && spec.in_channels == spec.out_channels) {
        for (int64_t i = 0; i < t.size(); ++i) t.data[i] += x.data[i];
    }
    return t;
}

inline BackboneOutput backbone_forward(const Tensor& image, const WeightStore& store) {
    if (image.c != 3)
        throw DimensionError("backbone_forward: expected 3 input channels, got " +
                             std::to_string(image.c));
    Tensor t = detail::conv_bn(image, store, "stem", ConvSpec{3, 3, 2, 2, 1, 1, 1});
    t = h_swish(t);
    BackboneOutput out;
    const auto& table = backbone_stage_table();
    for (size_t i = 0; i < table.size(); ++i) {
        t = inverted_residual(t, table[i], store, "block" + std::to_string(i));
        for (int tap : kBackboneTapBlocks)
            if (static_cast<int>(i) == tap) out.levels.push_back(t);
    }
    return out;
}

// Parameter count derived from the stage table (conv weights + folded biases).
inline int64_t backbone_parameter_count() {
    int64_t total = 3LL * kStemChannels * 9 + kStemChannels;
    for (const auto& b : backbone_stage_table()) {
        if (b.expand_channels != b.in_channels)
            total += static_cast<int64_t>(b.in_channels) * b.expand_channels + b.expand_channels;
        total += static_cast<int64_t>(b.expand_channels) * b.kernel * b.kernel + b.expand_channels;
        if (b.use_se) {
            int mid = b.expand_channels / kSeReduction;
            total += static_cast<int64_t>(b.expand_channels) * mid + mid;
            total += static_cast<int64_t>(mid) * b.expand_channels + b.expand_channels;
        }
        total += static_cast<int64_t>(b.expand_channels) * b.out_channels + b.out_channels;
    }
    return total;
}

}  // namespace mgnet
