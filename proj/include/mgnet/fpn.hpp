#pragma once

#include <array>
#include <string>
#include <vector>

#include "mgnet/backbone.hpp"
#include "mgnet/tensor.hpp"
#include "mgnet/weights.hpp"

namespace mgnet {

inline constexpr std::array<int, 6> kNeckWidths = {8, 16, 32, 64, 128, 256};

struct PyramidConfig {
    int channels = 128;
    int num_levels = 3;
};

inline void validate_pyramid_config(const PyramidConfig& cfg) {
    bool ok = false;
    for (int w : kNeckWidths) ok = ok || w == cfg.channels;
    if (!ok)
        throw ValidationError("PyramidConfig: channels must be one of {8,16,32,64,128,256}, got " +
                              std::to_string(cfg.channels));
    if (cfg.num_levels < 1 || cfg.num_levels > 3)
        throw ValidationError("PyramidConfig: num_levels must be in [1, 3]");
}

struct Pyramid {
    std::vector<Tensor> levels;  // uniform channels, strides 8, 16, 32
};

// Nearest-neighbor 2x upsample; each pixel becomes a 2x2 block.
inline Tensor upsample2x_nearest(const Tensor& x) {
    Tensor out(x.n, x.c, x.h * 2, x.w * 2);
    for (int ni = 0; ni < x.n; ++ni)
        for (int ci = 0; ci < x.c; ++ci) {
            const float* in_plane = x.plane(ni, ci);
            float* out_plane = out.plane(ni, ci);
            for (int y = 0; y < x.h; ++y)
                for (int x2 = 0; x2 < x.w; ++x2) {
                    float v = in_plane[static_cast<int64_t>(y) * x.w + x2];
                    int64_t base = static_cast<int64_t>(2 * y) * out.w + 2 * x2;
                    out_plane[base] = v;
                    out_plane[base + 1] = v;
                    out_plane[base + out.w] = v;
                    out_plane[base + out.w + 1] = v;
                }
        }
    return out;
}

inline Tensor crop_from_origin(const Tensor& x, int h, int w) {
    if (h > x.h || w > x.w)
        throw DimensionError("crop_from_origin: target larger than source");
    if (h == x.h && w == x.w) return x;
    Tensor out(x.n, x.c, h, w);
    for (int ni = 0; ni < x.n; ++ni)
        for (int ci = 0; ci < x.c; ++ci)
            for (int y = 0; y < h; ++y) {
                const float* src = x.plane(ni, ci) + static_cast<int64_t>(y) * x.w;
                float* dst = out.plane(ni, ci) + static_cast<int64_t>(y) * w;
                std::copy(src, src + w, dst);
            }
    return out;
}

// Top-down pathway: lateral 1x1, add the 2x-upsampled (origin-cropped) upper
// fused map, then 3x3 smooth. Topmost level has no upsample addend.
inline Pyramid fpn_forward(const BackboneOutput& backbone_out, const PyramidConfig& config,
                           const WeightStore& store) {
    validate_pyramid_config(config);
    int levels = config.num_levels;
    if (static_cast<int>(backbone_out.levels.size()) != levels)
        throw DimensionError("fpn_forward: backbone produced " +
                             std::to_string(backbone_out.levels.size()) + " levels, config has " +
                             std::to_string(levels));
    std::vector<Tensor> fused(levels);
    for (int l = levels - 1; l >= 0; --l) {
        std::string prefix = "neck.l" + std::to_string(l);
        const Tensor& lat_w = store.get(prefix + ".lateral.weight");
        if (lat_w.n != config.channels)
            throw DimensionError("fpn_forward: lateral output channels " +
                                 std::to_string(lat_w.n) + " != config channels " +
                                 std::to_string(config.channels));
        Tensor lat = conv2d(backbone_out.levels[l], lat_w,
                            store.get_vector(prefix + ".lateral.bias"),
                            ConvSpec{1, 1, 1, 1, 0, 0, 1});
        if (l + 1 < levels) {
            Tensor up = crop_from_origin(upsample2x_nearest(fused[l + 1]), lat.h, lat.w);
            for (int64_t i = 0; i < lat.size(); ++i) lat.data[i] += up.data[i];
        }
        fused[l] = std::move(lat);
    }
    Pyramid pyr;
    pyr.levels.resize(levels);
    for (int l = 0; l < levels; ++l) {
        std::string prefix = "neck.l" + std::to_string(l);
        const Tensor& sm_w = store.get(prefix + ".smooth.weight");
        if (sm_w.n != config.channels || sm_w.c != config.channels)
            throw DimensionError("fpn_forward: smooth conv channels mismatch at level " +
                                 std::to_string(l));
        pyr.levels[l] = conv2d(fused[l], sm_w, store.get_vector(prefix + ".smooth.bias"),
                               ConvSpec{3, 3, 1, 1, 1, 1, 1});
    }
    return pyr;
}

// Exact neck parameter count: per level a 1x1 lateral and a 3x3 smooth conv,
// biases included. Strictly increasing in channels.
inline int64_t neck_parameter_count(const PyramidConfig& config,
                                    const std::vector<int>& backbone_channels) {
    if (config.channels == 0) return 0;
    int64_t ch = config.channels;
    int64_t total = 0;
    for (int l = 0; l < config.num_levels; ++l) {
        int64_t in_c = backbone_channels.at(l);
        total += in_c * ch + ch;         // lateral
        total += ch * ch * 9 + ch;       // smooth
    }
    return total;
}

}  // namespace mgnet
