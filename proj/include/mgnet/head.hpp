#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "mgnet/assign.hpp"
#include "mgnet/backbone.hpp"
#include "mgnet/deform.hpp"
#include "mgnet/tensor.hpp"
#include "mgnet/weights.hpp"

namespace mgnet {

struct AnchorPoint {
    float x = 0, y = 0;
    int stride = 8;
};

inline AnchorPoint anchor_for_cell(int row, int col, int stride) {
    return AnchorPoint{(col + 0.5f) * stride, (row + 0.5f) * stride, stride};
}

struct Detection {
    BBox box;
    int class_id = 0;
    float score = 0.0f;
};

struct HeadOutput {
    std::vector<Tensor> logits;     // per level: (n, num_classes, h, w)
    std::vector<Tensor> distances;  // per level: (n, 4, h, w), ltrb, softplus-activated
};

// Shared-weight head: per branch two 3x3 convs (h-swish) then a 1x1
// projection; classification emits raw logits, regression emits softplus
// distances (l, t, r, b) in stride units.
inline HeadOutput head_forward(const std::vector<DisentangledFeatures>& feats,
                               const WeightStore& store) {
    HeadOutput out;
    auto tower = [&](const Tensor& f, const std::string& branch) {
        Tensor t = f;
        for (int d = 0; d < 2; ++d) {
            std::string prefix = "head." + branch + ".conv" + std::to_string(d);
            t = conv2d(t, store.get(prefix + ".weight"), store.get_vector(prefix + ".bias"),
                       ConvSpec{3, 3, 1, 1, 1, 1, 1});
            t = h_swish(t);
        }
        return conv2d(t, store.get("head." + branch + ".pred.weight"),
                      store.get_vector("head." + branch + ".pred.bias"),
                      ConvSpec{1, 1, 1, 1, 0, 0, 1});
    };
    for (const auto& df : feats) {
        out.logits.push_back(tower(df.f_cls, "cls"));
        out.distances.push_back(map_elementwise(tower(df.f_reg, "reg"), softplus_scalar));
    }
    return out;
}

// Distance-to-boundary decoding, clamped to the image rectangle.
inline BBox decode(const AnchorPoint& point, const float ltrb[4], int img_w, int img_h) {
    BBox b;
    b.x1 = std::clamp(point.x - ltrb[0] * point.stride, 0.0f, static_cast<float>(img_w));
    b.y1 = std::clamp(point.y - ltrb[1] * point.stride, 0.0f, static_cast<float>(img_h));
    b.x2 = std::clamp(point.x + ltrb[2] * point.stride, 0.0f, static_cast<float>(img_w));
    b.y2 = std::clamp(point.y + ltrb[3] * point.stride, 0.0f, static_cast<float>(img_h));
    return b;
}

// Greedy class-wise NMS. Sort by score descending (ties: lower input index
// first); keep a box iff its IoU with every kept same-class box is <= thresh.
inline std::vector<Detection> nms(const std::vector<Detection>& dets, float iou_thresh) {
    if (iou_thresh <= 0.0f || iou_thresh > 1.0f)
        throw ValidationError("nms: iou_thresh must be in (0, 1]");
    std::vector<int> order(dets.size());
    for (size_t i = 0; i < dets.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return dets[a].score > dets[b].score; });
    std::vector<Detection> kept;
    for (int idx : order) {
        bool suppressed = false;
        for (const auto& k : kept) {
            if (k.class_id != dets[idx].class_id) continue;
            if (iou(k.box, dets[idx].box) > iou_thresh) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(dets[idx]);
    }
    return kept;
}

// Sigmoid scoring, threshold, decode, degenerate-box rejection, class-wise
// NMS, truncation to max_dets.
inline std::vector<Detection> postprocess(const HeadOutput& head,
                                          const std::vector<int>& strides, int img_w, int img_h,
                                          float score_thresh, float nms_thresh, int max_dets,
                                          int batch_index = 0) {
    if (score_thresh <= 0.0f || score_thresh >= 1.0f)
        throw ValidationError("postprocess: score_thresh must be in (0, 1)");
    if (max_dets < 1) throw ValidationError("postprocess: max_dets must be >= 1");
    if (head.logits.size() != strides.size())
        throw DimensionError("postprocess: level count mismatch");
    std::vector<Detection> raw;
    for (size_t l = 0; l < head.logits.size(); ++l) {
        const Tensor& lg = head.logits[l];
        const Tensor& ds = head.distances[l];
        for (int row = 0; row < lg.h; ++row)
            for (int col = 0; col < lg.w; ++col) {
                float ltrb[4];
                for (int i = 0; i < 4; ++i) ltrb[i] = ds.at(batch_index, i, row, col);
                for (int cls = 0; cls < lg.c; ++cls) {
                    float score = sigmoid_scalar(lg.at(batch_index, cls, row, col));
                    if (score <= score_thresh) continue;
                    BBox box = decode(anchor_for_cell(row, col, strides[l]), ltrb, img_w, img_h);
                    if (!box.valid()) continue;
                    raw.push_back(Detection{box, cls, score});
                }
            }
    }
    std::vector<Detection> kept = nms(raw, nms_thresh);
    if (static_cast<int>(kept.size()) > max_dets) kept.resize(max_dets);
    return kept;
}

}  // namespace mgnet
