#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "mgnet/head.hpp"

namespace mgnet {

inline const std::vector<double>& coco_iou_thresholds() {
    static const std::vector<double> t = [] {
        std::vector<double> v;
        for (int i = 0; i < 10; ++i) v.push_back(0.5 + 0.05 * i);
        return v;
    }();
    return t;
}

struct EvalImage {
    int id = 0;
    std::vector<Detection> dets;
    std::vector<GtSample> gts;
};

struct EvalSet {
    std::vector<EvalImage> images;
    int num_classes = 1;
};

// Greedy matching in score order for one image and one class: a detection is
// a TP iff its best-IoU unmatched GT reaches the threshold; each GT matches
// at most once. Returns per-detection flags in the input order.
inline std::vector<bool> match_dets(const std::vector<Detection>& dets,
                                    const std::vector<GtSample>& gts, double iou_thresh) {
    std::vector<int> order(dets.size());
    for (size_t i = 0; i < dets.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return dets[a].score > dets[b].score; });
    std::vector<bool> matched_gt(gts.size(), false);
    std::vector<bool> tp(dets.size(), false);
    for (int idx : order) {
        int best = -1;
        double best_iou = 0.0;
        for (size_t j = 0; j < gts.size(); ++j) {
            if (matched_gt[j]) continue;
            double v = iou(dets[idx].box, gts[j].box);
            if (v > best_iou) {
                best_iou = v;
                best = static_cast<int>(j);
            }
        }
        if (best >= 0 && best_iou >= iou_thresh) {
            matched_gt[best] = true;
            tp[idx] = true;
        }
    }
    return tp;
}

// 101-point interpolated AP over the recall grid 0.00:0.01:1.00 with a
// non-increasing precision envelope. flags/scores are parallel arrays; they
// are sorted by score descending internally (ties: lower index first).
inline double average_precision(const std::vector<bool>& flags,
                                const std::vector<float>& scores, int num_gt) {
    if (num_gt <= 0) return 0.0;
    std::vector<int> order(flags.size());
    for (size_t i = 0; i < flags.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    std::vector<double> precision, recall;
    int tp = 0, fp = 0;
    for (int idx : order) {
        if (flags[idx]) ++tp;
        else ++fp;
        precision.push_back(static_cast<double>(tp) / (tp + fp));
        recall.push_back(static_cast<double>(tp) / num_gt);
    }
    // precision envelope, non-increasing from the right
    for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i)
        precision[i] = std::max(precision[i], precision[i + 1]);
    double ap = 0.0;
    size_t ptr = 0;
    for (int r = 0; r <= 100; ++r) {
        double rec = r / 100.0;
        while (ptr < recall.size() && recall[ptr] < rec - 1e-12) ++ptr;
        if (ptr < recall.size()) ap += precision[ptr];
    }
    return ap / 101.0;
}

struct MetricsReport {
    bool defined = false;  // false when no GT exists anywhere
    double mAP = 0.0, ap50 = 0.0, ap75 = 0.0;
    std::vector<double> per_class_map;   // indexed by class id; NaN if class has no GT
    std::vector<double> per_class_ap50;
    std::vector<double> per_class_ap75;
};

// COCO-style evaluation: AP per class per IoU threshold pooled over images,
// averaged over the 10 thresholds for mAP. Classes without ground truth are
// excluded from the means.
inline MetricsReport evaluate(const EvalSet& set) {
    MetricsReport rep;
    int nc = set.num_classes;
    rep.per_class_map.assign(nc, std::nan(""));
    rep.per_class_ap50.assign(nc, std::nan(""));
    rep.per_class_ap75.assign(nc, std::nan(""));

    const auto& thresholds = coco_iou_thresholds();
    int classes_counted = 0;
    double sum_map = 0.0, sum50 = 0.0, sum75 = 0.0;
    for (int cls = 0; cls < nc; ++cls) {
        int num_gt = 0;
        for (const auto& img : set.images)
            for (const auto& g : img.gts)
                if (g.class_id == cls) ++num_gt;
        if (num_gt == 0) continue;  // undefined for this class
        double acc = 0.0, ap50 = 0.0, ap75 = 0.0;
        for (size_t t = 0; t < thresholds.size(); ++t) {
            std::vector<bool> flags;
            std::vector<float> scores;
            for (const auto& img : set.images) {
                std::vector<Detection> cdets;
                std::vector<GtSample> cgts;
                for (const auto& d : img.dets)
                    if (d.class_id == cls) cdets.push_back(d);
                for (const auto& g : img.gts)
                    if (g.class_id == cls) cgts.push_back(g);
                std::vector<bool> tp = match_dets(cdets, cgts, thresholds[t]);
                for (size_t i = 0; i < cdets.size(); ++i) {
                    flags.push_back(tp[i]);
                    scores.push_back(cdets[i].score);
                }
            }
            double ap = average_precision(flags, scores, num_gt);
            acc += ap;
            if (t == 0) ap50 = ap;
            if (t == 5) ap75 = ap;
        }
        rep.per_class_map[cls] = acc / thresholds.size();
        rep.per_class_ap50[cls] = ap50;
        rep.per_class_ap75[cls] = ap75;
        sum_map += rep.per_class_map[cls];
        sum50 += ap50;
        sum75 += ap75;
        ++classes_counted;
    }
    if (classes_counted == 0) return rep;  // defined stays false
    rep.defined = true;
    rep.mAP = sum_map / classes_counted;
    rep.ap50 = sum50 / classes_counted;
    rep.ap75 = sum75 / classes_counted;
    return rep;
}

}  // namespace mgnet
