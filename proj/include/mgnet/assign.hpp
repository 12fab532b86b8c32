#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "mgnet/common.hpp"

namespace mgnet {

struct BBox {
    float x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    float area() const { return (x2 - x1) * (y2 - y1); }
    bool valid() const { return x2 > x1 && y2 > y1; }
};

inline void validate_box(const BBox& b) {
    if (!b.valid())
        throw ValidationError("BBox: requires x2 > x1 and y2 > y1");
}

inline double iou(const BBox& a, const BBox& b) {
    double ix = std::max(0.0, static_cast<double>(std::min(a.x2, b.x2)) - std::max(a.x1, b.x1));
    double iy = std::max(0.0, static_cast<double>(std::min(a.y2, b.y2)) - std::max(a.y1, b.y1));
    double inter = ix * iy;
    double uni = static_cast<double>(a.area()) + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

struct PredSample {
    BBox box;
    std::vector<float> logits;
    int level = 0;  // FPN level index in [0, num_levels)
};

struct GtSample {
    BBox box;
    int class_id = 0;
};

struct AssignConfig {
    double lambda = 0.5;
    int top_k = 7;
    int num_levels = 3;
};

inline void validate_assign_config(const AssignConfig& cfg) {
    if (cfg.lambda < 0.0 || cfg.lambda > 1.0)
        throw ValidationError("AssignConfig: lambda must be in [0, 1]");
    if (cfg.top_k < 1) throw ValidationError("AssignConfig: top_k must be >= 1");
    if (cfg.num_levels < 1) throw ValidationError("AssignConfig: num_levels must be >= 1");
}

// Matching cost: lambda-weighted classification negative log-likelihood plus
// (1 - lambda) * (1 - IoU). Log-softmax is stabilized by subtracting the max
// logit.
inline double cost(const PredSample& pred, const GtSample& gt, double lambda) {
    if (gt.class_id < 0 || gt.class_id >= static_cast<int>(pred.logits.size()))
        throw ValidationError("cost: class_id " + std::to_string(gt.class_id) +
                              " out of range for " + std::to_string(pred.logits.size()) +
                              " classes");
    double mx = pred.logits[0];
    for (float v : pred.logits) mx = std::max(mx, static_cast<double>(v));
    double sum = 0.0;
    for (float v : pred.logits) sum += std::exp(static_cast<double>(v) - mx);
    double log_prob = static_cast<double>(pred.logits[gt.class_id]) - mx - std::log(sum);
    return -lambda * log_prob + (1.0 - lambda) * (1.0 - iou(pred.box, gt.box));
}

// Per level, the k lowest-cost prediction indices (ties: lower index), merged
// over all levels. costs_for_gt[i] is the cost of prediction i for one GT.
inline std::vector<int> topk_per_level(const std::vector<double>& costs_for_gt,
                                       const std::vector<PredSample>& preds, int k,
                                       int num_levels) {
    if (k < 1) throw ValidationError("topk_per_level: k must be >= 1");
    std::vector<int> result;
    for (int l = 0; l < num_levels; ++l) {
        std::vector<int> level_idx;
        for (size_t i = 0; i < preds.size(); ++i)
            if (preds[i].level == l) level_idx.push_back(static_cast<int>(i));
        std::sort(level_idx.begin(), level_idx.end(), [&](int a, int b) {
            if (costs_for_gt[a] != costs_for_gt[b]) return costs_for_gt[a] < costs_for_gt[b];
            return a < b;
        });
        int take = std::min<int>(k, static_cast<int>(level_idx.size()));
        result.insert(result.end(), level_idx.begin(), level_idx.begin() + take);
    }
    std::sort(result.begin(), result.end());
    return result;
}

struct FilterResult {
    std::vector<int> retained;
    double tau = 0.0;
};

// tau is the mean candidate cost for this GT; retain strict cost < tau. If
// nothing passes (all equal costs), fall back to the single lowest-cost
// candidate, lowest index on ties.
inline FilterResult dynamic_filter(const std::vector<int>& candidates,
                                   const std::vector<double>& costs_for_gt) {
    if (candidates.empty())
        throw ValidationError("dynamic_filter: empty candidate set");
    double sum = 0.0;
    for (int i : candidates) sum += costs_for_gt[i];
    FilterResult r;
    r.tau = sum / static_cast<double>(candidates.size());
    for (int i : candidates)
        if (costs_for_gt[i] < r.tau) r.retained.push_back(i);
    if (r.retained.empty()) {
        int best = candidates[0];
        for (int i : candidates)
            if (costs_for_gt[i] < costs_for_gt[best]) best = i;
        r.retained.push_back(best);
    }
    return r;
}

struct AssignmentResult {
    std::vector<std::vector<int>> candidates;   // T_j after top-K union, per GT
    std::vector<std::vector<int>> retained;     // after threshold + conflict resolution
    std::vector<double> tau;                    // per-GT threshold
    std::vector<std::vector<double>> costs;     // [gt][pred]
    std::vector<int> pred_to_gt;                // -1 for background
    bool all_background = false;
};

// Full pipeline: costs, per-level top-K union, dynamic threshold filter, then
// conflict resolution (a prediction retained by several GTs goes to the
// lowest-cost GT, lowest GT index on ties). A GT emptied by conflict
// resolution falls back to its cheapest still-unclaimed candidate, searching
// its candidate set first and then all predictions.
inline AssignmentResult assign(const std::vector<PredSample>& preds,
                               const std::vector<GtSample>& gts, const AssignConfig& config) {
    validate_assign_config(config);
    for (const auto& p : preds) validate_box(p.box);
    for (const auto& g : gts) validate_box(g.box);

    size_t np = preds.size(), ng = gts.size();
    AssignmentResult res;
    res.pred_to_gt.assign(np, -1);
    res.candidates.resize(ng);
    res.retained.resize(ng);
    res.tau.assign(ng, 0.0);
    res.costs.resize(ng);
    if (np == 0) {
        res.all_background = true;
        return res;
    }

    for (size_t j = 0; j < ng; ++j) {
        res.costs[j].resize(np);
        for (size_t i = 0; i < np; ++i)
            res.costs[j][i] = cost(preds[i], gts[j], config.lambda);
    }

    std::vector<std::vector<int>> filtered(ng);
    for (size_t j = 0; j < ng; ++j) {
        res.candidates[j] = topk_per_level(res.costs[j], preds, config.top_k, config.num_levels);
        if (res.candidates[j].empty()) continue;  // possible only with out-of-range levels
        FilterResult fr = dynamic_filter(res.candidates[j], res.costs[j]);
        res.tau[j] = fr.tau;
        filtered[j] = std::move(fr.retained);
    }

    // conflict resolution: each prediction keeps only its best GT
    std::vector<int> owner(np, -1);
    for (size_t j = 0; j < ng; ++j)
        for (int i : filtered[j]) {
            if (owner[i] < 0 || res.costs[j][i] < res.costs[owner[i]][i])
                owner[i] = static_cast<int>(j);
        }
    for (size_t j = 0; j < ng; ++j) {
        for (int i : filtered[j])
            if (owner[i] == static_cast<int>(j)) res.retained[j].push_back(i);
    }

    // fallback for GTs that lost every retained candidate
    auto claimed = [&](int i) { return res.pred_to_gt[i] >= 0; };
    for (size_t j = 0; j < ng; ++j)
        for (int i : res.retained[j]) res.pred_to_gt[i] = static_cast<int>(j);
    for (size_t j = 0; j < ng; ++j) {
        if (!res.retained[j].empty()) continue;
        int best = -1;
        for (int i : res.candidates[j])
            if (!claimed(i) && (best < 0 || res.costs[j][i] < res.costs[j][best])) best = i;
        if (best < 0) {
            for (size_t i = 0; i < np; ++i)
                if (!claimed(static_cast<int>(i)) &&
                    (best < 0 || res.costs[j][i] < res.costs[j][best]))
                    best = static_cast<int>(i);
        }
        if (best >= 0) {
            res.retained[j].push_back(best);
            res.pred_to_gt[best] = static_cast<int>(j);
        }
    }
    return res;
}

}  // namespace mgnet
