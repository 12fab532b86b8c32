// Independent reference implementations used only by tests. These stay
// deliberately naive (nested loops, literal transcriptions) so they do not
// share code paths with the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "mgnet/assign.hpp"
#include "mgnet/deform.hpp"
#include "mgnet/head.hpp"
#include "mgnet/tensor.hpp"

namespace oracle {

inline mgnet::Tensor random_tensor(int n, int c, int h, int w, std::mt19937_64& rng,
                                   float lo = -1.0f, float hi = 1.0f) {
    mgnet::Tensor t(n, c, h, w);
    std::uniform_real_distribution<float> dist(lo, hi);
    for (auto& v : t.data) v = dist(rng);
    return t;
}

// Six nested loops, no padding tricks, double accumulation.
inline mgnet::Tensor conv2d_naive(const mgnet::Tensor& in, const mgnet::Tensor& w,
                                  const std::vector<float>* bias, int stride, int pad,
                                  int groups = 1) {
    int out_h = (in.h + 2 * pad - w.h) / stride + 1;
    int out_w = (in.w + 2 * pad - w.w) / stride + 1;
    mgnet::Tensor out(in.n, w.n, out_h, out_w);
    int icg = in.c / groups;
    int ocg = w.n / groups;
    for (int ni = 0; ni < in.n; ++ni)
        for (int oc = 0; oc < w.n; ++oc)
            for (int oy = 0; oy < out_h; ++oy)
                for (int ox = 0; ox < out_w; ++ox) {
                    double acc = bias ? (*bias)[oc] : 0.0;
                    int g = oc / ocg;
                    for (int ic = 0; ic < icg; ++ic)
                        for (int ky = 0; ky < w.h; ++ky)
                            for (int kx = 0; kx < w.w; ++kx) {
                                int iy = oy * stride - pad + ky;
                                int ix = ox * stride - pad + kx;
                                if (iy < 0 || iy >= in.h || ix < 0 || ix >= in.w) continue;
                                acc += static_cast<double>(w.at(oc, ic, ky, kx)) *
                                       in.at(ni, g * icg + ic, iy, ix);
                            }
                    out.at(ni, oc, oy, ox) = static_cast<float>(acc);
                }
    return out;
}

// Per-pixel bicubic (Catmull-Rom a = -0.5), edge-clamped, recomputed from
// scratch for every output pixel.
inline double bicubic_kernel(double t) {
    double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return (a + 2) * t * t * t - (a + 3) * t * t + 1;
    if (t < 2.0) return a * t * t * t - 5 * a * t * t + 8 * a * t - 4 * a;
    return 0.0;
}

inline mgnet::Tensor resize_bicubic_naive(const mgnet::Tensor& in, int out_h, int out_w) {
    mgnet::Tensor out(in.n, in.c, out_h, out_w);
    for (int ni = 0; ni < in.n; ++ni)
        for (int ci = 0; ci < in.c; ++ci)
            for (int oy = 0; oy < out_h; ++oy)
                for (int ox = 0; ox < out_w; ++ox) {
                    double sy = (oy + 0.5) * in.h / out_h - 0.5;
                    double sx = (ox + 0.5) * in.w / out_w - 0.5;
                    int by = static_cast<int>(std::floor(sy));
                    int bx = static_cast<int>(std::floor(sx));
                    double acc = 0.0;
                    for (int j = -1; j <= 2; ++j)
                        for (int i = -1; i <= 2; ++i) {
                            int yy = std::clamp(by + j, 0, in.h - 1);
                            int xx = std::clamp(bx + i, 0, in.w - 1);
                            acc += bicubic_kernel(sy - (by + j)) * bicubic_kernel(sx - (bx + i)) *
                                   in.at(ni, ci, yy, xx);
                        }
                    out.at(ni, ci, oy, ox) = static_cast<float>(acc);
                }
    return out;
}

// Zero-padded bilinear lookup written independently of the library.
inline double bilinear_naive(const mgnet::Tensor& t, double x, double y, int ni, int ci) {
    int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    double fx = x - x0, fy = y - y0;
    double acc = 0.0;
    for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx) {
            int xx = x0 + dx, yy = y0 + dy;
            if (xx < 0 || xx >= t.w || yy < 0 || yy >= t.h) continue;
            double wgt = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy);
            acc += wgt * t.at(ni, ci, yy, xx);
        }
    return acc;
}

// Per-tap bilinear gather then weighted sum, one output element at a time.
inline mgnet::Tensor deform_conv_naive(const mgnet::Tensor& f, const mgnet::Tensor& w,
                                       const mgnet::Tensor& offsets, int k) {
    int pad = k / 2;
    mgnet::Tensor out(f.n, w.n, f.h, f.w);
    for (int ni = 0; ni < f.n; ++ni)
        for (int oc = 0; oc < w.n; ++oc)
            for (int oy = 0; oy < f.h; ++oy)
                for (int ox = 0; ox < f.w; ++ox) {
                    double acc = 0.0;
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            int q = ky * k + kx;
                            double x = ox - pad + kx + offsets.at(ni, 2 * q, oy, ox);
                            double y = oy - pad + ky + offsets.at(ni, 2 * q + 1, oy, ox);
                            for (int ic = 0; ic < f.c; ++ic)
                                acc += static_cast<double>(w.at(oc, ic, ky, kx)) *
                                       bilinear_naive(f, x, y, ni, ic);
                        }
                    out.at(ni, oc, oy, ox) = static_cast<float>(acc);
                }
    return out;
}

// Literal transcription of the published candidate-selection procedure plus
// the documented tie and conflict rules, using set types and exhaustive
// sorting rather than the library's incremental bookkeeping.
struct AssignOracleResult {
    std::vector<std::set<int>> retained;
    std::vector<int> pred_to_gt;
};

inline AssignOracleResult assign_literal(const std::vector<mgnet::PredSample>& preds,
                                         const std::vector<mgnet::GtSample>& gts,
                                         const mgnet::AssignConfig& cfg) {
    size_t np = preds.size(), ng = gts.size();
    AssignOracleResult res;
    res.retained.resize(ng);
    res.pred_to_gt.assign(np, -1);
    if (np == 0) return res;

    // step 1: cost matrix
    std::vector<std::vector<double>> C(ng, std::vector<double>(np));
    for (size_t j = 0; j < ng; ++j)
        for (size_t i = 0; i < np; ++i) {
            long double mx = preds[i].logits[0];
            for (float v : preds[i].logits) mx = std::max(mx, static_cast<long double>(v));
            long double sum = 0.0L;
            for (float v : preds[i].logits) sum += std::exp(static_cast<long double>(v) - mx);
            long double logp =
                static_cast<long double>(preds[i].logits[gts[j].class_id]) - mx - std::log(sum);
            double ax1 = std::max(preds[i].box.x1, gts[j].box.x1);
            double ay1 = std::max(preds[i].box.y1, gts[j].box.y1);
            double ax2 = std::min(preds[i].box.x2, gts[j].box.x2);
            double ay2 = std::min(preds[i].box.y2, gts[j].box.y2);
            double inter = std::max(0.0, ax2 - ax1) * std::max(0.0, ay2 - ay1);
            double uni = static_cast<double>(preds[i].box.area()) + gts[j].box.area() - inter;
            double iou_v = uni > 0 ? inter / uni : 0.0;
            C[j][i] = static_cast<double>(-cfg.lambda * logp) +
                      (1.0 - cfg.lambda) * std::abs(1.0 - iou_v);
        }

    // step 2: per-level top-K union
    std::vector<std::set<int>> T(ng);
    for (size_t j = 0; j < ng; ++j)
        for (int l = 0; l < cfg.num_levels; ++l) {
            std::vector<std::pair<double, int>> pool;
            for (size_t i = 0; i < np; ++i)
                if (preds[i].level == l) pool.emplace_back(C[j][i], static_cast<int>(i));
            std::sort(pool.begin(), pool.end());
            for (int t = 0; t < std::min<int>(cfg.top_k, static_cast<int>(pool.size())); ++t)
                T[j].insert(pool[t].second);
        }

    // step 3: dynamic threshold, strict <, lowest-cost fallback
    std::vector<std::set<int>> kept(ng);
    for (size_t j = 0; j < ng; ++j) {
        if (T[j].empty()) continue;
        double tau = 0.0;
        for (int i : T[j]) tau += C[j][i];
        tau /= static_cast<double>(T[j].size());
        for (int i : T[j])
            if (C[j][i] < tau) kept[j].insert(i);
        if (kept[j].empty()) {
            std::vector<std::pair<double, int>> pool;
            for (int i : T[j]) pool.emplace_back(C[j][i], i);
            std::sort(pool.begin(), pool.end());
            kept[j].insert(pool[0].second);
        }
    }

    // conflict resolution: lowest cost wins, then lowest GT index
    for (size_t i = 0; i < np; ++i) {
        int best_j = -1;
        for (size_t j = 0; j < ng; ++j) {
            if (!kept[j].count(static_cast<int>(i))) continue;
            if (best_j < 0 || C[j][i] < C[best_j][i]) best_j = static_cast<int>(j);
        }
        if (best_j < 0) continue;
        for (size_t j = 0; j < ng; ++j)
            if (static_cast<int>(j) != best_j) kept[j].erase(static_cast<int>(i));
        res.pred_to_gt[i] = best_j;
    }

    // fallback for emptied GTs, in GT order: cheapest unclaimed candidate from
    // T_j, then from all predictions
    for (size_t j = 0; j < ng; ++j) {
        if (!kept[j].empty()) continue;
        std::vector<std::pair<double, int>> pool;
        for (int i : T[j])
            if (res.pred_to_gt[i] < 0) pool.emplace_back(C[j][i], i);
        if (pool.empty())
            for (size_t i = 0; i < np; ++i)
                if (res.pred_to_gt[i] < 0) pool.emplace_back(C[j][i], static_cast<int>(i));
        if (pool.empty()) continue;
        std::sort(pool.begin(), pool.end());
        kept[j].insert(pool[0].second);
        res.pred_to_gt[pool[0].second] = static_cast<int>(j);
    }
    res.retained = kept;
    return res;
}

// Step-by-step greedy NMS simulation over an explicit "alive" array.
inline std::vector<mgnet::Detection> nms_naive(const std::vector<mgnet::Detection>& dets,
                                               float thresh) {
    std::vector<int> order(dets.size());
    for (size_t i = 0; i < dets.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return dets[a].score > dets[b].score; });
    std::vector<bool> alive(dets.size(), true);
    std::vector<mgnet::Detection> out;
    for (size_t oi = 0; oi < order.size(); ++oi) {
        int i = order[oi];
        if (!alive[i]) continue;
        out.push_back(dets[i]);
        for (size_t oj = oi + 1; oj < order.size(); ++oj) {
            int jj = order[oj];
            if (!alive[jj] || dets[jj].class_id != dets[i].class_id) continue;
            if (mgnet::iou(dets[i].box, dets[jj].box) > thresh) alive[jj] = false;
        }
    }
    return out;
}

inline std::mt19937_64 seeded(uint64_t s) { return std::mt19937_64(s); }

}  // namespace oracle
