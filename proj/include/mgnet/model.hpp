#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mgnet/assign.hpp"
#include "mgnet/backbone.hpp"
#include "mgnet/deform.hpp"
#include "mgnet/eval.hpp"
#include "mgnet/fpn.hpp"
#include "mgnet/head.hpp"
#include "mgnet/image_io.hpp"
#include "mgnet/tensor.hpp"
#include "mgnet/weights.hpp"

namespace mgnet {

enum class Profile { kAccuracy, kLatency };

struct ModelConfig {
    int input_size = 400;
    int num_classes = 1;
    int neck_channels = 128;
    int top_k = 7;
    double lambda = 0.5;
    float score_thresh = 0.3f;
    float nms_thresh = 0.6f;
    int max_dets = 100;
    Profile profile = Profile::kAccuracy;
};

inline void validate_model_config(const ModelConfig& cfg) {
    if (cfg.input_size < 32) throw ValidationError("ModelConfig: input_size too small");
    if (cfg.num_classes < 1) throw ValidationError("ModelConfig: num_classes must be >= 1");
    validate_pyramid_config(PyramidConfig{cfg.neck_channels, 3});
    validate_assign_config(AssignConfig{cfg.lambda, cfg.top_k, 3});
    if (cfg.score_thresh <= 0.0f || cfg.score_thresh >= 1.0f)
        throw ValidationError("ModelConfig: score_thresh must be in (0, 1)");
    if (cfg.nms_thresh <= 0.0f || cfg.nms_thresh > 1.0f)
        throw ValidationError("ModelConfig: nms_thresh must be in (0, 1]");
    if (cfg.max_dets < 1) throw ValidationError("ModelConfig: max_dets must be >= 1");
}

inline ModelConfig parse_model_config(const nlohmann::json& j) {
    ModelConfig cfg;
    if (j.contains("profile")) {
        std::string p = j["profile"].get<std::string>();
        if (p == "accuracy") cfg.profile = Profile::kAccuracy;
        else if (p == "latency") cfg.profile = Profile::kLatency;
        else throw ValidationError("ModelConfig: unknown profile " + p);
    }
    cfg.neck_channels = cfg.profile == Profile::kAccuracy ? 128 : 64;
    if (j.contains("input_size")) cfg.input_size = j["input_size"].get<int>();
    if (j.contains("num_classes")) cfg.num_classes = j["num_classes"].get<int>();
    if (j.contains("neck_channels")) cfg.neck_channels = j["neck_channels"].get<int>();
    if (j.contains("top_k")) cfg.top_k = j["top_k"].get<int>();
    if (j.contains("lambda")) cfg.lambda = j["lambda"].get<double>();
    if (j.contains("score_thresh")) cfg.score_thresh = j["score_thresh"].get<float>();
    if (j.contains("nms_thresh")) cfg.nms_thresh = j["nms_thresh"].get<float>();
    if (j.contains("max_dets")) cfg.max_dets = j["max_dets"].get<int>();
    validate_model_config(cfg);
    return cfg;
}

inline ModelConfig load_model_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("load_model_config: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("load_model_config: ") + e.what());
    }
    return parse_model_config(j);
}

struct TensorSpec {
    std::string name;
    int n, c, h, w;
    bool zero_init = false;  // offset sub-networks start at zero
};

// Every tensor the forward path reads, with shapes, in a fixed order.
inline std::vector<TensorSpec> required_tensor_specs(const ModelConfig& cfg) {
    std::vector<TensorSpec> specs;
    auto conv = [&](const std::string& name, int oc, int ic, int k, bool zero = false) {
        specs.push_back({name + ".weight", oc, ic, k, k, zero});
        specs.push_back({name + ".bias", 1, oc, 1, 1, zero});
    };
    conv("stem", kStemChannels, 3, 3);
    const auto& table = backbone_stage_table();
    for (size_t i = 0; i < table.size(); ++i) {
        const auto& b = table[i];
        std::string p = "block" + std::to_string(i);
        if (b.expand_channels != b.in_channels) conv(p + ".expand", b.expand_channels, b.in_channels, 1);
        specs.push_back({p + ".dw.weight", b.expand_channels, 1, b.kernel, b.kernel, false});
        specs.push_back({p + ".dw.bias", 1, b.expand_channels, 1, 1, false});
        if (b.use_se) {
            int mid = b.expand_channels / kSeReduction;
            conv(p + ".se.reduce", mid, b.expand_channels, 1);
            conv(p + ".se.expand", b.expand_channels, mid, 1);
        }
        conv(p + ".project", b.out_channels, b.expand_channels, 1);
    }
    int ch = cfg.neck_channels;
    for (int l = 0; l < 3; ++l) {
        std::string p = "neck.l" + std::to_string(l);
        conv(p + ".lateral", ch, kBackboneTapChannels[l], 1);
        conv(p + ".smooth", ch, ch, 3);
    }
    int taps = kDeformKernel * kDeformKernel;
    for (int l = 0; l < 3; ++l) {
        std::string p = "deform.l" + std::to_string(l);
        conv(p + ".phi", 4 * taps, ch, 3, /*zero=*/true);
        conv(p + ".cls", ch, ch, 3);
        conv(p + ".reg", ch, ch, 3);
    }
    specs.push_back({"deform.fuse.cls", 1, 3, 1, 1, false});
    specs.push_back({"deform.fuse.reg", 1, 3, 1, 1, false});
    for (const char* br : {"cls", "reg"}) {
        std::string p = std::string("head.") + br;
        conv(p + ".conv0", ch, ch, 3);
        conv(p + ".conv1", ch, ch, 3);
        conv(p + ".pred", std::string(br) == "cls" ? cfg.num_classes : 4, ch, 1);
    }
    return specs;
}

// Ensures the store holds every tensor the config needs at the right shape.
inline void check_weight_completeness(const WeightStore& store, const ModelConfig& cfg) {
    for (const auto& s : required_tensor_specs(cfg)) {
        if (!store.has(s.name))
            throw ValidationError("weights: missing tensor " + s.name);
        const Tensor& t = store.get(s.name);
        if (t.n != s.n || t.c != s.c || t.h != s.h || t.w != s.w)
            throw ValidationError("weights: tensor " + s.name + " has shape " + t.shape_str() +
                                  ", expected (" + std::to_string(s.n) + "," +
                                  std::to_string(s.c) + "," + std::to_string(s.h) + "," +
                                  std::to_string(s.w) + ")");
    }
}

// Seeded uniform(-0.1, 0.1) fixture weights; offset sub-network tensors are
// zero unless with_random_phi is set, keeping the zero-offset anchor.
inline WeightStore make_random_weights(const ModelConfig& cfg, uint64_t seed,
                                       bool with_random_phi = false) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(-0.1f, 0.1f);
    WeightStore store;
    for (const auto& s : required_tensor_specs(cfg)) {
        Tensor t(s.n, s.c, s.h, s.w);
        if (!s.zero_init || with_random_phi)
            for (auto& v : t.data) v = dist(rng);
        store.put(s.name, std::move(t));
    }
    return store;
}

struct Model {
    ModelConfig config;
    WeightStore weights;
};

inline Model load_model(const std::string& weights_path, const ModelConfig& cfg) {
    Model m{cfg, load_weights(weights_path)};
    check_weight_completeness(m.weights, m.config);
    return m;
}

struct ForwardResult {
    Pyramid pyramid;
    std::vector<DisentangledFeatures> feats;
    HeadOutput head;
};

// Normalized (values in [0, 1]) square input of shape (n, 3, s, s).
inline ForwardResult model_forward(const Model& m, const Tensor& input) {
    ForwardResult r;
    BackboneOutput bb = backbone_forward(input, m.weights);
    r.pyramid = fpn_forward(bb, PyramidConfig{m.config.neck_channels, 3}, m.weights);
    r.feats = disentangle_forward(r.pyramid, m.weights);
    r.head = head_forward(r.feats, m.weights);
    return r;
}

// Image decode -> [0,1] scaling -> bicubic resize -> forward -> postprocess,
// with boxes mapped back to the original pixel frame.
inline std::vector<Detection> detect_image(const Model& m, const Tensor& raw_image) {
    Tensor img = raw_image;
    for (auto& v : img.data) v /= 255.0f;
    int s = m.config.input_size;
    Tensor resized = resize_bicubic(img, s, s);
    ForwardResult fr = model_forward(m, resized);
    std::vector<Detection> dets =
        postprocess(fr.head, {kBackboneStrides[0], kBackboneStrides[1], kBackboneStrides[2]},
                    s, s, m.config.score_thresh, m.config.nms_thresh, m.config.max_dets);
    float sx = static_cast<float>(raw_image.w) / s;
    float sy = static_cast<float>(raw_image.h) / s;
    for (auto& d : dets) {
        d.box.x1 = std::clamp(d.box.x1 * sx, 0.0f, static_cast<float>(raw_image.w));
        d.box.x2 = std::clamp(d.box.x2 * sx, 0.0f, static_cast<float>(raw_image.w));
        d.box.y1 = std::clamp(d.box.y1 * sy, 0.0f, static_cast<float>(raw_image.h));
        d.box.y2 = std::clamp(d.box.y2 * sy, 0.0f, static_cast<float>(raw_image.h));
    }
    return dets;
}

inline nlohmann::json detections_to_json(const std::vector<Detection>& dets, int image_id) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& d : dets)
        arr.push_back({{"image_id", image_id},
                       {"class_id", d.class_id},
                       {"score", static_cast<double>(d.score)},
                       {"box",
                        {static_cast<double>(d.box.x1), static_cast<double>(d.box.y1),
                         static_cast<double>(d.box.x2), static_cast<double>(d.box.y2)}}});
    return arr;
}

// ---- instance file (assign subcommand) ----

struct InstanceFile {
    std::vector<PredSample> preds;
    std::vector<GtSample> gts;
};

inline BBox parse_box(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 4)
        throw FormatError("instance file: " + where + ": box must be [x1,y1,x2,y2]");
    return BBox{j[0].get<float>(), j[1].get<float>(), j[2].get<float>(), j[3].get<float>()};
}

inline InstanceFile parse_instance_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("instance file: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("instance file: parse error in " + path + ": " + e.what());
    }
    InstanceFile out;
    try {
        size_t idx = 0;
        for (const auto& p : j.at("predictions")) {
            PredSample ps;
            ps.box = parse_box(p.at("box"), "predictions[" + std::to_string(idx) + "]");
            ps.logits = p.at("logits").get<std::vector<float>>();
            ps.level = p.at("level").get<int>();
            out.preds.push_back(std::move(ps));
            ++idx;
        }
        idx = 0;
        for (const auto& g : j.at("ground_truths")) {
            GtSample gs;
            gs.box = parse_box(g.at("box"), "ground_truths[" + std::to_string(idx) + "]");
            gs.class_id = g.at("class_id").get<int>();
            out.gts.push_back(gs);
            ++idx;
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("instance file: bad field in " + path + ": " + e.what());
    }
    return out;
}

inline nlohmann::json instance_file_to_json(const InstanceFile& inst) {
    nlohmann::json preds = nlohmann::json::array(), gts = nlohmann::json::array();
    for (const auto& p : inst.preds) {
        nlohmann::json logits = nlohmann::json::array();
        for (float v : p.logits) logits.push_back(static_cast<double>(v));
        preds.push_back({{"box",
                          {static_cast<double>(p.box.x1), static_cast<double>(p.box.y1),
                           static_cast<double>(p.box.x2), static_cast<double>(p.box.y2)}},
                         {"logits", logits},
                         {"level", p.level}});
    }
    for (const auto& g : inst.gts)
        gts.push_back({{"box",
                        {static_cast<double>(g.box.x1), static_cast<double>(g.box.y1),
                         static_cast<double>(g.box.x2), static_cast<double>(g.box.y2)}},
                       {"class_id", g.class_id}});
    return {{"predictions", preds}, {"ground_truths", gts}};
}

inline nlohmann::json assignment_report(const AssignmentResult& r) {
    nlohmann::json per_gt = nlohmann::json::array();
    for (size_t j = 0; j < r.retained.size(); ++j)
        per_gt.push_back({{"gt", j},
                          {"candidates", r.candidates[j]},
                          {"tau", r.tau[j]},
                          {"retained", r.retained[j]}});
    int assigned = 0;
    for (int v : r.pred_to_gt)
        if (v >= 0) ++assigned;
    return {{"per_gt", per_gt},
            {"pred_to_gt", r.pred_to_gt},
            {"all_background", r.all_background},
            {"num_assigned", assigned},
            {"num_background", static_cast<int>(r.pred_to_gt.size()) - assigned}};
}

// ---- eval file ingestion ----

// Minimal COCO-like subset: images, annotations with bbox [x, y, w, h],
// categories. Category ids map to contiguous class indices in sorted order.
inline EvalSet load_eval_gts(const std::string& path, std::vector<int>* category_ids = nullptr) {
    std::ifstream f(path);
    if (!f) throw IoError("eval: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("eval: parse error in " + path + ": " + e.what());
    }
    EvalSet set;
    std::map<int, int> img_index;
    std::vector<int> cats;
    try {
        for (const auto& im : j.at("images")) {
            EvalImage ei;
            ei.id = im.at("id").get<int>();
            if (img_index.count(ei.id))
                throw ValidationError("eval: duplicate image id " + std::to_string(ei.id));
            img_index[ei.id] = static_cast<int>(set.images.size());
            set.images.push_back(std::move(ei));
        }
        for (const auto& c : j.at("categories")) cats.push_back(c.at("id").get<int>());
        std::sort(cats.begin(), cats.end());
        std::map<int, int> cat_index;
        for (size_t i = 0; i < cats.size(); ++i) cat_index[cats[i]] = static_cast<int>(i);
        set.num_classes = static_cast<int>(cats.size());
        for (const auto& a : j.at("annotations")) {
            int img_id = a.at("image_id").get<int>();
            auto it = img_index.find(img_id);
            if (it == img_index.end())
                throw ValidationError("eval: annotation references unknown image id " +
                                      std::to_string(img_id));
            auto cit = cat_index.find(a.at("category_id").get<int>());
            if (cit == cat_index.end())
                throw ValidationError("eval: annotation references unknown category");
            auto bb = a.at("bbox");
            GtSample g;
            g.box = BBox{bb[0].get<float>(), bb[1].get<float>(),
                         bb[0].get<float>() + bb[2].get<float>(),
                         bb[1].get<float>() + bb[3].get<float>()};
            g.class_id = cit->second;
            set.images[it->second].gts.push_back(g);
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("eval: bad field in " + path + ": " + e.what());
    }
    if (category_ids) *category_ids = cats;
    return set;
}

// Detection files are arrays of {image_id, class_id, score, box:[x1,y1,x2,y2]}.
inline void load_eval_dets(const std::string& path, EvalSet& set) {
    std::ifstream f(path);
    if (!f) throw IoError("eval: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("eval: parse error in " + path + ": " + e.what());
    }
    const nlohmann::json& arr = j.is_array() ? j : j.at("detections");
    std::map<int, int> img_index;
    for (size_t i = 0; i < set.images.size(); ++i) img_index[set.images[i].id] = static_cast<int>(i);
    std::vector<int> orphans;
    try {
        for (const auto& d : arr) {
            int img_id = d.at("image_id").get<int>();
            auto it = img_index.find(img_id);
            if (it == img_index.end()) {
                orphans.push_back(img_id);
                continue;
            }
            Detection det;
            det.class_id = d.at("class_id").get<int>();
            det.score = d.at("score").get<float>();
            det.box = parse_box(d.at("box"), "detections");
            set.images[it->second].dets.push_back(det);
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("eval: bad field in " + path + ": " + e.what());
    }
    if (!orphans.empty()) {
        std::string msg = "eval: detections reference unknown image ids:";
        for (int id : orphans) msg += " " + std::to_string(id);
        throw ValidationError(msg);
    }
}

// ---- gradcheck ----

struct GradCheckReport {
    double max_rel_f = 0.0, max_rel_w = 0.0, max_rel_off = 0.0;
    int trials = 0;
    bool passed = false;
};

namespace detail {
inline double rel_err(double a, double b) {
    double denom = std::max({std::abs(a), std::abs(b), 1e-4});
    return std::abs(a - b) / denom;
}

// Double-precision evaluation of the deformable-conv forward map followed by
// the weighted-sum loss. Same math as deform_conv_forward, but without the
// float32 rounding of intermediate outputs, so central differences are not
// swamped by roundoff.
inline double deform_loss_f64(const Tensor& f, const Tensor& w, const Tensor& offsets,
                              const Tensor& grad_out, int k) {
    int pad = k / 2;
    auto bilinear = [&](int ni, int ci, double x, double y) {
        int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
        double fx = x - x0, fy = y - y0;
        double acc = 0.0;
        for (int dy = 0; dy <= 1; ++dy)
            for (int dx = 0; dx <= 1; ++dx) {
                int xx = x0 + dx, yy = y0 + dy;
                if (xx < 0 || xx >= f.w || yy < 0 || yy >= f.h) continue;
                acc += (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * f.at(ni, ci, yy, xx);
            }
        return acc;
    };
    double loss = 0.0;
    for (int ni = 0; ni < f.n; ++ni)
        for (int oc = 0; oc < w.n; ++oc)
            for (int oy = 0; oy < f.h; ++oy)
                for (int ox = 0; ox < f.w; ++ox) {
                    double out = 0.0;
                    for (int q = 0; q < k * k; ++q) {
                        double x = ox - pad + q % k +
                                   static_cast<double>(offsets.at(ni, 2 * q, oy, ox));
                        double y = oy - pad + q / k +
                                   static_cast<double>(offsets.at(ni, 2 * q + 1, oy, ox));
                        for (int ic = 0; ic < f.c; ++ic)
                            out += static_cast<double>(w.at(oc, ic, q / k, q % k)) *
                                   bilinear(ni, ic, x, y);
                    }
                    loss += out * grad_out.at(ni, oc, oy, ox);
                }
    return loss;
}
}  // namespace detail

// Central finite differences against the analytical backward pass on seeded
// 1x2x5x5 instances. Offsets are kept away from integer sampling positions
// where the bilinear derivative is discontinuous.
inline GradCheckReport gradcheck_run(uint64_t seed, double eps, int trials) {
    if (eps <= 0.0) throw ValidationError("gradcheck: eps must be > 0");
    if (trials < 1) throw ValidationError("gradcheck: trials must be >= 1");
    GradCheckReport rep;
    rep.trials = trials;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    for (int trial = 0; trial < trials; ++trial) {
        Tensor f(1, 2, 5, 5), w(1, 2, 3, 3), grad_out(1, 1, 5, 5);
        Tensor off_t(1, 18, 5, 5);
        for (auto& v : f.data) v = dist(rng);
        for (auto& v : w.data) v = dist(rng);
        for (auto& v : grad_out.data) v = dist(rng);
        // Fractional parts are kept in [0.15, 0.4] or [0.6, 0.85]: well away
        // from the integer positions where the bilinear derivative jumps, and
        // off the half-integers.
        std::uniform_int_distribution<int> whole(-1, 1);
        std::uniform_real_distribution<float> unit(0.0f, 1.0f);
        for (auto& v : off_t.data) {
            float u = unit(rng);
            float frac = u < 0.5f ? 0.15f + 0.5f * u : 0.6f + 0.5f * (u - 0.5f);
            v = static_cast<float>(whole(rng)) + frac;
        }
        OffsetField off = make_offset_field(off_t);
        DeformGrads g = deform_conv_backward(f, w, off, grad_out);

        auto loss = [&](const Tensor& ft, const Tensor& wt, const Tensor& ot) {
            return detail::deform_loss_f64(ft, wt, ot, grad_out, 3);
        };
        auto fd_check = [&](Tensor& param, const Tensor& analytical, double step,
                            double& worst) {
            for (int64_t i = 0; i < param.size(); ++i) {
                float orig = param.data[i];
                param.data[i] = orig + static_cast<float>(step);
                double up = loss(f, w, off.field);
                param.data[i] = orig - static_cast<float>(step);
                double dn = loss(f, w, off.field);
                param.data[i] = orig;
                double fd = (up - dn) / (2.0 * step);
                worst = std::max(worst, detail::rel_err(fd, analytical.data[i]));
            }
        };
        fd_check(f, g.grad_f, eps, rep.max_rel_f);
        fd_check(w, g.grad_weights, eps, rep.max_rel_w);
        fd_check(off.field, g.grad_offsets, eps, rep.max_rel_off);
    }
    rep.passed = rep.max_rel_f <= 1e-3 && rep.max_rel_w <= 1e-3 && rep.max_rel_off <= 1e-2;
    return rep;
}

// ---- bench ----

struct BenchReport {
    double mean_ms = 0.0, median_ms = 0.0, p95_ms = 0.0, min_ms = 0.0, fps = 0.0;
    uint64_t model_bytes = 0;
    int iters = 0;
};

inline BenchReport bench_run(const Model& m, int iters, int warmup, uint64_t model_bytes) {
    if (iters < 1) throw ValidationError("bench: iters must be >= 1");
    if (warmup < 0) throw ValidationError("bench: warmup must be >= 0");
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    Tensor input(1, 3, m.config.input_size, m.config.input_size);
    for (auto& v : input.data) v = dist(rng);
    for (int i = 0; i < warmup; ++i) model_forward(m, input);
    std::vector<double> ms(iters);
    for (int i = 0; i < iters; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        model_forward(m, input);
        auto t1 = std::chrono::steady_clock::now();
        ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    BenchReport rep;
    rep.iters = iters;
    rep.model_bytes = model_bytes;
    double sum = 0.0;
    for (double v : ms) sum += v;
    rep.mean_ms = sum / iters;
    std::sort(ms.begin(), ms.end());
    rep.min_ms = ms[0];
    rep.median_ms = ms[iters / 2];
    rep.p95_ms = ms[std::min<int>(iters - 1, static_cast<int>(std::ceil(iters * 0.95)) - 1)];
    rep.fps = 1000.0 / rep.mean_ms;
    return rep;
}

// ---- inspect ----

// Per pyramid level: mean offset magnitude per location, min-max normalized
// to 8-bit (uniform zero map when the range is empty).
inline std::vector<std::string> inspect_offsets(const Model& m, const Tensor& raw_image,
                                                const std::string& out_dir) {
    Tensor img = raw_image;
    for (auto& v : img.data) v /= 255.0f;
    int s = m.config.input_size;
    Tensor resized = resize_bicubic(img, s, s);
    BackboneOutput bb = backbone_forward(resized, m.weights);
    Pyramid pyr = fpn_forward(bb, PyramidConfig{m.config.neck_channels, 3}, m.weights);
    std::vector<std::string> written;
    std::filesystem::create_directories(out_dir);
    for (size_t l = 0; l < pyr.levels.size(); ++l) {
        std::string prefix = "deform.l" + std::to_string(l);
        auto [off_cls, off_reg] =
            offset_gen(pyr.levels[l], m.weights.get(prefix + ".phi.weight"),
                       m.weights.get_vector(prefix + ".phi.bias"));
        Tensor mag = offset_magnitude_map(off_cls, off_reg);
        float lo = mag.data[0], hi = mag.data[0];
        for (float v : mag.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        std::vector<unsigned char> px(mag.data.size(), 0);
        if (hi > lo)
            for (size_t i = 0; i < mag.data.size(); ++i)
                px[i] = static_cast<unsigned char>(
                    std::lround(255.0 * (mag.data[i] - lo) / (hi - lo)));
        std::string path = out_dir + "/offsets_l" + std::to_string(l) + ".pgm";
        write_pgm(path, px, mag.w, mag.h);
        written.push_back(path);
    }
    return written;
}

}  // namespace mgnet
