#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mgnet/model.hpp"

namespace {

mgnet::ModelConfig resolve_config(const std::string& config_path) {
    if (config_path.empty()) return mgnet::ModelConfig{};
    return mgnet::load_model_config(config_path);
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text << "\n";
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw mgnet::IoError("cannot open output file " + path);
    f << text << "\n";
    if (!f) throw mgnet::IoError("write failed for " + path);
}

uint64_t file_size_bytes(const std::string& path) {
    std::error_code ec;
    auto sz = std::filesystem::file_size(path, ec);
    if (ec) throw mgnet::IoError("cannot stat " + path);
    return sz;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mobile glottis detection engine"};
    app.require_subcommand(1);

    std::string config_path;
    int seed = 42;
    int threads = 0;
    app.add_option("--config", config_path, "Model config JSON");
    app.add_option("--seed", seed, "Random seed");
    app.add_option("--threads", threads, "Worker threads (0 = auto)");

    // detect
    auto* detect = app.add_subcommand("detect", "Run detection on an image");
    std::string det_model, det_image, det_out;
    detect->add_option("--model", det_model, "Weight file")->required();
    detect->add_option("--image", det_image, "PNG or binary PPM image")->required();
    detect->add_option("--out", det_out, "Output detection file (default stdout)");

    // bench
    auto* bench = app.add_subcommand("bench", "Benchmark inference latency");
    std::string bench_model;
    int iters = 50, warmup = 5;
    bench->add_option("--model", bench_model, "Weight file")->required();
    bench->add_option("--iters", iters, "Timed iterations");
    bench->add_option("--warmup", warmup, "Warmup iterations");

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "Verify deformable-conv gradients");
    double gc_eps = 1e-3;
    int gc_trials = 50;
    gradcheck->add_option("--eps", gc_eps, "Finite-difference step");
    gradcheck->add_option("--trials", gc_trials, "Seeded instances");

    // assign
    auto* assign = app.add_subcommand("assign", "Run label assignment on an instance file");
    std::string as_instances, as_out;
    int as_topk = -1;
    double as_lambda = -1.0;
    assign->add_option("--instances", as_instances, "Instance JSON file")->required();
    assign->add_option("--topk", as_topk, "Per-level top-K (default from config)");
    assign->add_option("--lambda", as_lambda, "Cost balance factor (default from config)");
    assign->add_option("--out", as_out, "Output report file (default stdout)");

    // eval
    auto* eval = app.add_subcommand("eval", "Compute mAP / AP50 / AP75");
    std::string ev_gts, ev_dets;
    eval->add_option("--gts", ev_gts, "Ground-truth annotation file")->required();
    eval->add_option("--dets", ev_dets, "Detection file")->required();

    // inspect
    auto* inspect = app.add_subcommand("inspect", "Write per-level offset-magnitude heatmaps");
    std::string in_model, in_image, in_outdir = ".";
    inspect->add_option("--model", in_model, "Weight file")->required();
    inspect->add_option("--image", in_image, "PNG or binary PPM image")->required();
    inspect->add_option("--out-dir", in_outdir, "Output directory");

    // genweights
    auto* genweights = app.add_subcommand("genweights", "Write seeded random fixture weights");
    std::string gw_out;
    bool gw_random_phi = false;
    genweights->add_option("--out", gw_out, "Output weight file")->required();
    genweights->add_flag("--random-phi", gw_random_phi,
                         "Randomize the offset sub-network instead of zero init");

    CLI11_PARSE(app, argc, argv);

    try {
        mgnet::set_num_threads(threads);
        mgnet::ModelConfig cfg = resolve_config(config_path);

        if (*detect) {
            mgnet::Model m = mgnet::load_model(det_model, cfg);
            mgnet::Tensor img = mgnet::read_image(det_image);
            auto dets = mgnet::detect_image(m, img);
            nlohmann::json out = {{"image", det_image},
                                  {"detections", mgnet::detections_to_json(dets, 0)}};
            write_text(det_out, out.dump(2));
        } else if (*bench) {
            mgnet::Model m = mgnet::load_model(bench_model, cfg);
            auto rep = mgnet::bench_run(m, iters, warmup, file_size_bytes(bench_model));
            nlohmann::json out = {{"iters", rep.iters},        {"mean_ms", rep.mean_ms},
                                  {"median_ms", rep.median_ms}, {"p95_ms", rep.p95_ms},
                                  {"min_ms", rep.min_ms},
                                  {"fps", rep.fps},             {"model_bytes", rep.model_bytes},
                                  {"threads", mgnet::num_threads()},
                                  {"input_size", m.config.input_size},
                                  {"neck_channels", m.config.neck_channels}};
            std::cout << out.dump(2) << "\n";
            std::printf("mean %.3f ms  median %.3f ms  p95 %.3f ms  %.1f FPS  model %llu bytes\n",
                        rep.mean_ms, rep.median_ms, rep.p95_ms, rep.fps,
                        static_cast<unsigned long long>(rep.model_bytes));
        } else if (*gradcheck) {
            auto rep = mgnet::gradcheck_run(static_cast<uint64_t>(seed), gc_eps, gc_trials);
            std::printf("trials %d\n", rep.trials);
            std::printf("max rel err grad_f       %.3e (tolerance 1e-3)\n", rep.max_rel_f);
            std::printf("max rel err grad_weights %.3e (tolerance 1e-3)\n", rep.max_rel_w);
            std::printf("max rel err grad_offsets %.3e (tolerance 1e-2)\n", rep.max_rel_off);
            std::printf("%s\n", rep.passed ? "PASS" : "FAIL");
            if (!rep.passed) return 1;
        } else if (*assign) {
            mgnet::InstanceFile inst = mgnet::parse_instance_file(as_instances);
            mgnet::AssignConfig acfg{cfg.lambda, cfg.top_k, 3};
            if (as_topk > 0) acfg.top_k = as_topk;
            if (as_lambda >= 0.0) acfg.lambda = as_lambda;
            auto result = mgnet::assign(inst.preds, inst.gts, acfg);
            write_text(as_out, mgnet::assignment_report(result).dump(2));
        } else if (*eval) {
            mgnet::EvalSet set = mgnet::load_eval_gts(ev_gts);
            mgnet::load_eval_dets(ev_dets, set);
            mgnet::MetricsReport rep = mgnet::evaluate(set);
            if (!rep.defined) {
                std::cout << "{\"defined\": false}\n";
                std::cerr << "no ground truth present anywhere; metrics undefined\n";
            } else {
                nlohmann::json per_class = nlohmann::json::array();
                for (size_t c = 0; c < rep.per_class_map.size(); ++c) {
                    if (std::isnan(rep.per_class_map[c])) continue;
                    per_class.push_back({{"class", c},
                                         {"mAP", rep.per_class_map[c]},
                                         {"AP50", rep.per_class_ap50[c]},
                                         {"AP75", rep.per_class_ap75[c]}});
                }
                nlohmann::json out = {{"defined", true},     {"mAP", rep.mAP},
                                      {"AP50", rep.ap50},    {"AP75", rep.ap75},
                                      {"per_class", per_class}};
                std::cout << out.dump(2) << "\n";
                std::printf("mAP %.4f  AP50 %.4f  AP75 %.4f\n", rep.mAP, rep.ap50, rep.ap75);
            }
        } else if (*inspect) {
            mgnet::Model m = mgnet::load_model(in_model, cfg);
            mgnet::Tensor img = mgnet::read_image(in_image);
            auto files = mgnet::inspect_offsets(m, img, in_outdir);
            for (const auto& f : files) std::cout << f << "\n";
        } else if (*genweights) {
            auto store = mgnet::make_random_weights(cfg, static_cast<uint64_t>(seed),
                                                    gw_random_phi);
            mgnet::save_weights(gw_out, store);
            std::cout << "wrote " << gw_out << "\n";
        }
    } catch (const mgnet::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const mgnet::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
