// hcpn: synthesis, training, inference, evaluation and self-checks.
//
// Exit codes: 0 success, 2 usage or configuration, 3 format or I/O,
// 4 verification failure, 1 anything else.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "hcpn/dataset.hpp"
#include "hcpn/gradcheck_suite.hpp"
#include "hcpn/run.hpp"
#include "hcpn/synth.hpp"

using namespace hcpn;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kFormat = 3, kVerify = 4 };

struct VerificationFailure : Error {
    using Error::Error;
};

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream f(p);
    if (!f) throw IoError("cannot open config " + p.string());
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("config " + p.string() + ": " + e.what());
    }
}

// Model and optimiser flags; only those given on the command line override
// the config file.
struct RunFlags {
    std::size_t size = 64, levels = 4, decoder_width = 32, batch = 4, iterations = 500;
    double lr_encoder = 1e-4, lr_bridge = 1e-4, lr_decoder = 1e-3, weight_decay = 1e-5, momentum = 0.9;
    std::string fusion = "gaf";
    bool no_flow = false, no_frame = false, two_stream = false;
    bool bypass_pcm = false, bypass_ccm = false, bypass_gac = false, bypass_mcr = false;
    std::vector<std::pair<std::string, CLI::Option*>> given;

    void attach(CLI::App& app, bool training) {
        auto add = [&](const char* flag, const char* key, auto& target, const char* help) {
            given.emplace_back(key, app.add_option(flag, target, help));
        };
        auto flag = [&](const char* name, const char* key, bool& target, const char* help) {
            given.emplace_back(key, app.add_flag(name, target, help));
        };
        add("--size", "size", size, "Canvas side in pixels (default 64)");
        add("--levels", "levels", levels, "Cascade levels 1..4 (default 4)");
        add("--decoder-width", "decoder_width", decoder_width, "Decoder channels (default 32)");
        add("--fusion", "fusion", fusion, "Cross-frame fusion: gaf, add or concat (default gaf)");
        flag("--no-flow-stream", "no_flow_stream", no_flow, "Replace motion features by zeros");
        flag("--no-frame-stream", "no_frame_stream", no_frame, "Replace appearance features by zeros");
        flag("--two-stream", "two_stream", two_stream, "Use frame k for both appearance inputs");
        flag("--bypass-pcm", "bypass_pcm", bypass_pcm, "Skip parallel co-attention");
        flag("--bypass-ccm", "bypass_ccm", bypass_ccm, "Skip cross co-attention (average instead)");
        flag("--bypass-gac", "bypass_gac", bypass_gac, "Skip the bridge");
        flag("--bypass-mcr", "bypass_mcr", bypass_mcr, "Use the coarse mask as the output");
        if (!training) return;
        add("--iterations", "iterations", iterations, "SGD steps (default 500)");
        add("--batch", "batch", batch, "Pairs per step (default 4)");
        add("--lr-encoder", "lr_encoder", lr_encoder, "Backbone and co-attention rate (default 1e-4)");
        add("--lr-bridge", "lr_bridge", lr_bridge, "Bridge rate (default 1e-4)");
        add("--lr-decoder", "lr_decoder", lr_decoder, "Decoder rate (default 1e-3)");
        add("--weight-decay", "weight_decay", weight_decay, "L2 penalty (default 1e-5)");
        add("--momentum", "momentum", momentum, "SGD momentum (default 0.9)");
    }

    nlohmann::json overrides() const {
        const nlohmann::json all = {
            {"size", size},
            {"levels", levels},
            {"decoder_width", decoder_width},
            {"fusion", fusion},
            {"no_flow_stream", no_flow},
            {"no_frame_stream", no_frame},
            {"two_stream", two_stream},
            {"bypass_pcm", bypass_pcm},
            {"bypass_ccm", bypass_ccm},
            {"bypass_gac", bypass_gac},
            {"bypass_mcr", bypass_mcr},
            {"iterations", iterations},
            {"batch", batch},
            {"lr_encoder", lr_encoder},
            {"lr_bridge", lr_bridge},
            {"lr_decoder", lr_decoder},
            {"weight_decay", weight_decay},
            {"momentum", momentum},
        };
        nlohmann::json out = nlohmann::json::object();
        for (const auto& [key, opt] : given) {
            if (opt->count() > 0) out[key] = all.at(key);
        }
        return out;
    }
};

struct Globals {
    std::uint64_t seed = 0;
    int precision = 32;
    std::string config;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* precision_opt = nullptr;

    // Defaults, then the config file, then explicit flags.
    RunConfig resolve(const RunFlags& flags) const {
        RunConfig cfg;
        if (!config.empty()) cfg.merge(read_json(config));
        cfg.merge(flags.overrides());
        if (seed_opt->count() > 0) cfg.seed = seed;
        if (precision_opt->count() > 0) cfg.precision = precision;
        cfg.validate();
        return cfg;
    }
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

void print_aggregate(const std::vector<SequenceEval>& evals) {
    const Aggregate a = aggregate(evals);
    std::cout << "sequences " << a.sequences << ", frames " << a.frames << "\n"
              << "J mean " << fmt(a.j.mean) << "  recall " << fmt(a.j.recall) << "  decay " << fmt(a.j.decay) << "\n"
              << "F mean " << fmt(a.f.mean) << "  recall " << fmt(a.f.recall) << "  decay " << fmt(a.f.decay) << "\n"
              << "T mean " << fmt(a.t) << "\n";
}

void write_reports(const fs::path& dir, const std::vector<SequenceEval>& evals, bool svg) {
    fs::create_directories(dir);
    write_frame_csv(dir / "frames.csv", evals);
    write_summary_markdown(dir / "summary.md", evals);
    write_attribute_markdown(dir / "attributes.md", evals);
    if (svg) write_j_plot_svg(dir / "j_per_frame.svg", evals);
}

void write_masks(const fs::path& dir, const std::vector<BinaryMask>& masks, const std::vector<Tensor<float>>* probs) {
    fs::create_directories(dir);
    for (std::size_t t = 0; t < masks.size(); ++t) {
        char name[32];
        std::snprintf(name, sizeof name, "%05zu", t);
        write_pgm(dir / (std::string(name) + ".pgm"), masks[t]);
        if (probs) write_pgm16(dir / (std::string(name) + ".prob.pgm"), (*probs)[t]);
    }
}

std::vector<BinaryMask> read_masks(const fs::path& dir, std::size_t count) {
    std::vector<BinaryMask> out;
    for (std::size_t t = 0; t < count; ++t) {
        char name[32];
        std::snprintf(name, sizeof name, "%05zu.pgm", t);
        if (!fs::exists(dir / name)) throw FormatError("missing prediction " + (dir / name).string());
        out.push_back(read_pgm(dir / name));
    }
    return out;
}

int run_gradcheck(std::uint64_t seed, const std::string& fault) {
    GradCheckSuiteOptions opts;
    opts.seed = seed;
    if (!fault.empty()) opts.fault_module = fault;
    bool ok = true;
    for (const auto& r : run_gradcheck_suite(opts)) {
        std::printf("%-12s %-36s probes %5zu  max rel err %.3e  %s\n", r.module.c_str(), r.what.c_str(), r.probes,
                    r.max_rel_error, r.passed ? "ok" : "FAILED");
        ok = ok && r.passed;
    }
    std::printf("%s (tolerance 1e-4, 64-bit central differences)\n", ok ? "all modules pass" : "gradient check failed");
    return ok ? kOk : kVerify;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical co-attention propagation network for zero-shot video object segmentation.\n"
                 "Settings resolve as: built-in defaults < --config JSON < explicit flags."};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    g.seed_opt = app.add_option("--seed", g.seed, "Run seed (default 0)");
    g.precision_opt = app.add_option("--precision", g.precision, "Floating point width: 32 or 64 (default 32)");
    app.add_option("--config", g.config, "JSON file with run settings; keys match the long flags")
        ->check(CLI::ExistingFile);

    // synth
    auto* synth = app.add_subcommand("synth", "Render synthetic sequences");
    std::string synth_out, attrs;
    std::size_t seqs = 1, frames = 8, synth_size = 64, distractors = 0;
    synth->add_option("--out", synth_out, "Output root")->required();
    synth->add_option("--seqs", seqs, "Number of sequences (default 1)");
    synth->add_option("--frames", frames, "Frames per sequence (default 8)");
    auto* synth_size_opt = synth->add_option("--size", synth_size, "Canvas side (default 64)");
    synth->add_option("--attrs", attrs, "Attribute mixes, ';'-separated lists of BC,CS,FM,OC,SC, assigned round-robin");
    synth->add_option("--distractors", distractors, "Static foreground look-alikes per scene (default 0)");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train on a dataset written by synth (or laid out the same way)");
    std::string train_data, train_out, train_log;
    std::optional<std::size_t> epochs;
    bool paper_scale = false;
    train_cmd->add_option("--data", train_data, "Dataset root")->required();
    train_cmd->add_option("--out", train_out, "Checkpoint path")->required();
    train_cmd->add_option("--log", train_log, "Training CSV (default <out>.log.csv)");
    train_cmd->add_option("--epochs", epochs, "Passes over all pairs; overrides --iterations");
    train_cmd->add_flag("--paper-scale", paper_scale, "512x512 canvas, batch 10, 25 epochs");
    RunFlags train_flags;
    train_flags.attach(*train_cmd, true);

    // infer
    auto* infer = app.add_subcommand("infer", "Write predicted masks for every sequence");
    std::string infer_model, infer_data, infer_out;
    bool write_probs = false;
    infer->add_option("--model", infer_model, "Checkpoint")->required()->check(CLI::ExistingFile);
    infer->add_option("--data", infer_data, "Dataset root")->required();
    infer->add_option("--out", infer_out, "Mask output root")->required();
    infer->add_flag("--probs", write_probs, "Also write 16-bit probability maps");

    // eval
    auto* eval = app.add_subcommand("eval", "Score predictions (or a model) against ground truth");
    std::string eval_data, eval_pred, eval_model, eval_report;
    bool svg = false;
    eval->add_option("--data", eval_data, "Dataset root with ground truth")->required();
    auto* pred_opt = eval->add_option("--pred", eval_pred, "Mask root written by infer");
    auto* model_opt = eval->add_option("--model", eval_model, "Checkpoint to run first")->check(CLI::ExistingFile);
    pred_opt->excludes(model_opt);
    eval->add_option("--report", eval_report, "Report directory")->required();
    eval->add_flag("--svg", svg, "Also plot per-frame J");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Central-difference gradient checks of every module (64-bit)");
    std::string fault;
    gc->add_option("--inject-fault", fault, "Corrupt one module's backward rules")->group("");

    // verify
    auto* verify = app.add_subcommand("verify", "Check manifests and file checksums");
    std::string verify_data;
    verify->add_option("--data", verify_data, "Dataset root or sequence directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*synth) {
            RunConfig cfg;
            if (!g.config.empty()) cfg.merge(read_json(g.config));
            if (g.seed_opt->count() > 0) cfg.seed = g.seed;
            if (seqs == 0) throw UsageError("--seqs must be at least 1");
            DatasetOptions opts;
            opts.sequences = seqs;
            opts.seed = cfg.seed;
            opts.scene.frames = frames;
            opts.scene.size = synth_size_opt->count() > 0 ? synth_size : cfg.model.backbone.width;
            opts.scene.distractors = distractors;
            for (const auto& mix : split(attrs, ';')) opts.mixes.push_back(split(mix, ','));
            synth_dataset(opts, synth_out);
            std::cout << (fs::path(synth_out) / "index.json").string() << "\n";
            return kOk;
        }
        if (*train_cmd) {
            RunConfig cfg = g.resolve(train_flags);
            const std::vector<Sequence> data = load_dataset(train_data);
            if (paper_scale) {
                cfg.model.set_size(512);
                cfg.train.batch = 10;
                if (!epochs) epochs = 25;
            }
            if (epochs) {
                const std::size_t pairs = all_pairs(data).size();
                cfg.train.iterations = std::max<std::size_t>(1, (*epochs * pairs + cfg.train.batch - 1) / cfg.train.batch);
            }
            cfg.validate();
            const fs::path log_path = train_log.empty() ? fs::path(train_out + ".log.csv") : fs::path(train_log);
            std::ofstream log(log_path, std::ios::trunc);
            if (!log) throw IoError("cannot write " + log_path.string());
            log << "iter,loss,train_j\n";
            const auto t0 = std::chrono::steady_clock::now();
            const ModelState state = train_model(cfg, data, [&](const TrainLogRow& r) {
                log << r.iter << ',' << fmt(r.loss) << ',' << fmt(r.probe_j) << '\n';
                if ((r.iter + 1) % 50 == 0 || r.iter + 1 == cfg.train.iterations) {
                    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                    std::fprintf(stderr, "iter %zu/%zu  loss %.4f  (%.0fs)\n", r.iter + 1, cfg.train.iterations,
                                 r.loss, s);
                }
            });
            save_model(state, train_out);
            std::cout << train_out << "\n";
            return kOk;
        }
        if (*infer) {
            const ModelState state = load_model(infer_model, g.precision_opt->count() > 0 ? g.precision : 0);
            LoadOptions lo;
            lo.require_masks = false;
            for (const auto& seq : load_dataset(infer_data, lo)) {
                const auto probs = predict_sequence(state, seq);
                write_masks(fs::path(infer_out) / seq.name, threshold_all(probs), write_probs ? &probs : nullptr);
            }
            return kOk;
        }
        if (*eval) {
            if (pred_opt->count() == 0 && model_opt->count() == 0) throw UsageError("eval needs --pred or --model");
            const std::vector<Sequence> data = load_dataset(eval_data);
            std::vector<SequenceEval> evals;
            if (model_opt->count() > 0) {
                const ModelState state = load_model(eval_model, g.precision_opt->count() > 0 ? g.precision : 0);
                for (const auto& seq : data) {
                    const auto masks = threshold_all(predict_sequence(state, seq));
                    write_masks(fs::path(eval_report) / "masks" / seq.name, masks, nullptr);
                    evals.push_back(evaluate_prediction(seq, masks));
                }
            } else {
                for (const auto& seq : data) {
                    evals.push_back(evaluate_prediction(seq, read_masks(fs::path(eval_pred) / seq.name, seq.length())));
                }
            }
            write_reports(eval_report, evals, svg);
            print_aggregate(evals);
            return kOk;
        }
        if (*gc) return run_gradcheck(g.seed, fault);
        if (*verify) {
            std::size_t bad = 0, total = 0;
            for (const auto& dir : list_sequences(verify_data)) {
                ++total;
                const auto problems = verify_sequence(dir);
                for (const auto& p : problems) std::cout << dir.filename().string() << ": " << p << "\n";
                bad += problems.empty() ? 0 : 1;
            }
            if (total == 0) throw FormatError("no sequences under " + verify_data);
            std::cout << total - bad << "/" << total << " sequences intact\n";
            if (bad > 0) throw VerificationFailure(std::to_string(bad) + " sequence(s) failed verification");
            return kOk;
        }
    } catch (const VerificationFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kVerify;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kUsage;
    } catch (const SpecError& e) {
        std::cerr << "scene error: " << e.what() << "\n";
        return kUsage;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kFormat;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kFormat;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kFormat;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}
