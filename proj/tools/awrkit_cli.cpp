// awrkit command-line tool: synth, gradcheck, train, eval.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "awrkit/error.hpp"
#include "awrkit/eval.hpp"
#include "awrkit/gradcheck.hpp"
#include "awrkit/io.hpp"
#include "awrkit/parallel.hpp"
#include "awrkit/synth.hpp"
#include "awrkit/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace awrkit;

namespace {

struct SynthArgs {
    int frames = 100;
    std::uint64_t seed = 0;
    std::string out;
    double noise = 2.0;
    double dropout = 0.05;
};

struct TrainArgs {
    std::string spec;
    std::string rep = "O3";
    std::string mode = "both";
    int input_size = 32;
    int dense_size = 16;
    double kernel = 1.0;
    int epochs = 10;
    int finetune_epochs = -1;
    std::uint64_t seed = 0;
    std::string data;
    std::string out;
    std::string log;
    std::string channels = "8,16,32";
    int trunk_convs = 1;
    int head_kernel = 1;
    int batch_size = 32;
    double lr = 1e-3;
    double weight_decay = 5e-4;
    double temperature = 0.02;
    bool no_augment = false;
};

struct EvalArgs {
    std::string ckpt;
    std::string data;
    std::string mode = "awr";
    std::string out;
    bool oracle_maps = false;
};

std::vector<int> parse_channels(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("--channels expects comma-separated integers, got '" + text + "'");
        }
    }
    return out;
}

int cmd_synth(const SynthArgs& a) {
    if (a.frames < 1) throw UsageError("--frames must be at least 1");
    SceneParams scene;
    scene.noise_sigma_mm = a.noise;
    scene.dropout = a.dropout;
    scene.validate();
    make_dataset(a.frames, a.seed, scene, a.out, default_threads());
    std::cout << "wrote " << a.frames << " frames to " << a.out << "\n";
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, int trials, const std::string& sabotage) {
    GradcheckOptions opt;
    opt.seed = seed;
    opt.trials = trials;
    opt.sabotage = sabotage;
    bool ok = true;
    std::printf("%-22s %7s %14s  %s\n", "op", "trials", "max_rel_error", "status");
    for (const auto& r : run_gradcheck(opt)) {
        std::printf("%-22s %7d %14.3e  %s\n", r.op.c_str(), r.trials, r.max_rel_error, r.passed ? "pass" : "FAIL");
        ok = ok && r.passed;
    }
    std::printf("%s\n", ok ? "all ops pass" : "gradient check FAILED");
    return ok ? 0 : static_cast<int>(ErrorKind::numeric);
}

// Applies ExperimentSpec fields that were not overridden on the command line.
void apply_spec(TrainArgs& a, const CLI::App& app) {
    json s;
    try {
        s = json::parse(read_text(a.spec));
    } catch (const json::exception& e) {
        throw UsageError("--spec: " + std::string(e.what()));
    }
    auto take = [&](const char* key, const char* flag, auto& field) {
        if (s.contains(key) && app.count(flag) == 0) field = s.at(key).get<std::decay_t<decltype(field)>>();
    };
    try {
        take("rep_type", "--rep", a.rep);
        take("mode", "--mode", a.mode);
        take("kernel_k", "--kernel", a.kernel);
        take("seed", "--seed", a.seed);
        if (s.contains("data") && app.count("--data") == 0) a.data = s.at("data").get<std::string>();
        if (s.contains("out") && app.count("--out") == 0) a.out = s.at("out").get<std::string>();
        if (s.contains("model")) {
            const json& m = s.at("model");
            auto mt = [&](const char* key, const char* flag, auto& field) {
                if (m.contains(key) && app.count(flag) == 0) field = m.at(key).get<std::decay_t<decltype(field)>>();
            };
            mt("input_size", "--input-size", a.input_size);
            mt("dense_size", "--dense-size", a.dense_size);
            mt("trunk_convs", "--trunk-convs", a.trunk_convs);
            mt("head_kernel", "--head-kernel", a.head_kernel);
            mt("awr_temperature", "--temperature", a.temperature);
            if (m.contains("channels") && app.count("--channels") == 0) {
                std::string joined;
                for (int c : m.at("channels").get<std::vector<int>>())
                    joined += (joined.empty() ? "" : ",") + std::to_string(c);
                a.channels = joined;
            }
        }
        if (s.contains("train")) {
            const json& t = s.at("train");
            auto tt = [&](const char* key, const char* flag, auto& field) {
                if (t.contains(key) && app.count(flag) == 0) field = t.at(key).get<std::decay_t<decltype(field)>>();
            };
            tt("epochs", "--epochs", a.epochs);
            tt("finetune_epochs", "--finetune-epochs", a.finetune_epochs);
            tt("batch_size", "--batch-size", a.batch_size);
            tt("learning_rate", "--lr", a.lr);
            tt("weight_decay", "--weight-decay", a.weight_decay);
            if (t.contains("augment") && app.count("--no-augment") == 0) a.no_augment = !t.at("augment").get<bool>();
        }
    } catch (const json::exception& e) {
        throw UsageError("--spec: " + std::string(e.what()));
    }
}

int cmd_train(TrainArgs a, const CLI::App& app) {
    if (!a.spec.empty()) apply_spec(a, app);
    if (a.data.empty() || a.out.empty()) throw UsageError("train needs --data and --out");
    if (a.mode != "dense" && a.mode != "both") throw UsageError("--mode must be dense or both");

    nn::ModelConfig mc;
    mc.input_size = a.input_size;
    mc.dense_size = a.dense_size;
    mc.channels = parse_channels(a.channels);
    mc.trunk_convs = a.trunk_convs;
    mc.head_kernel = a.head_kernel;
    mc.rep.tag = parse_rep_tag(a.rep);
    mc.rep.kernel_k = a.kernel;
    mc.awr_temperature = a.temperature;
    mc.validate();

    TrainConfig tc;
    tc.learning_rate = a.lr;
    tc.weight_decay = a.weight_decay;
    tc.batch_size = a.batch_size;
    tc.seed = a.seed;
    tc.augment = !a.no_augment;
    tc.threads = default_threads();
    const int finetune = a.finetune_epochs < 0 ? a.epochs : a.finetune_epochs;
    // Dense mode spends the same epoch budget on dense supervision alone.
    if (a.mode == "dense") {
        tc.stage = TrainStage::dense_pretrain;
        tc.epochs = a.epochs + finetune;
        tc.finetune_epochs = 0;
    } else {
        tc.stage = TrainStage::both;
        tc.epochs = a.epochs;
        tc.finetune_epochs = finetune;
    }
    tc.validate();

    const Dataset data = load_dataset(a.data);
    TrainResult res = train_two_stage(nn::build_model(mc, a.seed), data, tc);
    save_checkpoint(a.out, res.model, static_cast<int>(res.log.size()));
    const fs::path log = a.log.empty() ? fs::path(a.out).replace_extension(".log.csv") : fs::path(a.log);
    write_text(log, log_csv(res.log));
    for (const auto& e : res.log)
        std::printf("epoch %3d %-14s dense %.6f joint %.6f val %.3f mm\n", e.epoch,
                    std::string(to_string(e.stage)).c_str(), e.dense_loss, e.joint_loss, e.val_mean_error_mm);
    std::cout << "checkpoint " << a.out << ", log " << log.string() << "\n";
    return 0;
}

int cmd_eval(const EvalArgs& a) {
    const Decoder decoder = parse_decoder(a.mode);
    if (!fs::exists(a.ckpt)) throw IoError("checkpoint not found: " + a.ckpt);
    const Checkpoint ck = load_checkpoint(a.ckpt);
    const Dataset data = load_dataset(a.data);
    std::vector<int> frames(data.frames.size());
    std::vector<HandPose> gts;
    std::vector<std::vector<std::uint8_t>> vis;
    PoseTable table;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        frames[i] = static_cast<int>(i);
        gts.push_back(data.frames[i].pose);
        vis.push_back(data.frames[i].visible);
        table.frame_ids.push_back(data.frames[i].id);
    }
    const int threads = default_threads();
    int fallbacks = 0;
    table.poses = a.oracle_maps ? predict_oracle(ck.model.config(), data, frames, decoder, threads)
                                : predict(ck.model, data, frames, decoder, threads, &fallbacks);
    const EvalResult r = evaluate(table.poses, gts, vis);

    json doc = json::parse(eval_result_json(r));
    doc["decoder"] = std::string(to_string(decoder));
    doc["rep_type"] = std::string(to_string(ck.model.config().rep.tag));
    doc["oracle_maps"] = a.oracle_maps;
    doc["fallback_joints"] = fallbacks;
    const fs::path out(a.out);
    write_text(out, doc.dump(2) + "\n");
    write_text(fs::path(out).replace_extension(".curve.csv"), curve_csv(r.good_frame_curve));
    write_pose_csv(fs::path(out).replace_extension(".pred.csv"), table);
    std::printf("%s decode over %zu frames: all-joint mean %.3f mm\n", std::string(to_string(decoder)).c_str(),
                r.n_frames, r.all_joint_mean_mm);
    if (r.has_strata)
        std::printf("visible %.3f mm (%zu joints), occluded %.3f mm (%zu joints)\n", r.visible.all_joint_mean_mm,
                    r.visible.joint_count, r.occluded.all_joint_mean_mm, r.occluded.joint_count);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive weighting regression toolkit"};
    app.require_subcommand(1);

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "Render a synthetic depth dataset");
    synth->add_option("--frames", sa.frames, "Number of frames")->capture_default_str();
    synth->add_option("--seed", sa.seed, "Dataset seed")->capture_default_str();
    synth->add_option("--out", sa.out, "Output directory")->required();
    synth->add_option("--noise", sa.noise, "Depth noise sigma in mm")->capture_default_str();
    synth->add_option("--dropout", sa.dropout, "Per-pixel dropout probability")->capture_default_str();

    std::uint64_t gc_seed = 0;
    int gc_trials = 100;
    std::string gc_sabotage;
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
    gc->add_option("--seed", gc_seed, "Trial seed")->capture_default_str();
    gc->add_option("--trials", gc_trials, "Random trials per op")->capture_default_str();
    gc->add_option("--sabotage", gc_sabotage, "Negate one op's analytic gradient (self-test)")->group("");

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train a model (dense-only or dense + joint finetuning)");
    train->add_option("--spec", ta.spec, "JSON experiment spec; explicit flags take precedence");
    train->add_option("--rep", ta.rep, "P, H1, H2, O1, O2 or O3")->capture_default_str();
    train->add_option("--mode", ta.mode, "dense or both")->capture_default_str();
    train->add_option("--input-size", ta.input_size)->capture_default_str();
    train->add_option("--dense-size", ta.dense_size)->capture_default_str();
    train->add_option("--kernel", ta.kernel, "Kernel radius k in normalized units")->capture_default_str();
    train->add_option("--epochs", ta.epochs, "Dense pretraining epochs")->capture_default_str();
    train->add_option("--finetune-epochs", ta.finetune_epochs, "Joint finetuning epochs (default: --epochs)");
    train->add_option("--seed", ta.seed)->capture_default_str();
    train->add_option("--data", ta.data, "Training dataset directory");
    train->add_option("--out", ta.out, "Checkpoint path");
    train->add_option("--log", ta.log, "Metric log CSV (default: checkpoint path with .log.csv)");
    train->add_option("--channels", ta.channels, "Stage widths, comma separated")->capture_default_str();
    train->add_option("--trunk-convs", ta.trunk_convs)->capture_default_str();
    train->add_option("--head-kernel", ta.head_kernel)->capture_default_str();
    train->add_option("--batch-size", ta.batch_size)->capture_default_str();
    train->add_option("--lr", ta.lr)->capture_default_str();
    train->add_option("--weight-decay", ta.weight_decay)->capture_default_str();
    train->add_option("--temperature", ta.temperature, "AWR softmax temperature")->capture_default_str();
    train->add_flag("--no-augment", ta.no_augment, "Disable rotation/translation/scale augmentation");

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "Decode a dataset with a checkpoint and write metrics");
    ev->add_option("--ckpt", ea.ckpt)->required();
    ev->add_option("--data", ea.data)->required();
    ev->add_option("--mode", ea.mode, "awr or argmax")->capture_default_str();
    ev->add_option("--out", ea.out, "Report JSON path")->required();
    ev->add_flag("--oracle-maps", ea.oracle_maps, "Decode ground-truth encoded maps instead of network output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ErrorKind::usage);
    }

    try {
        if (*synth) return cmd_synth(sa);
        if (*gc) return cmd_gradcheck(gc_seed, gc_trials, gc_sabotage);
        if (*train) return cmd_train(ta, *train);
        if (*ev) return cmd_eval(ea);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::data);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::data);
    }
    return static_cast<int>(ErrorKind::usage);
}
