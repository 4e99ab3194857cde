#include "awrkit/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "awrkit/error.hpp"
#include "awrkit/io.hpp"
#include "awrkit/nn/ops.hpp"
#include "awrkit/parallel.hpp"
#include "awrkit/random.hpp"

namespace awrkit {

using nlohmann::json;

namespace {

constexpr std::uint64_t kAugTag = 0x617567;     // "aug"
constexpr std::uint64_t kShuffleTag = 0x73687566; // "shuf"
constexpr char kCheckpointMagic[4] = {'A', 'W', 'R', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr int kPredictBatch = 32;

nn::Tensor input_batch(const std::vector<const Sample*>& batch, int size) {
    nn::Tensor x({static_cast<int>(batch.size()), 1, size, size});
    const auto plane = static_cast<std::size_t>(size) * size;
    for (std::size_t n = 0; n < batch.size(); ++n)
        std::copy(batch[n]->crop.depth.begin(), batch[n]->crop.depth.end(), x.data() + n * plane);
    return x;
}

NormPose decode_sample(const DenseRep& rep, const DenseGrid& grid, const std::vector<double>& weights,
                       Decoder decoder, double temperature, std::atomic<int>* fallbacks = nullptr) {
    if (decoder == Decoder::argmax) {
        if (!fallbacks) return detection_decode(rep, grid);
        int n = 0;
        NormPose p = detection_decode(rep, grid, DetectionOptions{.mean_fallback = true}, &n);
        *fallbacks += n;
        return p;
    }
    AwrOptions opt;
    opt.temperature = temperature;
    return awr_decode(rep, grid, weights.empty() ? nullptr : &weights, opt);
}

double mean_error_mm(const std::vector<HandPose>& pred, const std::vector<Sample>& samples, const Dataset& data) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const HandPose& gt = data.frames[static_cast<std::size_t>(samples[i].frame_id)].pose;
        for (std::size_t j = 0; j < gt.joints.size(); ++j) {
            total += (pred[i].joints[j] - gt.joints[j]).norm();
            ++count;
        }
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

} // namespace

Sample make_sample(const Frame& frame, const nn::ModelConfig& cfg, const CameraIntrinsics& intr,
                   const AugmentParams* aug, bool encode_target) {
    Sample s;
    s.frame_id = frame.id;
    HandPose pose = frame.pose;
    if (aug && !aug->is_identity()) {
        auto [p, img] = augment(frame.pose, frame.depth, *aug, intr);
        s.crop = crop_hand(img, p.centroid(), kDefaultCubeSide, cfg.input_size, intr);
        pose = std::move(p);
    } else {
        s.crop = crop_hand(frame.depth, pose.centroid(), kDefaultCubeSide, cfg.input_size, intr);
    }
    s.grid = dense_grid(s.crop, cfg.dense_size);
    s.target = normalize_pose(pose, s.crop);
    if (encode_target) s.rep = encode(cfg.rep, s.target, s.grid);
    return s;
}

AugmentParams draw_augmentation(std::uint64_t seed, int epoch, int frame) {
    CounterRng rng(derive_key(derive_key(seed, kAugTag), static_cast<std::uint64_t>(epoch)),
                   static_cast<std::uint64_t>(frame) * 5);
    AugmentParams p;
    p.rotation_deg = rng.uniform(-180.0, 180.0);
    p.translation_mm = Vec3(rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0));
    p.scale = rng.uniform(0.9, 1.1);
    return p;
}

std::string_view to_string(TrainStage s) {
    switch (s) {
    case TrainStage::dense_pretrain: return "dense_pretrain";
    case TrainStage::joint_finetune: return "joint_finetune";
    case TrainStage::both: return "both";
    }
    return "?";
}

TrainStage parse_train_stage(std::string_view name) {
    if (name == "dense_pretrain") return TrainStage::dense_pretrain;
    if (name == "joint_finetune") return TrainStage::joint_finetune;
    if (name == "both") return TrainStage::both;
    throw UsageError("unknown training stage '" + std::string(name) + "'");
}

std::string_view to_string(Decoder d) { return d == Decoder::awr ? "awr" : "argmax"; }

Decoder parse_decoder(std::string_view name) {
    if (name == "awr") return Decoder::awr;
    if (name == "argmax") return Decoder::argmax;
    throw UsageError("unknown decoder '" + std::string(name) + "' (expected awr or argmax)");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw UsageError("train: learning rate must be positive");
    if (!(weight_decay >= 0.0)) throw UsageError("train: weight decay must be non-negative");
    if (batch_size < 1) throw UsageError("train: batch size must be positive");
    if (epochs < 0 || finetune_epochs < 0) throw UsageError("train: epoch counts must be non-negative");
    if (!(lambda_dense >= 0.0) || !(lambda_joint >= 0.0)) throw UsageError("train: loss weights must be non-negative");
    if (!(smooth_l1_delta > 0.0)) throw UsageError("train: smooth-L1 delta must be positive");
    if (plateau_patience < 1 || !(plateau_rel >= 0.0) || !(lr_decay > 0.0 && lr_decay <= 1.0))
        throw UsageError("train: invalid plateau schedule");
    if (val_every < 0 || val_every == 1) throw UsageError("train: val_every must be 0 or at least 2");
    if (threads < 1) throw UsageError("train: threads must be positive");
}

std::string log_csv(const std::vector<EpochLog>& log) {
    std::string out = "epoch,stage,dense_loss,joint_loss,val_mean_error_mm\n";
    char buf[256];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof buf, "%d,%s,%.9g,%.9g,%.9g\n", e.epoch, std::string(to_string(e.stage)).c_str(),
                      e.dense_loss, e.joint_loss, e.val_mean_error_mm);
        out += buf;
    }
    return out;
}

TrainSession::TrainSession(nn::Model model, const Dataset& data, TrainConfig cfg)
    : model_(std::move(model)), data_(&data), cfg_(cfg), lr_(cfg.learning_rate) {
    cfg_.validate();
    tune_allocator();
    if (data.frames.empty()) throw UsageError("train: dataset is empty");
    for (int i = 0; i < static_cast<int>(data.frames.size()); ++i) {
        if (cfg_.val_every > 0 && i % cfg_.val_every == cfg_.val_every - 1)
            val_.push_back(i);
        else
            train_.push_back(i);
    }
    if (train_.empty()) throw UsageError("train: no training frames after the validation split");
    val_samples_ = make_samples(data, val_, model_.config(), false, cfg_.threads);
}

void TrainSession::run(TrainStage stage, int epochs) {
    if (stage == TrainStage::both) throw UsageError("train: run() takes a single stage");
    best_val_ = std::numeric_limits<double>::infinity();
    since_best_ = 0;
    for (int e = 0; e < epochs; ++e) log_.push_back(run_epoch(stage));
}

void TrainSession::run_configured() {
    if (cfg_.stage != TrainStage::joint_finetune) run(TrainStage::dense_pretrain, cfg_.epochs);
    if (cfg_.stage != TrainStage::dense_pretrain) run(TrainStage::joint_finetune, cfg_.finetune_epochs);
}

EpochLog TrainSession::run_epoch(TrainStage stage) {
    const nn::ModelConfig& mcfg = model_.config();
    const Dataset& data = *data_;
    const int epoch = epoch_;
    const bool joint = stage == TrainStage::joint_finetune;

    // Seeded Fisher-Yates over the training indices.
    std::vector<int> order = train_;
    CounterRng shuffle(derive_key(derive_key(cfg_.seed, kShuffleTag), static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    const std::vector<nn::HeadSpec> specs = nn::head_layout(mcfg.rep.tag);
    nn::AdamConfig adam_cfg;
    adam_cfg.learning_rate = lr_;
    adam_cfg.weight_decay = cfg_.weight_decay;

    double dense_sum = 0.0, joint_sum = 0.0;
    std::size_t seen = 0;
    std::vector<Sample> batch;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg_.batch_size)) {
        const std::size_t count = std::min(order.size() - start, static_cast<std::size_t>(cfg_.batch_size));
        batch.assign(count, Sample{});
        parallel_for(static_cast<int>(count), cfg_.threads, [&](int b) {
            const int fi = order[start + static_cast<std::size_t>(b)];
            const Frame& f = data.frames[static_cast<std::size_t>(fi)];
            if (cfg_.augment) {
                const AugmentParams aug = draw_augmentation(cfg_.seed, epoch, fi);
                batch[static_cast<std::size_t>(b)] = make_sample(f, mcfg, data.scene.intrinsics, &aug, true);
            } else {
                batch[static_cast<std::size_t>(b)] = make_sample(f, mcfg, data.scene.intrinsics, nullptr, true);
            }
        });

        std::vector<const Sample*> ptrs;
        std::vector<const DenseRep*> reps;
        std::vector<const DenseGrid*> grid_ptrs;
        std::vector<DenseGrid> grids;
        for (const auto& s : batch) {
            ptrs.push_back(&s);
            reps.push_back(&s.rep);
            grid_ptrs.push_back(&s.grid);
            grids.push_back(s.grid);
        }

        nn::Tape tape(true);
        std::vector<nn::Var> params;
        double dense_value = 0.0, joint_value = 0.0;
        try {
            const auto out = model_.forward(tape, input_batch(ptrs, mcfg.input_size), params, true);
            const nn::HeadTargets targets = nn::head_targets(mcfg, reps, grid_ptrs);
            nn::Var total;
            bool have_total = false;
            auto accumulate = [&](nn::Var term) {
                total = have_total ? nn::add(total, term) : term;
                have_total = true;
            };
            for (std::size_t h = 0; h < specs.size(); ++h) {
                if (specs[h].weight_logits) continue;
                const nn::Var loss = specs[h].probability
                                         ? nn::l2_loss(out.heads[h], targets.targets[h], &targets.weights[h])
                                         : nn::smooth_l1(out.heads[h], targets.targets[h], cfg_.smooth_l1_delta,
                                                         &targets.weights[h]);
                dense_value += loss.value()[0];
                accumulate(nn::scale(loss, cfg_.lambda_dense));
            }
            if (joint) {
                const nn::Var pred = nn::awr_joints(model_, out, grids);
                nn::Tensor target({static_cast<int>(count), mcfg.joints, 3});
                for (std::size_t n = 0; n < count; ++n)
                    for (int j = 0; j < mcfg.joints; ++j)
                        for (int a = 0; a < 3; ++a)
                            target[(n * static_cast<std::size_t>(mcfg.joints) + static_cast<std::size_t>(j)) * 3 +
                                   static_cast<std::size_t>(a)] = batch[n].target[static_cast<std::size_t>(j)][a];
                const nn::Var loss = nn::smooth_l1(pred, target, cfg_.smooth_l1_delta);
                joint_value = loss.value()[0];
                accumulate(nn::scale(loss, cfg_.lambda_joint));
            }
            tape.backward(total);
        } catch (const NonFiniteError&) {
            throw TrainingDivergedError(epoch);
        }
        if (!std::isfinite(dense_value) || !std::isfinite(joint_value)) throw TrainingDivergedError(epoch);

        std::vector<nn::Tensor> values, grads;
        auto& ps = model_.parameters();
        values.reserve(ps.size());
        grads.reserve(ps.size());
        for (std::size_t i = 0; i < ps.size(); ++i) {
            values.push_back(std::move(ps[i].value));
            grads.push_back(params[i].grad());
        }
        nn::adam_step(values, grads, adam_, adam_cfg);
        for (std::size_t i = 0; i < ps.size(); ++i) {
            ps[i].value = std::move(values[i]);
            const auto& v = ps[i].value.storage();
            if (!std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }))
                throw TrainingDivergedError(epoch);
        }

        dense_sum += dense_value * static_cast<double>(count);
        joint_sum += joint_value * static_cast<double>(count);
        seen += count;
    }

    EpochLog rec;
    rec.epoch = epoch;
    rec.stage = stage;
    rec.dense_loss = dense_sum / static_cast<double>(seen);
    rec.joint_loss = joint ? joint_sum / static_cast<double>(seen) : 0.0;
    rec.learning_rate = lr_;
    if (!val_samples_.empty()) {
        const auto pred = predict(model_, val_samples_, joint ? Decoder::awr : Decoder::argmax, cfg_.threads);
        rec.val_mean_error_mm = mean_error_mm(pred, val_samples_, data);
        if (rec.val_mean_error_mm < best_val_ * (1.0 - cfg_.plateau_rel)) {
            best_val_ = rec.val_mean_error_mm;
            since_best_ = 0;
        } else if (++since_best_ >= cfg_.plateau_patience) {
            lr_ *= cfg_.lr_decay;
            since_best_ = 0;
        }
    }
    ++epoch_;
    return rec;
}

TrainResult train_two_stage(nn::Model model, const Dataset& data, const TrainConfig& cfg) {
    TrainSession session(std::move(model), data, cfg);
    session.run_configured();
    return {session.model(), session.log()};
}

std::vector<Sample> make_samples(const Dataset& data, const std::vector<int>& frames, const nn::ModelConfig& cfg,
                                 bool encode_target, int threads) {
    std::vector<Sample> out(frames.size());
    parallel_for(static_cast<int>(frames.size()), threads, [&](int i) {
        const int fi = frames[static_cast<std::size_t>(i)];
        if (fi < 0 || fi >= static_cast<int>(data.frames.size()))
            throw UsageError("frame index " + std::to_string(fi) + " out of range");
        out[static_cast<std::size_t>(i)] =
            make_sample(data.frames[static_cast<std::size_t>(fi)], cfg, data.scene.intrinsics, nullptr, encode_target);
        out[static_cast<std::size_t>(i)].frame_id = fi;
    });
    return out;
}

std::vector<HandPose> predict(const nn::Model& model, const std::vector<Sample>& samples, Decoder decoder,
                              int threads, int* fallback_joints) {
    const nn::ModelConfig& cfg = model.config();
    std::atomic<int> fallbacks{0};
    std::vector<HandPose> out(samples.size());
    for (std::size_t start = 0; start < samples.size(); start += kPredictBatch) {
        const std::size_t count = std::min(samples.size() - start, static_cast<std::size_t>(kPredictBatch));
        std::vector<const Sample*> ptrs;
        for (std::size_t i = 0; i < count; ++i) ptrs.push_back(&samples[start + i]);
        nn::Tape tape(false);
        std::vector<nn::Var> params;
        const auto heads = model.forward(tape, input_batch(ptrs, cfg.input_size), params, false);
        parallel_for(static_cast<int>(count), threads, [&](int n) {
            const Sample& s = *ptrs[static_cast<std::size_t>(n)];
            const DenseRep rep = model.dense_rep(heads, n);
            const std::vector<double> wl = model.weight_logits(heads, n);
            const NormPose p = decode_sample(rep, s.grid, wl, decoder, cfg.awr_temperature, &fallbacks);
            out[start + static_cast<std::size_t>(n)] = denormalize_pose(p, s.crop);
        });
    }
    if (fallback_joints) *fallback_joints += fallbacks.load();
    return out;
}

std::vector<HandPose> predict(const nn::Model& model, const Dataset& data, const std::vector<int>& frames,
                              Decoder decoder, int threads, int* fallback_joints) {
    return predict(model, make_samples(data, frames, model.config(), false, threads), decoder, threads,
                   fallback_joints);
}

std::vector<HandPose> predict_oracle(const nn::ModelConfig& cfg, const Dataset& data, const std::vector<int>& frames,
                                     Decoder decoder, int threads) {
    const std::vector<Sample> samples = make_samples(data, frames, cfg, true, threads);
    std::vector<HandPose> out(samples.size());
    parallel_for(static_cast<int>(samples.size()), threads, [&](int i) {
        const Sample& s = samples[static_cast<std::size_t>(i)];
        const NormPose p = decode_sample(s.rep, s.grid, {}, decoder, cfg.awr_temperature);
        out[static_cast<std::size_t>(i)] = denormalize_pose(p, s.crop);
    });
    return out;
}

std::string model_config_json(const nn::ModelConfig& cfg) {
    json j;
    j["input_size"] = cfg.input_size;
    j["dense_size"] = cfg.dense_size;
    j["channels"] = cfg.channels;
    j["trunk_convs"] = cfg.trunk_convs;
    j["head_kernel"] = cfg.head_kernel;
    j["joints"] = cfg.joints;
    j["rep_type"] = std::string(to_string(cfg.rep.tag));
    j["kernel_k"] = cfg.rep.kernel_k;
    j["heat_sigma"] = cfg.rep.heat_sigma;
    j["awr_temperature"] = cfg.awr_temperature;
    return j.dump();
}

nn::ModelConfig model_config_from_json(const std::string& text) {
    nn::ModelConfig cfg;
    try {
        const json j = json::parse(text);
        cfg.input_size = j.at("input_size").get<int>();
        cfg.dense_size = j.at("dense_size").get<int>();
        cfg.channels = j.at("channels").get<std::vector<int>>();
        cfg.trunk_convs = j.at("trunk_convs").get<int>();
        cfg.head_kernel = j.at("head_kernel").get<int>();
        cfg.joints = j.at("joints").get<int>();
        cfg.rep.tag = parse_rep_tag(j.at("rep_type").get<std::string>());
        cfg.rep.kernel_k = j.at("kernel_k").get<double>();
        cfg.rep.heat_sigma = j.at("heat_sigma").get<double>();
        cfg.awr_temperature = j.at("awr_temperature").get<double>();
    } catch (const json::exception& e) {
        throw IoError(std::string("bad model config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

void save_checkpoint(const std::filesystem::path& path, const nn::Model& model, int epoch) {
    json header;
    header["config"] = json::parse(model_config_json(model.config()));
    header["epoch"] = epoch;
    header["seed"] = model.seed();
    json names = json::array();
    for (const auto& p : model.parameters()) names.push_back({{"name", p.name}, {"shape", p.value.shape()}});
    header["parameters"] = names;
    const std::string text = header.dump();

    std::string blob(kCheckpointMagic, 4);
    auto put = [&blob](const void* src, std::size_t n) { blob.append(static_cast<const char*>(src), n); };
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t len = text.size();
    put(&version, sizeof version);
    put(&len, sizeof len);
    blob += text;
    for (const auto& p : model.parameters())
        for (double v : p.value.values()) {
            const float f = static_cast<float>(v);
            put(&f, sizeof f);
        }
    write_text(path, blob);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string blob = read_text(path);
    std::size_t pos = 0;
    auto take = [&](void* dst, std::size_t n) {
        if (pos + n > blob.size()) throw IoError(path.string() + ": truncated checkpoint");
        std::memcpy(dst, blob.data() + pos, n);
        pos += n;
    };
    char magic[4];
    take(magic, 4);
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw IoError(path.string() + ": not a checkpoint");
    std::uint32_t version = 0;
    std::uint64_t len = 0;
    take(&version, sizeof version);
    if (version != kCheckpointVersion) throw IoError(path.string() + ": unsupported checkpoint version");
    take(&len, sizeof len);
    if (pos + len > blob.size()) throw IoError(path.string() + ": truncated checkpoint header");
    json header;
    try {
        header = json::parse(blob.substr(pos, len));
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": bad checkpoint header: " + e.what());
    }
    pos += len;
    Checkpoint ck;
    try {
        ck.model = nn::Model(model_config_from_json(header.at("config").dump()), header.at("seed").get<std::uint64_t>());
        ck.epoch = header.at("epoch").get<int>();
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": bad checkpoint header: " + e.what());
    }
    for (auto& p : ck.model.parameters())
        for (double& v : p.value.values()) {
            float f = 0.0f;
            take(&f, sizeof f);
            v = f;
        }
    if (pos != blob.size()) throw IoError(path.string() + ": trailing bytes after parameters");
    return ck;
}

} // namespace awrkit
