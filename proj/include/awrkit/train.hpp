#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "awrkit/awr.hpp"
#include "awrkit/nn/adam.hpp"
#include "awrkit/nn/model.hpp"
#include "awrkit/synth.hpp"

namespace awrkit {

/// A frame prepared for the network: crop at the ground-truth centroid,
/// dense grid, normalized target and (optionally) its encoded dense maps.
struct Sample {
    int frame_id = 0;
    CropFrame crop;
    DenseGrid grid;
    NormPose target;
    DenseRep rep;
};

Sample make_sample(const Frame& frame, const nn::ModelConfig& cfg, const CameraIntrinsics& intr,
                   const AugmentParams* aug = nullptr, bool encode_target = true);

/// Uniform draw from the augmentation ranges (rotation +-180 deg,
/// translation +-10 mm, scale 0.9..1.1), keyed by (seed, epoch, frame).
AugmentParams draw_augmentation(std::uint64_t seed, int epoch, int frame);

enum class TrainStage { dense_pretrain, joint_finetune, both };
std::string_view to_string(TrainStage s);
TrainStage parse_train_stage(std::string_view name);

struct TrainConfig {
    TrainStage stage = TrainStage::both;
    double learning_rate = 1e-3;
    double weight_decay = 5e-4;
    int batch_size = 32;
    int epochs = 10;          // dense pretraining epochs
    int finetune_epochs = 10; // joint finetuning epochs
    std::uint64_t seed = 0;
    double lambda_dense = 1.0;
    double lambda_joint = 1.0;
    double smooth_l1_delta = 1.0;
    bool augment = true;
    // Plateau rule: scale the rate by lr_decay when validation error fails to
    // improve by plateau_rel within plateau_patience epochs.
    int plateau_patience = 5;
    double plateau_rel = 0.01;
    double lr_decay = 0.5;
    // Every frame whose index % val_every == val_every - 1 is held out; 0 disables.
    int val_every = 10;
    int threads = 1;

    void validate() const;
};

struct EpochLog {
    int epoch = 0;
    TrainStage stage = TrainStage::dense_pretrain;
    double dense_loss = 0.0;
    double joint_loss = 0.0;
    double val_mean_error_mm = std::numeric_limits<double>::quiet_NaN();
    double learning_rate = 0.0;
};

std::string log_csv(const std::vector<EpochLog>& log);

/// Copyable training state: model, optimizer moments, schedule and log.
/// Copying after the dense stage forks a run into two continuations.
class TrainSession {
public:
    TrainSession(nn::Model model, const Dataset& data, TrainConfig cfg);

    /// Runs `epochs` epochs of one stage (dense_pretrain or joint_finetune).
    /// Throws TrainingDivergedError on a non-finite loss.
    void run(TrainStage stage, int epochs);
    /// Runs the stages selected by config().stage.
    void run_configured();

    const nn::Model& model() const noexcept { return model_; }
    nn::Model& model() noexcept { return model_; }
    const std::vector<EpochLog>& log() const noexcept { return log_; }
    const TrainConfig& config() const noexcept { return cfg_; }
    int epochs_done() const noexcept { return epoch_; }
    const std::vector<int>& train_indices() const noexcept { return train_; }
    const std::vector<int>& val_indices() const noexcept { return val_; }

private:
    EpochLog run_epoch(TrainStage stage);

    nn::Model model_;
    const Dataset* data_;
    TrainConfig cfg_;
    nn::AdamState adam_;
    double lr_;
    int epoch_ = 0;
    std::vector<int> train_;
    std::vector<int> val_;
    std::vector<Sample> val_samples_;
    double best_val_ = std::numeric_limits<double>::infinity();
    int since_best_ = 0;
    std::vector<EpochLog> log_;
};

struct TrainResult {
    nn::Model model;
    std::vector<EpochLog> log;
};

TrainResult train_two_stage(nn::Model model, const Dataset& data, const TrainConfig& cfg);

enum class Decoder { awr, argmax };
std::string_view to_string(Decoder d);
Decoder parse_decoder(std::string_view name);

/// Network predictions for the given frames, denormalized to millimeters.
/// `awr` uses the softmax aggregation; `argmax` the detection-style decode.
/// Network maps can leave an offset joint with no S > 0 pixel; `argmax` then
/// falls back to the hand-pixel mean and counts the joint in `*fallback_joints`.
std::vector<HandPose> predict(const nn::Model& model, const Dataset& data, const std::vector<int>& frames,
                              Decoder decoder, int threads = 1, int* fallback_joints = nullptr);
std::vector<HandPose> predict(const nn::Model& model, const std::vector<Sample>& samples, Decoder decoder,
                              int threads = 1, int* fallback_joints = nullptr);

/// Decodes ground-truth encoded maps instead of network output.
std::vector<HandPose> predict_oracle(const nn::ModelConfig& cfg, const Dataset& data, const std::vector<int>& frames,
                                     Decoder decoder, int threads = 1);

std::vector<Sample> make_samples(const Dataset& data, const std::vector<int>& frames, const nn::ModelConfig& cfg,
                                 bool encode_target, int threads = 1);

/// Checkpoint: "AWRK" magic, u32 version, u64 header length, JSON header
/// (config, epoch, seed), then float32 parameters in declaration order.
void save_checkpoint(const std::filesystem::path& path, const nn::Model& model, int epoch);
struct Checkpoint {
    nn::Model model;
    int epoch = 0;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string model_config_json(const nn::ModelConfig& cfg);
nn::ModelConfig model_config_from_json(const std::string& text);

} // namespace awrkit
