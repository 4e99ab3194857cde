#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "awrkit/geometry.hpp"

namespace awrkit {

inline constexpr int kHandJoints = 14;

/// Sampling ranges for one synthetic hand. Angles in degrees, lengths in mm.
/// Setting every range to zero width yields the rest pose.
struct PoseSpace {
    struct Range {
        double lo = 0.0;
        double hi = 0.0;
    };
    Range finger_abduction{-15.0, 15.0};
    Range finger_mcp_flex{-10.0, 75.0};
    Range finger_pip_flex{0.0, 90.0};
    Range thumb_abduction{0.0, 40.0};
    Range thumb_mcp_flex{0.0, 45.0};
    Range thumb_ip_flex{0.0, 60.0};
    Range yaw{-45.0, 45.0};
    Range pitch{-30.0, 30.0};
    Range roll{-50.0, 50.0};
    Range root_x{-20.0, 20.0};
    Range root_y{-20.0, 20.0};
    Range root_z{380.0, 460.0};
    Range bone_scale{0.9, 1.1};
    Range radius_scale{0.9, 1.1};

    static PoseSpace rest();
};

/// Articulated capsule hand: 18 skeleton nodes (14 reported joints plus four
/// hidden finger knuckles) and the capsules that give it volume.
struct KinematicHand {
    static constexpr int kNodes = 18;

    struct Capsule {
        int a = 0;
        int b = 0;
        double radius = 0.0;
    };

    std::array<Vec3, kNodes> nodes{};
    std::array<int, kNodes> parent{};
    std::array<double, kNodes> bone_length{}; // distance to parent; 0 for the root
    std::vector<Capsule> capsules;
    std::vector<double> angles; // sampled articulation values, for distinctness checks

    /// Node index of each reported joint, in output order.
    static const std::array<int, kHandJoints>& joint_nodes();
    HandPose pose() const;
    /// Capsules touching the node behind joint `j`.
    std::vector<int> capsules_of_joint(int j) const;
};

/// Deterministic pose draw from the counter-based generator keyed by `seed`.
KinematicHand sample_pose(std::uint64_t seed, const PoseSpace& space);

struct SceneParams {
    CameraIntrinsics intrinsics{150.0, 150.0, 64.0, 64.0, 128, 128};
    double noise_sigma_mm = 2.0;
    double dropout = 0.05;
    PoseSpace pose_space;

    void validate() const;
};

struct RenderResult {
    DepthImage depth;         // with noise and dropout
    DepthImage clean;         // noise-free z-buffer
    std::vector<int> owner;   // capsule index per pixel of `clean`, -1 for background
};

/// Z-buffer rasterization of the hand capsules (one ray per pixel center),
/// then additive Gaussian noise and per-pixel dropout. Throws RenderError
/// when no capsule lies in front of the camera.
RenderResult render_depth(const KinematicHand& hand, const SceneParams& scene, std::uint64_t seed);

/// A joint is visible when one of its capsules owns the z-buffer at its projected pixel.
std::vector<std::uint8_t> joint_visibility(const KinematicHand& hand, const RenderResult& render,
                                           const CameraIntrinsics& intr);

/// One rendered frame of a dataset.
struct Frame {
    int id = 0;
    std::uint64_t seed = 0;
    DepthImage depth;
    HandPose pose;
    std::vector<std::uint8_t> visible;
};

struct Dataset {
    SceneParams scene;
    std::uint64_t seed = 0;
    std::vector<Frame> frames;
};

/// Renders frame `index` of the dataset keyed by `seed`.
Frame synth_frame(std::uint64_t seed, int index, const SceneParams& scene);
Dataset synth_dataset(int n_frames, std::uint64_t seed, const SceneParams& scene, int threads = 1);

/// Generates and writes a dataset (manifest.json, intrinsics.json, depth/*.raw + sidecars).
Dataset make_dataset(int n_frames, std::uint64_t seed, const SceneParams& scene, const std::filesystem::path& out_dir,
                     int threads = 1);

} // namespace awrkit
