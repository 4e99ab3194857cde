#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "awrkit/geometry.hpp"
#include "awrkit/rep.hpp"
#include "awrkit/synth.hpp"

namespace awrkit {

inline constexpr int kManifestVersion = 1;

CameraIntrinsics read_intrinsics(const std::filesystem::path& path);
void write_intrinsics(const std::filesystem::path& path, const CameraIntrinsics& intr);

/// Little-endian float32 row-major blob plus a JSON sidecar {width, height, unit:"mm"}
/// written next to it with the extension replaced by ".json".
void write_depth(const std::filesystem::path& raw_path, const DepthImage& image);
DepthImage read_depth(const std::filesystem::path& raw_path);

/// Float32 blob with a JSON header {rep_type, J, C, H, W, kernel_k, heat_sigma} sidecar.
void write_dense_rep(const std::filesystem::path& raw_path, const DenseRep& rep);
DenseRep read_dense_rep(const std::filesystem::path& raw_path);

/// manifest.json + intrinsics.json + depth/frame_NNNNNN.{raw,json}.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);
/// Re-renders every frame from the seeds and scene recorded in the manifest.
Dataset regenerate_dataset(const std::filesystem::path& dir, int threads = 1);

/// CSV with header frame_id,joint_id,x_mm,y_mm,z_mm.
struct PoseTable {
    std::vector<int> frame_ids;
    std::vector<HandPose> poses;
};
void write_pose_csv(const std::filesystem::path& path, const PoseTable& table);
PoseTable read_pose_csv(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

} // namespace awrkit
