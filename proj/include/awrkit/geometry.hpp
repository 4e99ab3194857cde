#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace awrkit {

using Vec3 = Eigen::Vector3d;

/// Pinhole camera parameters. Pixel (u, v) has its center at integer coordinates.
struct CameraIntrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    /// Throws UsageError when fx/fy are non-positive or the principal point is off-image.
    void validate() const;
};

/// Row-major depth image in millimeters; 0 marks missing depth.
struct DepthImage {
    int width = 0;
    int height = 0;
    std::vector<float> mm;

    DepthImage() = default;
    DepthImage(int w, int h) : width(w), height(h), mm(static_cast<std::size_t>(w) * h, 0.0f) {}

    float& at(int u, int v) { return mm[static_cast<std::size_t>(v) * width + u]; }
    float at(int u, int v) const { return mm[static_cast<std::size_t>(v) * width + u]; }
    bool contains(int u, int v) const { return u >= 0 && v >= 0 && u < width && v < height; }
};

/// Joint positions in world millimeters (camera frame).
struct HandPose {
    std::vector<Vec3> joints;

    int size() const { return static_cast<int>(joints.size()); }
    Vec3 centroid() const;
};

/// Normalized joint coordinates (u_hat, v_hat, z_hat) in crop space.
using NormPose = std::vector<Vec3>;

/// Affine map between crop pixels and original image pixels. A normalized
/// crop coordinate a_hat in [-1, 1] corresponds to original pixel
/// u = center_u + a_hat * half_u (same for v).
struct CropTransform {
    double center_u = 0.0;
    double center_v = 0.0;
    double half_u = 1.0;
    double half_v = 1.0;
    int size = 0;

    // Normalized coordinate of a crop pixel center for a grid of `grid` cells.
    static double cell_center(int index, int grid) { return (index + 0.5) * 2.0 / grid - 1.0; }

    double to_image_u(double u_hat) const { return center_u + u_hat * half_u; }
    double to_image_v(double v_hat) const { return center_v + v_hat * half_v; }
    double to_norm_u(double u) const { return (u - center_u) / half_u; }
    double to_norm_v(double v) const { return (v - center_v) / half_v; }
};

inline constexpr double kBackgroundDepth = 1.0;
inline constexpr double kDefaultCubeSide = 250.0;

/// Square hand crop with depth normalized to [-1, 1] around the hand center.
/// Unmasked pixels hold kBackgroundDepth exactly.
struct CropFrame {
    int size = 0;
    std::vector<double> depth;
    std::vector<std::uint8_t> mask;
    Vec3 center = Vec3::Zero();
    double cube_side = kDefaultCubeSide;
    CropTransform transform;
    CameraIntrinsics intrinsics;

    double depth_at(int col, int row) const { return depth[static_cast<std::size_t>(row) * size + col]; }
    bool masked(int col, int row) const { return mask[static_cast<std::size_t>(row) * size + col] != 0; }
    int masked_count() const;

    /// The crop viewed as a standalone depth image in millimeters, together with
    /// the intrinsics of the virtual camera that sees exactly the crop window.
    std::pair<DepthImage, CameraIntrinsics> as_image() const;

    /// Throws ShapeError when the mask/depth invariants do not hold.
    void validate() const;
};

struct AugmentParams {
    double rotation_deg = 0.0;
    Vec3 translation_mm = Vec3::Zero();
    double scale = 1.0;

    void validate() const;
    bool is_identity() const;
};

/// Pixel + depth to camera-frame millimeters. Throws InvalidDepthError for d <= 0.
Vec3 backproject(double u, double v, double depth_mm, const CameraIntrinsics& intr);

/// Camera-frame millimeters to (u, v, depth). Throws InvalidDepthError for z <= 0.
Vec3 project(const Vec3& point, const CameraIntrinsics& intr);

/// Resamples the axis-aligned metric cube around `center` into an out_size x out_size
/// crop using nearest-neighbor lookup. Throws EmptyCropError when no pixel survives.
CropFrame crop_hand(const DepthImage& image, const Vec3& center, double cube_side, int out_size,
                    const CameraIntrinsics& intr);

NormPose normalize_pose(const HandPose& pose, const CropFrame& crop);
HandPose denormalize_pose(const NormPose& norm, const CropFrame& crop);

/// Applies rotation about the camera z-axis through the pose centroid, scaling
/// about the centroid, then translation, identically to joints and depth pixels.
std::pair<HandPose, DepthImage> augment(const HandPose& pose, const DepthImage& image,
                                        const AugmentParams& params, const CameraIntrinsics& intr);

/// The joint-only half of augment().
HandPose augment_pose(const HandPose& pose, const AugmentParams& params);

} // namespace awrkit
