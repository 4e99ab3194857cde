#include "awrkit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Geometry>

#include "awrkit/error.hpp"

namespace awrkit {

namespace {

int nearest_index(double x) { return static_cast<int>(std::floor(x + 0.5)); }

void require_focal(const CameraIntrinsics& intr) {
    if (!(intr.fx > 0.0) || !(intr.fy > 0.0)) throw UsageError("intrinsics: focal lengths must be positive");
}

Eigen::Matrix3d rotation_z(double deg) {
    return Eigen::AngleAxisd(deg * std::numbers::pi / 180.0, Vec3::UnitZ()).toRotationMatrix();
}

} // namespace

void CameraIntrinsics::validate() const {
    require_focal(*this);
    if (width <= 0 || height <= 0) throw UsageError("intrinsics: image size must be positive");
    if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
        throw UsageError("intrinsics: principal point outside the image");
}

Vec3 HandPose::centroid() const {
    Vec3 c = Vec3::Zero();
    if (joints.empty()) return c;
    for (const auto& j : joints) c += j;
    return c / static_cast<double>(joints.size());
}

int CropFrame::masked_count() const {
    return static_cast<int>(std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }));
}

void CropFrame::validate() const {
    const auto n = static_cast<std::size_t>(size) * size;
    if (size <= 0 || depth.size() != n || mask.size() != n) throw ShapeError("crop: grid size mismatch");
    if (!(cube_side > 0.0)) throw ShapeError("crop: cube side must be positive");
    for (std::size_t i = 0; i < n; ++i) {
        if (mask[i]) {
            if (!(std::abs(depth[i]) < 1.0)) throw ShapeError("crop: masked depth outside (-1, 1)");
        } else if (depth[i] != kBackgroundDepth) {
            throw ShapeError("crop: background pixel without sentinel depth");
        }
    }
}

std::pair<DepthImage, CameraIntrinsics> CropFrame::as_image() const {
    const double half_cube = cube_side / 2.0;
    DepthImage img(size, size);
    for (std::size_t i = 0; i < depth.size(); ++i)
        img.mm[i] = mask[i] ? static_cast<float>(center.z() + depth[i] * half_cube) : 0.0f;

    CameraIntrinsics virt;
    virt.fx = intrinsics.fx * size / (2.0 * transform.half_u);
    virt.fy = intrinsics.fy * size / (2.0 * transform.half_v);
    virt.cx = (intrinsics.cx - transform.center_u + transform.half_u) * size / (2.0 * transform.half_u) - 0.5;
    virt.cy = (intrinsics.cy - transform.center_v + transform.half_v) * size / (2.0 * transform.half_v) - 0.5;
    virt.width = size;
    virt.height = size;
    return {std::move(img), virt};
}

void AugmentParams::validate() const {
    if (rotation_deg < -180.0 || rotation_deg > 180.0) throw UsageError("augment: rotation outside [-180, 180]");
    for (int a = 0; a < 3; ++a)
        if (translation_mm[a] < -10.0 || translation_mm[a] > 10.0)
            throw UsageError("augment: translation outside [-10, 10] mm");
    if (scale < 0.9 || scale > 1.1) throw UsageError("augment: scale outside [0.9, 1.1]");
}

bool AugmentParams::is_identity() const {
    return rotation_deg == 0.0 && translation_mm.isZero(0.0) && scale == 1.0;
}

Vec3 backproject(double u, double v, double depth_mm, const CameraIntrinsics& intr) {
    if (!(depth_mm > 0.0)) throw InvalidDepthError("backproject: depth must be positive");
    return {(u - intr.cx) * depth_mm / intr.fx, (v - intr.cy) * depth_mm / intr.fy, depth_mm};
}

Vec3 project(const Vec3& p, const CameraIntrinsics& intr) {
    if (!(p.z() > 0.0)) throw InvalidDepthError("project: point must be in front of the camera");
    return {intr.fx * p.x() / p.z() + intr.cx, intr.fy * p.y() / p.z() + intr.cy, p.z()};
}

CropFrame crop_hand(const DepthImage& image, const Vec3& center, double cube_side, int out_size,
                    const CameraIntrinsics& intr) {
    require_focal(intr);
    if (out_size < 8) throw UsageError("crop_hand: out_size must be at least 8");
    if (!(cube_side > 0.0)) throw UsageError("crop_hand: cube side must be positive");
    if (!(center.z() > 0.0)) throw InvalidDepthError("crop_hand: hand center must be in front of the camera");
    if (image.mm.size() != static_cast<std::size_t>(image.width) * image.height)
        throw ShapeError("crop_hand: depth buffer does not match its size");

    const double half_cube = cube_side / 2.0;
    const Vec3 c_img = project(center, intr);

    CropFrame crop;
    crop.size = out_size;
    crop.center = center;
    crop.cube_side = cube_side;
    crop.intrinsics = intr;
    crop.transform = {c_img.x(), c_img.y(), half_cube * intr.fx / center.z(), half_cube * intr.fy / center.z(),
                      out_size};
    const auto n = static_cast<std::size_t>(out_size) * out_size;
    crop.depth.assign(n, kBackgroundDepth);
    crop.mask.assign(n, 0);

    bool any = false;
    for (int row = 0; row < out_size; ++row) {
        const int vi = nearest_index(crop.transform.to_image_v(CropTransform::cell_center(row, out_size)));
        for (int col = 0; col < out_size; ++col) {
            const int ui = nearest_index(crop.transform.to_image_u(CropTransform::cell_center(col, out_size)));
            if (!image.contains(ui, vi)) continue;
            const double z = image.at(ui, vi);
            if (!(z > 0.0)) continue;
            const Vec3 p = backproject(ui, vi, z, intr);
            if (std::abs(p.x() - center.x()) > half_cube || std::abs(p.y() - center.y()) > half_cube ||
                !(std::abs(z - center.z()) < half_cube))
                continue;
            const double dn = (z - center.z()) / half_cube;
            const auto idx = static_cast<std::size_t>(row) * out_size + col;
            crop.depth[idx] = dn;
            crop.mask[idx] = 1;
            any = true;
        }
    }
    if (!any) throw EmptyCropError("crop_hand: no hand pixel inside the cube");
    return crop;
}

NormPose normalize_pose(const HandPose& pose, const CropFrame& crop) {
    const double half_cube = crop.cube_side / 2.0;
    NormPose out;
    out.reserve(pose.joints.size());
    for (const auto& j : pose.joints) {
        const Vec3 uvd = project(j, crop.intrinsics);
        out.emplace_back(crop.transform.to_norm_u(uvd.x()), crop.transform.to_norm_v(uvd.y()),
                         (j.z() - crop.center.z()) / half_cube);
    }
    return out;
}

HandPose denormalize_pose(const NormPose& norm, const CropFrame& crop) {
    const double half_cube = crop.cube_side / 2.0;
    HandPose pose;
    pose.joints.reserve(norm.size());
    for (const auto& n : norm) {
        const double z = crop.center.z() + n.z() * half_cube;
        pose.joints.push_back(
            backproject(crop.transform.to_image_u(n.x()), crop.transform.to_image_v(n.y()), z, crop.intrinsics));
    }
    return pose;
}

HandPose augment_pose(const HandPose& pose, const AugmentParams& params) {
    const Vec3 c = pose.centroid();
    const Eigen::Matrix3d rot = rotation_z(params.rotation_deg);
    HandPose out;
    out.joints.reserve(pose.joints.size());
    for (const auto& j : pose.joints) out.joints.push_back(c + params.scale * (rot * (j - c)) + params.translation_mm);
    return out;
}

std::pair<HandPose, DepthImage> augment(const HandPose& pose, const DepthImage& image, const AugmentParams& params,
                                        const CameraIntrinsics& intr) {
    params.validate();
    require_focal(intr);
    if (params.is_identity()) return {pose, image};

    const Vec3 c = pose.centroid();
    const Eigen::Matrix3d rot_inv = rotation_z(-params.rotation_deg);
    const Vec3& t = params.translation_mm;
    const double s = params.scale;

    // Inverse warp. The transform leaves depth affine in the source depth
    // (z' = c_z + t_z + s (z - c_z)), so the output depth at a pixel is found by
    // a short fixed-point iteration: guess z', map back to the source pixel,
    // read its depth, update z'.
    // Only pixels near the forward image of the valid source pixels can be hit.
    const Eigen::Matrix3d rot = rotation_z(params.rotation_deg);
    int u_lo = image.width, u_hi = -1, v_lo = image.height, v_hi = -1;
    for (int v = 0; v < image.height; ++v)
        for (int u = 0; u < image.width; ++u) {
            const float z = image.at(u, v);
            if (!(z > 0.0f)) continue;
            const Vec3 q = c + s * (rot * (backproject(u, v, z, intr) - c)) + t;
            if (!(q.z() > 0.0)) continue;
            const Vec3 uv = project(q, intr);
            u_lo = std::min(u_lo, static_cast<int>(std::floor(uv.x())) - 2);
            u_hi = std::max(u_hi, static_cast<int>(std::ceil(uv.x())) + 2);
            v_lo = std::min(v_lo, static_cast<int>(std::floor(uv.y())) - 2);
            v_hi = std::max(v_hi, static_cast<int>(std::ceil(uv.y())) + 2);
        }
    u_lo = std::max(u_lo, 0);
    v_lo = std::max(v_lo, 0);
    u_hi = std::min(u_hi, image.width - 1);
    v_hi = std::min(v_hi, image.height - 1);

    DepthImage out(image.width, image.height);
    for (int v = v_lo; v <= v_hi; ++v) {
        for (int u = u_lo; u <= u_hi; ++u) {
            double z_out = c.z() + t.z();
            float found = 0.0f;
            for (int iter = 0; iter < 4; ++iter) {
                if (!(z_out > 0.0)) break;
                const Vec3 p_out = backproject(u, v, z_out, intr);
                const Vec3 p_src = c + rot_inv * (p_out - c - t) / s;
                if (!(p_src.z() > 0.0)) break;
                const Vec3 uv_src = project(p_src, intr);
                const int us = nearest_index(uv_src.x());
                const int vs = nearest_index(uv_src.y());
                if (!image.contains(us, vs)) {
                    found = 0.0f;
                    break;
                }
                const float z_src = image.at(us, vs);
                if (!(z_src > 0.0f)) {
                    found = 0.0f;
                    break;
                }
                found = z_src;
                z_out = c.z() + t.z() + s * (static_cast<double>(z_src) - c.z());
            }
            out.at(u, v) = found > 0.0f ? static_cast<float>(z_out) : 0.0f;
        }
    }
    return {augment_pose(pose, params), std::move(out)};
}

} // namespace awrkit
