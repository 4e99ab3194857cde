#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "awrkit/geometry.hpp"

namespace awrkit {

/// The six dense representation families.
///   P  - per-joint pose maps (x, y, z broadcast over the hand)
///   H1 - probability heatmap + absolute joint depth
///   H2 - probability heatmap + depth offset to the joint
///   O1 - 2D unit vectors + 2D closeness + absolute joint depth
///   O2 - 2D unit vectors + 2D closeness + depth offset
///   O3 - 3D unit vectors + 3D closeness
enum class RepTag { P, H1, H2, O1, O2, O3 };

std::string_view to_string(RepTag tag);
/// Throws UsageError on an unknown name.
RepTag parse_rep_tag(std::string_view name);

struct RepType {
    RepTag tag = RepTag::O3;
    double kernel_k = 1.0;   // normalized crop units
    double heat_sigma = 0.1; // normalized crop units

    void validate() const;
    int channels() const;
    bool is_offset() const { return tag == RepTag::O1 || tag == RepTag::O2 || tag == RepTag::O3; }
    bool is_heatmap() const { return tag == RepTag::H1 || tag == RepTag::H2; }
};

// Channel indices within one joint's block of a DenseRep.
namespace chan {
inline constexpr int pose_x = 0, pose_y = 1, pose_z = 2;                  // P
inline constexpr int prob = 0, heat_depth = 1;                            // H1, H2
inline constexpr int unit2_x = 0, unit2_y = 1, close2 = 2, plane_depth = 3; // O1, O2
inline constexpr int unit3_x = 0, unit3_y = 1, unit3_z = 2, close3 = 3;   // O3
} // namespace chan

/// Geometry of the dense grid: the pixel points p_i = (u_hat, v_hat, z_hat)
/// and the hand indicator at dense resolution.
struct DenseGrid {
    int size = 0;
    std::vector<Vec3> points;
    std::vector<std::uint8_t> mask;

    int pixels() const { return size * size; }
    double pitch() const { return 2.0 / size; }
};

/// Downsamples a crop to the dense resolution. Each dense cell covers an
/// s x s block of crop pixels (s = crop.size / dense_size); it is masked when
/// any block pixel is, and takes the nearest (minimum) masked depth.
/// Throws ShapeError when dense_size does not divide the crop size.
DenseGrid dense_grid(const CropFrame& crop, int dense_size);

/// Tagged J x C x H x W grid.
struct DenseRep {
    RepType rep_type;
    int joints = 0;
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> grid;

    DenseRep() = default;
    DenseRep(const RepType& type, int j, int size);

    std::size_t index(int j, int c, int row, int col) const {
        return ((static_cast<std::size_t>(j) * channels + c) * height + row) * width + col;
    }
    std::size_t index(int j, int c, int pixel) const {
        return (static_cast<std::size_t>(j) * channels + c) * height * width + pixel;
    }
    double& at(int j, int c, int pixel) { return grid[index(j, c, pixel)]; }
    double at(int j, int c, int pixel) const { return grid[index(j, c, pixel)]; }
    int pixels() const { return height * width; }

    /// Throws ShapeError when the buffer or channel count disagrees with rep_type.
    void check_shape() const;
};

/// Kernel-limited offsets phi(p_i, p_j) = 1_hand (p_i - p_j) within distance k,
/// laid out J x dims x H x W. dims = 2 uses (u_hat, v_hat) only.
std::vector<double> offset_field(const NormPose& pose, const DenseGrid& grid, double k, int dims);

struct ClosenessUnit {
    int dims = 3;
    std::vector<double> closeness; // J x H x W
    std::vector<double> unit;      // J x dims x H x W
};

/// Closeness S = (k - d)/k and unit direction V = (p_i - p_j)/d inside the kernel.
/// V is the zero vector where p_i coincides with p_j.
ClosenessUnit closeness_and_unit(const NormPose& pose, const DenseGrid& grid, double k, int dims);

DenseRep encode(const RepType& type, const NormPose& pose, const DenseGrid& grid);
DenseRep encode(const RepType& type, const HandPose& pose, const CropFrame& crop, int dense_size);

/// Reference decoder for ground-truth maps: linear-normalized closeness or
/// probability weights (uniform over the hand for P). Throws
/// UndecodableJointError when a joint has no positive weight.
NormPose decode_gt(const DenseRep& dense, const DenseGrid& grid);

} // namespace awrkit
