#include "awrkit/rep.hpp"

#include <algorithm>
#include <cmath>

#include "awrkit/awr.hpp"
#include "awrkit/error.hpp"

namespace awrkit {

std::string_view to_string(RepTag tag) {
    switch (tag) {
    case RepTag::P: return "P";
    case RepTag::H1: return "H1";
    case RepTag::H2: return "H2";
    case RepTag::O1: return "O1";
    case RepTag::O2: return "O2";
    case RepTag::O3: return "O3";
    }
    return "?";
}

RepTag parse_rep_tag(std::string_view name) {
    for (RepTag t : {RepTag::P, RepTag::H1, RepTag::H2, RepTag::O1, RepTag::O2, RepTag::O3})
        if (name == to_string(t)) return t;
    throw UsageError("unknown representation '" + std::string(name) + "' (expected P, H1, H2, O1, O2 or O3)");
}

void RepType::validate() const {
    if (!(kernel_k > 0.0)) throw UsageError("kernel size must be positive");
    if (!(heat_sigma > 0.0)) throw UsageError("heatmap sigma must be positive");
}

int RepType::channels() const {
    switch (tag) {
    case RepTag::P: return 3;
    case RepTag::H1:
    case RepTag::H2: return 2;
    case RepTag::O1:
    case RepTag::O2:
    case RepTag::O3: return 4;
    }
    return 0;
}

DenseGrid dense_grid(const CropFrame& crop, int dense_size) {
    if (dense_size <= 0 || crop.size % dense_size != 0)
        throw ShapeError("dense size " + std::to_string(dense_size) + " does not divide crop size " +
                         std::to_string(crop.size));
    const int block = crop.size / dense_size;
    DenseGrid g;
    g.size = dense_size;
    g.points.resize(static_cast<std::size_t>(dense_size) * dense_size);
    g.mask.assign(g.points.size(), 0);
    for (int row = 0; row < dense_size; ++row) {
        for (int col = 0; col < dense_size; ++col) {
            double z = kBackgroundDepth;
            bool any = false;
            for (int r = row * block; r < (row + 1) * block; ++r)
                for (int c = col * block; c < (col + 1) * block; ++c)
                    if (crop.masked(c, r)) {
                        z = any ? std::min(z, crop.depth_at(c, r)) : crop.depth_at(c, r);
                        any = true;
                    }
            const auto i = static_cast<std::size_t>(row) * dense_size + col;
            g.points[i] = Vec3(CropTransform::cell_center(col, dense_size), CropTransform::cell_center(row, dense_size), z);
            g.mask[i] = any ? 1 : 0;
        }
    }
    return g;
}

DenseRep::DenseRep(const RepType& type, int j, int size)
    : rep_type(type), joints(j), channels(type.channels()), height(size), width(size),
      grid(static_cast<std::size_t>(j) * type.channels() * size * size, 0.0) {}

void DenseRep::check_shape() const {
    if (channels != rep_type.channels())
        throw ShapeError("dense rep " + std::string(to_string(rep_type.tag)) + " expects " +
                         std::to_string(rep_type.channels()) + " channels, got " + std::to_string(channels));
    if (joints <= 0 || height <= 0 || width <= 0 ||
        grid.size() != static_cast<std::size_t>(joints) * channels * height * width)
        throw ShapeError("dense rep buffer does not match its shape");
}

namespace {

void check_grid(const DenseGrid& grid) {
    if (grid.size <= 0 || grid.points.size() != static_cast<std::size_t>(grid.pixels()) ||
        grid.mask.size() != grid.points.size())
        throw ShapeError("dense grid buffers do not match its size");
}

double distance(const Vec3& a, const Vec3& b, int dims) {
    return dims == 2 ? std::hypot(a.x() - b.x(), a.y() - b.y()) : (a - b).norm();
}

} // namespace

std::vector<double> offset_field(const NormPose& pose, const DenseGrid& grid, double k, int dims) {
    check_grid(grid);
    if (!(k > 0.0)) throw UsageError("offset_field: kernel size must be positive");
    if (dims != 2 && dims != 3) throw UsageError("offset_field: dims must be 2 or 3");
    const int n = grid.pixels();
    std::vector<double> phi(pose.size() * dims * n, 0.0);
    for (std::size_t j = 0; j < pose.size(); ++j) {
        for (int i = 0; i < n; ++i) {
            if (!grid.mask[i]) continue;
            const Vec3& p = grid.points[i];
            if (distance(p, pose[j], dims) > k) continue;
            for (int a = 0; a < dims; ++a) phi[(j * dims + a) * n + i] = p[a] - pose[j][a];
        }
    }
    return phi;
}

ClosenessUnit closeness_and_unit(const NormPose& pose, const DenseGrid& grid, double k, int dims) {
    check_grid(grid);
    if (!(k > 0.0)) throw UsageError("closeness_and_unit: kernel size must be positive");
    if (dims != 2 && dims != 3) throw UsageError("closeness_and_unit: dims must be 2 or 3");
    const int n = grid.pixels();
    ClosenessUnit out;
    out.dims = dims;
    out.closeness.assign(pose.size() * n, 0.0);
    out.unit.assign(pose.size() * dims * n, 0.0);
    for (std::size_t j = 0; j < pose.size(); ++j) {
        for (int i = 0; i < n; ++i) {
            if (!grid.mask[i]) continue;
            const Vec3& p = grid.points[i];
            const double d = distance(p, pose[j], dims);
            if (d > k) continue;
            out.closeness[j * n + i] = (k - d) / k;
            if (d > 0.0)
                for (int a = 0; a < dims; ++a) out.unit[(j * dims + a) * n + i] = (p[a] - pose[j][a]) / d;
        }
    }
    return out;
}

DenseRep encode(const RepType& type, const NormPose& pose, const DenseGrid& grid) {
    type.validate();
    check_grid(grid);
    if (pose.empty()) throw ShapeError("encode: pose has no joints");
    const int n = grid.pixels();
    const double k = type.kernel_k;
    DenseRep rep(type, static_cast<int>(pose.size()), grid.size);

    switch (type.tag) {
    case RepTag::P:
        for (int j = 0; j < rep.joints; ++j)
            for (int i = 0; i < n; ++i)
                if (grid.mask[i])
                    for (int a = 0; a < 3; ++a) rep.at(j, chan::pose_x + a, i) = pose[j][a];
        break;

    case RepTag::H1:
    case RepTag::H2: {
        const double inv_two_sigma2 = 1.0 / (2.0 * type.heat_sigma * type.heat_sigma);
        for (int j = 0; j < rep.joints; ++j) {
            for (int i = 0; i < n; ++i) {
                if (!grid.mask[i]) continue;
                const Vec3& p = grid.points[i];
                const double d = distance(p, pose[j], 2);
                rep.at(j, chan::prob, i) = std::exp(-d * d * inv_two_sigma2);
                if (d <= k)
                    rep.at(j, chan::heat_depth, i) = type.tag == RepTag::H1 ? pose[j].z() : pose[j].z() - p.z();
            }
        }
        break;
    }

    case RepTag::O1:
    case RepTag::O2: {
        const ClosenessUnit cu = closeness_and_unit(pose, grid, k, 2);
        for (int j = 0; j < rep.joints; ++j) {
            for (int i = 0; i < n; ++i) {
                if (!grid.mask[i] || distance(grid.points[i], pose[j], 2) > k) continue;
                rep.at(j, chan::unit2_x, i) = cu.unit[(j * 2 + 0) * n + i];
                rep.at(j, chan::unit2_y, i) = cu.unit[(j * 2 + 1) * n + i];
                rep.at(j, chan::close2, i) = cu.closeness[j * n + i];
                rep.at(j, chan::plane_depth, i) =
                    type.tag == RepTag::O1 ? pose[j].z() : pose[j].z() - grid.points[i].z();
            }
        }
        break;
    }

    case RepTag::O3: {
        const ClosenessUnit cu = closeness_and_unit(pose, grid, k, 3);
        for (int j = 0; j < rep.joints; ++j) {
            for (int i = 0; i < n; ++i) {
                for (int a = 0; a < 3; ++a) rep.at(j, chan::unit3_x + a, i) = cu.unit[(j * 3 + a) * n + i];
                rep.at(j, chan::close3, i) = cu.closeness[j * n + i];
            }
        }
        break;
    }
    }
    return rep;
}

DenseRep encode(const RepType& type, const HandPose& pose, const CropFrame& crop, int dense_size) {
    return encode(type, normalize_pose(pose, crop), dense_grid(crop, dense_size));
}

NormPose decode_gt(const DenseRep& dense, const DenseGrid& grid) {
    dense.check_shape();
    if (dense.height != grid.size || dense.width != grid.size) throw ShapeError("decode_gt: grid size mismatch");
    CandidateField field = recover_candidates(dense, grid, nullptr, AggregationMode::detection);
    const int n = field.pixels;
    std::vector<double> weights(field.logits.size(), 0.0);
    for (int j = 0; j < field.joints; ++j) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            const auto idx = static_cast<std::size_t>(j) * n + i;
            double w = 0.0;
            if (field.valid[idx]) w = dense.rep_type.tag == RepTag::P ? 1.0 : std::max(field.logits[idx], 0.0);
            weights[idx] = w;
            total += w;
        }
        if (!(total > 0.0)) throw UndecodableJointError(j, "decode_gt: no positive weight support");
        for (int i = 0; i < n; ++i) weights[static_cast<std::size_t>(j) * n + i] /= total;
    }
    return weighted_sum(field, weights);
}

} // namespace awrkit
