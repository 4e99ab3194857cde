#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "awrkit/awr.hpp"
#include "awrkit/error.hpp"
#include "awrkit/rep.hpp"
#include "test_util.hpp"

using namespace awrkit;

namespace {

const RepTag kAllTags[] = {RepTag::P, RepTag::H1, RepTag::H2, RepTag::O1, RepTag::O2, RepTag::O3};

// size x size grid, every pixel masked, depth 0 unless given.
DenseGrid flat_grid(int size, double z = 0.0) {
    DenseGrid g;
    g.size = size;
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            g.points.emplace_back(CropTransform::cell_center(c, size), CropTransform::cell_center(r, size), z);
            g.mask.push_back(1);
        }
    return g;
}

struct SynthCase {
    DenseGrid grid;
    NormPose pose;
};

SynthCase synth_case(int index, int dense = 16) {
    HandPose pose;
    const CropFrame crop = awrkit::testing::synthetic_crop(21, index, 32, &pose);
    return {dense_grid(crop, dense), normalize_pose(pose, crop)};
}

double dist(const Vec3& a, const Vec3& b, int dims) {
    double s = 0.0;
    for (int d = 0; d < dims; ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
    return std::sqrt(s);
}

} // namespace

TEST_CASE("rep tags parse and report channel counts") {
    for (RepTag t : kAllTags) CHECK(parse_rep_tag(to_string(t)) == t);
    CHECK_THROWS_AS(parse_rep_tag("O4"), UsageError);
    CHECK(RepType{RepTag::P}.channels() == 3);
    CHECK(RepType{RepTag::H1}.channels() == 2);
    CHECK(RepType{RepTag::H2}.channels() == 2);
    CHECK(RepType{RepTag::O1}.channels() == 4);
    CHECK(RepType{RepTag::O2}.channels() == 4);
    CHECK(RepType{RepTag::O3}.channels() == 4);
    CHECK_THROWS_AS((RepType{RepTag::O3, 0.0}).validate(), UsageError);
    CHECK_THROWS_AS((RepType{RepTag::H1, 1.0, -0.1}).validate(), UsageError);
}

TEST_CASE("dense_grid takes the nearest masked depth of each block") {
    CropFrame crop;
    crop.size = 8;
    crop.depth.assign(64, kBackgroundDepth);
    crop.mask.assign(64, 0);
    crop.depth[0] = 0.3;
    crop.mask[0] = 1;
    crop.depth[9] = -0.2;
    crop.mask[9] = 1;
    const DenseGrid g = dense_grid(crop, 4);
    CHECK(g.mask[0] == 1);
    CHECK(g.points[0].z() == -0.2);
    CHECK(g.mask[1] == 0);
    CHECK(g.points[1].z() == kBackgroundDepth);
    CHECK(g.points[5].x() == doctest::Approx(-0.25));
    CHECK_THROWS_AS(dense_grid(crop, 3), ShapeError);
}

TEST_CASE("offset_field follows the kernel-limited indicator") {
    DenseGrid g = flat_grid(4);
    g.mask[0] = 0;
    const double k = 1.0;
    SUBCASE("unmasked pixel is zero") {
        const NormPose pose{g.points[0] + Vec3(0.1, 0, 0)};
        const auto phi = offset_field(pose, g, k, 3);
        for (int a = 0; a < 3; ++a) CHECK(phi[a * 16 + 0] == 0.0);
    }
    SUBCASE("beyond the kernel is zero") {
        const NormPose pose{g.points[5] - Vec3(1.5 * k, 0, 0)};
        const auto phi = offset_field(pose, g, k, 3);
        for (int a = 0; a < 3; ++a) CHECK(phi[a * 16 + 5] == 0.0);
    }
    SUBCASE("inside the kernel phi = p_i - p_j") {
        const NormPose pose{g.points[5] - Vec3(0.3, 0, 0)};
        const auto phi = offset_field(pose, g, k, 3);
        CHECK(phi[0 * 16 + 5] == doctest::Approx(0.3));
        CHECK(phi[1 * 16 + 5] == 0.0);
        CHECK(phi[2 * 16 + 5] == 0.0);
    }
}

TEST_CASE("closeness and unit vectors at reference distances") {
    const DenseGrid g = flat_grid(4);
    const double k = 1.0;
    SUBCASE("distance zero") {
        const auto cu = closeness_and_unit({g.points[6]}, g, k, 3);
        CHECK(cu.closeness[6] == 1.0);
        for (int a = 0; a < 3; ++a) CHECK(cu.unit[a * 16 + 6] == 0.0);
    }
    SUBCASE("distance k") {
        const auto cu = closeness_and_unit({g.points[6] - Vec3(k, 0, 0)}, g, k, 3);
        CHECK(cu.closeness[6] == doctest::Approx(0.0));
    }
    SUBCASE("distance k/2") {
        const auto cu = closeness_and_unit({g.points[6] - Vec3(k / 2, 0, 0)}, g, k, 3);
        CHECK(cu.closeness[6] == doctest::Approx(0.5));
        CHECK(cu.unit[0 * 16 + 6] == doctest::Approx(1.0));
        CHECK(cu.unit[1 * 16 + 6] == 0.0);
        CHECK(cu.unit[2 * 16 + 6] == 0.0);
    }
    SUBCASE("2D distance ignores depth") {
        const auto cu = closeness_and_unit({g.points[6] + Vec3(0, 0, 0.9)}, g, k, 2);
        CHECK(cu.closeness[6] == 1.0);
    }
}

TEST_CASE("encoded maps satisfy the channel invariants") {
    for (int f = 0; f < 10; ++f) {
        const SynthCase sc = synth_case(f);
        const int n = sc.grid.pixels();
        for (double k : {0.5, 1.0, 2.0}) {
            for (int dims : {2, 3}) {
                const auto cu = closeness_and_unit(sc.pose, sc.grid, k, dims);
                const auto phi = offset_field(sc.pose, sc.grid, k, dims);
                for (int j = 0; j < static_cast<int>(sc.pose.size()); ++j)
                    for (int i = 0; i < n; ++i) {
                        const double s = cu.closeness[static_cast<std::size_t>(j * n + i)];
                        double norm = 0.0;
                        for (int a = 0; a < dims; ++a) norm += std::pow(cu.unit[static_cast<std::size_t>((j * dims + a) * n + i)], 2);
                        norm = std::sqrt(norm);
                        CHECK((norm == 0.0 || std::abs(norm - 1.0) <= 1e-6));
                        CHECK((s >= 0.0 && s <= 1.0));
                        const double d = dist(sc.grid.points[static_cast<std::size_t>(i)], sc.pose[static_cast<std::size_t>(j)], dims);
                        const bool inside = sc.grid.mask[static_cast<std::size_t>(i)] && d < k;
                        CHECK((s > 0.0) == inside);
                        if (!inside) continue;
                        // phi = V * k * (1 - S)
                        for (int a = 0; a < dims; ++a) {
                            const double v = cu.unit[static_cast<std::size_t>((j * dims + a) * n + i)];
                            CHECK(std::abs(phi[static_cast<std::size_t>((j * dims + a) * n + i)] - v * k * (1.0 - s)) <= 1e-6);
                        }
                    }
            }
        }
        for (RepTag t : kAllTags) {
            const DenseRep rep = encode(RepType{t}, sc.pose, sc.grid);
            rep.check_shape();
            for (int j = 0; j < rep.joints; ++j)
                for (int c = 0; c < rep.channels; ++c)
                    for (int i = 0; i < n; ++i)
                        if (!sc.grid.mask[static_cast<std::size_t>(i)]) CHECK(rep.at(j, c, i) == 0.0);
        }
    }
}

TEST_CASE("encode examples") {
    const DenseGrid g = flat_grid(8, 0.1);
    const NormPose pose{g.points[19] + Vec3(0, 0, 0.2), g.points[40] + Vec3(0.05, -0.03, -0.1)};
    SUBCASE("H2 peak is 1 at the joint pixel") {
        const DenseRep rep = encode(RepType{RepTag::H2}, pose, g);
        CHECK(rep.at(0, chan::prob, 19) == 1.0);
        CHECK(rep.at(0, chan::heat_depth, 19) == doctest::Approx(0.2));
    }
    SUBCASE("P broadcasts the joint over masked pixels") {
        DenseGrid gm = g;
        gm.mask[3] = 0;
        const DenseRep rep = encode(RepType{RepTag::P}, pose, gm);
        for (int i = 0; i < gm.pixels(); ++i) {
            if (!gm.mask[static_cast<std::size_t>(i)]) {
                CHECK(rep.at(1, chan::pose_x, i) == 0.0);
                continue;
            }
            CHECK(rep.at(1, chan::pose_x, i) == pose[1].x());
            CHECK(rep.at(1, chan::pose_z, i) == pose[1].z());
        }
    }
    SUBCASE("H1 depth is broadcast over the 2D kernel support only") {
        const DenseRep rep = encode(RepType{RepTag::H1, 0.3}, pose, g);
        for (int i = 0; i < g.pixels(); ++i) {
            const bool inside = dist(g.points[static_cast<std::size_t>(i)], pose[0], 2) <= 0.3;
            CHECK(rep.at(0, chan::heat_depth, i) == (inside ? pose[0].z() : 0.0));
        }
    }
    SUBCASE("O2 carries the depth offset") {
        const DenseRep rep = encode(RepType{RepTag::O2}, pose, g);
        CHECK(rep.at(1, chan::plane_depth, 40) == doctest::Approx(pose[1].z() - 0.1));
    }
}

TEST_CASE("decode_gt recovers the pose for every representation") {
    const double half_pitch = 1.0 / 16.0; // normalized units at dense 16
    for (RepTag t : kAllTags) {
        double worst_plane = 0.0, worst_depth = 0.0, mean_plane = 0.0;
        int count = 0;
        for (int f = 0; f < 100; ++f) {
            const SynthCase sc = synth_case(f);
            const NormPose back = decode_gt(encode(RepType{t}, sc.pose, sc.grid), sc.grid);
            for (std::size_t j = 0; j < back.size(); ++j) {
                const double du = std::abs(back[j].x() - sc.pose[j].x());
                const double dv = std::abs(back[j].y() - sc.pose[j].y());
                worst_plane = std::max({worst_plane, du, dv});
                mean_plane += du + dv;
                worst_depth = std::max(worst_depth, std::abs(back[j].z() - sc.pose[j].z()));
                count += 2;
            }
        }
        mean_plane /= count;
        INFO("rep " << to_string(t) << " worst plane " << worst_plane << " mean plane " << mean_plane
                    << " worst depth " << worst_depth);
        if (t == RepTag::H1 || t == RepTag::H2) {
            // Probability-weighted pixel centers: within half a pixel on average.
            CHECK(mean_plane <= half_pitch);
        } else {
            CHECK(worst_plane <= 1e-9);
        }
        CHECK(worst_depth <= 1e-6);
    }
}

TEST_CASE("decode_gt rejects a joint with no weight support") {
    const DenseGrid g = flat_grid(4);
    DenseRep rep(RepType{RepTag::O3}, 1, 4);
    CHECK_THROWS_AS(decode_gt(rep, g), UndecodableJointError);
}

TEST_CASE("encoding is equivariant under quarter-turn grid rotations") {
    const int size = 16;
    for (int f = 0; f < 5; ++f) {
        const SynthCase sc = synth_case(f, size);
        DenseGrid g = sc.grid;
        NormPose pose = sc.pose;
        for (int turn = 1; turn <= 3; ++turn) {
            // Rotate by 90 degrees in the image plane: (u, v) -> (-v, u).
            DenseGrid rg = g;
            std::vector<int> src_of(static_cast<std::size_t>(size * size));
            for (int r = 0; r < size; ++r)
                for (int c = 0; c < size; ++c) {
                    const int dst = c * size + (size - 1 - r);
                    src_of[static_cast<std::size_t>(dst)] = r * size + c;
                    rg.mask[static_cast<std::size_t>(dst)] = g.mask[static_cast<std::size_t>(r * size + c)];
                    rg.points[static_cast<std::size_t>(dst)].z() = g.points[static_cast<std::size_t>(r * size + c)].z();
                }
            NormPose rp = pose;
            for (auto& p : rp) p = Vec3(-p.y(), p.x(), p.z());
            for (RepTag t : kAllTags) {
                const DenseRep a = encode(RepType{t}, pose, g);
                const DenseRep b = encode(RepType{t}, rp, rg);
                for (int j = 0; j < a.joints; ++j)
                    for (int i = 0; i < size * size; ++i) {
                        const int s = src_of[static_cast<std::size_t>(i)];
                        for (int c = 0; c < a.channels; ++c) {
                            double expect = a.at(j, c, s);
                            const bool vec_x = (t == RepTag::O3 && c == chan::unit3_x) ||
                                               ((t == RepTag::O1 || t == RepTag::O2) && c == chan::unit2_x) ||
                                               (t == RepTag::P && c == chan::pose_x);
                            const bool vec_y = (t == RepTag::O3 && c == chan::unit3_y) ||
                                               ((t == RepTag::O1 || t == RepTag::O2) && c == chan::unit2_y) ||
                                               (t == RepTag::P && c == chan::pose_y);
                            if (vec_x) expect = -a.at(j, c + 1, s);
                            if (vec_y) expect = a.at(j, c - 1, s);
                            CHECK(std::abs(b.at(j, c, i) - expect) <= 1e-9);
                        }
                    }
            }
            g = rg;
            pose = rp;
        }
    }
}

TEST_CASE("GT O3 hypotheses sit on the joint inside the kernel") {
    for (int f = 0; f < 20; ++f) {
        const SynthCase sc = synth_case(f);
        const DenseRep rep = encode(RepType{RepTag::O3}, sc.pose, sc.grid);
        const CandidateField field = recover_candidates(rep, sc.grid, nullptr, AggregationMode::detection);
        for (int j = 0; j < field.joints; ++j)
            for (int i = 0; i < field.pixels; ++i) {
                if (!field.valid[static_cast<std::size_t>(j * field.pixels + i)]) continue;
                // Invert the stored closeness / unit channels directly.
                const Vec3 pi = sc.grid.points[static_cast<std::size_t>(i)];
                const double s = rep.at(j, chan::close3, i);
                const Vec3 v(rep.at(j, chan::unit3_x, i), rep.at(j, chan::unit3_y, i), rep.at(j, chan::unit3_z, i));
                const Vec3 inverted = pi - rep.rep_type.kernel_k * (1.0 - s) * v;
                const double* h = field.hypothesis(j, i);
                CHECK((Vec3(h[0], h[1], h[2]) - inverted).norm() <= 1e-12);
                CHECK((inverted - sc.pose[static_cast<std::size_t>(j)]).norm() <= 1.0 / 16.0);
            }
    }
}
