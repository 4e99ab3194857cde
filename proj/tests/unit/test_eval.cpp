#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <json.hpp>

#include "awrkit/error.hpp"
#include "awrkit/eval.hpp"
#include "awrkit/random.hpp"

using namespace awrkit;

namespace {

HandPose constant_pose(int joints, const Vec3& p) { return HandPose{std::vector<Vec3>(static_cast<std::size_t>(joints), p)}; }

std::vector<HandPose> random_poses(CounterRng& rng, int frames, int joints, double spread) {
    std::vector<HandPose> out;
    for (int f = 0; f < frames; ++f) {
        HandPose p;
        for (int j = 0; j < joints; ++j)
            p.joints.emplace_back(rng.uniform(-spread, spread), rng.uniform(-spread, spread), rng.uniform(-spread, spread));
        out.push_back(p);
    }
    return out;
}

} // namespace

TEST_CASE("mean_joint_error examples") {
    const std::vector<HandPose> gts{constant_pose(14, {1, 2, 400}), constant_pose(14, {-5, 0, 380})};
    SUBCASE("identical sets") {
        const JointErrors e = mean_joint_error(gts, gts);
        CHECK(e.all_joint_mean_mm == 0.0);
        for (double v : e.per_joint_mean_mm) CHECK(v == 0.0);
    }
    SUBCASE("3-4-5 offset") {
        std::vector<HandPose> preds = gts;
        for (auto& p : preds)
            for (auto& j : p.joints) j += Vec3(3, 4, 0);
        const JointErrors e = mean_joint_error(preds, gts);
        CHECK(e.all_joint_mean_mm == 5.0);
        REQUIRE(e.per_joint_mean_mm.size() == 14);
        for (double v : e.per_joint_mean_mm) CHECK(v == 5.0);
    }
    SUBCASE("averaging over frames") {
        std::vector<HandPose> preds = gts;
        for (auto& j : preds[0].joints) j += Vec3(0, 0, 2);
        for (auto& j : preds[1].joints) j += Vec3(4, 0, 0);
        CHECK(mean_joint_error(preds, gts).all_joint_mean_mm == 3.0);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(mean_joint_error({}, {}), UsageError);
        CHECK_THROWS_AS(mean_joint_error({gts[0]}, gts), ShapeError);
        CHECK_THROWS_AS(mean_joint_error({gts[0], constant_pose(13, Vec3::Zero())}, gts), ShapeError);
    }
}

TEST_CASE("good_frame_curve examples") {
    const std::vector<HandPose> gts{constant_pose(3, Vec3::Zero()), constant_pose(3, Vec3::Zero()), constant_pose(3, Vec3::Zero())};
    SUBCASE("zero error") {
        for (const auto& pt : good_frame_curve(gts, gts, default_thresholds())) CHECK(pt.fraction == 1.0);
    }
    SUBCASE("single frame with a 10 mm worst joint") {
        HandPose p = gts[0];
        p.joints[1] = Vec3(0, 10, 0);
        p.joints[2] = Vec3(0, 0, 4);
        const auto c = good_frame_curve({p}, {gts[0]}, {0, 9.999, 10, 10.001, 50});
        const std::vector<double> expect{0, 0, 1, 1, 1};
        for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i].fraction == expect[i]);
    }
    SUBCASE("counting") {
        std::vector<HandPose> preds = gts;
        preds[0].joints[0] = Vec3(5, 0, 0);
        preds[1].joints[2] = Vec3(0, 15, 0);
        preds[2].joints[1] = Vec3(0, 0, 25);
        preds[2].joints[0] = Vec3(0, 0, 3);
        const auto c = good_frame_curve(preds, gts, {10, 20, 30});
        CHECK(c[0].fraction == doctest::Approx(1.0 / 3));
        CHECK(c[1].fraction == doctest::Approx(2.0 / 3));
        CHECK(c[2].fraction == 1.0);
        CHECK(c[1].threshold_mm == 20.0);
    }
    SUBCASE("threshold contract") {
        CHECK_THROWS_AS(good_frame_curve(gts, gts, {}), UsageError);
        CHECK_THROWS_AS(good_frame_curve(gts, gts, {10, 5}), UsageError);
    }
    SUBCASE("default grid") {
        const auto t = default_thresholds();
        REQUIRE(t.size() == 41);
        CHECK(t.front() == 0.0);
        CHECK(t.back() == 80.0);
    }
}

TEST_CASE("metric properties on random sets") {
    CounterRng rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const int frames = 1 + static_cast<int>(rng.below(30));
        const int joints = 1 + static_cast<int>(rng.below(14));
        const std::vector<HandPose> err = random_poses(rng, frames, joints, 20);
        const std::vector<HandPose> zeros(static_cast<std::size_t>(frames), constant_pose(joints, Vec3::Zero()));
        std::vector<HandPose> doubled = err;
        for (auto& p : doubled)
            for (auto& j : p.joints) j *= 2.0;

        std::vector<std::vector<std::uint8_t>> vis(static_cast<std::size_t>(frames));
        for (auto& v : vis)
            for (int j = 0; j < joints; ++j) v.push_back(rng.uniform() < 0.6 ? 1 : 0);

        const EvalResult a = evaluate(err, zeros, vis);
        const EvalResult b = evaluate(doubled, zeros, vis);
        // monotone and bounded
        for (std::size_t i = 0; i < a.good_frame_curve.size(); ++i) {
            CHECK(a.good_frame_curve[i].fraction >= 0.0);
            CHECK(a.good_frame_curve[i].fraction <= 1.0);
            if (i) CHECK(a.good_frame_curve[i].fraction >= a.good_frame_curve[i - 1].fraction);
        }
        // doubling every error doubles every mean exactly
        CHECK(b.all_joint_mean_mm == 2.0 * a.all_joint_mean_mm);
        for (int j = 0; j < joints; ++j)
            CHECK(b.per_joint_mean_mm[static_cast<std::size_t>(j)] == 2.0 * a.per_joint_mean_mm[static_cast<std::size_t>(j)]);
        // strata partition the joints and recombine to the overall mean
        REQUIRE(a.has_strata);
        CHECK(a.visible.joint_count + a.occluded.joint_count == static_cast<std::size_t>(frames * joints));
        const double vis_part = a.visible.joint_count ? a.visible.all_joint_mean_mm * a.visible.joint_count : 0.0;
        const double occ_part = a.occluded.joint_count ? a.occluded.all_joint_mean_mm * a.occluded.joint_count : 0.0;
        CHECK(std::abs((vis_part + occ_part) / (frames * joints) - a.all_joint_mean_mm) <= 1e-9);
    }
}

TEST_CASE("evaluate validates visibility") {
    const std::vector<HandPose> g{constant_pose(2, Vec3::Zero())};
    CHECK_THROWS_AS(evaluate(g, g, {{1}}), ShapeError);
    const EvalResult r = evaluate(g, g, {{1, 1}});
    CHECK(r.occluded.joint_count == 0);
    CHECK(std::isnan(r.occluded.per_joint_mean_mm[0]));
    CHECK_FALSE(evaluate(g, g).has_strata);
}

TEST_CASE("compare_report") {
    const std::vector<HandPose> g{constant_pose(2, Vec3::Zero())};
    std::vector<HandPose> p = g;
    p[0].joints[0] = Vec3(4, 0, 0);
    const EvalResult perfect = evaluate(g, g);
    const EvalResult off = evaluate(p, g);
    SUBCASE("single run") {
        const Report r = compare_report({{"only", perfect}});
        CHECK(r.table == "run,all_joint_mean_mm\nonly,0.000000\n");
    }
    SUBCASE("identical runs give equal rows, ordered by name") {
        const Report r = compare_report({{"b", off}, {"a", off}});
        const auto j = nlohmann::json::parse(r.json);
        REQUIRE(j.at("runs").size() == 2);
        CHECK(j["runs"][0]["name"] == "a");
        CHECK(j["runs"][0]["result"] == j["runs"][1]["result"]);
        CHECK(r.table == "run,all_joint_mean_mm\na,2.000000\nb,2.000000\n");
        CHECK(r.curves_csv.rfind("threshold_mm,a,b\n", 0) == 0);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(compare_report({}), UsageError);
        CHECK_THROWS_AS(compare_report({{"x", off}, {"x", perfect}}), UsageError);
    }
}
