#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>

#include "awrkit/error.hpp"
#include "awrkit/io.hpp"
#include "awrkit/random.hpp"

using namespace awrkit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("awrkit_test_io_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// Relative path -> contents for every regular file below `root`.
std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = bytes(e.path());
    return out;
}

SceneParams small_scene() {
    SceneParams s;
    s.intrinsics = {60.0, 60.0, 32.0, 32.0, 64, 64};
    return s;
}

} // namespace

TEST_CASE("intrinsics round trip") {
    TempDir t("intr");
    const CameraIntrinsics a{481.5, 479.25, 319.5, 239.5, 640, 480};
    write_intrinsics(t.path / "i.json", a);
    const CameraIntrinsics b = read_intrinsics(t.path / "i.json");
    CHECK(b.fx == a.fx);
    CHECK(b.fy == a.fy);
    CHECK(b.cx == a.cx);
    CHECK(b.cy == a.cy);
    CHECK(b.width == a.width);
    CHECK(b.height == a.height);
    write_text(t.path / "bad.json", "{\"fx\": -1, \"fy\": 1, \"cx\": 0, \"cy\": 0, \"width\": 4, \"height\": 4}");
    CHECK_THROWS(read_intrinsics(t.path / "bad.json"));
    CHECK_THROWS_AS(read_intrinsics(t.path / "missing.json"), IoError);
}

TEST_CASE("depth round trip and sidecar checks") {
    TempDir t("depth");
    DepthImage d(5, 3);
    CounterRng rng(1);
    for (float& v : d.mm) v = static_cast<float>(rng.uniform(0, 900));
    write_depth(t.path / "d.raw", d);
    CHECK(fs::exists(t.path / "d.json"));
    CHECK(fs::file_size(t.path / "d.raw") == 15 * sizeof(float));
    const DepthImage e = read_depth(t.path / "d.raw");
    CHECK(e.width == 5);
    CHECK(e.height == 3);
    CHECK(e.mm == d.mm);
    write_text(t.path / "d.json", "{\"width\": 4, \"height\": 3, \"unit\": \"mm\"}");
    CHECK_THROWS_AS(read_depth(t.path / "d.raw"), ShapeError);
    write_text(t.path / "d.json", "{\"width\": 5, \"height\": 3, \"unit\": \"m\"}");
    CHECK_THROWS_AS(read_depth(t.path / "d.raw"), IoError);
}

TEST_CASE("dense rep round trip") {
    TempDir t("rep");
    DenseRep r(RepType{RepTag::O2, 0.6}, 3, 4);
    CounterRng rng(2);
    for (double& v : r.grid) v = static_cast<float>(rng.uniform(-1, 1));
    write_dense_rep(t.path / "r.raw", r);
    const DenseRep s = read_dense_rep(t.path / "r.raw");
    CHECK(s.rep_type.tag == RepTag::O2);
    CHECK(s.rep_type.kernel_k == 0.6);
    CHECK(s.joints == 3);
    CHECK(s.channels == r.channels);
    CHECK(s.grid == r.grid);
}

TEST_CASE("pose CSV round trip is exact") {
    TempDir t("pose");
    CounterRng rng(3);
    PoseTable a;
    for (int f = 0; f < 4; ++f) {
        HandPose p;
        for (int j = 0; j < 14; ++j) p.joints.emplace_back(rng.uniform(-90, 90), rng.uniform(-90, 90), rng.uniform(300, 500));
        a.frame_ids.push_back(10 + f);
        a.poses.push_back(p);
    }
    write_pose_csv(t.path / "p.csv", a);
    CHECK(read_text(t.path / "p.csv").rfind("frame_id,joint_id,x_mm,y_mm,z_mm\n", 0) == 0);
    const PoseTable b = read_pose_csv(t.path / "p.csv");
    CHECK(b.frame_ids == a.frame_ids);
    for (std::size_t f = 0; f < 4; ++f)
        for (std::size_t j = 0; j < 14; ++j) CHECK(b.poses[f].joints[j] == a.poses[f].joints[j]);
    write_text(t.path / "q.csv", "frame_id,joint_id,x_mm,y_mm,z_mm\n0,0,1,2\n");
    CHECK_THROWS_AS(read_pose_csv(t.path / "q.csv"), IoError);
}

TEST_CASE("datasets: load, regeneration and byte-identical output") {
    TempDir a("ds_a"), b("ds_b");
    const SceneParams scene = small_scene();
    const Dataset made = make_dataset(5, 21, scene, a.path);
    make_dataset(5, 21, scene, b.path);
    const auto ta = tree(a.path);
    CHECK(ta == tree(b.path));
    CHECK(ta.count("manifest.json") == 1);
    CHECK(ta.count("intrinsics.json") == 1);
    CHECK(ta.count("depth/frame_000004.raw") == 1);

    const Dataset loaded = load_dataset(a.path);
    const Dataset regen = regenerate_dataset(a.path);
    REQUIRE(loaded.frames.size() == 5);
    REQUIRE(regen.frames.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(loaded.frames[i].depth.mm == made.frames[i].depth.mm);
        CHECK(regen.frames[i].depth.mm == made.frames[i].depth.mm);
        CHECK(loaded.frames[i].seed == made.frames[i].seed);
        CHECK(loaded.frames[i].visible == made.frames[i].visible);
        for (std::size_t j = 0; j < 14; ++j) {
            CHECK(loaded.frames[i].pose.joints[j] == made.frames[i].pose.joints[j]);
            CHECK(regen.frames[i].pose.joints[j] == made.frames[i].pose.joints[j]);
        }
    }
    CHECK(loaded.scene.dropout == scene.dropout);
    CHECK(loaded.scene.intrinsics.width == 64);
    CHECK_THROWS_AS(load_dataset(a.path / "nowhere"), IoError);
}
