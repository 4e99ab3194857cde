#include "awrkit/io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "awrkit/error.hpp"

namespace awrkit {

static_assert(std::endian::native == std::endian::little, "raw blobs are written in host order");

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path sidecar_of(const fs::path& raw) {
    fs::path p = raw;
    p.replace_extension(".json");
    return p;
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

void write_floats(const fs::path& path, const std::vector<float>& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
    if (!out) throw IoError("short write to " + path.string());
}

std::vector<float> read_floats(const fs::path& path, std::size_t count) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open " + path.string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != count * sizeof(float))
        throw ShapeError(path.string() + ": expected " + std::to_string(count * sizeof(float)) + " bytes, found " +
                         std::to_string(bytes));
    in.seekg(0);
    std::vector<float> values(count);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw IoError("short read from " + path.string());
    return values;
}

json intrinsics_json(const CameraIntrinsics& k) {
    return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

CameraIntrinsics intrinsics_from(const json& j) {
    try {
        CameraIntrinsics k;
        k.fx = j.at("fx").get<double>();
        k.fy = j.at("fy").get<double>();
        k.cx = j.at("cx").get<double>();
        k.cy = j.at("cy").get<double>();
        k.width = j.at("width").get<int>();
        k.height = j.at("height").get<int>();
        k.validate();
        return k;
    } catch (const json::exception& e) {
        throw IoError(std::string("bad intrinsics: ") + e.what());
    }
}

json range_json(const PoseSpace::Range& r) { return json::array({r.lo, r.hi}); }
PoseSpace::Range range_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

#define AWRKIT_POSE_SPACE_FIELDS(X)                                                                            \
    X(finger_abduction) X(finger_mcp_flex) X(finger_pip_flex) X(thumb_abduction) X(thumb_mcp_flex)             \
    X(thumb_ip_flex) X(yaw) X(pitch) X(roll) X(root_x) X(root_y) X(root_z) X(bone_scale) X(radius_scale)

json pose_space_json(const PoseSpace& s) {
    json j;
#define X(f) j[#f] = range_json(s.f);
    AWRKIT_POSE_SPACE_FIELDS(X)
#undef X
    return j;
}

PoseSpace pose_space_from(const json& j) {
    PoseSpace s;
#define X(f) \
    if (j.contains(#f)) s.f = range_from(j.at(#f));
    AWRKIT_POSE_SPACE_FIELDS(X)
#undef X
    return s;
}

std::string frame_stem(int id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%06d", id);
    return buf;
}

struct Manifest {
    SceneParams scene;
    std::uint64_t seed = 0;
    json frames;
};

Manifest read_manifest(const fs::path& dir) {
    const json doc = read_json(dir / "manifest.json");
    try {
        if (doc.at("version").get<int>() != kManifestVersion)
            throw IoError("unsupported manifest version in " + dir.string());
        Manifest m;
        m.scene.intrinsics = intrinsics_from(doc.at("intrinsics"));
        m.seed = doc.at("seed").get<std::uint64_t>();
        const json& sc = doc.at("scene");
        m.scene.noise_sigma_mm = sc.at("noise_sigma_mm").get<double>();
        m.scene.dropout = sc.at("dropout").get<double>();
        m.scene.pose_space = pose_space_from(sc.at("pose_space"));
        m.scene.validate();
        m.frames = doc.at("frames");
        return m;
    } catch (const json::exception& e) {
        throw IoError("bad manifest in " + dir.string() + ": " + e.what());
    }
}

} // namespace

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("short write to " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CameraIntrinsics read_intrinsics(const fs::path& path) { return intrinsics_from(read_json(path)); }

void write_intrinsics(const fs::path& path, const CameraIntrinsics& intr) { write_json(path, intrinsics_json(intr)); }

void write_depth(const fs::path& raw_path, const DepthImage& image) {
    if (image.mm.size() != static_cast<std::size_t>(image.width) * image.height)
        throw ShapeError("depth buffer does not match its size");
    if (raw_path.has_parent_path()) fs::create_directories(raw_path.parent_path());
    write_floats(raw_path, image.mm);
    write_json(sidecar_of(raw_path), {{"width", image.width}, {"height", image.height}, {"unit", "mm"}});
}

DepthImage read_depth(const fs::path& raw_path) {
    const json side = read_json(sidecar_of(raw_path));
    int w = 0, h = 0;
    try {
        w = side.at("width").get<int>();
        h = side.at("height").get<int>();
        if (side.at("unit").get<std::string>() != "mm") throw IoError("depth unit must be mm: " + raw_path.string());
    } catch (const json::exception& e) {
        throw IoError("bad depth sidecar for " + raw_path.string() + ": " + e.what());
    }
    if (w <= 0 || h <= 0) throw ShapeError("depth sidecar has a non-positive size");
    DepthImage img;
    img.width = w;
    img.height = h;
    img.mm = read_floats(raw_path, static_cast<std::size_t>(w) * h);
    return img;
}

void write_dense_rep(const fs::path& raw_path, const DenseRep& rep) {
    rep.check_shape();
    if (raw_path.has_parent_path()) fs::create_directories(raw_path.parent_path());
    write_floats(raw_path, std::vector<float>(rep.grid.begin(), rep.grid.end()));
    write_json(sidecar_of(raw_path), {{"rep_type", std::string(to_string(rep.rep_type.tag))},
                                      {"J", rep.joints},
                                      {"C", rep.channels},
                                      {"H", rep.height},
                                      {"W", rep.width},
                                      {"kernel_k", rep.rep_type.kernel_k},
                                      {"heat_sigma", rep.rep_type.heat_sigma}});
}

DenseRep read_dense_rep(const fs::path& raw_path) {
    const json hdr = read_json(sidecar_of(raw_path));
    DenseRep rep;
    try {
        rep.rep_type.tag = parse_rep_tag(hdr.at("rep_type").get<std::string>());
        rep.rep_type.kernel_k = hdr.at("kernel_k").get<double>();
        rep.rep_type.heat_sigma = hdr.at("heat_sigma").get<double>();
        rep.joints = hdr.at("J").get<int>();
        rep.channels = hdr.at("C").get<int>();
        rep.height = hdr.at("H").get<int>();
        rep.width = hdr.at("W").get<int>();
    } catch (const json::exception& e) {
        throw IoError("bad dense-rep header for " + raw_path.string() + ": " + e.what());
    }
    if (rep.joints <= 0 || rep.channels <= 0 || rep.height <= 0 || rep.width <= 0)
        throw ShapeError("dense-rep header has a non-positive extent");
    const auto count = static_cast<std::size_t>(rep.joints) * rep.channels * rep.height * rep.width;
    const std::vector<float> blob = read_floats(raw_path, count);
    rep.grid.assign(blob.begin(), blob.end());
    rep.check_shape();
    return rep;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
    fs::create_directories(dir / "depth");
    json frames = json::array();
    for (const Frame& f : ds.frames) {
        const std::string rel = "depth/" + frame_stem(f.id) + ".raw";
        write_depth(dir / rel, f.depth);
        json pose = json::array();
        for (const Vec3& p : f.pose.joints) pose.push_back({p.x(), p.y(), p.z()});
        json vis = json::array();
        for (std::uint8_t v : f.visible) vis.push_back(v != 0);
        frames.push_back({{"id", f.id}, {"depth_file", rel}, {"pose", pose}, {"seed", f.seed}, {"visibility", vis}});
    }
    json doc;
    doc["version"] = kManifestVersion;
    doc["seed"] = ds.seed;
    doc["intrinsics"] = intrinsics_json(ds.scene.intrinsics);
    doc["scene"] = {{"noise_sigma_mm", ds.scene.noise_sigma_mm},
                    {"dropout", ds.scene.dropout},
                    {"pose_space", pose_space_json(ds.scene.pose_space)}};
    doc["frames"] = std::move(frames);
    write_json(dir / "manifest.json", doc);
    write_intrinsics(dir / "intrinsics.json", ds.scene.intrinsics);
}

Dataset load_dataset(const fs::path& dir) {
    Manifest m = read_manifest(dir);
    Dataset ds;
    ds.scene = m.scene;
    ds.seed = m.seed;
    try {
        for (const json& jf : m.frames) {
            Frame f;
            f.id = jf.at("id").get<int>();
            f.seed = jf.at("seed").get<std::uint64_t>();
            for (const json& p : jf.at("pose"))
                f.pose.joints.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
            for (const json& v : jf.at("visibility")) f.visible.push_back(v.get<bool>() ? 1 : 0);
            if (f.visible.size() != f.pose.joints.size())
                throw ShapeError("frame " + std::to_string(f.id) + ": visibility and pose lengths differ");
            f.depth = read_depth(dir / jf.at("depth_file").get<std::string>());
            ds.frames.push_back(std::move(f));
        }
    } catch (const json::exception& e) {
        throw IoError("bad frame entry in " + dir.string() + ": " + e.what());
    }
    if (ds.frames.empty()) throw IoError("dataset " + dir.string() + " has no frames");
    return ds;
}

Dataset regenerate_dataset(const fs::path& dir, int threads) {
    Manifest m = read_manifest(dir);
    const int n = static_cast<int>(m.frames.size());
    Dataset ds = synth_dataset(n, m.seed, m.scene, threads);
    for (int i = 0; i < n; ++i) {
        if (ds.frames[static_cast<std::size_t>(i)].seed != m.frames[static_cast<std::size_t>(i)].at("seed").get<std::uint64_t>())
            throw IoError("frame seed mismatch at index " + std::to_string(i) + " of " + dir.string());
    }
    return ds;
}

void write_pose_csv(const fs::path& path, const PoseTable& table) {
    if (table.frame_ids.size() != table.poses.size()) throw ShapeError("pose table ids and poses differ in length");
    std::string out = "frame_id,joint_id,x_mm,y_mm,z_mm\n";
    char buf[160];
    for (std::size_t f = 0; f < table.poses.size(); ++f) {
        const auto& joints = table.poses[f].joints;
        for (std::size_t j = 0; j < joints.size(); ++j) {
            std::snprintf(buf, sizeof buf, "%d,%zu,%.17g,%.17g,%.17g\n", table.frame_ids[f], j, joints[j].x(),
                          joints[j].y(), joints[j].z());
            out += buf;
        }
    }
    write_text(path, out);
}

PoseTable read_pose_csv(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::string line;
    if (!std::getline(in, line) || line.rfind("frame_id,joint_id,x_mm,y_mm,z_mm", 0) != 0)
        throw IoError(path.string() + ": missing pose CSV header");
    PoseTable table;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        int fid = 0, jid = 0;
        double x = 0, y = 0, z = 0;
        if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf", &fid, &jid, &x, &y, &z) != 5)
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": malformed row");
        if (table.frame_ids.empty() || table.frame_ids.back() != fid) {
            table.frame_ids.push_back(fid);
            table.poses.emplace_back();
        }
        auto& joints = table.poses.back().joints;
        if (jid != static_cast<int>(joints.size()))
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": joints out of order");
        joints.emplace_back(x, y, z);
    }
    return table;
}

} // namespace awrkit
