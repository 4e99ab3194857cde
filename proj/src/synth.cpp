#include "awrkit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Geometry>

#include "awrkit/error.hpp"
#include "awrkit/io.hpp"
#include "awrkit/parallel.hpp"
#include "awrkit/random.hpp"

namespace awrkit {

namespace {

enum Node : int {
    kPalm = 0,
    kWristL,
    kWristR,
    kThumbBase,
    kThumbMid,
    kThumbTip,
    kIndexMcp,
    kIndexMid,
    kIndexTip,
    kMiddleMcp,
    kMiddleMid,
    kMiddleTip,
    kRingMcp,
    kRingMid,
    kRingTip,
    kPinkyMcp,
    kPinkyMid,
    kPinkyTip,
};

constexpr double deg(double d) { return d * std::numbers::pi / 180.0; }

struct FingerGeom {
    int mcp, mid, tip;
    Vec3 knuckle;   // palm-frame offset of the knuckle
    double proximal; // knuckle -> mid
    double distal;   // mid -> tip
};

// Palm frame: palm center at the origin, fingers along +y, palm facing -z (the camera).
const std::array<FingerGeom, 4>& fingers() {
    static const std::array<FingerGeom, 4> f{{
        {kIndexMcp, kIndexMid, kIndexTip, {-24.0, 38.0, 0.0}, 42.0, 40.0},
        {kMiddleMcp, kMiddleMid, kMiddleTip, {-8.0, 42.0, 0.0}, 45.0, 44.0},
        {kRingMcp, kRingMid, kRingTip, {8.0, 40.0, 0.0}, 42.0, 40.0},
        {kPinkyMcp, kPinkyMid, kPinkyTip, {22.0, 34.0, 0.0}, 34.0, 32.0},
    }};
    return f;
}

double draw(CounterRng& rng, const PoseSpace::Range& r, std::vector<double>& record) {
    const double v = r.hi > r.lo ? rng.uniform(r.lo, r.hi) : r.lo;
    record.push_back(v);
    return v;
}

// Ray from the camera origin along unit `dir`; returns the nearest hit distance or -1.
double ray_capsule(const Vec3& dir, const Vec3& pa, const Vec3& pb, double r) {
    const Vec3 ro = Vec3::Zero();
    auto sphere = [&](const Vec3& c) {
        const Vec3 oc = ro - c;
        const double b = dir.dot(oc);
        const double cc = oc.squaredNorm() - r * r;
        const double h = b * b - cc;
        return h > 0.0 ? -b - std::sqrt(h) : -1.0;
    };
    const Vec3 ba = pb - pa;
    const double baba = ba.squaredNorm();
    if (baba < 1e-18) return sphere(pa);
    const Vec3 oa = ro - pa;
    const double bard = ba.dot(dir);
    const double baoa = ba.dot(oa);
    const double rdoa = dir.dot(oa);
    const double oaoa = oa.squaredNorm();
    const double a = baba - bard * bard;
    const double b = baba * rdoa - baoa * bard;
    const double c = baba * oaoa - baoa * baoa - r * r * baba;
    const double h = b * b - a * c;
    if (a > 1e-12 * baba) {
        if (h < 0.0) return -1.0;
        const double t = (-b - std::sqrt(h)) / a;
        const double y = baoa + t * bard;
        if (y > 0.0 && y < baba) return t;
        return sphere(y <= 0.0 ? pa : pb);
    }
    // Ray parallel to the axis: only the end caps can be hit first.
    const double ta = sphere(pa), tb = sphere(pb);
    if (ta < 0.0) return tb;
    if (tb < 0.0) return ta;
    return std::min(ta, tb);
}

} // namespace

PoseSpace PoseSpace::rest() {
    PoseSpace s;
    for (Range* r : {&s.finger_abduction, &s.finger_mcp_flex, &s.finger_pip_flex, &s.thumb_abduction,
                     &s.thumb_mcp_flex, &s.thumb_ip_flex, &s.yaw, &s.pitch, &s.roll, &s.root_x, &s.root_y})
        *r = {0.0, 0.0};
    s.root_z = {420.0, 420.0};
    s.bone_scale = {1.0, 1.0};
    s.radius_scale = {1.0, 1.0};
    return s;
}

const std::array<int, kHandJoints>& KinematicHand::joint_nodes() {
    static const std::array<int, kHandJoints> nodes{kPinkyTip, kPinkyMid,  kRingTip,  kRingMid, kMiddleTip,
                                                    kMiddleMid, kIndexTip, kIndexMid, kThumbTip, kThumbMid,
                                                    kThumbBase, kWristR,   kWristL,   kPalm};
    return nodes;
}

HandPose KinematicHand::pose() const {
    HandPose p;
    for (int n : joint_nodes()) p.joints.push_back(nodes[static_cast<std::size_t>(n)]);
    return p;
}

std::vector<int> KinematicHand::capsules_of_joint(int j) const {
    const int node = joint_nodes().at(static_cast<std::size_t>(j));
    std::vector<int> out;
    for (std::size_t c = 0; c < capsules.size(); ++c)
        if (capsules[c].a == node || capsules[c].b == node) out.push_back(static_cast<int>(c));
    return out;
}

KinematicHand sample_pose(std::uint64_t seed, const PoseSpace& space) {
    CounterRng rng(derive_key(seed, 0x706f7365)); // "pose"
    KinematicHand hand;
    auto& ang = hand.angles;

    const double bone_scale = draw(rng, space.bone_scale, ang);
    const double radius_scale = draw(rng, space.radius_scale, ang);
    const double yaw = draw(rng, space.yaw, ang);
    const double pitch = draw(rng, space.pitch, ang);
    const double roll = draw(rng, space.roll, ang);
    const Vec3 root(draw(rng, space.root_x, ang), draw(rng, space.root_y, ang), draw(rng, space.root_z, ang));

    const Eigen::Matrix3d rot = (Eigen::AngleAxisd(deg(yaw), Vec3::UnitZ()) *
                                 Eigen::AngleAxisd(deg(pitch), Vec3::UnitX()) *
                                 Eigen::AngleAxisd(deg(roll), Vec3::UnitY()))
                                    .toRotationMatrix();

    std::array<Vec3, KinematicHand::kNodes> local{};
    hand.parent.fill(kPalm);
    hand.parent[kPalm] = -1;
    local[kPalm] = Vec3::Zero();
    local[kWristL] = Vec3(-22.0, -40.0, 0.0) * bone_scale;
    local[kWristR] = Vec3(22.0, -40.0, 0.0) * bone_scale;
    local[kThumbBase] = Vec3(-25.0, -25.0, -5.0) * bone_scale;

    const Vec3 toward_palm(0.0, 0.0, -1.0);
    for (const FingerGeom& f : fingers()) {
        const double abd = deg(draw(rng, space.finger_abduction, ang));
        const double mcp = deg(draw(rng, space.finger_mcp_flex, ang));
        const double pip = deg(draw(rng, space.finger_pip_flex, ang));
        const Vec3 base_dir(std::sin(abd), std::cos(abd), 0.0);
        const Vec3 d1 = std::cos(mcp) * base_dir + std::sin(mcp) * toward_palm;
        const Vec3 d2 = std::cos(mcp + pip) * base_dir + std::sin(mcp + pip) * toward_palm;
        local[static_cast<std::size_t>(f.mcp)] = f.knuckle * bone_scale;
        local[static_cast<std::size_t>(f.mid)] = local[static_cast<std::size_t>(f.mcp)] + d1 * f.proximal * bone_scale;
        local[static_cast<std::size_t>(f.tip)] = local[static_cast<std::size_t>(f.mid)] + d2 * f.distal * bone_scale;
        hand.parent[static_cast<std::size_t>(f.mid)] = f.mcp;
        hand.parent[static_cast<std::size_t>(f.tip)] = f.mid;
        hand.bone_length[static_cast<std::size_t>(f.mid)] = f.proximal * bone_scale;
        hand.bone_length[static_cast<std::size_t>(f.tip)] = f.distal * bone_scale;
    }

    {
        const double abd = deg(draw(rng, space.thumb_abduction, ang));
        const double mcp = deg(draw(rng, space.thumb_mcp_flex, ang));
        const double ip = deg(draw(rng, space.thumb_ip_flex, ang));
        const Vec3 spread = Vec3(-0.8, 0.6, 0.0).normalized();
        const Vec3 base_dir = std::cos(abd) * spread + std::sin(abd) * Vec3(0.0, 0.0, -1.0);
        // Curl axis: across the palm, orthogonalized against the base direction.
        Vec3 curl = Vec3(0.5, 0.0, -0.866);
        curl = (curl - curl.dot(base_dir) * base_dir).normalized();
        const Vec3 d1 = std::cos(mcp) * base_dir + std::sin(mcp) * curl;
        const Vec3 d2 = std::cos(mcp + ip) * base_dir + std::sin(mcp + ip) * curl;
        local[kThumbMid] = local[kThumbBase] + d1 * 38.0 * bone_scale;
        local[kThumbTip] = local[kThumbMid] + d2 * 30.0 * bone_scale;
        hand.parent[kThumbMid] = kThumbBase;
        hand.parent[kThumbTip] = kThumbMid;
        hand.bone_length[kThumbMid] = 38.0 * bone_scale;
        hand.bone_length[kThumbTip] = 30.0 * bone_scale;
    }

    for (int n = 0; n < KinematicHand::kNodes; ++n) {
        const auto i = static_cast<std::size_t>(n);
        hand.nodes[i] = root + rot * local[i];
        if (hand.parent[i] == kPalm) hand.bone_length[i] = local[i].norm();
    }

    const double rs = radius_scale;
    hand.capsules = {
        {kPalm, kWristL, 16.0 * rs},     {kPalm, kWristR, 16.0 * rs},     {kWristL, kWristR, 14.0 * rs},
        {kPalm, kIndexMcp, 14.0 * rs},   {kPalm, kMiddleMcp, 14.0 * rs},  {kPalm, kRingMcp, 14.0 * rs},
        {kPalm, kPinkyMcp, 14.0 * rs},   {kIndexMcp, kPinkyMcp, 12.0 * rs}, {kPalm, kThumbBase, 14.0 * rs},
        {kThumbBase, kThumbMid, 10.0 * rs}, {kThumbMid, kThumbTip, 9.0 * rs},
    };
    for (const FingerGeom& f : fingers()) {
        hand.capsules.push_back({f.mcp, f.mid, 9.0 * rs});
        hand.capsules.push_back({f.mid, f.tip, 8.0 * rs});
    }
    return hand;
}

void SceneParams::validate() const {
    intrinsics.validate();
    if (!(noise_sigma_mm >= 0.0)) throw UsageError("scene: noise sigma must be non-negative");
    if (!(dropout >= 0.0 && dropout <= 1.0)) throw UsageError("scene: dropout must lie in [0, 1]");
}

RenderResult render_depth(const KinematicHand& hand, const SceneParams& scene, std::uint64_t seed) {
    const CameraIntrinsics& intr = scene.intrinsics;
    scene.validate();
    const int w = intr.width, h = intr.height;
    RenderResult out{DepthImage(w, h), DepthImage(w, h), std::vector<int>(static_cast<std::size_t>(w) * h, -1)};
    std::vector<double> zbuf(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::infinity());

    bool any_in_front = false;
    for (std::size_t ci = 0; ci < hand.capsules.size(); ++ci) {
        const auto& cap = hand.capsules[ci];
        const Vec3& pa = hand.nodes[static_cast<std::size_t>(cap.a)];
        const Vec3& pb = hand.nodes[static_cast<std::size_t>(cap.b)];
        const double r = cap.radius;
        if (std::max(pa.z(), pb.z()) + r <= 0.0) continue;
        any_in_front = true;

        // Pixel bounding box from the projected corners of the capsule's AABB.
        int u0 = 0, u1 = w - 1, v0 = 0, v1 = h - 1;
        if (std::min(pa.z(), pb.z()) - r > 1.0) {
            double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
            const Vec3 lo = pa.cwiseMin(pb) - Vec3::Constant(r);
            const Vec3 hi = pa.cwiseMax(pb) + Vec3::Constant(r);
            for (int corner = 0; corner < 8; ++corner) {
                const Vec3 c((corner & 1) ? hi.x() : lo.x(), (corner & 2) ? hi.y() : lo.y(),
                             (corner & 4) ? hi.z() : lo.z());
                const Vec3 uv = project(c, intr);
                umin = std::min(umin, uv.x());
                umax = std::max(umax, uv.x());
                vmin = std::min(vmin, uv.y());
                vmax = std::max(vmax, uv.y());
            }
            u0 = std::max(0, static_cast<int>(std::floor(umin)));
            u1 = std::min(w - 1, static_cast<int>(std::ceil(umax)));
            v0 = std::max(0, static_cast<int>(std::floor(vmin)));
            v1 = std::min(h - 1, static_cast<int>(std::ceil(vmax)));
        }
        for (int v = v0; v <= v1; ++v) {
            for (int u = u0; u <= u1; ++u) {
                const Vec3 dir = Vec3((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0).normalized();
                const double t = ray_capsule(dir, pa, pb, r);
                if (t <= 0.0) continue;
                const double z = t * dir.z();
                const auto idx = static_cast<std::size_t>(v) * w + u;
                if (z < zbuf[idx]) {
                    zbuf[idx] = z;
                    out.owner[idx] = static_cast<int>(ci);
                }
            }
        }
    }
    if (!any_in_front) throw RenderError("render_depth: hand is behind the camera");

    const std::uint64_t noise_key = derive_key(seed, 0x6e6f697365); // "noise"
    const std::uint64_t drop_key = derive_key(seed, 0x64726f70);    // "drop"
    for (std::size_t i = 0; i < zbuf.size(); ++i) {
        if (out.owner[i] < 0) continue;
        out.clean.mm[i] = static_cast<float>(zbuf[i]);
        CounterRng drop(drop_key, i);
        if (drop.uniform() < scene.dropout) continue;
        double z = zbuf[i];
        if (scene.noise_sigma_mm > 0.0) {
            CounterRng noise(noise_key, 2 * i);
            z += scene.noise_sigma_mm * noise.normal();
        }
        out.depth.mm[i] = static_cast<float>(std::max(z, 1.0));
    }
    return out;
}

std::vector<std::uint8_t> joint_visibility(const KinematicHand& hand, const RenderResult& render,
                                           const CameraIntrinsics& intr) {
    std::vector<std::uint8_t> vis(kHandJoints, 0);
    const HandPose pose = hand.pose();
    for (int j = 0; j < kHandJoints; ++j) {
        const Vec3& p = pose.joints[static_cast<std::size_t>(j)];
        if (!(p.z() > 0.0)) continue;
        const Vec3 uv = project(p, intr);
        const int u = static_cast<int>(std::floor(uv.x() + 0.5));
        const int v = static_cast<int>(std::floor(uv.y() + 0.5));
        if (!render.clean.contains(u, v)) continue;
        const int owner = render.owner[static_cast<std::size_t>(v) * render.clean.width + u];
        const auto caps = hand.capsules_of_joint(j);
        vis[static_cast<std::size_t>(j)] = std::find(caps.begin(), caps.end(), owner) != caps.end() ? 1 : 0;
    }
    return vis;
}

Frame synth_frame(std::uint64_t seed, int index, const SceneParams& scene) {
    Frame f;
    f.id = index;
    f.seed = derive_key(seed, static_cast<std::uint64_t>(index));
    const KinematicHand hand = sample_pose(f.seed, scene.pose_space);
    RenderResult r = render_depth(hand, scene, f.seed);
    f.visible = joint_visibility(hand, r, scene.intrinsics);
    f.depth = std::move(r.depth);
    f.pose = hand.pose();
    return f;
}

Dataset synth_dataset(int n_frames, std::uint64_t seed, const SceneParams& scene, int threads) {
    if (n_frames < 1) throw UsageError("dataset needs at least one frame");
    scene.validate();
    Dataset ds;
    ds.scene = scene;
    ds.seed = seed;
    ds.frames.resize(static_cast<std::size_t>(n_frames));
    parallel_for(n_frames, threads, [&](int i) { ds.frames[static_cast<std::size_t>(i)] = synth_frame(seed, i, scene); });
    return ds;
}

Dataset make_dataset(int n_frames, std::uint64_t seed, const SceneParams& scene, const std::filesystem::path& out_dir,
                     int threads) {
    Dataset ds = synth_dataset(n_frames, seed, scene, threads);
    save_dataset(ds, out_dir);
    return ds;
}

} // namespace awrkit
