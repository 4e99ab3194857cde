#include "awrkit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "awrkit/error.hpp"

namespace awrkit {

using nlohmann::json;

namespace {

void check_sets(const std::vector<HandPose>& preds, const std::vector<HandPose>& gts) {
    if (preds.empty()) throw UsageError("evaluation set is empty");
    if (preds.size() != gts.size())
        throw ShapeError("prediction and ground-truth frame counts differ (" + std::to_string(preds.size()) + " vs " +
                         std::to_string(gts.size()) + ")");
    const std::size_t joints = gts.front().joints.size();
    if (joints == 0) throw ShapeError("poses have no joints");
    for (std::size_t f = 0; f < preds.size(); ++f)
        if (preds[f].joints.size() != joints || gts[f].joints.size() != joints)
            throw ShapeError("frame " + std::to_string(f) + " has a different joint count");
}

// Frames x J Euclidean distances.
std::vector<std::vector<double>> distances(const std::vector<HandPose>& preds, const std::vector<HandPose>& gts) {
    std::vector<std::vector<double>> d(preds.size());
    for (std::size_t f = 0; f < preds.size(); ++f)
        for (std::size_t j = 0; j < gts[f].joints.size(); ++j)
            d[f].push_back((preds[f].joints[j] - gts[f].joints[j]).norm());
    return d;
}

void check_thresholds(const std::vector<double>& t) {
    if (t.empty()) throw UsageError("threshold list is empty");
    if (!std::is_sorted(t.begin(), t.end())) throw UsageError("thresholds must be ascending");
}

std::vector<CurvePoint> curve_from_worst(const std::vector<double>& worst, const std::vector<double>& thresholds) {
    std::vector<CurvePoint> out;
    for (double t : thresholds) {
        const auto good = std::count_if(worst.begin(), worst.end(), [t](double w) { return w <= t; });
        out.push_back({t, worst.empty() ? 0.0 : static_cast<double>(good) / static_cast<double>(worst.size())});
    }
    return out;
}

Stratum stratum(const std::vector<std::vector<double>>& d, const std::vector<std::vector<std::uint8_t>>& vis,
                bool want_visible, const std::vector<double>& thresholds) {
    const std::size_t joints = d.front().size();
    Stratum s;
    std::vector<double> sum(joints, 0.0);
    std::vector<std::size_t> cnt(joints, 0);
    std::vector<double> worst;
    double total = 0.0;
    for (std::size_t f = 0; f < d.size(); ++f) {
        double w = -1.0;
        for (std::size_t j = 0; j < joints; ++j) {
            if ((vis[f][j] != 0) != want_visible) continue;
            sum[j] += d[f][j];
            ++cnt[j];
            total += d[f][j];
            w = std::max(w, d[f][j]);
        }
        if (w >= 0.0) worst.push_back(w);
    }
    for (std::size_t j = 0; j < joints; ++j)
        s.per_joint_mean_mm.push_back(cnt[j] ? sum[j] / static_cast<double>(cnt[j])
                                             : std::numeric_limits<double>::quiet_NaN());
    for (std::size_t c : cnt) s.joint_count += c;
    s.all_joint_mean_mm = s.joint_count ? total / static_cast<double>(s.joint_count)
                                        : std::numeric_limits<double>::quiet_NaN();
    s.frame_count = worst.size();
    s.good_frame_curve = curve_from_worst(worst, thresholds);
    return s;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json curve_json(const std::vector<CurvePoint>& c) {
    json a = json::array();
    for (const auto& p : c) a.push_back({p.threshold_mm, p.fraction});
    return a;
}

json means_json(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(number_or_null(x));
    return a;
}

json stratum_json(const Stratum& s) {
    return {{"per_joint_mean_mm", means_json(s.per_joint_mean_mm)},
            {"all_joint_mean_mm", number_or_null(s.all_joint_mean_mm)},
            {"joint_count", s.joint_count},
            {"frame_count", s.frame_count},
            {"good_frame_curve", curve_json(s.good_frame_curve)}};
}

json result_json(const EvalResult& r) {
    json j = {{"n_frames", r.n_frames},
              {"all_joint_mean_mm", r.all_joint_mean_mm},
              {"per_joint_mean_mm", means_json(r.per_joint_mean_mm)},
              {"good_frame_curve", curve_json(r.good_frame_curve)}};
    if (r.has_strata) j["stratified"] = {{"visible", stratum_json(r.visible)}, {"occluded", stratum_json(r.occluded)}};
    return j;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

} // namespace

JointErrors mean_joint_error(const std::vector<HandPose>& preds, const std::vector<HandPose>& gts) {
    check_sets(preds, gts);
    const auto d = distances(preds, gts);
    const std::size_t joints = d.front().size();
    JointErrors out;
    out.per_joint_mean_mm.assign(joints, 0.0);
    double total = 0.0;
    for (const auto& row : d)
        for (std::size_t j = 0; j < joints; ++j) {
            out.per_joint_mean_mm[j] += row[j];
            total += row[j];
        }
    const auto frames = static_cast<double>(d.size());
    for (double& m : out.per_joint_mean_mm) m /= frames;
    out.all_joint_mean_mm = total / (frames * static_cast<double>(joints));
    return out;
}

std::vector<CurvePoint> good_frame_curve(const std::vector<HandPose>& preds, const std::vector<HandPose>& gts,
                                         const std::vector<double>& thresholds) {
    check_thresholds(thresholds);
    check_sets(preds, gts);
    std::vector<double> worst;
    for (const auto& row : distances(preds, gts)) worst.push_back(*std::max_element(row.begin(), row.end()));
    return curve_from_worst(worst, thresholds);
}

std::vector<double> default_thresholds() {
    std::vector<double> t;
    for (int mm = 0; mm <= 80; mm += 2) t.push_back(mm);
    return t;
}

EvalResult evaluate(const std::vector<HandPose>& preds, const std::vector<HandPose>& gts,
                    const std::vector<std::vector<std::uint8_t>>& visibility, const std::vector<double>& thresholds) {
    const JointErrors e = mean_joint_error(preds, gts);
    EvalResult r;
    r.per_joint_mean_mm = e.per_joint_mean_mm;
    r.all_joint_mean_mm = e.all_joint_mean_mm;
    r.good_frame_curve = good_frame_curve(preds, gts, thresholds);
    r.n_frames = preds.size();
    if (!visibility.empty()) {
        if (visibility.size() != preds.size()) throw ShapeError("visibility frame count differs from predictions");
        for (const auto& v : visibility)
            if (v.size() != e.per_joint_mean_mm.size()) throw ShapeError("visibility joint count differs");
        const auto d = distances(preds, gts);
        r.has_strata = true;
        r.visible = stratum(d, visibility, true, thresholds);
        r.occluded = stratum(d, visibility, false, thresholds);
    }
    return r;
}

std::string eval_result_json(const EvalResult& r) { return result_json(r).dump(2) + "\n"; }

std::string curve_csv(const std::vector<CurvePoint>& curve) {
    std::string out = "threshold_mm,fraction\n";
    for (const auto& p : curve) out += fmt(p.threshold_mm) + "," + fmt(p.fraction) + "\n";
    return out;
}

Report compare_report(std::vector<std::pair<std::string, EvalResult>> runs) {
    if (runs.empty()) throw UsageError("compare_report: no runs");
    std::sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < runs.size(); ++i)
        if (runs[i].first == runs[i - 1].first) throw UsageError("compare_report: duplicate run name '" + runs[i].first + "'");

    Report rep;
    rep.table = "run,all_joint_mean_mm\n";
    for (const auto& [name, r] : runs) rep.table += name + "," + fmt(r.all_joint_mean_mm) + "\n";

    rep.curves_csv = "threshold_mm";
    for (const auto& run : runs) rep.curves_csv += "," + run.first;
    rep.curves_csv += "\n";
    const auto& grid = runs.front().second.good_frame_curve;
    for (std::size_t t = 0; t < grid.size(); ++t) {
        rep.curves_csv += fmt(grid[t].threshold_mm);
        for (const auto& run : runs) {
            const auto& c = run.second.good_frame_curve;
            if (c.size() != grid.size() || c[t].threshold_mm != grid[t].threshold_mm)
                throw UsageError("compare_report: runs use different threshold grids");
            rep.curves_csv += "," + fmt(c[t].fraction);
        }
        rep.curves_csv += "\n";
    }

    json doc = json::object();
    json list = json::array();
    for (const auto& [name, r] : runs) list.push_back({{"name", name}, {"result", result_json(r)}});
    doc["runs"] = list;
    rep.json = doc.dump(2) + "\n";
    return rep;
}

} // namespace awrkit
