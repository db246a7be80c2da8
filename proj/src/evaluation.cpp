#include "fpp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace fpp {

using Eigen::Matrix4d;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::Vector4d;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

struct RawFit {
    Vector3d center;
    double radius;
    double condition;
};

// |p|^2 - 2 c.p - (r^2 - |c|^2) = 0 is linear in (c, r^2 - |c|^2).
RawFit algebraic_sphere(const std::vector<Vector3d>& pts) {
    MatrixXd A(pts.size(), 4);
    VectorXd b(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) {
        A.row(i) << 2 * pts[i].x(), 2 * pts[i].y(), 2 * pts[i].z(), 1.0;
        b(i) = pts[i].squaredNorm();
    }
    Eigen::JacobiSVD<MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(3);
    if (!(smin > smax * 1e-10)) throw std::runtime_error("rank deficient");
    const Vector4d th = svd.solve(b);
    RawFit f;
    f.center = th.head<3>();
    const double r2 = th(3) + f.center.squaredNorm();
    if (!(r2 > 0)) throw std::runtime_error("rank deficient");
    f.radius = std::sqrt(r2);
    f.condition = smax / smin;
    return f;
}

void gauss_newton(const std::vector<Vector3d>& pts, Vector3d& c, double& r) {
    for (int it = 0; it < 5; ++it) {
        Matrix4d JtJ = Matrix4d::Zero();
        Vector4d Jtr = Vector4d::Zero();
        for (const auto& p : pts) {
            const Vector3d d = p - c;
            const double n = d.norm();
            if (n < 1e-12) continue;
            Vector4d J;
            J << -d.x() / n, -d.y() / n, -d.z() / n, -1.0;
            const double res = n - r;
            JtJ += J * J.transpose();
            Jtr += J * res;
        }
        const Vector4d step = JtJ.ldlt().solve(-Jtr);
        if (!step.allFinite()) break;
        c += step.head<3>();
        r += step(3);
    }
}

double rms_of(const std::vector<Vector3d>& pts, const Vector3d& c, double r) {
    double s = 0;
    for (const auto& p : pts) {
        const double res = (p - c).norm() - r;
        s += res * res;
    }
    return std::sqrt(s / pts.size());
}

SphereFit fit_points(const std::vector<Vector3d>& pts) {
    RawFit raw = algebraic_sphere(pts);
    gauss_newton(pts, raw.center, raw.radius);
    if (!(raw.radius > 0)) throw std::runtime_error("rank deficient");
    SphereFit f;
    f.center = raw.center;
    f.radius = raw.radius;
    f.rms = rms_of(pts, raw.center, raw.radius);
    f.inliers = int(pts.size());
    f.condition = raw.condition;
    return f;
}

}  // namespace

SphereFit fit_sphere(const std::vector<Vector3d>& points, bool mad_trim) {
    if (points.size() < 10) throw std::runtime_error("sphere fit: needs at least 10 points");
    SphereFit fit = fit_points(points);
    if (!mad_trim) return fit;

    // Trim/refit until the kept set stabilizes: a contaminated initial fit
    // trims asymmetrically, so a single pass leaves residual bias.
    std::vector<Vector3d> kept = points;
    for (int round = 0; round < 10; ++round) {
        std::vector<double> res(kept.size());
        for (size_t i = 0; i < kept.size(); ++i)
            res[i] = (kept[i] - fit.center).norm() - fit.radius;
        std::vector<double> tmp = res;
        const auto mid = tmp.begin() + tmp.size() / 2;
        std::nth_element(tmp.begin(), mid, tmp.end());
        const double med = *mid;
        for (double& v : tmp) v = std::fabs(v - med);
        std::nth_element(tmp.begin(), mid, tmp.end());
        const double sigma = 1.4826 * *mid;

        std::vector<Vector3d> next;
        next.reserve(kept.size());
        for (size_t i = 0; i < kept.size(); ++i)
            if (std::fabs(res[i] - med) <= 3 * sigma + 1e-12) next.push_back(kept[i]);
        if (next.size() < 10) throw std::runtime_error("sphere fit: trim left too few points");
        const bool stable = next.size() == kept.size();
        kept.swap(next);
        fit = fit_points(kept);
        if (stable) break;
    }
    return fit;
}

SpherePairReport sphere_pair_report(const std::vector<Vector3d>& cloud1,
                                    const std::vector<Vector3d>& cloud2,
                                    const SpherePairTruth& truth, bool mad_trim) {
    if (truth.radii.size() != 2)
        throw std::runtime_error("sphere pair: ground truth needs exactly two radii");
    SpherePairReport r;
    r.fit1 = fit_sphere(cloud1, mad_trim);
    r.fit2 = fit_sphere(cloud2, mad_trim);
    r.center_distance = (r.fit1.center - r.fit2.center).norm();
    r.r1_deviation = r.fit1.radius - truth.radii[0];
    r.r2_deviation = r.fit2.radius - truth.radii[1];
    r.distance_deviation = r.center_distance - truth.center_distance;
    return r;
}

OrderErrorStats order_error_rate(const OrderMap& pred, const OrderMap& truth) {
    if (!truth.k.same_size(pred.k) || !truth.mask.same_size(pred.mask))
        throw std::runtime_error("order error: map dimensions mismatched");
    OrderErrorStats st;
    for (int y = 0; y < truth.k.height; ++y)
        for (int x = 0; x < truth.k.width; ++x) {
            if (!truth.mask.at(x, y)) continue;
            ++st.total;
            if (!pred.mask.at(x, y)) continue;
            ++st.decided;
            if (pred.k.at(x, y) != truth.k.at(x, y)) ++st.wrong;
        }
    if (st.total == 0) throw std::runtime_error("order error: empty joint mask");
    st.rate = st.decided ? double(st.wrong) / double(st.decided) : 0.0;
    st.undecided_fraction = double(st.total - st.decided) / double(st.total);
    return st;
}

ErrorMaps phase_and_depth_errors(const ImageD& pred_phi, const ImageD& truth_phi,
                                 const ImageD& pred_depth, const ImageD& truth_depth,
                                 const MaskImage& mask) {
    if (!pred_phi.same_size(truth_phi) || !pred_phi.same_size(pred_depth) ||
        !pred_phi.same_size(truth_depth) || !pred_phi.same_size(mask))
        throw std::runtime_error("error maps: dimensions mismatched");
    ErrorMaps em;
    em.phase_error = ImageD(mask.width, mask.height, 1, 0.0);
    em.depth_error = ImageD(mask.width, mask.height, 1, 0.0);
    double sp = 0, sd = 0;
    size_t n = 0;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            const double ep = pred_phi.at(x, y) - truth_phi.at(x, y);
            const double ed = pred_depth.at(x, y) - truth_depth.at(x, y);
            em.phase_error.at(x, y) = ep;
            em.depth_error.at(x, y) = ed;
            sp += ep * ep;
            sd += ed * ed;
            ++n;
        }
    if (n == 0) throw std::runtime_error("error maps: empty mask");
    em.phase_rmse = std::sqrt(sp / n);
    em.depth_rmse = std::sqrt(sd / n);
    return em;
}

// --- report serialization -------------------------------------------------------

namespace {

json fit_to_json(const SphereFit& f) {
    return {{"center", {f.center.x(), f.center.y(), f.center.z()}},
            {"radius", f.radius},
            {"rms", f.rms},
            {"inliers", f.inliers},
            {"condition", f.condition}};
}

SphereFit fit_from_json(const json& j) {
    SphereFit f;
    const auto& c = j.at("center");
    f.center = Vector3d(c.at(0), c.at(1), c.at(2));
    f.radius = j.at("radius");
    f.rms = j.at("rms");
    f.inliers = j.at("inliers");
    f.condition = j.at("condition");
    return f;
}

json orders_to_json(const OrderErrorStats& s) {
    return {{"rate", s.rate},
            {"wrong", s.wrong},
            {"decided", s.decided},
            {"total", s.total},
            {"undecided_fraction", s.undecided_fraction}};
}

OrderErrorStats orders_from_json(const json& j) {
    OrderErrorStats s;
    s.rate = j.at("rate");
    s.wrong = j.at("wrong");
    s.decided = j.at("decided");
    s.total = j.at("total");
    s.undecided_fraction = j.at("undecided_fraction");
    return s;
}

}  // namespace

void save_report(const std::string& path, const EvaluationReport& r) {
    json j;
    j["scene"] = r.scene;
    j["retrieval_method"] = r.retrieval_method;
    j["unwrap_method"] = r.unwrap_method;
    j["views"] = r.views;
    if (r.orders) j["orders"] = orders_to_json(*r.orders);
    if (r.phase_rmse) j["phase_rmse"] = *r.phase_rmse;
    if (r.depth_rmse) j["depth_rmse"] = *r.depth_rmse;
    if (!r.phase_error_path.empty()) j["phase_error_map"] = r.phase_error_path;
    if (!r.depth_error_path.empty()) j["depth_error_map"] = r.depth_error_path;
    if (r.spheres) {
        j["spheres"] = {{"fit1", fit_to_json(r.spheres->fit1)},
                        {"fit2", fit_to_json(r.spheres->fit2)},
                        {"center_distance", r.spheres->center_distance},
                        {"r1_deviation", r.spheres->r1_deviation},
                        {"r2_deviation", r.spheres->r2_deviation},
                        {"distance_deviation", r.spheres->distance_deviation}};
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("report: cannot write " + path);
    f << j.dump(2) << "\n";
}

EvaluationReport load_report(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("report: cannot open " + path);
    json j = json::parse(f);
    EvaluationReport r;
    r.scene = j.at("scene");
    r.retrieval_method = j.at("retrieval_method");
    r.unwrap_method = j.at("unwrap_method");
    r.views = j.at("views");
    if (j.contains("orders")) r.orders = orders_from_json(j.at("orders"));
    if (j.contains("phase_rmse")) r.phase_rmse = double(j.at("phase_rmse"));
    if (j.contains("depth_rmse")) r.depth_rmse = double(j.at("depth_rmse"));
    if (j.contains("phase_error_map")) r.phase_error_path = j.at("phase_error_map");
    if (j.contains("depth_error_map")) r.depth_error_path = j.at("depth_error_map");
    if (j.contains("spheres")) {
        const auto& s = j.at("spheres");
        SpherePairReport sp;
        sp.fit1 = fit_from_json(s.at("fit1"));
        sp.fit2 = fit_from_json(s.at("fit2"));
        sp.center_distance = s.at("center_distance");
        sp.r1_deviation = s.at("r1_deviation");
        sp.r2_deviation = s.at("r2_deviation");
        sp.distance_deviation = s.at("distance_deviation");
        r.spheres = sp;
    }
    return r;
}

}  // namespace fpp
