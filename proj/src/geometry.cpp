#include "fpp/geometry.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "fpp/rng.hpp"

namespace fpp {

using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;
using nlohmann::json;

RigidTransform RigidTransform::axis_angle(const Vector3d& axis, double angle,
                                          const Vector3d& translation) {
    RigidTransform tf;
    tf.R = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
    tf.t = translation;
    return tf;
}

void CameraModel::validate() const {
    if (!(fx > 0) || !(fy > 0)) throw std::runtime_error("camera: focal lengths must be positive");
    if (cx < 0 || cx >= width || cy < 0 || cy >= height)
        throw std::runtime_error("camera: principal point outside sensor");
    for (double d : {k1, k2, k3, p1, p2})
        if (!std::isfinite(d)) throw std::runtime_error("camera: non-finite distortion");
    if (pose.orthonormality_error() > 1e-9)
        throw std::runtime_error("camera: rotation not orthonormal");
}

void ProjectorModel::validate() const {
    cam.validate();
    if (periods < 1) throw std::runtime_error("projector: periods must be >= 1");
}

Vector2d distort_normalized(const CameraModel& cam, const Vector2d& xy) {
    const double x = xy.x(), y = xy.y();
    const double r2 = x * x + y * y;
    const double radial = 1.0 + r2 * (cam.k1 + r2 * (cam.k2 + r2 * cam.k3));
    const double xd = x * radial + 2.0 * cam.p1 * x * y + cam.p2 * (r2 + 2.0 * x * x);
    const double yd = y * radial + cam.p1 * (r2 + 2.0 * y * y) + 2.0 * cam.p2 * x * y;
    return {xd, yd};
}

Vector2d undistort_normalized(const CameraModel& cam, const Vector2d& xy_dist) {
    // Fixed point: x <- xd - (distort(x) - x). Converges for calibration-range
    // coefficients; the threshold is measured in pixels.
    Vector2d x = xy_dist;
    const double tol = 1e-12;
    for (int it = 0; it < 20; ++it) {
        Vector2d err = distort_normalized(cam, x) - xy_dist;
        x -= err;
        if (std::abs(err.x() * cam.fx) < tol && std::abs(err.y() * cam.fy) < tol) return x;
    }
    Vector2d err = distort_normalized(cam, x) - xy_dist;
    if (std::abs(err.x() * cam.fx) < tol && std::abs(err.y() * cam.fy) < tol) return x;
    throw std::runtime_error("undistort divergence");
}

Vector2d project(const Vector3d& point, const CameraModel& cam) {
    const Vector3d pc = cam.pose.apply(point);
    if (!(pc.z() > 0.0)) throw std::runtime_error("behind camera");
    const Vector2d xy(pc.x() / pc.z(), pc.y() / pc.z());
    const Vector2d xyd = distort_normalized(cam, xy);
    return {cam.fx * xyd.x() + cam.cx, cam.fy * xyd.y() + cam.cy};
}

Ray backproject_ray(const Vector2d& pixel, const CameraModel& cam) {
    const Vector2d xyd((pixel.x() - cam.cx) / cam.fx, (pixel.y() - cam.cy) / cam.fy);
    const Vector2d xy = undistort_normalized(cam, xyd);
    const RigidTransform inv = cam.pose.inverse();
    const Vector3d dir_world = inv.R * Vector3d(xy.x(), xy.y(), 1.0);
    return {inv.t, dir_world.normalized()};
}

double phase_to_projector_column(double phase, const ProjectorModel& proj) {
    const double span = 2.0 * M_PI * proj.periods;
    if (phase < 0.0 || phase > span) throw std::runtime_error("phase out of projector range");
    return phase * proj.axis_extent() / span;
}

double projector_column_to_phase(double column, const ProjectorModel& proj) {
    return column * 2.0 * M_PI * proj.periods / proj.axis_extent();
}

double projector_phase_at(const Vector3d& point, const ProjectorModel& proj) {
    const Vector3d pp = proj.cam.pose.apply(point);
    if (!(pp.z() > 0.0)) throw std::runtime_error("behind camera");
    double coord;
    if (proj.axis == FringeAxis::X)
        coord = proj.cam.fx * (pp.x() / pp.z()) + proj.cam.cx;
    else
        coord = proj.cam.fy * (pp.y() / pp.z()) + proj.cam.cy;
    return projector_column_to_phase(coord, proj);
}

TriangulationCP intersect_column_plane(const Ray& ray, double u_p, const ProjectorModel& proj,
                                       const RigidTransform& proj_to_world) {
    // Column u_p sweeps the plane { X/Z = x_hat } (or Y/Z for axis Y) through
    // the projector center; normal expressed in projector frame, then world.
    Vector3d n_proj;
    if (proj.axis == FringeAxis::X) {
        const double x_hat = (u_p - proj.cam.cx) / proj.cam.fx;
        n_proj = Vector3d(1.0, 0.0, -x_hat);
    } else {
        const double y_hat = (u_p - proj.cam.cy) / proj.cam.fy;
        n_proj = Vector3d(0.0, 1.0, -y_hat);
    }
    const Vector3d n = (proj_to_world.R * n_proj).normalized();
    const Vector3d plane_point = proj_to_world.t;  // projector center lies on the plane

    const double denom = n.dot(ray.direction);
    if (std::abs(denom) < 1e-12) throw std::runtime_error("degenerate intersection");
    const double s = n.dot(plane_point - ray.origin) / denom;
    const Vector3d point = ray.origin + s * ray.direction;
    return {point, std::abs(n.dot(point - plane_point))};
}

TriangulationCP triangulate_camera_projector(const Vector2d& pixel, const CameraModel& cam,
                                             double u_p, const ProjectorModel& proj) {
    return intersect_column_plane(backproject_ray(pixel, cam), u_p, proj,
                                  proj.cam.pose.inverse());
}

TriangulationTV triangulate_two_view(const Vector2d& p1, const CameraModel& cam1,
                                     const Vector2d& p2, const CameraModel& cam2) {
    const Ray r1 = backproject_ray(p1, cam1);
    const Ray r2 = backproject_ray(p2, cam2);

    const double angle = std::acos(std::clamp(r1.direction.dot(r2.direction), -1.0, 1.0));
    if (angle < 1e-6 || M_PI - angle < 1e-6) throw std::runtime_error("degenerate baseline");

    // Closest points on the two rays: solve the 2x2 normal equations.
    const Vector3d w0 = r1.origin - r2.origin;
    const double a = r1.direction.dot(r1.direction);
    const double b = r1.direction.dot(r2.direction);
    const double c = r2.direction.dot(r2.direction);
    const double d = r1.direction.dot(w0);
    const double e = r2.direction.dot(w0);
    const double den = a * c - b * b;
    const double s = (b * e - c * d) / den;
    const double t = (a * e - b * d) / den;
    const Vector3d point = 0.5 * ((r1.origin + s * r1.direction) + (r2.origin + t * r2.direction));

    double resid = 0.0;
    resid += (project(point, cam1) - p1).norm();
    resid += (project(point, cam2) - p2).norm();
    return {point, 0.5 * resid};
}

// --- rig JSON ----------------------------------------------------------------

namespace {

json camera_to_json(const CameraModel& c) {
    json j;
    j["fx"] = c.fx;
    j["fy"] = c.fy;
    j["cx"] = c.cx;
    j["cy"] = c.cy;
    j["k1"] = c.k1;
    j["k2"] = c.k2;
    j["k3"] = c.k3;
    j["p1"] = c.p1;
    j["p2"] = c.p2;
    j["width"] = c.width;
    j["height"] = c.height;
    std::vector<double> rot(9);
    for (int r = 0; r < 3; ++r)
        for (int col = 0; col < 3; ++col) rot[r * 3 + col] = c.pose.R(r, col);
    j["rotation"] = rot;
    j["translation"] = std::vector<double>{c.pose.t.x(), c.pose.t.y(), c.pose.t.z()};
    return j;
}

CameraModel camera_from_json(const json& j) {
    CameraModel c;
    c.fx = j.at("fx");
    c.fy = j.at("fy");
    c.cx = j.at("cx");
    c.cy = j.at("cy");
    c.k1 = j.value("k1", 0.0);
    c.k2 = j.value("k2", 0.0);
    c.k3 = j.value("k3", 0.0);
    c.p1 = j.value("p1", 0.0);
    c.p2 = j.value("p2", 0.0);
    c.width = j.at("width");
    c.height = j.at("height");
    const auto rot = j.at("rotation").get<std::vector<double>>();
    const auto tr = j.at("translation").get<std::vector<double>>();
    if (rot.size() != 9 || tr.size() != 3)
        throw std::runtime_error("rig: rotation must be 9 doubles, translation 3");
    for (int r = 0; r < 3; ++r)
        for (int col = 0; col < 3; ++col) c.pose.R(r, col) = rot[r * 3 + col];
    c.pose.t = Vector3d(tr[0], tr[1], tr[2]);
    c.validate();
    return c;
}

}  // namespace

void save_rig(const std::string& path, const Rig& rig) {
    json j;
    j["cameras"] = json::array();
    for (const auto& c : rig.cameras) j["cameras"].push_back(camera_to_json(c));
    j["projector"] = camera_to_json(rig.projector.cam);
    j["projector"]["fringe_axis"] = rig.projector.axis == FringeAxis::X ? "x" : "y";
    j["projector"]["periods"] = rig.projector.periods;
    j["volume_zmin"] = rig.volume_zmin;
    j["volume_zmax"] = rig.volume_zmax;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_rig: cannot open " + path);
    out << j.dump(2) << "\n";
}

Rig load_rig(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_rig: cannot open " + path);
    json j;
    in >> j;
    Rig rig;
    for (const auto& jc : j.at("cameras")) rig.cameras.push_back(camera_from_json(jc));
    if (rig.cameras.empty()) throw std::runtime_error("rig: needs at least one camera");
    rig.projector.cam = camera_from_json(j.at("projector"));
    const std::string ax = j.at("projector").value("fringe_axis", "x");
    rig.projector.axis = ax == "y" ? FringeAxis::Y : FringeAxis::X;
    rig.projector.periods = j.at("projector").at("periods");
    rig.volume_zmin = j.value("volume_zmin", -150.0);
    rig.volume_zmax = j.value("volume_zmax", 150.0);
    rig.projector.validate();
    return rig;
}

Rig jitter_rig(const Rig& rig, double rot_deg, double trans_mm, uint64_t seed) {
    Rng rng(seed);
    Rig out = rig;
    auto perturb = [&](RigidTransform& pose) {
        Vector3d axis(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        if (axis.norm() < 1e-9) axis = Vector3d(0, 0, 1);
        const double angle = rng.uniform(-1, 1) * rot_deg * M_PI / 180.0;
        RigidTransform delta;
        delta.R = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
        delta.t = Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)) * trans_mm;
        pose = delta.compose(pose);
    };
    for (size_t i = 1; i < out.cameras.size(); ++i) perturb(out.cameras[i].pose);
    perturb(out.projector.cam.pose);
    return out;
}

}  // namespace fpp
