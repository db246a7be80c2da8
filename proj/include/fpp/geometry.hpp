#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace fpp {

// World -> device transform: x_dev = R * x_world + t. Units: mm.
struct RigidTransform {
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d t = Eigen::Vector3d::Zero();

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return R * p + t; }

    RigidTransform inverse() const { return {R.transpose(), -(R.transpose() * t)}; }

    // this ∘ other: applies `other` first.
    RigidTransform compose(const RigidTransform& other) const {
        return {R * other.R, R * other.t + t};
    }

    // max |R^T R - I|, used by validity checks (threshold 1e-9)
    double orthonormality_error() const {
        return (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    }

    static RigidTransform identity() { return {}; }
    // Rotation about an axis (unit vector), angle in radians, then translate.
    static RigidTransform axis_angle(const Eigen::Vector3d& axis, double angle,
                                     const Eigen::Vector3d& translation);
};

struct Ray {
    Eigen::Vector3d origin;     // mm, world frame
    Eigen::Vector3d direction;  // unit
};

// Pinhole camera with Brown-Conrady distortion (k1,k2,k3 radial; p1,p2
// tangential), matching the usual calibration-toolbox convention.
struct CameraModel {
    double fx = 0, fy = 0;  // focal lengths, px
    double cx = 0, cy = 0;  // principal point, px
    double k1 = 0, k2 = 0, k3 = 0;
    double p1 = 0, p2 = 0;
    int width = 0, height = 0;
    RigidTransform pose;  // world -> camera

    Eigen::Vector3d center() const { return pose.inverse().t; }
    bool in_bounds(const Eigen::Vector2d& px, double margin = 0.0) const {
        return px.x() >= margin && px.x() <= width - 1 - margin && px.y() >= margin &&
               px.y() <= height - 1 - margin;
    }
    void validate() const;  // throws on broken invariants
};

enum class FringeAxis { X, Y };

// The projector is modeled as an inverse camera. The projected sinusoid
// completes `periods` cycles across the panel along `axis`; its phase is
// linear in the undistorted panel coordinate.
struct ProjectorModel {
    CameraModel cam;
    FringeAxis axis = FringeAxis::X;
    int periods = 1;  // K

    double axis_extent() const {
        return axis == FringeAxis::X ? static_cast<double>(cam.width)
                                     : static_cast<double>(cam.height);
    }
    void validate() const;
};

// --- distortion -------------------------------------------------------------

// Normalized (x, y) -> distorted normalized coordinates.
Eigen::Vector2d distort_normalized(const CameraModel& cam, const Eigen::Vector2d& xy);

// Inverse of distort_normalized by fixed-point iteration; throws
// "undistort divergence" if 20 iterations do not reach 1e-12 px.
Eigen::Vector2d undistort_normalized(const CameraModel& cam, const Eigen::Vector2d& xy_dist);

// --- projection -------------------------------------------------------------

// World point (mm) -> fractional pixel. Throws "behind camera" when the
// camera-frame z is not positive. May return out-of-sensor coordinates.
Eigen::Vector2d project(const Eigen::Vector3d& point, const CameraModel& cam);

// Pixel -> world-frame ray through the camera center (undistorts first).
Ray backproject_ray(const Eigen::Vector2d& pixel, const CameraModel& cam);

// --- projector phase --------------------------------------------------------

// Absolute phase [0, 2*pi*K] -> undistorted panel coordinate along the
// fringe axis. Strictly increasing; throws outside the phase range.
double phase_to_projector_column(double phase, const ProjectorModel& proj);
double projector_column_to_phase(double column, const ProjectorModel& proj);

// Absolute phase the projector paints onto a world point (undistorted
// pinhole coordinate along the fringe axis, scaled to [0, 2*pi*K]).
double projector_phase_at(const Eigen::Vector3d& point, const ProjectorModel& proj);

// --- triangulation ----------------------------------------------------------

struct TriangulationCP {
    Eigen::Vector3d point;  // mm, world
    double residual_mm;     // point-to-column-plane distance
};

// Intersects the camera ray with the plane swept by projector column u_p.
TriangulationCP triangulate_camera_projector(const Eigen::Vector2d& pixel,
                                             const CameraModel& cam, double u_p,
                                             const ProjectorModel& proj);

// Same intersection with the ray and projector->world transform precomputed
// (the candidate search calls this K times per pixel).
TriangulationCP intersect_column_plane(const Ray& ray, double u_p, const ProjectorModel& proj,
                                       const RigidTransform& proj_to_world);

struct TriangulationTV {
    Eigen::Vector3d point;  // mm, world
    double residual_px;     // mean reprojection error over both views
};

// Midpoint of the common perpendicular of the two back-projected rays.
TriangulationTV triangulate_two_view(const Eigen::Vector2d& p1, const CameraModel& cam1,
                                     const Eigen::Vector2d& p2, const CameraModel& cam2);

// --- rig --------------------------------------------------------------------

struct Rig {
    std::vector<CameraModel> cameras;  // index 0 is Camera 1 == world anchor
    ProjectorModel projector;
    // Declared measurement volume along world z (mm). Unwrapping searches
    // this band when nothing tighter is known.
    double volume_zmin = -150.0;
    double volume_zmax = 150.0;
};

// Calibration file round trip (JSON; rotation as 9 row-major doubles,
// translation as 3 doubles in mm -- see README for the exact schema).
void save_rig(const std::string& path, const Rig& rig);
Rig load_rig(const std::string& path);

// Perturbation harness: jitters every extrinsic except camera 1 (the world
// anchor) by up to rot_deg degrees / trans_mm millimetres.
Rig jitter_rig(const Rig& rig, double rot_deg, double trans_mm, uint64_t seed);

}  // namespace fpp
