#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fpp/geometry.hpp"

namespace fpp {

// n . x = offset (n unit, offset mm). Infinite plate unless bounded.
struct PlanePrim {
    Eigen::Vector3d normal{0, 0, 1};
    double offset = 0;
    // Optional axis-aligned bounds in world x/y (mm); NaN = unbounded.
    double xmin = std::numeric_limits<double>::quiet_NaN();
    double xmax = std::numeric_limits<double>::quiet_NaN();
    double ymin = std::numeric_limits<double>::quiet_NaN();
    double ymax = std::numeric_limits<double>::quiet_NaN();
};

struct SpherePrim {
    Eigen::Vector3d center{0, 0, 0};
    double radius = 1;
};

// z(x, y) sampled on a regular grid, bilinear between samples. Rays are
// marched and the bracketed root refined by bisection to 1e-9 mm.
struct HeightFieldPrim {
    double x0 = 0, y0 = 0;  // grid origin, mm
    double dx = 1, dy = 1;  // sample spacing, mm
    int nx = 0, ny = 0;
    std::vector<double> z;  // row-major, ny rows of nx

    double sample(double x, double y) const;  // bilinear; caller keeps (x,y) in range
    bool in_domain(double x, double y) const;
};

using Primitive = std::variant<PlanePrim, SpherePrim, HeightFieldPrim>;

// Smooth low-frequency reflectivity: base + sum of a few plane waves in
// world (x, y). Guarded so A + B <= 1 holds everywhere.
struct ReflectivityField {
    double base = 0.5;
    struct Wave {
        double fx = 0, fy = 0;  // cycles/mm
        double amp = 0;
        double phase = 0;
    };
    std::vector<Wave> waves;

    double eval(double x, double y) const;
    double max_amplitude() const;  // base + sum |amp|
    double min_amplitude() const;  // base - sum |amp|
};

struct NoiseModel {
    double sigma = 0.005;   // additive Gaussian, normalized intensity units
    bool quantize8 = true;  // round to 256 levels after clamping to [0,1]
};

struct Scene {
    std::vector<Primitive> primitives;
    ReflectivityField albedo_a;  // average intensity A(x,y)
    ReflectivityField albedo_b;  // amplitude intensity B(x,y)
    NoiseModel noise;

    void validate() const;  // at least one primitive, A+B <= 1
};

struct Hit {
    double t = 0;  // ray parameter, mm
    Eigen::Vector3d point;
    int prim_index = -1;
};

// Nearest intersection with t > t_min, or nullopt.
std::optional<Hit> intersect_scene(const Ray& ray, const Scene& scene, double t_min = 1e-6);

// True when the open segment from `point` toward `target` is blocked.
bool segment_occluded(const Eigen::Vector3d& point, const Eigen::Vector3d& target,
                      const Scene& scene);

void save_scene(const std::string& path, const Scene& scene);
Scene load_scene(const std::string& path);

// Constant-albedo helper used all over the tests.
Scene make_plane_scene(double z_mm, double a = 0.5, double b = 0.35);

}  // namespace fpp
