#include <doctest.h>

#include <cmath>

#include "fpp/rng.hpp"
#include "fpp/scene.hpp"

using namespace fpp;
using Eigen::Vector3d;

TEST_CASE("plane intersection matches the closed form") {
    Scene scene = make_plane_scene(30.0);
    Ray ray{Vector3d(5, -3, -500), Vector3d(0.1, 0.05, 1).normalized()};
    auto hit = intersect_scene(ray, scene);
    REQUIRE(hit.has_value());
    CHECK(hit->point.z() == doctest::Approx(30.0).epsilon(1e-12));
    double t_expect = (30.0 - ray.origin.z()) / ray.direction.z();
    CHECK(hit->t == doctest::Approx(t_expect).epsilon(1e-12));
    CHECK(hit->prim_index == 0);

    // parallel ray misses
    Ray par{Vector3d(0, 0, -500), Vector3d(1, 0, 0)};
    CHECK_FALSE(intersect_scene(par, scene).has_value());
}

TEST_CASE("bounded planes clip to their rectangle") {
    Scene scene;
    PlanePrim p;
    p.offset = 0;
    p.xmin = -10;
    p.xmax = 10;
    p.ymin = -5;
    p.ymax = 5;
    scene.primitives.push_back(p);

    Ray inside{Vector3d(3, 2, -100), Vector3d(0, 0, 1)};
    CHECK(intersect_scene(inside, scene).has_value());
    Ray outside{Vector3d(12, 2, -100), Vector3d(0, 0, 1)};
    CHECK_FALSE(intersect_scene(outside, scene).has_value());
}

TEST_CASE("sphere intersection picks the near root") {
    Scene scene;
    scene.primitives.push_back(SpherePrim{Vector3d(0, 0, 50), 20.0});
    Ray ray{Vector3d(0, 0, -500), Vector3d(0, 0, 1)};
    auto hit = intersect_scene(ray, scene);
    REQUIRE(hit.has_value());
    CHECK(hit->point.z() == doctest::Approx(30.0).epsilon(1e-12));

    // origin inside the sphere: far root is the only one with t > t_min
    Ray from_inside{Vector3d(0, 0, 50), Vector3d(0, 0, 1)};
    auto hit2 = intersect_scene(from_inside, scene);
    REQUIRE(hit2.has_value());
    CHECK(hit2->point.z() == doctest::Approx(70.0).epsilon(1e-12));

    Ray miss{Vector3d(30, 0, -500), Vector3d(0, 0, 1)};
    CHECK_FALSE(intersect_scene(miss, scene).has_value());
}

TEST_CASE("nearest primitive wins") {
    Scene scene = make_plane_scene(40.0);
    scene.primitives.push_back(SpherePrim{Vector3d(0, 0, 20), 10.0});
    Ray ray{Vector3d(0, 0, -500), Vector3d(0, 0, 1)};
    auto hit = intersect_scene(ray, scene);
    REQUIRE(hit.has_value());
    CHECK(hit->prim_index == 1);
    CHECK(hit->point.z() == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("height field intersection is refined to nanometer scale") {
    HeightFieldPrim hf;
    hf.x0 = -50;
    hf.y0 = -50;
    hf.dx = hf.dy = 1.0;
    hf.nx = hf.ny = 101;
    hf.z.resize(101 * 101);
    for (int j = 0; j < 101; ++j)
        for (int i = 0; i < 101; ++i) {
            double x = -50 + i, y = -50 + j;
            hf.z[j * 101 + i] = 10.0 + 5.0 * std::sin(0.08 * x) * std::cos(0.05 * y);
        }

    Scene scene;
    scene.primitives.push_back(hf);
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        double x = rng.uniform(-40, 40), y = rng.uniform(-40, 40);
        Ray ray{Vector3d(x, y, -400), Vector3d(0, 0, 1)};
        auto hit = intersect_scene(ray, scene);
        REQUIRE(hit.has_value());
        // the surface passes through grid nodes exactly; between nodes the
        // bilinear patch is what the intersector must honor
        CHECK(std::abs(hit->point.z() - hf.sample(hit->point.x(), hit->point.y())) < 1e-9);
    }

    CHECK(hf.in_domain(0, 0));
    CHECK_FALSE(hf.in_domain(51, 0));
}

TEST_CASE("oblique height-field rays land on the bilinear surface") {
    HeightFieldPrim hf;
    hf.x0 = -30;
    hf.y0 = -30;
    hf.dx = hf.dy = 2.0;
    hf.nx = hf.ny = 31;
    hf.z.resize(31 * 31);
    Rng grid(77);
    for (auto& v : hf.z) v = grid.uniform(-8, 8);

    Scene scene;
    scene.primitives.push_back(hf);
    Rng rng(5);
    int hits = 0;
    for (int trial = 0; trial < 200; ++trial) {
        // keep the slope gentle and the flight short so rays stay inside the
        // +-30 grid footprint by the time they reach the surface
        Vector3d dir(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), 1.0);
        Ray ray{Vector3d(rng.uniform(-15, 15), rng.uniform(-15, 15), -100), dir.normalized()};
        auto hit = intersect_scene(ray, scene);
        if (!hit) continue;
        ++hits;
        CHECK(std::abs(hit->point.z() - hf.sample(hit->point.x(), hit->point.y())) < 1e-9);
    }
    CHECK(hits > 150);
}

TEST_CASE("occlusion test sees blockers strictly between the endpoints") {
    Scene scene;
    scene.primitives.push_back(SpherePrim{Vector3d(0, 0, 0), 5.0});
    Vector3d a(0, 0, -20), b(0, 0, 20);
    CHECK(segment_occluded(a, b, scene));
    CHECK_FALSE(segment_occluded(Vector3d(10, 0, -20), Vector3d(10, 0, 20), scene));
    // endpoint on the surface does not occlude itself
    CHECK_FALSE(segment_occluded(Vector3d(0, 0, -5), Vector3d(0, 0, -20), scene));
}

TEST_CASE("reflectivity bounds bracket every sample") {
    ReflectivityField f;
    f.base = 0.4;
    f.waves.push_back({0.013, 0.007, 0.08, 1.2});
    f.waves.push_back({0.002, 0.021, 0.05, -0.4});
    Rng rng(11);
    for (int i = 0; i < 2000; ++i) {
        double v = f.eval(rng.uniform(-200, 200), rng.uniform(-200, 200));
        CHECK(v <= f.max_amplitude() + 1e-12);
        CHECK(v >= f.min_amplitude() - 1e-12);
    }
    CHECK(f.max_amplitude() == doctest::Approx(0.53).epsilon(1e-12));
    CHECK(f.min_amplitude() == doctest::Approx(0.27).epsilon(1e-12));
}

TEST_CASE("scene files round trip including unbounded plane limits") {
    Scene scene;
    PlanePrim p;
    p.normal = Vector3d(0.1, 0.2, 1).normalized();
    p.offset = 25.5;
    p.xmin = -12;  // xmax/ymin/ymax left NaN = unbounded
    scene.primitives.push_back(p);
    scene.primitives.push_back(SpherePrim{Vector3d(1, 2, 3), 7.25});
    HeightFieldPrim hf;
    hf.x0 = -4;
    hf.y0 = -4;
    hf.dx = hf.dy = 4.0;
    hf.nx = hf.ny = 3;
    hf.z = {0, 1, 2, 3, 4, 5, 6, 7, 8};
    scene.primitives.push_back(hf);
    scene.albedo_a.base = 0.45;
    scene.albedo_a.waves.push_back({0.01, 0.0, 0.05, 0.3});
    scene.albedo_b.base = 0.3;
    scene.noise.sigma = 0.015;
    scene.noise.quantize8 = false;

    const std::string path = "/tmp/fpp_test_scene.json";
    save_scene(path, scene);
    Scene back = load_scene(path);
    REQUIRE(back.primitives.size() == 3);
    const auto& bp = std::get<PlanePrim>(back.primitives[0]);
    // JSON serializes doubles through text, so allow a rounding ulp
    CHECK((bp.normal - p.normal).norm() < 1e-12);
    CHECK(bp.offset == 25.5);
    CHECK(bp.xmin == -12);
    CHECK(std::isnan(bp.xmax));
    CHECK(std::isnan(bp.ymin));
    const auto& bs = std::get<SpherePrim>(back.primitives[1]);
    CHECK(bs.radius == 7.25);
    const auto& bh = std::get<HeightFieldPrim>(back.primitives[2]);
    CHECK(bh.z == hf.z);
    CHECK(back.albedo_a.waves.size() == 1);
    CHECK(back.albedo_a.waves[0].amp == 0.05);
    CHECK(back.noise.sigma == 0.015);
    CHECK(back.noise.quantize8 == false);
}

TEST_CASE("scene validation catches empty and over-bright scenes") {
    Scene empty;
    CHECK_THROWS_AS(empty.validate(), std::runtime_error);

    Scene bright = make_plane_scene(0.0, 0.7, 0.4);  // A + B = 1.1 > 1
    CHECK_THROWS_AS(bright.validate(), std::runtime_error);

    Scene ok = make_plane_scene(0.0);
    CHECK_NOTHROW(ok.validate());
}
