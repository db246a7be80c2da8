#include "fpp/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <stdexcept>

#include "fpp/phase_retrieval.hpp"
#include "fpp/rng.hpp"

namespace fpp {

namespace fs = std::filesystem;
using Eigen::Vector2d;
using Eigen::Vector3d;
using nlohmann::json;

namespace {

// Panel position of a world point through the undistorted pinhole (the
// fringe is linear in this coordinate). nullopt when the point is behind
// the panel or outside it. The last half period of the panel is treated as
// unlit so that order maps stay within [0, K-1] with phi in (-pi, pi].
std::optional<double> lit_panel_coord(const Vector3d& point, const ProjectorModel& proj) {
    const Vector3d pp = proj.cam.pose.apply(point);
    if (!(pp.z() > 0.0)) return std::nullopt;
    const double u = proj.cam.fx * (pp.x() / pp.z()) + proj.cam.cx;
    const double v = proj.cam.fy * (pp.y() / pp.z()) + proj.cam.cy;
    if (u < 0.0 || u > proj.cam.width || v < 0.0 || v > proj.cam.height) return std::nullopt;
    const double along = proj.axis == FringeAxis::X ? u : v;
    const double guard = proj.axis_extent() * (1.0 - 0.5 / proj.periods);
    if (along > guard) return std::nullopt;
    return along;
}

// Splits Phi into (k, phi) with phi in (-pi, pi] and Phi = phi + 2*pi*k.
void split_phase(double Phi, int32_t& k, double& phi) {
    k = static_cast<int32_t>(std::floor((Phi + M_PI) / (2.0 * M_PI)));
    phi = Phi - 2.0 * M_PI * k;
    if (phi <= -M_PI) {
        phi += 2.0 * M_PI;
        --k;
    } else if (phi > M_PI) {
        phi -= 2.0 * M_PI;
        ++k;
    }
}

}  // namespace

RenderResult render_fringe_stack(const Scene& scene, const CameraModel& cam,
                                 const ProjectorModel& proj, int steps, uint64_t seed) {
    if (steps < 3) throw std::runtime_error("render: needs at least 3 steps");
    scene.validate();
    cam.validate();
    proj.validate();

    const int w = cam.width, h = cam.height;
    RenderResult out;
    out.stack.frames = ImageD(w, h, steps);
    out.stack.periods = proj.periods;
    out.gt.depth = ImageD(w, h);
    out.gt.phi_abs = ImageD(w, h);
    out.gt.phi_wrapped = ImageD(w, h);
    out.gt.order = Image<int32_t>(w, h, 1, -1);
    out.gt.mask = MaskImage(w, h, 1, 0);

    const Vector3d proj_center = proj.cam.center();
    const double sigma = scene.noise.sigma;
    size_t hits = 0;

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Ray ray = backproject_ray(Vector2d(x, y), cam);
            const auto hit = intersect_scene(ray, scene);
            double a = 0.0, b = 0.0, Phi = 0.0;
            bool lit = false;
            if (hit) {
                ++hits;
                const Vector3d& p = hit->point;
                out.gt.depth.at(x, y) = p.z();
                a = scene.albedo_a.eval(p.x(), p.y());
                b = scene.albedo_b.eval(p.x(), p.y());
                const auto coord = lit_panel_coord(p, proj);
                if (coord && !segment_occluded(p, proj_center, scene)) {
                    lit = true;
                    Phi = projector_column_to_phase(*coord, proj);
                    int32_t k = 0;
                    double phi = 0.0;
                    split_phase(Phi, k, phi);
                    out.gt.phi_abs.at(x, y) = Phi;
                    out.gt.phi_wrapped.at(x, y) = phi;
                    out.gt.order.at(x, y) = k;
                    out.gt.mask.at(x, y) = 1;
                }
            }
            const size_t pix = static_cast<size_t>(y) * w + x;
            for (int n = 0; n < steps; ++n) {
                double I = hit ? a : 0.0;
                if (lit) I += b * std::cos(Phi + 2.0 * M_PI * n / steps);
                if (sigma > 0.0) {
                    Rng noise_rng(derive_seed(seed, static_cast<uint64_t>(n), pix));
                    I += sigma * noise_rng.normal();
                }
                if (scene.noise.quantize8) {
                    I = std::clamp(I, 0.0, 1.0);
                    I = std::round(I * 255.0) / 255.0;
                }
                out.stack.frames.at(x, y, n) = I;
            }
        }
    }
    if (hits == 0) throw std::runtime_error("empty render");
    return out;
}

ReferenceRecord render_reference(const Rig& rig, int steps, const NoiseModel& noise) {
    if (rig.cameras.size() < 2)
        throw std::runtime_error("reference: rig needs at least two cameras");
    Scene plane = make_plane_scene(0.0);
    plane.noise = noise;

    ReferenceRecord rec;
    auto r1 = render_fringe_stack(plane, rig.cameras[0], rig.projector, steps,
                                  derive_seed(0x5eed, 0));
    auto r2 = render_fringe_stack(plane, rig.cameras[1], rig.projector, steps,
                                  derive_seed(0x5eed, 1));
    r1.stack.camera_id = 0;
    r2.stack.camera_id = 1;

    auto mask_count = [](const MaskImage& m) {
        return std::count(m.data.begin(), m.data.end(), uint8_t(1));
    };
    if (mask_count(r1.gt.mask) == 0 || mask_count(r2.gt.mask) == 0)
        throw std::runtime_error("reference: plane not visible from both cameras");

    rec.cam1 = std::move(r1.stack);
    rec.cam2 = std::move(r2.stack);
    rec.gt1 = std::move(r1.gt);
    return rec;
}

// --- dataset recipe / manifest JSON -------------------------------------------

void save_recipe(const std::string& path, const DatasetRecipe& r) {
    json j;
    j["min_primitives"] = r.min_primitives;
    j["max_primitives"] = r.max_primitives;
    j["spheres"] = r.spheres;
    j["planes"] = r.planes;
    j["heightfields"] = r.heightfields;
    j["z_min"] = r.z_min;
    j["z_max"] = r.z_max;
    j["xy_extent"] = r.xy_extent;
    j["sphere_r_min"] = r.sphere_r_min;
    j["sphere_r_max"] = r.sphere_r_max;
    j["steps"] = r.steps;
    j["noise_sigma"] = r.noise.sigma;
    j["noise_quantize8"] = r.noise.quantize8;
    j["train_fraction"] = r.train_fraction;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_recipe: cannot open " + path);
    out << j.dump(2) << "\n";
}

DatasetRecipe load_recipe(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_recipe: cannot open " + path);
    json j;
    in >> j;
    DatasetRecipe r;
    r.min_primitives = j.value("min_primitives", r.min_primitives);
    r.max_primitives = j.value("max_primitives", r.max_primitives);
    r.spheres = j.value("spheres", r.spheres);
    r.planes = j.value("planes", r.planes);
    r.heightfields = j.value("heightfields", r.heightfields);
    r.z_min = j.value("z_min", r.z_min);
    r.z_max = j.value("z_max", r.z_max);
    r.xy_extent = j.value("xy_extent", r.xy_extent);
    r.sphere_r_min = j.value("sphere_r_min", r.sphere_r_min);
    r.sphere_r_max = j.value("sphere_r_max", r.sphere_r_max);
    r.steps = j.value("steps", r.steps);
    r.noise.sigma = j.value("noise_sigma", r.noise.sigma);
    r.noise.quantize8 = j.value("noise_quantize8", r.noise.quantize8);
    r.train_fraction = j.value("train_fraction", r.train_fraction);
    return r;
}

void save_manifest(const std::string& path, const DatasetManifest& m) {
    json j;
    j["seed"] = m.seed;
    j["steps"] = m.steps;
    j["periods"] = m.periods;
    j["rig"] = m.rig_path;
    j["records"] = json::array();
    for (const auto& r : m.records) {
        json jr;
        jr["id"] = r.id;
        jr["reference"] = r.is_reference;
        jr["split"] = r.split;
        jr["scene"] = r.scene_path;
        jr["stacks"] = r.stack_paths;
        jr["m1"] = r.m1_path;
        jr["d1"] = r.d1_path;
        jr["m2"] = r.m2_path;
        jr["d2"] = r.d2_path;
        jr["gt_depth"] = r.gt_depth_path;
        jr["gt_abs_phase"] = r.gt_abs_phase_path;
        jr["gt_wrapped"] = r.gt_wrapped_path;
        jr["gt_order"] = r.gt_order_path;
        jr["gt_mask"] = r.gt_mask_path;
        j["records"].push_back(jr);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_manifest: cannot open " + path);
    out << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_manifest: cannot open " + path);
    json j;
    in >> j;
    DatasetManifest m;
    m.root_dir = fs::path(path).parent_path().string();
    if (m.root_dir.empty()) m.root_dir = ".";
    m.seed = j.at("seed");
    m.steps = j.at("steps");
    m.periods = j.at("periods");
    m.rig_path = j.at("rig");
    int reference_count = 0;
    for (const auto& jr : j.at("records")) {
        SampleRecord r;
        r.id = jr.at("id");
        r.is_reference = jr.at("reference");
        r.split = jr.at("split");
        r.scene_path = jr.at("scene");
        r.stack_paths = jr.at("stacks").get<std::vector<std::string>>();
        r.m1_path = jr.at("m1");
        r.d1_path = jr.at("d1");
        r.m2_path = jr.at("m2");
        r.d2_path = jr.at("d2");
        r.gt_depth_path = jr.at("gt_depth");
        r.gt_abs_phase_path = jr.at("gt_abs_phase");
        r.gt_wrapped_path = jr.at("gt_wrapped");
        r.gt_order_path = jr.at("gt_order");
        r.gt_mask_path = jr.at("gt_mask");
        reference_count += r.is_reference ? 1 : 0;
        m.records.push_back(std::move(r));
    }
    if (reference_count != 1)
        throw std::runtime_error("manifest: expected exactly one reference record");
    return m;
}

// --- randomized scenes ----------------------------------------------------------

namespace {

ReflectivityField random_albedo(Rng& rng, double base_lo, double base_hi, double amp_cap) {
    ReflectivityField f;
    f.base = rng.uniform(base_lo, base_hi);
    const int n_waves = rng.uniform_int(0, 2);
    double remaining = amp_cap;
    for (int i = 0; i < n_waves; ++i) {
        ReflectivityField::Wave w;
        w.amp = rng.uniform(0.2, 1.0) * remaining / (n_waves - i);
        remaining -= w.amp;
        w.fx = rng.uniform(-0.02, 0.02);
        w.fy = rng.uniform(-0.02, 0.02);
        w.phase = rng.uniform(0.0, 2.0 * M_PI);
        f.waves.push_back(w);
    }
    return f;
}

Scene random_scene(const DatasetRecipe& recipe, Rng& rng) {
    Scene s;
    s.noise = recipe.noise;
    // Ranges chosen so A+B <= 1 and A-B >= 0 hold for any draw.
    s.albedo_a = random_albedo(rng, 0.42, 0.52, 0.05);
    s.albedo_b = random_albedo(rng, 0.22, 0.30, 0.04);

    std::vector<int> kinds;
    if (recipe.planes) kinds.push_back(0);
    if (recipe.spheres) kinds.push_back(1);
    if (recipe.heightfields) kinds.push_back(2);
    if (kinds.empty()) throw std::runtime_error("dataset: recipe enables no primitive kinds");

    const int n = rng.uniform_int(recipe.min_primitives, recipe.max_primitives);
    for (int i = 0; i < n; ++i) {
        const int kind = kinds[static_cast<size_t>(rng.uniform_int(0, int(kinds.size()) - 1))];
        const double px = rng.uniform(-recipe.xy_extent, recipe.xy_extent);
        const double py = rng.uniform(-recipe.xy_extent, recipe.xy_extent);
        const double pz = rng.uniform(recipe.z_min, recipe.z_max);
        if (kind == 0) {
            PlanePrim p;
            const double tilt = rng.uniform(0.0, 25.0 * M_PI / 180.0);
            const double az = rng.uniform(0.0, 2.0 * M_PI);
            p.normal = Vector3d(std::sin(tilt) * std::cos(az), std::sin(tilt) * std::sin(az),
                                std::cos(tilt));
            p.offset = p.normal.dot(Vector3d(px, py, pz));
            if (rng.uniform() < 0.7) {  // bounded plate; otherwise a full backdrop
                const double ex = rng.uniform(25.0, 80.0);
                const double ey = rng.uniform(25.0, 80.0);
                p.xmin = px - ex;
                p.xmax = px + ex;
                p.ymin = py - ey;
                p.ymax = py + ey;
            }
            s.primitives.push_back(p);
        } else if (kind == 1) {
            SpherePrim sp;
            sp.radius = rng.uniform(recipe.sphere_r_min, recipe.sphere_r_max);
            sp.center = Vector3d(px, py, pz);
            s.primitives.push_back(sp);
        } else {
            HeightFieldPrim h;
            const double half = rng.uniform(30.0, 60.0);
            h.nx = h.ny = 17;
            h.x0 = px - half;
            h.y0 = py - half;
            h.dx = h.dy = 2.0 * half / (h.nx - 1);
            struct Bump {
                double fx, fy, amp, phase;
            };
            std::vector<Bump> bumps;
            const int nb = rng.uniform_int(1, 3);
            for (int b = 0; b < nb; ++b)
                bumps.push_back({rng.uniform(-0.015, 0.015), rng.uniform(-0.015, 0.015),
                                 rng.uniform(2.0, 8.0), rng.uniform(0.0, 2 * M_PI)});
            h.z.resize(size_t(h.nx) * h.ny);
            for (int iy = 0; iy < h.ny; ++iy)
                for (int ix = 0; ix < h.nx; ++ix) {
                    const double wx = h.x0 + ix * h.dx, wy = h.y0 + iy * h.dy;
                    double z = pz;
                    for (const auto& b : bumps)
                        z += b.amp * std::cos(2 * M_PI * (b.fx * wx + b.fy * wy) + b.phase);
                    h.z[size_t(iy) * h.nx + ix] = z;
                }
            s.primitives.push_back(h);
        }
    }
    return s;
}

std::string sample_dir_name(int id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%04d", id);
    return buf;
}

}  // namespace

DatasetManifest generate_dataset(int count, const Rig& rig, const DatasetRecipe& recipe,
                                 uint64_t seed, const std::string& out_dir) {
    if (count < 1) throw std::runtime_error("dataset: count must be >= 1");
    if (rig.cameras.size() < 2) throw std::runtime_error("dataset: rig needs at least two cameras");
    fs::create_directories(out_dir);

    DatasetManifest man;
    man.root_dir = out_dir;
    man.seed = seed;
    man.steps = recipe.steps;
    man.periods = rig.projector.periods;
    man.rig_path = "rig.json";
    save_rig((fs::path(out_dir) / "rig.json").string(), rig);

    // Record 0 is the reference plane; the rest get a seeded split.
    std::vector<int> object_ids(count > 1 ? count - 1 : 0);
    std::iota(object_ids.begin(), object_ids.end(), 1);
    Rng split_rng(derive_seed(seed, 0xa11));
    split_rng.shuffle(object_ids);
    const int n_train =
        static_cast<int>(std::lround(recipe.train_fraction * double(object_ids.size())));
    std::vector<std::string> split(count, "train");
    for (size_t i = 0; i < object_ids.size(); ++i)
        split[object_ids[i]] = static_cast<int>(i) < n_train ? "train" : "val";

    for (int id = 0; id < count; ++id) {
        Scene scene;
        RenderResult r1;
        if (id == 0) {
            scene = make_plane_scene(0.0);
            scene.noise = recipe.noise;
            r1 = render_fringe_stack(scene, rig.cameras[0], rig.projector, recipe.steps,
                                     derive_seed(seed, 1000 + uint64_t(id) * 8));
        } else {
            bool ok = false;
            for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
                Rng scene_rng(derive_seed(seed, uint64_t(id), uint64_t(attempt)));
                scene = random_scene(recipe, scene_rng);
                try {
                    r1 = render_fringe_stack(scene, rig.cameras[0], rig.projector, recipe.steps,
                                             derive_seed(seed, 1000 + uint64_t(id) * 8));
                } catch (const std::runtime_error&) {
                    continue;  // nothing in the frustum; redraw
                }
                ok = std::count(r1.gt.mask.data.begin(), r1.gt.mask.data.end(), uint8_t(1)) > 0;
            }
            if (!ok)
                throw std::runtime_error("dataset: no visible scene after 100 resample attempts");
        }

        const std::string dir = sample_dir_name(id);
        fs::create_directories(fs::path(out_dir) / dir);
        auto rel = [&dir](const std::string& name) { return dir + "/" + name; };
        auto abs = [&](const std::string& name) {
            return (fs::path(out_dir) / dir / name).string();
        };

        SampleRecord rec;
        rec.id = id;
        rec.is_reference = id == 0;
        rec.split = split[id];
        rec.scene_path = rel("scene.json");
        save_scene(abs("scene.json"), scene);

        std::vector<RenderResult> renders;
        renders.push_back(std::move(r1));
        for (size_t j = 1; j < rig.cameras.size(); ++j)
            renders.push_back(render_fringe_stack(scene, rig.cameras[j], rig.projector,
                                                  recipe.steps,
                                                  derive_seed(seed, 1000 + uint64_t(id) * 8 + j)));
        for (size_t j = 0; j < renders.size(); ++j) {
            renders[j].stack.camera_id = static_cast<int>(j);
            const std::string name = "cam" + std::to_string(j + 1) + ".fpi";
            write_fpi(abs(name), renders[j].stack.frames);
            rec.stack_paths.push_back(rel(name));
        }

        ImageD M1, D1, M2, D2;
        ps_numerator_denominator(renders[0].stack, M1, D1);
        ps_numerator_denominator(renders[1].stack, M2, D2);
        rec.m1_path = rel("m1.fpi");
        rec.d1_path = rel("d1.fpi");
        rec.m2_path = rel("m2.fpi");
        rec.d2_path = rel("d2.fpi");
        write_fpi(abs("m1.fpi"), M1);
        write_fpi(abs("d1.fpi"), D1);
        write_fpi(abs("m2.fpi"), M2);
        write_fpi(abs("d2.fpi"), D2);

        const GroundTruth& gt = renders[0].gt;
        rec.gt_depth_path = rel("gt_depth.fpi");
        rec.gt_abs_phase_path = rel("gt_abs_phase.fpi");
        rec.gt_wrapped_path = rel("gt_wrapped.fpi");
        rec.gt_order_path = rel("gt_order.fpi");
        rec.gt_mask_path = rel("gt_mask.fpi");
        write_fpi(abs("gt_depth.fpi"), gt.depth);
        write_fpi(abs("gt_abs_phase.fpi"), gt.phi_abs);
        write_fpi(abs("gt_wrapped.fpi"), gt.phi_wrapped);
        write_fpi(abs("gt_order.fpi"), gt.order.cast<double>());
        write_fpi_mask(abs("gt_mask.fpi"), gt.mask);

        man.records.push_back(std::move(rec));
    }

    save_manifest((fs::path(out_dir) / "manifest.json").string(), man);
    return man;
}

// --- canonical scenes -----------------------------------------------------------

double depth_of_phase_offset(const Rig& rig, double z_from, double delta_phi) {
    const CameraModel& cam = rig.cameras.at(0);
    const Ray ray = backproject_ray(Vector2d(cam.cx, cam.cy), cam);
    auto point_at_z = [&](double z) {
        const double s = (z - ray.origin.z()) / ray.direction.z();
        return Vector3d(ray.origin + s * ray.direction);
    };
    const double phi0 = projector_phase_at(point_at_z(z_from), rig.projector);
    auto g = [&](double z) { return projector_phase_at(point_at_z(z), rig.projector) - phi0; };

    if (delta_phi == 0.0) return z_from;
    // Probe which z direction raises the phase, then expand a bracket.
    const double dir = g(z_from + 0.5) > 0.0 ? 1.0 : -1.0;
    const double want = delta_phi;
    double step = dir * (want > 0 ? 1.0 : -1.0) * 4.0;
    double lo = z_from, hi = z_from + step;
    int guard = 0;
    while ((g(hi) - want) * (g(lo) - want) > 0.0) {
        lo = hi;
        hi += step;
        if (++guard > 200) throw std::runtime_error("depth_of_phase_offset: no bracket");
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if ((g(mid) - want) * (g(lo) - want) <= 0.0)
            hi = mid;
        else
            lo = mid;
        // the bracket may run toward the camera, so hi can sit below lo
        if (std::abs(hi - lo) < 1e-10) break;
    }
    return 0.5 * (lo + hi);
}

Scene make_discontinuity_scene(const Rig& rig, double gap_periods, double z_near,
                               double seam_x) {
    const CameraModel& cam = rig.cameras.at(0);
    const Vector3d c1 = cam.center();
    const Vector3d cp = rig.projector.cam.center();

    // Near plate sits on the side away from the projector so its edge casts
    // no shadow band onto the far plate.
    const bool near_right = cp.x() < c1.x() + 1e-9;

    const Vector3d edge_near(seam_x, 0.0, z_near);
    auto far_edge_x = [&](double z) {
        return c1.x() + (edge_near.x() - c1.x()) * (z - c1.z()) / (z_near - c1.z());
    };
    const double phi_near = projector_phase_at(edge_near, rig.projector);
    auto gap = [&](double z) {
        return projector_phase_at(Vector3d(far_edge_x(z), 0.0, z), rig.projector) - phi_near;
    };

    // The phase gap grows monotonically with depth along the camera ray;
    // bracket and bisect for an exact multiple of 2*pi.
    const double sign = gap(z_near + 0.5) > 0.0 ? 1.0 : -1.0;
    const double want = sign * 2.0 * M_PI * gap_periods;
    double lo = z_near, hi = z_near + 4.0;
    int guard = 0;
    while ((gap(hi) - want) * (gap(lo) - want) > 0.0) {
        lo = hi;
        hi += 4.0;
        if (++guard > 200) throw std::runtime_error("discontinuity: no depth bracket");
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if ((gap(mid) - want) * (gap(lo) - want) <= 0.0)
            hi = mid;
        else
            lo = mid;
        if (hi - lo < 1e-10) break;
    }
    const double z_far = 0.5 * (lo + hi);
    const double seam_far_x = far_edge_x(z_far);

    Scene s;
    s.noise = NoiseModel{0.0, false};
    s.albedo_a = ReflectivityField{0.5, {}};
    s.albedo_b = ReflectivityField{0.35, {}};
    PlanePrim near_plate, far_plate;
    near_plate.offset = z_near;
    far_plate.offset = z_far;
    if (near_right) {
        near_plate.xmin = seam_x;
        far_plate.xmax = seam_far_x;
    } else {
        near_plate.xmax = seam_x;
        far_plate.xmin = seam_far_x;
    }
    s.primitives.push_back(near_plate);
    s.primitives.push_back(far_plate);
    return s;
}

Scene make_discontinuity_scene() { return make_discontinuity_scene(make_desk_rig()); }

Scene make_staircase_scene(const Rig& rig, int half_steps, double step_periods) {
    if (half_steps < 1) throw std::runtime_error("staircase: needs at least one step");
    const CameraModel& cam = rig.cameras.at(0);
    const int n_plates = 2 * half_steps + 1;

    // One plate per vertical pixel strip, placed at the depth whose
    // center-pixel phase offset is j * step_periods periods.
    Scene s;
    s.noise = NoiseModel{0.0, false};
    s.albedo_a = ReflectivityField{0.5, {}};
    s.albedo_b = ReflectivityField{0.35, {}};
    const Vector3d c1 = cam.center();
    for (int i = 0; i < n_plates; ++i) {
        const int j = i - half_steps;
        const double z = depth_of_phase_offset(rig, 0.0, 2.0 * M_PI * step_periods * j);
        const double u_lo = double(cam.width) * i / n_plates;
        const double u_hi = double(cam.width) * (i + 1) / n_plates;
        PlanePrim p;
        p.offset = z;
        // Strip edges mapped through camera 1 onto the plate's depth.
        p.xmin = c1.x() + (u_lo - cam.cx) / cam.fx * (z - c1.z());
        p.xmax = c1.x() + (u_hi - cam.cx) / cam.fx * (z - c1.z());
        s.primitives.push_back(p);
    }
    return s;
}

Scene make_sphere_pair_scene(double r1, double r2, double center_dist) {
    Scene s;
    s.noise = NoiseModel{0.0, false};
    s.albedo_a = ReflectivityField{0.5, {}};
    s.albedo_b = ReflectivityField{0.35, {}};
    const double z_center = 35.0;
    s.primitives.push_back(SpherePrim{Vector3d(-center_dist / 2.0, 0.0, z_center), r1});
    s.primitives.push_back(SpherePrim{Vector3d(center_dist / 2.0, 0.0, z_center), r2});
    PlanePrim backdrop;
    backdrop.offset = 70.0;
    s.primitives.push_back(backdrop);
    return s;
}

// --- rig factories ---------------------------------------------------------------

namespace {

RigidTransform lookat_pose(const Vector3d& center, const Vector3d& target) {
    const Vector3d zc = (target - center).normalized();
    const Vector3d xc = Vector3d(0, 1, 0).cross(zc).normalized();
    const Vector3d yc = zc.cross(xc);
    RigidTransform p;
    p.R.row(0) = xc;
    p.R.row(1) = yc;
    p.R.row(2) = zc;
    p.t = -(p.R * center);
    return p;
}

CameraModel desk_camera(int w, int h, double f, const Vector3d& center) {
    CameraModel c;
    c.width = w;
    c.height = h;
    c.fx = c.fy = f;
    c.cx = (w - 1) / 2.0;
    c.cy = (h - 1) / 2.0;
    c.pose = lookat_pose(center, Vector3d::Zero());
    return c;
}

Rig desk_rig_common(int cam_w, int cam_h, double cam_f, int periods) {
    // The auxiliary cameras use a slightly shorter focal length so their
    // footprint covers the primary camera's view across the whole working
    // volume; equal lenses would leave a sliver of camera-1 pixels without a
    // stereo sample along one image edge.
    double aux_f = cam_f * 12.0 / 13.0;
    Rig rig;
    rig.cameras.push_back(desk_camera(cam_w, cam_h, cam_f, Vector3d(0, 0, -500)));
    rig.cameras.push_back(desk_camera(cam_w, cam_h, aux_f, Vector3d(146, 0, -500)));
    rig.cameras.push_back(desk_camera(cam_w, cam_h, aux_f, Vector3d(-112, 60, -500)));
    rig.projector.cam = desk_camera(192, 240, 370, Vector3d(-90, 0, -500));
    rig.projector.axis = FringeAxis::X;
    rig.projector.periods = periods;
    return rig;
}

}  // namespace

Rig make_desk_rig() {
    Rig rig = desk_rig_common(128, 96, 260, 12);
    rig.volume_zmin = -150.0;
    rig.volume_zmax = 150.0;
    return rig;
}

Rig make_desk48_rig() {
    Rig rig = desk_rig_common(256, 192, 520, 48);
    rig.volume_zmin = -80.0;
    rig.volume_zmax = 80.0;
    return rig;
}

Rig make_paper_rig() {
    Rig rig;
    rig.cameras.push_back(desk_camera(640, 480, 1300, Vector3d(0, 0, -500)));
    rig.cameras.push_back(desk_camera(640, 480, 1300, Vector3d(146, 0, -500)));
    rig.cameras.push_back(desk_camera(640, 480, 1300, Vector3d(-112, 60, -500)));
    for (auto& c : rig.cameras) {
        c.k1 = -0.04;
        c.k2 = 0.005;
        c.p1 = 1e-4;
        c.p2 = -5e-5;
    }
    rig.projector.cam = desk_camera(912, 1140, 1754, Vector3d(-90, 0, -500));
    rig.projector.cam.k1 = -0.02;
    rig.projector.axis = FringeAxis::X;
    rig.projector.periods = 48;
    rig.volume_zmin = -80.0;
    rig.volume_zmax = 80.0;
    return rig;
}

}  // namespace fpp
