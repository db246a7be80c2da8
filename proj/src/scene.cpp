#include "fpp/scene.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

namespace fpp {

using Eigen::Vector3d;
using nlohmann::json;

double HeightFieldPrim::sample(double x, double y) const {
    double gx = (x - x0) / dx;
    double gy = (y - y0) / dy;
    gx = std::clamp(gx, 0.0, static_cast<double>(nx - 1));
    gy = std::clamp(gy, 0.0, static_cast<double>(ny - 1));
    const int ix = std::min(static_cast<int>(gx), nx - 2);
    const int iy = std::min(static_cast<int>(gy), ny - 2);
    const double fx = gx - ix, fy = gy - iy;
    const double z00 = z[iy * nx + ix], z10 = z[iy * nx + ix + 1];
    const double z01 = z[(iy + 1) * nx + ix], z11 = z[(iy + 1) * nx + ix + 1];
    return (1 - fx) * (1 - fy) * z00 + fx * (1 - fy) * z10 + (1 - fx) * fy * z01 + fx * fy * z11;
}

bool HeightFieldPrim::in_domain(double x, double y) const {
    return x >= x0 && x <= x0 + (nx - 1) * dx && y >= y0 && y <= y0 + (ny - 1) * dy;
}

double ReflectivityField::eval(double x, double y) const {
    double v = base;
    for (const auto& w : waves) v += w.amp * std::cos(2.0 * M_PI * (w.fx * x + w.fy * y) + w.phase);
    return v;
}

double ReflectivityField::max_amplitude() const {
    double v = base;
    for (const auto& w : waves) v += std::abs(w.amp);
    return v;
}

double ReflectivityField::min_amplitude() const {
    double v = base;
    for (const auto& w : waves) v -= std::abs(w.amp);
    return v;
}

void Scene::validate() const {
    if (primitives.empty()) throw std::runtime_error("scene: needs at least one primitive");
    if (albedo_a.max_amplitude() + albedo_b.max_amplitude() > 1.0 + 1e-12)
        throw std::runtime_error("scene: A + B may exceed 1");
    if (albedo_a.min_amplitude() - albedo_b.max_amplitude() < -1e-12)
        throw std::runtime_error("scene: A - B may go negative");
}

namespace {

std::optional<double> hit_plane(const Ray& ray, const PlanePrim& p, double t_min) {
    const double denom = p.normal.dot(ray.direction);
    if (std::abs(denom) < 1e-12) return std::nullopt;
    const double t = (p.offset - p.normal.dot(ray.origin)) / denom;
    if (t <= t_min) return std::nullopt;
    const Vector3d pt = ray.origin + t * ray.direction;
    if (!std::isnan(p.xmin) && pt.x() < p.xmin) return std::nullopt;
    if (!std::isnan(p.xmax) && pt.x() > p.xmax) return std::nullopt;
    if (!std::isnan(p.ymin) && pt.y() < p.ymin) return std::nullopt;
    if (!std::isnan(p.ymax) && pt.y() > p.ymax) return std::nullopt;
    return t;
}

std::optional<double> hit_sphere(const Ray& ray, const SpherePrim& s, double t_min) {
    const Vector3d oc = ray.origin - s.center;
    const double b = oc.dot(ray.direction);
    const double c = oc.squaredNorm() - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0) return std::nullopt;
    const double sq = std::sqrt(disc);
    double t = -b - sq;
    if (t <= t_min) t = -b + sq;
    if (t <= t_min) return std::nullopt;
    return t;
}

std::optional<double> hit_heightfield(const Ray& ray, const HeightFieldPrim& hf, double t_min) {
    // March in steps of half the lateral spacing, bracketing the first sign
    // change of (ray z - surface z), then bisect to 1e-9 mm.
    const double step_mm =
        0.5 * std::min(hf.dx, hf.dy) /
        std::max(1e-6, std::hypot(ray.direction.x(), ray.direction.y()) /
                           std::max(1e-12, ray.direction.norm()));
    auto above = [&](double t) -> std::optional<double> {
        const Vector3d p = ray.origin + t * ray.direction;
        if (!hf.in_domain(p.x(), p.y())) return std::nullopt;
        return p.z() - hf.sample(p.x(), p.y());
    };
    // Find the entry of the ray into the grid's xy domain.
    double t = t_min;
    const double t_max = 1e6;
    std::optional<double> prev;
    double t_prev = t;
    for (; t < t_max; t += step_mm) {
        auto d = above(t);
        if (d && prev) {
            if ((*d <= 0 && *prev > 0) || (*d >= 0 && *prev < 0)) {
                double lo = t_prev, hi = t;
                for (int i = 0; i < 200; ++i) {
                    const double mid = 0.5 * (lo + hi);
                    auto dm = above(mid);
                    if (!dm) break;
                    if ((*dm > 0) == (*prev > 0))
                        lo = mid;
                    else
                        hi = mid;
                    if (hi - lo < 1e-9) break;
                }
                return 0.5 * (lo + hi);
            }
        }
        if (!d && prev) break;  // left the domain
        prev = d;
        t_prev = t;
    }
    return std::nullopt;
}

struct HitVisitor {
    const Ray& ray;
    double t_min;
    std::optional<double> operator()(const PlanePrim& p) const { return hit_plane(ray, p, t_min); }
    std::optional<double> operator()(const SpherePrim& s) const {
        return hit_sphere(ray, s, t_min);
    }
    std::optional<double> operator()(const HeightFieldPrim& h) const {
        return hit_heightfield(ray, h, t_min);
    }
};

}  // namespace

std::optional<Hit> intersect_scene(const Ray& ray, const Scene& scene, double t_min) {
    std::optional<Hit> best;
    for (size_t i = 0; i < scene.primitives.size(); ++i) {
        auto t = std::visit(HitVisitor{ray, t_min}, scene.primitives[i]);
        if (t && (!best || *t < best->t))
            best = Hit{*t, ray.origin + *t * ray.direction, static_cast<int>(i)};
    }
    return best;
}

bool segment_occluded(const Vector3d& point, const Vector3d& target, const Scene& scene) {
    const Vector3d d = target - point;
    const double len = d.norm();
    if (len < 1e-9) return false;
    const Ray ray{point, d / len};
    auto hit = intersect_scene(ray, scene, 1e-6);
    return hit && hit->t < len - 1e-6;
}

// --- JSON --------------------------------------------------------------------

namespace {

json field_to_json(const ReflectivityField& f) {
    json j;
    j["base"] = f.base;
    j["waves"] = json::array();
    for (const auto& w : f.waves)
        j["waves"].push_back({{"fx", w.fx}, {"fy", w.fy}, {"amp", w.amp}, {"phase", w.phase}});
    return j;
}

ReflectivityField field_from_json(const json& j) {
    ReflectivityField f;
    f.base = j.at("base");
    for (const auto& jw : j.value("waves", json::array()))
        f.waves.push_back(
            {jw.at("fx"), jw.at("fy"), jw.at("amp"), jw.at("phase")});
    return f;
}

}  // namespace

void save_scene(const std::string& path, const Scene& scene) {
    json j;
    j["primitives"] = json::array();
    for (const auto& prim : scene.primitives) {
        json jp;
        if (const auto* p = std::get_if<PlanePrim>(&prim)) {
            jp["type"] = "plane";
            jp["normal"] = {p->normal.x(), p->normal.y(), p->normal.z()};
            jp["offset"] = p->offset;
            if (!std::isnan(p->xmin)) jp["xmin"] = p->xmin;
            if (!std::isnan(p->xmax)) jp["xmax"] = p->xmax;
            if (!std::isnan(p->ymin)) jp["ymin"] = p->ymin;
            if (!std::isnan(p->ymax)) jp["ymax"] = p->ymax;
        } else if (const auto* s = std::get_if<SpherePrim>(&prim)) {
            jp["type"] = "sphere";
            jp["center"] = {s->center.x(), s->center.y(), s->center.z()};
            jp["radius"] = s->radius;
        } else if (const auto* h = std::get_if<HeightFieldPrim>(&prim)) {
            jp["type"] = "heightfield";
            jp["x0"] = h->x0;
            jp["y0"] = h->y0;
            jp["dx"] = h->dx;
            jp["dy"] = h->dy;
            jp["nx"] = h->nx;
            jp["ny"] = h->ny;
            jp["z"] = h->z;
        }
        j["primitives"].push_back(jp);
    }
    j["albedo_a"] = field_to_json(scene.albedo_a);
    j["albedo_b"] = field_to_json(scene.albedo_b);
    j["noise"] = {{"sigma", scene.noise.sigma}, {"quantize8", scene.noise.quantize8}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_scene: cannot open " + path);
    out << j.dump(2) << "\n";
}

Scene load_scene(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_scene: cannot open " + path);
    json j;
    in >> j;
    Scene scene;
    for (const auto& jp : j.at("primitives")) {
        const std::string type = jp.at("type");
        if (type == "plane") {
            PlanePrim p;
            auto n = jp.at("normal").get<std::vector<double>>();
            p.normal = Vector3d(n[0], n[1], n[2]).normalized();
            p.offset = jp.at("offset");
            p.xmin = jp.value("xmin", std::numeric_limits<double>::quiet_NaN());
            p.xmax = jp.value("xmax", std::numeric_limits<double>::quiet_NaN());
            p.ymin = jp.value("ymin", std::numeric_limits<double>::quiet_NaN());
            p.ymax = jp.value("ymax", std::numeric_limits<double>::quiet_NaN());
            scene.primitives.push_back(p);
        } else if (type == "sphere") {
            SpherePrim s;
            auto c = jp.at("center").get<std::vector<double>>();
            s.center = Vector3d(c[0], c[1], c[2]);
            s.radius = jp.at("radius");
            scene.primitives.push_back(s);
        } else if (type == "heightfield") {
            HeightFieldPrim h;
            h.x0 = jp.at("x0");
            h.y0 = jp.at("y0");
            h.dx = jp.at("dx");
            h.dy = jp.at("dy");
            h.nx = jp.at("nx");
            h.ny = jp.at("ny");
            h.z = jp.at("z").get<std::vector<double>>();
            if (h.z.size() != static_cast<size_t>(h.nx) * h.ny)
                throw std::runtime_error("scene: heightfield grid size mismatch");
            scene.primitives.push_back(h);
        } else {
            throw std::runtime_error("scene: unknown primitive type " + type);
        }
    }
    scene.albedo_a = field_from_json(j.at("albedo_a"));
    scene.albedo_b = field_from_json(j.at("albedo_b"));
    if (j.contains("noise")) {
        scene.noise.sigma = j["noise"].value("sigma", 0.005);
        scene.noise.quantize8 = j["noise"].value("quantize8", true);
    }
    scene.validate();
    return scene;
}

Scene make_plane_scene(double z_mm, double a, double b) {
    Scene s;
    s.primitives.push_back(PlanePrim{Vector3d(0, 0, 1), z_mm});
    s.albedo_a.base = a;
    s.albedo_b.base = b;
    s.noise = {0.0, false};
    return s;
}

}  // namespace fpp
