#include "fpp/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>

#include "fpp/geometry.hpp"
#include "fpp/neural.hpp"
#include "fpp/phase_retrieval.hpp"
#include "fpp/rng.hpp"
#include "fpp/scene.hpp"
#include "fpp/simulator.hpp"
#include "fpp/unwrapping.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fpp {
namespace {

json config_to_json(const PipelineConfig& c) {
    json j;
    j["rig"] = c.rig_file;
    j["scene"] = c.scene_file;
    j["steps"] = c.steps;
    j["periods"] = c.periods;
    j["retrieval"] = c.retrieval;
    j["unwrap"] = c.unwrap;
    j["views"] = c.views;
    j["zmin"] = c.zmin;
    j["zmax"] = c.zmax;
    j["adc_from"] = c.adc_from;
    j["adc_half_width"] = c.adc_half_width;
    j["cnn1_weights"] = c.cnn1_weights;
    j["cnn2_weights"] = c.cnn2_weights;
    j["reference_manifest"] = c.reference_manifest;
    j["sphere_trim"] = c.sphere_trim;
    j["out_dir"] = c.out_dir;
    j["seed"] = c.seed;
    return j;
}

PipelineConfig config_from_json(const json& j) {
    PipelineConfig c;
    c.rig_file = j.value("rig", c.rig_file);
    c.scene_file = j.value("scene", c.scene_file);
    c.steps = j.value("steps", c.steps);
    c.periods = j.value("periods", c.periods);
    c.retrieval = j.value("retrieval", c.retrieval);
    c.unwrap = j.value("unwrap", c.unwrap);
    c.views = j.value("views", c.views);
    c.zmin = j.value("zmin", c.zmin);
    c.zmax = j.value("zmax", c.zmax);
    c.adc_from = j.value("adc_from", c.adc_from);
    c.adc_half_width = j.value("adc_half_width", c.adc_half_width);
    c.cnn1_weights = j.value("cnn1_weights", c.cnn1_weights);
    c.cnn2_weights = j.value("cnn2_weights", c.cnn2_weights);
    c.reference_manifest = j.value("reference_manifest", c.reference_manifest);
    c.sphere_trim = j.value("sphere_trim", c.sphere_trim);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.seed = j.value("seed", c.seed);
    return c;
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

void require_file(const std::string& path, const char* what) {
    require(!path.empty(), std::string("config: ") + what + " not set");
    require(fs::exists(path), std::string("config: ") + what + " not found: " + path);
}

// Cameras the run actually captures: stereo unwrapping consumes `views`,
// the order net always wants the camera pair, everything else is monocular.
int cameras_needed(const PipelineConfig& cfg) {
    if (cfg.unwrap == "spu") return cfg.views;
    if (cfg.unwrap == "cnn2") return 2;
    return 1;
}

ImageD frame0(const ImageD& frames) {
    ImageD out(frames.width, frames.height, 1);
    for (int y = 0; y < frames.height; ++y)
        for (int x = 0; x < frames.width; ++x) out.at(x, y) = frames.at(x, y, 0);
    return out;
}

// Fringe frequency (cycles/px) camera pixels see on the z=0 plane; the
// spectral method needs it to find the fundamental lobe.
double ft_carrier_estimate(const CameraModel& cam, const ProjectorModel& proj) {
    auto phase_at = [&](double x) {
        Ray r = backproject_ray(Eigen::Vector2d(x, cam.height / 2.0), cam);
        if (std::abs(r.direction.z()) < 1e-12)
            throw std::runtime_error("carrier estimate: view ray parallel to reference plane");
        double t = -r.origin.z() / r.direction.z();
        return projector_phase_at(r.origin + t * r.direction, proj);
    };
    double span = phase_at(cam.width - 1.0) - phase_at(0.0);
    return std::abs(span) / (2.0 * M_PI * (cam.width - 1.0));
}

PhaseMaps retrieve_view(const PipelineConfig& cfg, const FringeStack& stack,
                        const CameraModel& cam, const ProjectorModel& proj,
                        const Params* cnn1) {
    if (cfg.retrieval == "ps") return retrieve_phase(stack);
    if (cfg.retrieval == "ft") {
        PhaseMaps pm;
        ft_wrapped_phase(frame0(stack.frames), ft_carrier_estimate(cam, proj), pm.phi, pm.mask);
        return pm;
    }
    // cnn1: the net predicts the phase-shift numerator/denominator from one
    // frame; downstream products use the same closed forms as the N-step path.
    PhaseMaps pm;
    auto md = infer_cnn1(*cnn1, frame0(stack.frames));
    pm.M = std::move(md.first);
    pm.D = std::move(md.second);
    pm.phi = wrapped_phase(pm.M, pm.D);
    modulation(pm.M, pm.D, cfg.steps, pm.B_mod, pm.mask);
    return pm;
}

Image<int32_t> round_orders(const ImageD& img) {
    Image<int32_t> k(img.width, img.height, 1);
    for (size_t i = 0; i < img.data.size(); ++i)
        k.data[i] = static_cast<int32_t>(std::lround(img.data[i]));
    return k;
}

std::string join_path(const std::string& root, const std::string& rel) {
    return (fs::path(root) / rel).string();
}

struct ArtifactWriter {
    fs::path dir;
    std::vector<std::string> names;

    std::string path(const std::string& name) {
        names.push_back(name);
        return (dir / name).string();
    }
};

void write_float(ArtifactWriter& art, const std::string& name, const ImageD& img) {
    if (img.width > 0) write_fpi(art.path(name), img);
}

std::string method_label(const PipelineConfig& cfg) {
    std::string label = cfg.retrieval + "+" + cfg.unwrap;
    if (cfg.unwrap == "spu") {
        label += cfg.views == 3 ? "-3v" : "-2v";
        if (!cfg.adc_from.empty())
            label += "-adc";
        else if (cfg.zmin < cfg.zmax)
            label += "-band";
    }
    return label;
}

}  // namespace

void save_pipeline_config(const std::string& path, const PipelineConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("config: cannot write " + path);
    out << config_to_json(cfg).dump(2) << "\n";
}

PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot read " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument("config: " + path + ": " + e.what());
    }
    return config_from_json(j);
}

void validate_pipeline_config(const PipelineConfig& cfg) {
    require_file(cfg.rig_file, "rig file");
    require_file(cfg.scene_file, "scene file");
    require(cfg.steps >= 3, "config: steps must be at least 3");
    require(cfg.periods >= 0, "config: periods must be positive");
    require(cfg.retrieval == "ps" || cfg.retrieval == "ft" || cfg.retrieval == "cnn1",
            "config: unknown retrieval method '" + cfg.retrieval + "'");
    require(cfg.unwrap == "spu" || cfg.unwrap == "ref" || cfg.unwrap == "tpu" ||
                cfg.unwrap == "cnn2",
            "config: unknown unwrap method '" + cfg.unwrap + "'");
    if (cfg.unwrap == "spu")
        require(cfg.views == 2 || cfg.views == 3,
                "config: stereo unwrapping needs views = 2 or 3");
    if (cfg.retrieval == "cnn1") require_file(cfg.cnn1_weights, "cnn1 weights");
    if (cfg.unwrap == "cnn2") {
        require_file(cfg.cnn2_weights, "cnn2 weights");
        require_file(cfg.reference_manifest, "reference manifest");
    }
    if (cfg.zmin != 0.0 || cfg.zmax != 0.0)
        require(cfg.zmin < cfg.zmax, "config: depth range needs zmin < zmax");
    if (!cfg.adc_from.empty()) require_file(cfg.adc_from, "adc depth map");
    require(cfg.adc_half_width > 0, "config: adc half width must be positive");
    require(!cfg.out_dir.empty(), "config: output directory not set");
}

EvaluationReport run_pipeline(const PipelineConfig& cfg) {
    // Config problems surface before anything touches the output directory.
    validate_pipeline_config(cfg);

    ArtifactWriter art{fs::path(cfg.out_dir), {}};
    fs::create_directories(art.dir);

    const int n_cams = cameras_needed(cfg);
    Rig rig;
    Scene scene;
    std::vector<RenderResult> views;
    std::optional<RenderResult> unit_view;  // one-period capture for tpu
    json stage_seeds;

    // --- simulate -------------------------------------------------------------
    try {
        rig = load_rig(cfg.rig_file);
        scene = load_scene(cfg.scene_file);
        if (cfg.periods != 0 && cfg.periods != rig.projector.periods)
            throw std::runtime_error("config periods " + std::to_string(cfg.periods) +
                                     " does not match rig periods " +
                                     std::to_string(rig.projector.periods));
        if (static_cast<int>(rig.cameras.size()) < n_cams)
            throw std::runtime_error("rig has " + std::to_string(rig.cameras.size()) +
                                     " cameras, run needs " + std::to_string(n_cams));
        for (int i = 0; i < n_cams; ++i) {
            uint64_t s = derive_seed(cfg.seed, 100 + i);
            stage_seeds["render_cam" + std::to_string(i + 1)] = s;
            views.push_back(
                render_fringe_stack(scene, rig.cameras[i], rig.projector, cfg.steps, s));
            views.back().stack.camera_id = i;
            write_float(art, "stack_cam" + std::to_string(i + 1) + ".fpi",
                        views[i].stack.frames);
        }
        if (cfg.unwrap == "tpu") {
            Rig unit = rig;
            unit.projector.periods = 1;
            uint64_t s = derive_seed(cfg.seed, 150);
            stage_seeds["render_unit"] = s;
            unit_view =
                render_fringe_stack(scene, unit.cameras[0], unit.projector, cfg.steps, s);
            write_float(art, "stack_unit.fpi", unit_view->stack.frames);
        }
        const GroundTruth& gt = views[0].gt;
        write_float(art, "gt_depth.fpi", gt.depth);
        write_float(art, "gt_abs_phase.fpi", gt.phi_abs);
        write_float(art, "gt_wrapped.fpi", gt.phi_wrapped);
        write_float(art, "gt_order.fpi", gt.order.cast<double>());
        write_fpi_mask(art.path("gt_mask.fpi"), gt.mask);
    } catch (const std::exception& e) {
        throw StageError("simulate", e.what());
    }

    // --- retrieve -------------------------------------------------------------
    std::vector<PhaseMaps> phase(n_cams);
    PhaseMaps unit_phase;
    try {
        std::optional<Params> cnn1;
        if (cfg.retrieval == "cnn1") cnn1 = load_weights(cfg.cnn1_weights);
        for (int i = 0; i < n_cams; ++i) {
            phase[i] = retrieve_view(cfg, views[i].stack, rig.cameras[i], rig.projector,
                                     cnn1 ? &*cnn1 : nullptr);
            std::string tag = "_cam" + std::to_string(i + 1) + ".fpi";
            write_float(art, "m" + tag, phase[i].M);
            write_float(art, "d" + tag, phase[i].D);
            write_float(art, "phi" + tag, phase[i].phi);
            write_float(art, "bmod" + tag, phase[i].B_mod);
            write_fpi_mask(art.path("mask" + tag), phase[i].mask);
        }
        // The one-period stack is an auxiliary capture with a known shift
        // sequence, so it always goes through the closed-form N-step path
        // (its fringe is far too coarse for spectral demodulation, and the
        // learned retriever never saw unit frequency in training).
        if (unit_view) {
            unit_phase = retrieve_phase(unit_view->stack);
            write_float(art, "phi_unit.fpi", unit_phase.phi);
        }
    } catch (const std::exception& e) {
        throw StageError("retrieve", e.what());
    }

    // --- unwrap ---------------------------------------------------------------
    OrderMap orders;
    try {
        if (cfg.unwrap == "spu") {
            DepthRange range = cfg.zmin < cfg.zmax ? DepthRange::global(cfg.zmin, cfg.zmax)
                                                   : DepthRange::full_volume(rig);
            if (!cfg.adc_from.empty()) {
                ImageD prev = read_fpi_double(cfg.adc_from);
                if (prev.width != phase[0].phi.width || prev.height != phase[0].phi.height)
                    throw std::runtime_error("adc depth map size does not match the camera");
                MaskImage valid(prev.width, prev.height, 1);
                for (size_t i = 0; i < prev.data.size(); ++i)
                    valid.data[i] = std::isfinite(prev.data[i]) ? 1 : 0;
                range = adc_update(prev, valid, cfg.adc_half_width, range);
            }
            orders = spu_unwrap(phase[0].phi, phase[0].mask, phase[1].phi, phase[1].mask,
                                cfg.views == 3 ? &phase[2].phi : nullptr,
                                cfg.views == 3 ? &phase[2].mask : nullptr, rig, range,
                                cfg.views);
        } else if (cfg.unwrap == "ref") {
            ReferenceData ref = make_reference_data(render_reference(rig, cfg.steps));
            orders = reference_unwrap(phase[0].phi, phase[0].mask, ref);
        } else if (cfg.unwrap == "tpu") {
            MaskImage joint(phase[0].mask.width, phase[0].mask.height, 1);
            for (size_t i = 0; i < joint.data.size(); ++i)
                joint.data[i] = phase[0].mask.data[i] && unit_phase.mask.data[i];
            orders = tpu_hierarchical(phase[0].phi, unit_phase.phi, joint,
                                      rig.projector.periods);
        } else {  // cnn2
            Params net = load_weights(cfg.cnn2_weights);
            DatasetManifest man = load_manifest(cfg.reference_manifest);
            const SampleRecord* ref = nullptr;
            for (const auto& r : man.records)
                if (r.is_reference) ref = &r;
            if (!ref) throw std::runtime_error("reference manifest has no reference record");
            ImageD ref1 = frame0(read_fpi(join_path(man.root_dir, ref->stack_paths.at(0)))
                                     .cast<double>());
            ImageD ref2 = frame0(read_fpi(join_path(man.root_dir, ref->stack_paths.at(1)))
                                     .cast<double>());
            Image<int32_t> ref_k =
                round_orders(read_fpi_double(join_path(man.root_dir, ref->gt_order_path)));
            TensorF in = cnn2_stack(frame0(views[0].stack.frames), frame0(views[1].stack.frames),
                                    ref1, ref2, ref_k, rig.projector.periods);
            orders = infer_cnn2(net, in, rig.projector.periods);
            // The net answers everywhere; keep decisions to pixels the
            // retrieval stage trusts.
            for (size_t i = 0; i < orders.mask.data.size(); ++i)
                if (!phase[0].mask.data[i]) {
                    orders.mask.data[i] = 0;
                    orders.k.data[i] = -1;
                }
        }
        write_float(art, "order.fpi", orders.k.cast<double>());
        write_float(art, "order_conf.fpi", orders.confidence);
        write_fpi_mask(art.path("order_mask.fpi"), orders.mask);
    } catch (const std::exception& e) {
        throw StageError("unwrap", e.what());
    }

    // --- triangulate ------------------------------------------------------------
    ImageD phi_abs, depth;
    std::vector<Eigen::Vector3d> cloud;
    try {
        phi_abs = unwrap_apply(phase[0].phi, orders);
        depth = ImageD(phi_abs.width, phi_abs.height, 1);
        const double nan = std::numeric_limits<double>::quiet_NaN();
        const double phi_max = 2.0 * M_PI * rig.projector.periods;
        for (int y = 0; y < depth.height; ++y)
            for (int x = 0; x < depth.width; ++x) {
                depth.at(x, y) = nan;
                if (!orders.mask.at(x, y)) continue;
                // A wrapped value at the very edge of the panel can stick out
                // of the nominal phase range by a hair; clamp instead of
                // refusing the pixel.
                double u = phase_to_projector_column(
                    std::clamp(phi_abs.at(x, y), 0.0, phi_max), rig.projector);
                auto tri = triangulate_camera_projector(Eigen::Vector2d(x, y), rig.cameras[0],
                                                        u, rig.projector);
                depth.at(x, y) = tri.point.z();
                cloud.push_back(tri.point);
            }
        write_float(art, "abs_phase.fpi", phi_abs);
        write_float(art, "depth.fpi", depth);
        write_ply(art.path("cloud.ply"), cloud);
    } catch (const std::exception& e) {
        throw StageError("triangulate", e.what());
    }

    // --- evaluate ---------------------------------------------------------------
    EvaluationReport report;
    try {
        report.scene = cfg.scene_file;
        report.retrieval_method = cfg.retrieval;
        report.unwrap_method = cfg.unwrap;
        report.views = n_cams;
        const GroundTruth& gt = views[0].gt;
        OrderMap truth;
        truth.k = gt.order;
        truth.confidence = ImageD(gt.order.width, gt.order.height, 1);
        truth.mask = gt.mask;
        report.orders = order_error_rate(orders, truth);

        MaskImage joint(gt.mask.width, gt.mask.height, 1);
        size_t joint_count = 0;
        for (size_t i = 0; i < joint.data.size(); ++i) {
            joint.data[i] = gt.mask.data[i] && orders.mask.data[i];
            joint_count += joint.data[i];
        }
        if (joint_count > 0) {
            ErrorMaps maps =
                phase_and_depth_errors(phi_abs, gt.phi_abs, depth, gt.depth, joint);
            report.phase_rmse = maps.phase_rmse;
            report.depth_rmse = maps.depth_rmse;
            report.phase_error_path = "phase_error.fpi";
            report.depth_error_path = "depth_error.fpi";
            write_float(art, report.phase_error_path, maps.phase_error);
            write_float(art, report.depth_error_path, maps.depth_error);
        }

        // Sphere metrology drops out automatically when the scene is a
        // two-sphere target: split the cloud by proximity to the configured
        // centers and fit each ball.
        std::vector<const SpherePrim*> spheres;
        for (const auto& prim : scene.primitives)
            if (auto* s = std::get_if<SpherePrim>(&prim)) spheres.push_back(s);
        if (spheres.size() == 2) {
            std::vector<Eigen::Vector3d> c1, c2;
            for (const auto& p : cloud) {
                if ((p - spheres[0]->center).norm() < spheres[0]->radius + 5.0)
                    c1.push_back(p);
                else if ((p - spheres[1]->center).norm() < spheres[1]->radius + 5.0)
                    c2.push_back(p);
            }
            SpherePairTruth truth_pair;
            truth_pair.radii = {spheres[0]->radius, spheres[1]->radius};
            truth_pair.center_distance = (spheres[0]->center - spheres[1]->center).norm();
            report.spheres = sphere_pair_report(c1, c2, truth_pair, cfg.sphere_trim);
        }
        save_report(art.path("report.json"), report);
    } catch (const std::exception& e) {
        throw StageError("evaluate", e.what());
    }

    // --- manifest ---------------------------------------------------------------
    try {
        json cj = config_to_json(cfg);
        json m;
        m["config"] = cj;
        char hex[17];
        std::snprintf(hex, sizeof hex, "%016llx",
                      static_cast<unsigned long long>(fnv1a(cj.dump())));
        m["config_hash"] = hex;
        m["seed"] = cfg.seed;
        m["stage_seeds"] = stage_seeds;
        m["format_version"] = 1;
        std::sort(art.names.begin(), art.names.end());
        m["artifacts"] = art.names;
        std::ofstream out((art.dir / "manifest.json").string());
        out << m.dump(2) << "\n";
    } catch (const std::exception& e) {
        throw StageError("manifest", e.what());
    }
    return report;
}

std::vector<MethodRow> compare_methods(const std::vector<PipelineConfig>& configs,
                                       const std::string& out_dir) {
    require(configs.size() >= 2, "compare: need at least two configs");
    for (const auto& cfg : configs) {
        require(cfg.scene_file == configs[0].scene_file,
                "compare: configs must share one scene");
        require(cfg.rig_file == configs[0].rig_file, "compare: configs must share one rig");
    }
    fs::create_directories(out_dir);
    std::vector<MethodRow> rows;
    for (size_t i = 0; i < configs.size(); ++i) {
        PipelineConfig cfg = configs[i];
        // Run directories are assigned here, so validate after filling them in.
        cfg.out_dir = (fs::path(out_dir) / ("run_" + std::to_string(i + 1))).string();
        validate_pipeline_config(cfg);
        EvaluationReport rep = run_pipeline(cfg);
        MethodRow row;
        row.label = method_label(cfg);
        if (rep.orders) {
            row.order_error_rate = rep.orders->rate;
            row.undecided_fraction = rep.orders->undecided_fraction;
        }
        row.phase_rmse = rep.phase_rmse.value_or(std::numeric_limits<double>::quiet_NaN());
        row.depth_rmse = rep.depth_rmse.value_or(std::numeric_limits<double>::quiet_NaN());
        rows.push_back(row);
    }

    char buf[64];
    auto num = [&buf](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    std::ofstream csv((fs::path(out_dir) / "compare.csv").string());
    csv << "method,order_error_rate,undecided_fraction,phase_rmse,depth_rmse\n";
    json table = json::array();
    for (const auto& r : rows) {
        csv << r.label << "," << num(r.order_error_rate) << "," << num(r.undecided_fraction)
            << "," << num(r.phase_rmse) << "," << num(r.depth_rmse) << "\n";
        json jr;
        jr["method"] = r.label;
        jr["order_error_rate"] = r.order_error_rate;
        jr["undecided_fraction"] = r.undecided_fraction;
        jr["phase_rmse"] = r.phase_rmse;
        jr["depth_rmse"] = r.depth_rmse;
        table.push_back(jr);
    }
    std::ofstream js((fs::path(out_dir) / "compare.json").string());
    js << table.dump(2) << "\n";
    return rows;
}

void write_ply(const std::string& path, const std::vector<Eigen::Vector3d>& points) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("ply: cannot write " + path);
    out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
        << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
    char line[96];
    for (const auto& p : points) {
        std::snprintf(line, sizeof line, "%.9g %.9g %.9g\n", p.x(), p.y(), p.z());
        out << line;
    }
}

}  // namespace fpp
