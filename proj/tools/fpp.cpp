// Command-line front end. Every subcommand is a thin wrapper over the
// library; file formats are the library's (FPI1 images, JSON configs,
// FPNN1 weights, ASCII PLY clouds).

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>

#include "fpp/evaluation.hpp"
#include "fpp/neural.hpp"
#include "fpp/phase_retrieval.hpp"
#include "fpp/pipeline.hpp"
#include "fpp/rng.hpp"
#include "fpp/scene.hpp"
#include "fpp/simulator.hpp"
#include "fpp/unwrapping.hpp"

namespace fs = std::filesystem;
using namespace fpp;

namespace {

ImageD frame0(const ImageD& frames) {
    ImageD out(frames.width, frames.height, 1);
    for (int y = 0; y < frames.height; ++y)
        for (int x = 0; x < frames.width; ++x) out.at(x, y) = frames.at(x, y, 0);
    return out;
}

Image<int32_t> round_orders(const ImageD& img) {
    Image<int32_t> k(img.width, img.height, 1);
    for (size_t i = 0; i < img.data.size(); ++i)
        k.data[i] = static_cast<int32_t>(std::lround(img.data[i]));
    return k;
}

Rig rig_by_name(const std::string& kind) {
    if (kind == "desk") return make_desk_rig();
    if (kind == "desk48") return make_desk48_rig();
    if (kind == "paper") return make_paper_rig();
    throw std::invalid_argument("unknown rig kind '" + kind + "' (desk | desk48 | paper)");
}

// --- pipeline config via flags ------------------------------------------------

// Flags mirror PipelineConfig; --config supplies a JSON base and explicitly
// given flags override its fields.
struct PipelineFlags {
    PipelineConfig v;
    std::string config_path;
    std::map<std::string, CLI::Option*> opt;
};

void add_pipeline_flags(CLI::App* cmd, PipelineFlags& f) {
    auto& o = f.opt;
    o["config"] = cmd->add_option("--config", f.config_path,
                                  "JSON config file; other flags override its fields");
    o["rig"] = cmd->add_option("--rig", f.v.rig_file, "rig calibration JSON");
    o["scene"] = cmd->add_option("--scene", f.v.scene_file, "scene JSON");
    o["steps"] = cmd->add_option("--steps", f.v.steps, "phase-shift count N");
    o["periods"] = cmd->add_option("--periods", f.v.periods, "expected fringe count K");
    o["retrieval"] = cmd->add_option("--retrieval", f.v.retrieval, "ps | ft | cnn1");
    o["unwrap"] = cmd->add_option("--unwrap", f.v.unwrap, "spu | ref | tpu | cnn2");
    o["views"] = cmd->add_option("--views", f.v.views, "cameras for stereo unwrapping (2|3)");
    o["zmin"] = cmd->add_option("--zmin", f.v.zmin, "depth band floor, mm");
    o["zmax"] = cmd->add_option("--zmax", f.v.zmax, "depth band ceiling, mm");
    o["adc_from"] = cmd->add_option("--adc-from", f.v.adc_from,
                                    "depth FPI of a previous run for per-pixel windows");
    o["adc_half_width"] =
        cmd->add_option("--adc-half-width", f.v.adc_half_width, "window half width, mm");
    o["cnn1_weights"] = cmd->add_option("--cnn1-weights", f.v.cnn1_weights, "FPNN1 file");
    o["cnn2_weights"] = cmd->add_option("--cnn2-weights", f.v.cnn2_weights, "FPNN1 file");
    o["reference_manifest"] = cmd->add_option("--reference-manifest", f.v.reference_manifest,
                                              "dataset manifest holding the reference record");
    o["sphere_trim"] =
        cmd->add_flag("--sphere-trim", f.v.sphere_trim, "MAD 3-sigma trim in sphere fits");
    o["out"] = cmd->add_option("--out", f.v.out_dir, "artifact directory");
    o["seed"] = cmd->add_option("--seed", f.v.seed, "master seed");
}

PipelineConfig resolve_config(const PipelineFlags& f) {
    PipelineConfig out;
    if (!f.config_path.empty()) out = load_pipeline_config(f.config_path);
    auto set = [&](const char* key) { return f.opt.at(key)->count() > 0; };
    if (set("rig")) out.rig_file = f.v.rig_file;
    if (set("scene")) out.scene_file = f.v.scene_file;
    if (set("steps")) out.steps = f.v.steps;
    if (set("periods")) out.periods = f.v.periods;
    if (set("retrieval")) out.retrieval = f.v.retrieval;
    if (set("unwrap")) out.unwrap = f.v.unwrap;
    if (set("views")) out.views = f.v.views;
    if (set("zmin")) out.zmin = f.v.zmin;
    if (set("zmax")) out.zmax = f.v.zmax;
    if (set("adc_from")) out.adc_from = f.v.adc_from;
    if (set("adc_half_width")) out.adc_half_width = f.v.adc_half_width;
    if (set("cnn1_weights")) out.cnn1_weights = f.v.cnn1_weights;
    if (set("cnn2_weights")) out.cnn2_weights = f.v.cnn2_weights;
    if (set("reference_manifest")) out.reference_manifest = f.v.reference_manifest;
    if (set("sphere_trim")) out.sphere_trim = f.v.sphere_trim;
    if (set("out")) out.out_dir = f.v.out_dir;
    if (set("seed")) out.seed = f.v.seed;
    return out;
}

// --- simulate -------------------------------------------------------------------

struct SimulateOpts {
    std::string emit_rig, emit_scene;
    std::string rig_file, scene_file, recipe_file, out;
    double plane_z = 0, gap_periods = 1.0;
    int half_steps = 3;
    double step_periods = 1.0;
    int steps = 3, cameras = 1, dataset = 0;
    bool noise_free = false;
    uint64_t seed = 1;
};

void run_simulate(const SimulateOpts& o) {
    if (!o.emit_rig.empty()) {
        save_rig(o.out, rig_by_name(o.emit_rig));
        return;
    }
    if (!o.emit_scene.empty()) {
        Scene scene;
        if (o.emit_scene == "plane") {
            scene = make_plane_scene(o.plane_z);
        } else if (o.emit_scene == "sphere-pair") {
            scene = make_sphere_pair_scene();
        } else if (o.emit_scene == "discontinuity") {
            scene = make_discontinuity_scene(load_rig(o.rig_file), o.gap_periods);
        } else if (o.emit_scene == "staircase") {
            scene = make_staircase_scene(load_rig(o.rig_file), o.half_steps, o.step_periods);
        } else {
            throw std::invalid_argument(
                "unknown scene kind '" + o.emit_scene +
                "' (plane | sphere-pair | discontinuity | staircase)");
        }
        save_scene(o.out, scene);
        return;
    }
    Rig rig = load_rig(o.rig_file);
    if (o.dataset > 0) {
        DatasetRecipe recipe;
        if (!o.recipe_file.empty()) recipe = load_recipe(o.recipe_file);
        if (o.noise_free) recipe.noise = NoiseModel{0.0, false};
        generate_dataset(o.dataset, rig, recipe, o.seed, o.out);
        return;
    }
    Scene scene = load_scene(o.scene_file);
    if (o.noise_free) scene.noise = NoiseModel{0.0, false};
    fs::create_directories(o.out);
    for (int i = 0; i < o.cameras; ++i) {
        RenderResult r = render_fringe_stack(scene, rig.cameras.at(i), rig.projector, o.steps,
                                             derive_seed(o.seed, 100 + i));
        std::string tag = "_cam" + std::to_string(i + 1) + ".fpi";
        write_fpi((fs::path(o.out) / ("stack" + tag)).string(), r.stack.frames);
        if (i == 0) {
            auto at = [&](const char* n) { return (fs::path(o.out) / n).string(); };
            write_fpi(at("gt_depth.fpi"), r.gt.depth);
            write_fpi(at("gt_abs_phase.fpi"), r.gt.phi_abs);
            write_fpi(at("gt_wrapped.fpi"), r.gt.phi_wrapped);
            write_fpi(at("gt_order.fpi"), r.gt.order.cast<double>());
            write_fpi_mask(at("gt_mask.fpi"), r.gt.mask);
        }
    }
}

// --- retrieve -------------------------------------------------------------------

struct RetrieveOpts {
    std::string stack, method = "ps", weights, out;
    double carrier = 0;
};

void run_retrieve(const RetrieveOpts& o) {
    ImageD frames = read_fpi(o.stack).cast<double>();
    fs::create_directories(o.out);
    auto at = [&](const char* n) { return (fs::path(o.out) / n).string(); };
    PhaseMaps pm;
    if (o.method == "ps") {
        FringeStack stack;
        stack.frames = std::move(frames);
        pm = retrieve_phase(stack);
    } else if (o.method == "ft") {
        if (o.carrier <= 0)
            throw std::invalid_argument("ft retrieval needs --carrier (cycles/px)");
        ft_wrapped_phase(frame0(frames), o.carrier, pm.phi, pm.mask);
    } else if (o.method == "cnn1") {
        Params net = load_weights(o.weights);
        auto md = infer_cnn1(net, frame0(frames));
        pm.M = std::move(md.first);
        pm.D = std::move(md.second);
        pm.phi = wrapped_phase(pm.M, pm.D);
        modulation(pm.M, pm.D, frames.channels, pm.B_mod, pm.mask);
    } else {
        throw std::invalid_argument("unknown retrieval method '" + o.method + "'");
    }
    if (pm.M.width > 0) write_fpi(at("m.fpi"), pm.M);
    if (pm.D.width > 0) write_fpi(at("d.fpi"), pm.D);
    if (pm.B_mod.width > 0) write_fpi(at("bmod.fpi"), pm.B_mod);
    write_fpi(at("phi.fpi"), pm.phi);
    write_fpi_mask(at("mask.fpi"), pm.mask);
}

// --- unwrap ---------------------------------------------------------------------

struct UnwrapOpts {
    std::string method = "spu";
    std::string phi, mask, phi2, mask2, phi3, mask3;
    std::string rig_file;
    int views = 2, steps = 3, periods = 0;
    double zmin = 0, zmax = 0, adc_half_width = 5.0;
    std::string adc_from, phi_unit;
    std::string weights, reference_manifest, frame1, frame2;
    std::string out;
};

void run_unwrap(const UnwrapOpts& o) {
    ImageD phi = read_fpi_double(o.phi);
    MaskImage mask = o.mask.empty() ? MaskImage() : read_fpi_mask(o.mask);
    if (mask.width == 0) {
        mask = MaskImage(phi.width, phi.height, 1);
        std::fill(mask.data.begin(), mask.data.end(), uint8_t(1));
    }
    OrderMap orders;
    if (o.method == "spu") {
        Rig rig = load_rig(o.rig_file);
        DepthRange range = o.zmin < o.zmax ? DepthRange::global(o.zmin, o.zmax)
                                           : DepthRange::full_volume(rig);
        if (!o.adc_from.empty()) {
            ImageD prev = read_fpi_double(o.adc_from);
            MaskImage valid(prev.width, prev.height, 1);
            for (size_t i = 0; i < prev.data.size(); ++i)
                valid.data[i] = std::isfinite(prev.data[i]) ? 1 : 0;
            range = adc_update(prev, valid, o.adc_half_width, range);
        }
        ImageD phi2 = read_fpi_double(o.phi2);
        MaskImage mask2 = read_fpi_mask(o.mask2);
        ImageD phi3;
        MaskImage mask3;
        if (o.views == 3) {
            phi3 = read_fpi_double(o.phi3);
            mask3 = read_fpi_mask(o.mask3);
        }
        orders = spu_unwrap(phi, mask, phi2, mask2, o.views == 3 ? &phi3 : nullptr,
                            o.views == 3 ? &mask3 : nullptr, load_rig(o.rig_file), range,
                            o.views);
    } else if (o.method == "ref") {
        Rig rig = load_rig(o.rig_file);
        orders = reference_unwrap(phi, mask, make_reference_data(render_reference(rig, o.steps)));
    } else if (o.method == "tpu") {
        ImageD unit = read_fpi_double(o.phi_unit);
        orders = tpu_hierarchical(phi, unit, mask, o.periods);
    } else if (o.method == "cnn2") {
        Params net = load_weights(o.weights);
        DatasetManifest man = load_manifest(o.reference_manifest);
        const SampleRecord* ref = nullptr;
        for (const auto& r : man.records)
            if (r.is_reference) ref = &r;
        if (!ref) throw std::runtime_error("reference manifest has no reference record");
        auto rel = [&](const std::string& p) { return (fs::path(man.root_dir) / p).string(); };
        ImageD ref1 = frame0(read_fpi(rel(ref->stack_paths.at(0))).cast<double>());
        ImageD ref2 = frame0(read_fpi(rel(ref->stack_paths.at(1))).cast<double>());
        Image<int32_t> ref_k = round_orders(read_fpi_double(rel(ref->gt_order_path)));
        int periods = o.periods > 0 ? o.periods : man.periods;
        TensorF in = cnn2_stack(frame0(read_fpi(o.frame1).cast<double>()),
                                frame0(read_fpi(o.frame2).cast<double>()), ref1, ref2, ref_k,
                                periods);
        orders = infer_cnn2(net, in, periods);
        for (size_t i = 0; i < orders.mask.data.size(); ++i)
            if (!mask.data[i]) {
                orders.mask.data[i] = 0;
                orders.k.data[i] = -1;
            }
    } else {
        throw std::invalid_argument("unknown unwrap method '" + o.method + "'");
    }
    fs::create_directories(o.out);
    auto at = [&](const char* n) { return (fs::path(o.out) / n).string(); };
    write_fpi(at("order.fpi"), orders.k.cast<double>());
    write_fpi(at("order_conf.fpi"), orders.confidence);
    write_fpi_mask(at("order_mask.fpi"), orders.mask);
    write_fpi(at("abs_phase.fpi"), unwrap_apply(phi, orders));
}

// --- reconstruct ----------------------------------------------------------------

struct ReconstructOpts {
    std::string phi_abs, order_mask, rig_file, out;
};

void run_reconstruct(const ReconstructOpts& o) {
    ImageD phi = read_fpi_double(o.phi_abs);
    MaskImage mask = read_fpi_mask(o.order_mask);
    Rig rig = load_rig(o.rig_file);
    ImageD depth(phi.width, phi.height, 1);
    std::vector<Eigen::Vector3d> cloud;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double phi_max = 2.0 * M_PI * rig.projector.periods;
    for (int y = 0; y < phi.height; ++y)
        for (int x = 0; x < phi.width; ++x) {
            depth.at(x, y) = nan;
            if (!mask.at(x, y)) continue;
            double u = phase_to_projector_column(std::clamp(phi.at(x, y), 0.0, phi_max),
                                                 rig.projector);
            auto tri = triangulate_camera_projector(Eigen::Vector2d(x, y), rig.cameras.at(0), u,
                                                    rig.projector);
            depth.at(x, y) = tri.point.z();
            cloud.push_back(tri.point);
        }
    fs::create_directories(o.out);
    write_fpi((fs::path(o.out) / "depth.fpi").string(), depth);
    write_ply((fs::path(o.out) / "cloud.ply").string(), cloud);
}

// --- train / infer ----------------------------------------------------------------

struct TrainOpts {
    std::string manifest, net = "cnn1", out, curve;
    int epochs = 100, batch = 1, filters = 16;
    double lr = 1e-4, lr_final = 0.0;
    uint64_t seed = 1;
};

void run_train(const TrainOpts& o) {
    DatasetManifest man = load_manifest(o.manifest);
    ModelSpec spec;
    std::vector<TrainSample> tr, va;
    if (o.net == "cnn1") {
        spec = ModelSpec{1, o.filters, 4, 2};
        tr = make_cnn1_samples(man, "train");
        va = make_cnn1_samples(man, "val");
    } else if (o.net == "cnn2") {
        spec = ModelSpec{5, o.filters, 4, 1};
        tr = make_cnn2_samples(man, "train");
        va = make_cnn2_samples(man, "val");
    } else {
        throw std::invalid_argument("unknown net '" + o.net + "' (cnn1 | cnn2)");
    }
    TrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.seed = o.seed;
    cfg.lr = o.lr;
    cfg.lr_final = o.lr_final;
    cfg.batch_size = o.batch;
    cfg.curve_csv = o.curve;
    TrainResult res = train_network(spec, tr, va, cfg);
    save_weights(o.out, res.best);
    std::cout << o.net << ": best validation loss " << res.curve[res.best_epoch][2]
              << " at epoch " << res.best_epoch << "\n";
}

struct InferOpts {
    std::string weights, net = "cnn1", out;
    std::string frame, frame1, frame2, reference_manifest;
    int periods = 0;
};

void run_infer(const InferOpts& o) {
    fs::create_directories(o.out);
    auto at = [&](const char* n) { return (fs::path(o.out) / n).string(); };
    if (o.net == "cnn1") {
        RetrieveOpts r;
        r.stack = o.frame;
        r.method = "cnn1";
        r.weights = o.weights;
        r.out = o.out;
        run_retrieve(r);
        return;
    }
    if (o.net != "cnn2") throw std::invalid_argument("unknown net '" + o.net + "'");
    UnwrapOpts u;
    u.method = "cnn2";
    u.weights = o.weights;
    u.reference_manifest = o.reference_manifest;
    u.frame1 = o.frame1;
    u.frame2 = o.frame2;
    u.periods = o.periods;
    // The order net does not need a wrapped phase; feed zeros so the shared
    // path can still write the unwrapped map of pure 2*pi*k.
    ImageD f1 = frame0(read_fpi(o.frame1).cast<double>());
    ImageD zeros(f1.width, f1.height, 1);
    write_fpi(at("zero_phi.fpi"), zeros);
    u.phi = at("zero_phi.fpi");
    u.out = o.out;
    run_unwrap(u);
}

// --- evaluate -------------------------------------------------------------------

struct EvaluateOpts {
    std::string order, order_mask, gt_order, gt_mask;
    std::string phi_abs, gt_phi, depth, gt_depth;
    std::string out;
};

void run_evaluate(const EvaluateOpts& o) {
    EvaluationReport report;
    OrderMap pred;
    pred.k = round_orders(read_fpi_double(o.order));
    pred.confidence = ImageD(pred.k.width, pred.k.height, 1);
    pred.mask = read_fpi_mask(o.order_mask);
    OrderMap truth;
    truth.k = round_orders(read_fpi_double(o.gt_order));
    truth.confidence = ImageD(truth.k.width, truth.k.height, 1);
    truth.mask = read_fpi_mask(o.gt_mask);
    report.orders = order_error_rate(pred, truth);
    if (!o.phi_abs.empty()) {
        ImageD phi = read_fpi_double(o.phi_abs);
        ImageD gt_phi = read_fpi_double(o.gt_phi);
        ImageD depth = read_fpi_double(o.depth);
        ImageD gt_depth = read_fpi_double(o.gt_depth);
        MaskImage joint(truth.mask.width, truth.mask.height, 1);
        for (size_t i = 0; i < joint.data.size(); ++i)
            joint.data[i] = truth.mask.data[i] && pred.mask.data[i];
        ErrorMaps maps = phase_and_depth_errors(phi, gt_phi, depth, gt_depth, joint);
        report.phase_rmse = maps.phase_rmse;
        report.depth_rmse = maps.depth_rmse;
        fs::path dir = fs::path(o.out).parent_path();
        report.phase_error_path = "phase_error.fpi";
        report.depth_error_path = "depth_error.fpi";
        write_fpi((dir / report.phase_error_path).string(), maps.phase_error);
        write_fpi((dir / report.depth_error_path).string(), maps.depth_error);
    }
    save_report(o.out, report);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fringe projection profilometry workbench"};
    app.require_subcommand(1);

    SimulateOpts sim;
    auto* c_sim = app.add_subcommand("simulate",
                                     "render fringe stacks, emit rigs/scenes, build datasets");
    c_sim->add_option("--emit-rig", sim.emit_rig, "write a factory rig (desk | desk48 | paper)");
    c_sim->add_option("--emit-scene", sim.emit_scene,
                      "write a canonical scene (plane | sphere-pair | discontinuity | staircase)");
    c_sim->add_option("--plane-z", sim.plane_z, "plane scene depth, mm");
    c_sim->add_option("--gap-periods", sim.gap_periods, "discontinuity plate gap, fringe periods");
    c_sim->add_option("--half-steps", sim.half_steps, "staircase steps each side of z=0");
    c_sim->add_option("--step-periods", sim.step_periods, "staircase step height, fringe periods");
    c_sim->add_option("--rig", sim.rig_file, "rig calibration JSON");
    c_sim->add_option("--scene", sim.scene_file, "scene JSON to render");
    c_sim->add_option("--recipe", sim.recipe_file, "dataset recipe JSON");
    c_sim->add_option("--dataset", sim.dataset, "generate this many dataset records");
    c_sim->add_option("--steps", sim.steps, "phase-shift count N");
    c_sim->add_option("--cameras", sim.cameras, "how many rig cameras to render");
    c_sim->add_flag("--noise-free", sim.noise_free, "disable sensor noise and quantization");
    c_sim->add_option("--seed", sim.seed, "render seed");
    c_sim->add_option("--out", sim.out, "output path (file for --emit-*, directory otherwise)")
        ->required();
    c_sim->callback([&] { run_simulate(sim); });

    RetrieveOpts ret;
    auto* c_ret = app.add_subcommand("retrieve", "wrapped phase from a fringe stack");
    c_ret->add_option("--stack", ret.stack, "FPI fringe stack")->required();
    c_ret->add_option("--method", ret.method, "ps | ft | cnn1");
    c_ret->add_option("--carrier", ret.carrier, "ft carrier frequency, cycles/px");
    c_ret->add_option("--weights", ret.weights, "FPNN1 file (cnn1)");
    c_ret->add_option("--out", ret.out, "output directory")->required();
    c_ret->callback([&] { run_retrieve(ret); });

    UnwrapOpts unw;
    auto* c_unw = app.add_subcommand("unwrap", "fringe orders for a wrapped phase map");
    c_unw->add_option("--method", unw.method, "spu | ref | tpu | cnn2");
    c_unw->add_option("--phi", unw.phi, "camera-1 wrapped phase FPI")->required();
    c_unw->add_option("--mask", unw.mask, "camera-1 mask FPI");
    c_unw->add_option("--phi2", unw.phi2, "camera-2 wrapped phase (spu)");
    c_unw->add_option("--mask2", unw.mask2, "camera-2 mask (spu)");
    c_unw->add_option("--phi3", unw.phi3, "camera-3 wrapped phase (spu, views=3)");
    c_unw->add_option("--mask3", unw.mask3, "camera-3 mask (spu, views=3)");
    c_unw->add_option("--rig", unw.rig_file, "rig calibration JSON (spu, ref)");
    c_unw->add_option("--views", unw.views, "2 or 3 (spu)");
    c_unw->add_option("--steps", unw.steps, "phase-shift count for the reference render (ref)");
    c_unw->add_option("--periods", unw.periods, "fringe count K (tpu, cnn2)");
    c_unw->add_option("--zmin", unw.zmin, "depth band floor, mm (spu)");
    c_unw->add_option("--zmax", unw.zmax, "depth band ceiling, mm (spu)");
    c_unw->add_option("--adc-from", unw.adc_from, "previous depth FPI (spu)");
    c_unw->add_option("--adc-half-width", unw.adc_half_width, "window half width, mm");
    c_unw->add_option("--phi-unit", unw.phi_unit, "unit-frequency absolute phase FPI (tpu)");
    c_unw->add_option("--weights", unw.weights, "FPNN1 file (cnn2)");
    c_unw->add_option("--reference-manifest", unw.reference_manifest,
                      "dataset manifest with the reference record (cnn2)");
    c_unw->add_option("--frame1", unw.frame1, "camera-1 fringe stack FPI (cnn2)");
    c_unw->add_option("--frame2", unw.frame2, "camera-2 fringe stack FPI (cnn2)");
    c_unw->add_option("--out", unw.out, "output directory")->required();
    c_unw->callback([&] { run_unwrap(unw); });

    ReconstructOpts rec;
    auto* c_rec = app.add_subcommand("reconstruct", "depth map and point cloud from phase");
    c_rec->add_option("--phi-abs", rec.phi_abs, "absolute phase FPI")->required();
    c_rec->add_option("--order-mask", rec.order_mask, "decided-pixel mask FPI")->required();
    c_rec->add_option("--rig", rec.rig_file, "rig calibration JSON")->required();
    c_rec->add_option("--out", rec.out, "output directory")->required();
    c_rec->callback([&] { run_reconstruct(rec); });

    TrainOpts tra;
    auto* c_tra = app.add_subcommand("train", "train a phase or order network");
    c_tra->add_option("--manifest", tra.manifest, "dataset manifest JSON")->required();
    c_tra->add_option("--net", tra.net, "cnn1 | cnn2");
    c_tra->add_option("--epochs", tra.epochs, "training epochs");
    c_tra->add_option("--batch", tra.batch, "batch size");
    c_tra->add_option("--filters", tra.filters, "convolution width C");
    c_tra->add_option("--lr", tra.lr, "Adam learning rate");
    c_tra->add_option("--lr-final", tra.lr_final,
                      "decay the rate geometrically to this value (0 = constant)");
    c_tra->add_option("--seed", tra.seed, "shuffle/init seed");
    c_tra->add_option("--curve", tra.curve, "loss curve CSV path");
    c_tra->add_option("--out", tra.out, "FPNN1 weights path")->required();
    c_tra->callback([&] { run_train(tra); });

    InferOpts inf;
    auto* c_inf = app.add_subcommand("infer", "run a trained network on captured frames");
    c_inf->add_option("--weights", inf.weights, "FPNN1 file")->required();
    c_inf->add_option("--net", inf.net, "cnn1 | cnn2");
    c_inf->add_option("--frame", inf.frame, "fringe stack FPI, first frame used (cnn1)");
    c_inf->add_option("--frame1", inf.frame1, "camera-1 fringe stack FPI (cnn2)");
    c_inf->add_option("--frame2", inf.frame2, "camera-2 fringe stack FPI (cnn2)");
    c_inf->add_option("--reference-manifest", inf.reference_manifest,
                      "dataset manifest with the reference record (cnn2)");
    c_inf->add_option("--periods", inf.periods, "fringe count K (cnn2)");
    c_inf->add_option("--out", inf.out, "output directory")->required();
    c_inf->callback([&] { run_infer(inf); });

    EvaluateOpts eva;
    auto* c_eva = app.add_subcommand("evaluate", "score predictions against ground truth");
    c_eva->add_option("--order", eva.order, "predicted order FPI")->required();
    c_eva->add_option("--order-mask", eva.order_mask, "decided mask FPI")->required();
    c_eva->add_option("--gt-order", eva.gt_order, "true order FPI")->required();
    c_eva->add_option("--gt-mask", eva.gt_mask, "true mask FPI")->required();
    c_eva->add_option("--phi-abs", eva.phi_abs, "predicted absolute phase FPI");
    c_eva->add_option("--gt-phi", eva.gt_phi, "true absolute phase FPI");
    c_eva->add_option("--depth", eva.depth, "predicted depth FPI");
    c_eva->add_option("--gt-depth", eva.gt_depth, "true depth FPI");
    c_eva->add_option("--out", eva.out, "report JSON path")->required();
    c_eva->callback([&] { run_evaluate(eva); });

    PipelineFlags pipe;
    auto* c_pipe = app.add_subcommand("pipeline", "simulate, retrieve, unwrap, reconstruct and "
                                                  "evaluate one configuration");
    add_pipeline_flags(c_pipe, pipe);
    c_pipe->callback([&] { run_pipeline(resolve_config(pipe)); });

    std::vector<std::string> cmp_configs;
    std::string cmp_out;
    auto* c_cmp = app.add_subcommand("compare", "run several configs on one scene and tabulate");
    c_cmp->add_option("--config", cmp_configs, "pipeline config JSON (repeat per method)")
        ->required();
    c_cmp->add_option("--out", cmp_out, "comparison output directory")->required();
    c_cmp->callback([&] {
        std::vector<PipelineConfig> cfgs;
        for (const auto& p : cmp_configs) cfgs.push_back(load_pipeline_config(p));
        compare_methods(cfgs, cmp_out);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const StageError& e) {
        std::cerr << e.stage() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 0;
}
