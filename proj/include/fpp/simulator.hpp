#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fpp/geometry.hpp"
#include "fpp/image.hpp"
#include "fpp/scene.hpp"

namespace fpp {

// N phase-shifted frames of one camera, stored channel-interleaved
// (channel n = frame n, shift 2*pi*n/N).
struct FringeStack {
    ImageD frames;
    int periods = 0;    // K of the projected pattern
    int camera_id = 0;  // index into Rig::cameras

    int steps() const { return frames.channels; }
};

// Everything the simulator knows exactly. On the mask:
// phi_abs = phi_wrapped + 2*pi*order, order in [0, K-1], phi_wrapped in (-pi, pi].
struct GroundTruth {
    ImageD depth;        // world z, mm
    ImageD phi_abs;      // absolute phase, rad
    ImageD phi_wrapped;  // wrapped phase, rad
    Image<int32_t> order;
    MaskImage mask;  // pixel sees a surface lit by the projector
};

struct RenderResult {
    FringeStack stack;
    GroundTruth gt;
};

// Per pixel: cast the camera ray, shade the nearest hit with the fringe
// model I_n = A + B cos(Phi + 2*pi*n/N), fill ground truth from exact
// geometry. Unlit or shadowed surface pixels render as plain A with
// mask = false. Deterministic in (scene, seed) via counter-based RNG.
RenderResult render_fringe_stack(const Scene& scene, const CameraModel& cam,
                                 const ProjectorModel& proj, int steps, uint64_t seed);

// The z=0 plane captured from cameras 1 and 2, plus its exact order map /
// absolute phase in camera 1. Captured once per rig and reused.
struct ReferenceRecord {
    FringeStack cam1;
    FringeStack cam2;
    GroundTruth gt1;
};

ReferenceRecord render_reference(const Rig& rig, int steps,
                                 const NoiseModel& noise = {0.0, false});

// --- dataset generation -------------------------------------------------------

struct DatasetRecipe {
    int min_primitives = 1;
    int max_primitives = 3;
    bool spheres = true;
    bool planes = true;
    bool heightfields = true;
    double z_min = -45.0, z_max = 45.0;  // placement range, world z mm
    double xy_extent = 70.0;             // lateral placement half-range, mm
    double sphere_r_min = 15.0, sphere_r_max = 35.0;
    int steps = 3;
    NoiseModel noise{0.005, true};
    double train_fraction = 0.8;
};

void save_recipe(const std::string& path, const DatasetRecipe& r);
DatasetRecipe load_recipe(const std::string& path);

struct SampleRecord {
    int id = 0;
    bool is_reference = false;
    std::string split;  // "train" or "val"
    std::string scene_path;
    std::vector<std::string> stack_paths;           // one per camera
    std::string m1_path, d1_path, m2_path, d2_path; // PS closed-form labels
    std::string gt_depth_path, gt_abs_phase_path, gt_wrapped_path, gt_order_path, gt_mask_path;
};

struct DatasetManifest {
    std::string root_dir;  // directory of the manifest; all paths relative to it
    uint64_t seed = 0;
    int steps = 3;
    int periods = 0;
    std::string rig_path;
    std::vector<SampleRecord> records;
};

void save_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest load_manifest(const std::string& path);

// Renders `count` records under out_dir: record 0 is the reference plane,
// the rest are randomized primitive combinations inside the rig volume.
// Labels: M/D from the N-step closed form on the rendered (noisy) stacks,
// order maps from simulator truth.
DatasetManifest generate_dataset(int count, const Rig& rig, const DatasetRecipe& recipe,
                                 uint64_t seed, const std::string& out_dir);

// --- canonical scenes ----------------------------------------------------------

// Two plates whose depth gap is `gap_periods` fringe periods in projector
// space, edges collinear with camera 1 so the rendered fringes look
// continuous while the true order jumps at the seam. gap_periods = 1 gives
// the documented ambiguity case; fractional values produce a visible seam.
Scene make_discontinuity_scene(const Rig& rig, double gap_periods = 1.0, double z_near = -30.0,
                               double seam_x = 8.0);
Scene make_discontinuity_scene();

// Fronto-parallel plates stepped along x at z = j * step_periods * (one
// fringe period of depth), j in [-half_steps, half_steps].
Scene make_staircase_scene(const Rig& rig, int half_steps = 3, double step_periods = 1.0);

// Two spheres resting ahead of a backdrop, radii / center distance in mm.
Scene make_sphere_pair_scene(double r1 = 25.3989, double r2 = 25.4038,
                             double center_dist = 100.0532);

// Depth offset from z_from that changes the center-pixel projector phase
// by delta_phi (solved numerically; used to size period-exact steps).
double depth_of_phase_offset(const Rig& rig, double z_from, double delta_phi);

// --- rig factories --------------------------------------------------------------

// Desk scale: 128x96 cameras, 192x240 projector, K=12, three cameras.
Rig make_desk_rig();
// Same geometry with 256x192 cameras and K=48 (denser fringes need the
// extra samples per period).
Rig make_desk48_rig();
// Paper scale: 640x480 cameras, 912x1140 projector, K=48.
Rig make_paper_rig();

}  // namespace fpp
