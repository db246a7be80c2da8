#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "fpp/evaluation.hpp"

namespace fpp {

// One end-to-end run: simulate -> retrieve -> unwrap -> triangulate ->
// evaluate, with every intermediate written under out_dir.
struct PipelineConfig {
    std::string rig_file;
    std::string scene_file;
    int steps = 3;      // phase-shift count N
    int periods = 0;    // optional cross-check against the rig's K (0 = skip)
    std::string retrieval = "ps";  // ps | ft | cnn1
    std::string unwrap = "spu";    // spu | ref | tpu | cnn2
    int views = 2;                 // stereo unwrapping only: 2 or 3
    double zmin = 0, zmax = 0;     // zmin < zmax overrides the rig volume
    std::string adc_from;          // depth FPI from a previous run -> per-pixel windows
    double adc_half_width = 5.0;   // mm
    std::string cnn1_weights;
    std::string cnn2_weights;
    std::string reference_manifest;  // training dataset manifest (cnn2 inputs)
    bool sphere_trim = false;        // MAD 3-sigma trim in sphere fits
    std::string out_dir;
    uint64_t seed = 1;
};

void save_pipeline_config(const std::string& path, const PipelineConfig& cfg);
PipelineConfig load_pipeline_config(const std::string& path);

// Rejects bad method names/combinations and missing input files with
// std::invalid_argument before any output is created.
void validate_pipeline_config(const PipelineConfig& cfg);

// A stage failure, tagged with the stage name ("simulate", "retrieve", ...).
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& msg)
        : std::runtime_error(msg), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

EvaluationReport run_pipeline(const PipelineConfig& cfg);

// Runs each config into <out_dir>/run_<i> and writes compare.csv /
// compare.json with one metrics row per method. All configs must share the
// same scene and rig.
struct MethodRow {
    std::string label;
    double order_error_rate = 0;
    double undecided_fraction = 0;
    double phase_rmse = 0;
    double depth_rmse = 0;
};

std::vector<MethodRow> compare_methods(const std::vector<PipelineConfig>& configs,
                                       const std::string& out_dir);

// ASCII PLY (x y z, mm, world frame).
void write_ply(const std::string& path, const std::vector<Eigen::Vector3d>& points);

}  // namespace fpp
