#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "fpp/geometry.hpp"
#include "fpp/image.hpp"
#include "fpp/simulator.hpp"

namespace fpp {

// Fringe-order decisions. Decided pixels carry k in [0, K-1] and the
// mismatch of the winning candidate (rad; summed over views when three
// cameras contribute). Undecided pixels are k = -1 and mask = 0.
struct OrderMap {
    Image<int32_t> k;
    ImageD confidence;
    MaskImage mask;
};

// Depth band used to prune candidates: a global [zmin, zmax] slab, refined
// by a per-pixel window (center map + scalar half-width) where available.
// Windows are clipped to the global band.
struct DepthRange {
    double zmin = 0.0, zmax = 0.0;
    ImageD z_center;         // empty -> purely global
    MaskImage center_valid;  // pixels whose window applies
    double half_width = 0.0;

    static DepthRange global(double zmin, double zmax);
    static DepthRange full_volume(const Rig& rig);
    bool per_pixel() const { return z_center.width > 0; }
    bool contains(int x, int y, double z) const;
    void validate() const;
};

struct Candidate {
    int k = -1;
    Eigen::Vector3d point{0, 0, 0};  // mm, world
    Eigen::Vector2d px2{-1, -1};     // projection into camera 2
    Eigen::Vector2d px3{-1, -1};     // projection into camera 3 (views=3)
    bool in_range = false;
    bool has2 = false, has3 = false;  // sampled successfully in that camera
    double mismatch = 0.0;            // accumulated |wrap(phi_view - phi1)|, rad
};

// Always K entries (one per possible order); pruned ones are flagged rather
// than removed so callers can see why a pixel failed.
struct CandidateSet {
    std::vector<Candidate> cands;
    int n_in_range() const;
};

struct SpuParams {
    double reject = 0.5;  // rad; best mismatch above this -> undecided
    double tie = 0.05;    // rad; two best within this -> undecided
    int window = 1;       // px margin required around a bilinear sample
    // reject/tie apply to per-view mismatches; selections over summed
    // two-view mismatches use 2x both thresholds.
};

// Wrapped phase packaged for interpolation: the unit phasor (cos, sin) is
// sampled bilinearly so wraps at +-pi cannot corrupt neighbours.
struct PhasorField {
    ImageD c, s;
    MaskImage valid;

    static PhasorField from(const ImageD& phi, const MaskImage* mask = nullptr);
    // Bilinear phase sample; nullopt when any support pixel is invalid, the
    // 2x2 support cell is not at least (margin-1) px inside the border, or
    // the interpolated phasor vanishes.
    std::optional<double> sample_phase(const Eigen::Vector2d& px, int margin = 1) const;
};

// One candidate per k in [0, K-1]: absolute phase phi1 + 2*pi*k restricted
// to the panel range, triangulated against the projector column, depth
// filtered, and (survivors only) projected into camera 2.
CandidateSet build_candidates(const Eigen::Vector2d& pixel, double phi1, const Rig& rig,
                              const DepthRange& depth);

struct Selection {
    int k = -1;
    double confidence = 0.0;
};

// Samples camera 2 at each surviving candidate and keeps the smallest
// mismatch, refusing to guess on rejects and near-ties.
Selection phase_similarity_select(CandidateSet& cands, const PhasorField& cam2_phase,
                                  double phi1, const SpuParams& params = {});

// Stereo unwrapping over the whole frame. views=3 projects candidates that
// survived the camera-2 check into camera 3 and sums both mismatches;
// candidates invisible to camera 3 drop out when any sibling is visible.
OrderMap spu_unwrap(const ImageD& phi1, const MaskImage& mask1, const ImageD& phi2,
                    const MaskImage& mask2, const ImageD* phi3, const MaskImage* mask3,
                    const Rig& rig, const DepthRange& depth, int views,
                    const SpuParams& params = {});

// Convenience overload: every pixel of every phase map treated as valid.
OrderMap spu_unwrap(const ImageD& phi1, const ImageD& phi2, const Rig& rig,
                    const DepthRange& depth, const SpuParams& params = {});

// Adaptive depth constraint: windows around the previous frame's depths,
// global fallback where the previous reconstruction has holes.
DepthRange adc_update(const ImageD& prev_depth, const MaskImage& prev_valid, double half_width,
                      const DepthRange& fallback);

// Reference-plane products needed to unwrap live frames against it (the
// stacks ride along for learned models that take reference channels).
struct ReferenceData {
    FringeStack cam1, cam2;
    Image<int32_t> k_ref;  // camera-1 order map of the z=0 plane
    ImageD phi_ref_abs;    // camera-1 absolute phase of the plane
    MaskImage mask;
    int periods = 0;
};

ReferenceData make_reference_data(const ReferenceRecord& rec);

// k = round((Phi_ref - phi) / 2*pi) clamped to [0, K-1]: exact wherever the
// surface stays within +-pi of the reference plane's absolute phase.
OrderMap reference_unwrap(const ImageD& phi, const MaskImage& mask, const ReferenceData& ref);

// Two-frequency oracle: phi_unit is the absolute unit-frequency phase of
// the same surface; k = round((K * phi_unit - phi_high) / 2*pi).
OrderMap tpu_hierarchical(const ImageD& phi_high, const ImageD& phi_unit, const MaskImage& mask,
                          int periods);

// Phi = phi + 2*pi*k on decided pixels; undecided pixels come out 0 and
// stay excluded via k.mask.
ImageD unwrap_apply(const ImageD& phi, const OrderMap& k);

}  // namespace fpp
