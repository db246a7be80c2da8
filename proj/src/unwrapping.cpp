#include "fpp/unwrapping.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fpp/simulator.hpp"

namespace fpp {

using Eigen::Vector2d;
using Eigen::Vector3d;

namespace {

inline double wrap_to_pi(double x) {
    x = std::fmod(x + M_PI, 2.0 * M_PI);
    if (x < 0) x += 2.0 * M_PI;
    return x - M_PI;
}

}  // namespace

// --- depth range ---------------------------------------------------------------

DepthRange DepthRange::global(double zmin, double zmax) {
    DepthRange d;
    d.zmin = zmin;
    d.zmax = zmax;
    d.validate();
    return d;
}

DepthRange DepthRange::full_volume(const Rig& rig) {
    return global(rig.volume_zmin, rig.volume_zmax);
}

void DepthRange::validate() const {
    if (!(zmin < zmax)) throw std::runtime_error("depth range: zmin must be < zmax");
    if (per_pixel()) {
        if (!(half_width > 0))
            throw std::runtime_error("depth range: half_width must be positive");
        if (!z_center.same_size(center_valid))
            throw std::runtime_error("depth range: window maps mismatched");
    }
}

bool DepthRange::contains(int x, int y, double z) const {
    if (per_pixel() && z_center.contains(x, y) && center_valid.at(x, y)) {
        const double c = z_center.at(x, y);
        const double lo = std::max(zmin, c - half_width);
        const double hi = std::min(zmax, c + half_width);
        return z >= lo && z <= hi;
    }
    return z >= zmin && z <= zmax;
}

// --- phasor sampling -------------------------------------------------------------

PhasorField PhasorField::from(const ImageD& phi, const MaskImage* mask) {
    if (phi.channels != 1) throw std::runtime_error("phasor: expects a single-channel map");
    if (mask && !mask->same_size(phi))
        throw std::runtime_error("phasor: mask does not match phase map");
    PhasorField f;
    f.c = ImageD(phi.width, phi.height);
    f.s = ImageD(phi.width, phi.height);
    f.valid = mask ? *mask : MaskImage(phi.width, phi.height, 1, 1);
    for (size_t i = 0; i < phi.data.size(); ++i) {
        f.c.data[i] = std::cos(phi.data[i]);
        f.s.data[i] = std::sin(phi.data[i]);
    }
    return f;
}

std::optional<double> PhasorField::sample_phase(const Vector2d& px, int margin) const {
    const int shrink = std::max(0, margin - 1);
    int x0 = static_cast<int>(std::floor(px.x()));
    int y0 = static_cast<int>(std::floor(px.y()));
    double fx = px.x() - x0, fy = px.y() - y0;
    // An exact hit on the last column/row borrows the cell to its left/top;
    // all weight then sits on the +1 taps, so nothing is extrapolated.
    if (fx == 0.0 && x0 == c.width - 1 && x0 > 0) {
        --x0;
        fx = 1.0;
    }
    if (fy == 0.0 && y0 == c.height - 1 && y0 > 0) {
        --y0;
        fy = 1.0;
    }
    if (x0 < shrink || y0 < shrink || x0 + 1 > c.width - 1 - shrink ||
        y0 + 1 > c.height - 1 - shrink)
        return std::nullopt;
    if (!valid.at(x0, y0) || !valid.at(x0 + 1, y0) || !valid.at(x0, y0 + 1) ||
        !valid.at(x0 + 1, y0 + 1))
        return std::nullopt;
    auto lerp2 = [&](const ImageD& img) {
        return (1 - fx) * (1 - fy) * img.at(x0, y0) + fx * (1 - fy) * img.at(x0 + 1, y0) +
               (1 - fx) * fy * img.at(x0, y0 + 1) + fx * fy * img.at(x0 + 1, y0 + 1);
    };
    const double cc = lerp2(c), ss = lerp2(s);
    if (std::hypot(cc, ss) < 1e-9) return std::nullopt;
    return std::atan2(ss, cc);
}

// --- candidates -----------------------------------------------------------------

int CandidateSet::n_in_range() const {
    int n = 0;
    for (const auto& c : cands) n += c.in_range ? 1 : 0;
    return n;
}

CandidateSet build_candidates(const Vector2d& pixel, double phi1, const Rig& rig,
                              const DepthRange& depth) {
    if (rig.cameras.size() < 2)
        throw std::runtime_error("spu: rig needs at least two cameras");
    const ProjectorModel& proj = rig.projector;
    const int K = proj.periods;
    const double span = 2.0 * M_PI * K;

    CandidateSet set;
    set.cands.resize(K);
    const Ray ray = backproject_ray(pixel, rig.cameras[0]);
    const RigidTransform proj_to_world = proj.cam.pose.inverse();
    const int xi = static_cast<int>(std::lround(pixel.x()));
    const int yi = static_cast<int>(std::lround(pixel.y()));

    for (int k = 0; k < K; ++k) {
        Candidate& c = set.cands[k];
        c.k = k;
        const double Phi = phi1 + 2.0 * M_PI * k;
        if (Phi < 0.0 || Phi > span) continue;  // outside the panel: impossible order
        const double u_p = phase_to_projector_column(Phi, proj);
        const TriangulationCP tri = intersect_column_plane(ray, u_p, proj, proj_to_world);
        c.point = tri.point;
        c.in_range = depth.contains(xi, yi, tri.point.z());
        if (!c.in_range) continue;
        try {
            c.px2 = project(tri.point, rig.cameras[1]);
        } catch (const std::runtime_error&) {
            c.in_range = false;  // behind camera 2: unusable candidate
        }
    }
    return set;
}

namespace {

void sample_cam2(CandidateSet& cs, const PhasorField& f2, double phi1, const SpuParams& p) {
    for (auto& c : cs.cands) {
        if (!c.in_range) continue;
        const auto s = f2.sample_phase(c.px2, p.window);
        if (!s) continue;
        c.has2 = true;
        c.mismatch = std::abs(wrap_to_pi(*s - phi1));
    }
}

Selection select_among(const CandidateSet& cs, bool use3, double reject, double tie) {
    double best = 1e300, second = 1e300;
    int bk = -1;
    for (const auto& c : cs.cands) {
        if (!(use3 ? c.has3 : c.has2)) continue;
        if (c.mismatch < best) {
            second = best;
            best = c.mismatch;
            bk = c.k;
        } else if (c.mismatch < second) {
            second = c.mismatch;
        }
    }
    if (bk < 0) return {-1, 0.0};
    if (best > reject) return {-1, best};
    if (second - best < tie) return {-1, best};
    return {bk, best};
}

}  // namespace

Selection phase_similarity_select(CandidateSet& cands, const PhasorField& cam2_phase,
                                  double phi1, const SpuParams& params) {
    sample_cam2(cands, cam2_phase, phi1, params);
    return select_among(cands, false, params.reject, params.tie);
}

OrderMap spu_unwrap(const ImageD& phi1, const MaskImage& mask1, const ImageD& phi2,
                    const MaskImage& mask2, const ImageD* phi3, const MaskImage* mask3,
                    const Rig& rig, const DepthRange& depth, int views,
                    const SpuParams& params) {
    if (views != 2 && views != 3) throw std::runtime_error("spu: views must be 2 or 3");
    if (rig.cameras.size() < size_t(views))
        throw std::runtime_error("spu: rig has fewer cameras than requested views");
    if (views == 3 && (!phi3 || !mask3))
        throw std::runtime_error("spu: three views need a third phase map");
    if (!phi1.same_size(mask1) || !phi2.same_size(mask2))
        throw std::runtime_error("spu: phase/mask dimensions mismatched");
    if (phi1.width != rig.cameras[0].width || phi1.height != rig.cameras[0].height)
        throw std::runtime_error("spu: phase map does not match camera 1");
    depth.validate();
    if (depth.per_pixel() && !depth.z_center.same_size(phi1))
        throw std::runtime_error("spu: depth windows do not match camera 1");

    const PhasorField f2 = PhasorField::from(phi2, &mask2);
    PhasorField f3;
    if (views == 3) f3 = PhasorField::from(*phi3, mask3);

    const int w = phi1.width, h = phi1.height;
    OrderMap out;
    out.k = Image<int32_t>(w, h, 1, -1);
    out.confidence = ImageD(w, h);
    out.mask = MaskImage(w, h, 1, 0);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask1.at(x, y)) continue;
            const double p1 = phi1.at(x, y);
            CandidateSet cs = build_candidates(Vector2d(x, y), p1, rig, depth);
            Selection sel;
            if (views == 2) {
                sel = phase_similarity_select(cs, f2, p1, params);
            } else {
                sample_cam2(cs, f2, p1, params);
                bool any3 = false;
                for (auto& c : cs.cands) {
                    if (!c.has2) continue;
                    try {
                        c.px3 = project(c.point, rig.cameras[2]);
                    } catch (const std::runtime_error&) {
                        continue;
                    }
                    const auto s3 = f3.sample_phase(c.px3, params.window);
                    if (!s3) continue;
                    c.has3 = true;
                    c.mismatch += std::abs(wrap_to_pi(*s3 - p1));
                    any3 = true;
                }
                sel = any3 ? select_among(cs, true, 2 * params.reject, 2 * params.tie)
                           : select_among(cs, false, params.reject, params.tie);
            }
            if (sel.k >= 0) {
                out.k.at(x, y) = sel.k;
                out.confidence.at(x, y) = sel.confidence;
                out.mask.at(x, y) = 1;
            }
        }
    }
    return out;
}

OrderMap spu_unwrap(const ImageD& phi1, const ImageD& phi2, const Rig& rig,
                    const DepthRange& depth, const SpuParams& params) {
    const MaskImage m1(phi1.width, phi1.height, 1, 1);
    const MaskImage m2(phi2.width, phi2.height, 1, 1);
    return spu_unwrap(phi1, m1, phi2, m2, nullptr, nullptr, rig, depth, 2, params);
}

DepthRange adc_update(const ImageD& prev_depth, const MaskImage& prev_valid, double half_width,
                      const DepthRange& fallback) {
    if (!(half_width > 0)) throw std::runtime_error("depth range: half_width must be positive");
    if (!prev_depth.same_size(prev_valid))
        throw std::runtime_error("depth range: window maps mismatched");
    DepthRange d;
    d.zmin = fallback.zmin;
    d.zmax = fallback.zmax;
    d.z_center = prev_depth;
    d.center_valid = prev_valid;
    d.half_width = half_width;
    d.validate();
    return d;
}

// --- reference / tpu / apply -------------------------------------------------------

ReferenceData make_reference_data(const ReferenceRecord& rec) {
    ReferenceData ref;
    ref.cam1 = rec.cam1;
    ref.cam2 = rec.cam2;
    ref.k_ref = rec.gt1.order;
    ref.phi_ref_abs = rec.gt1.phi_abs;
    ref.mask = rec.gt1.mask;
    ref.periods = rec.cam1.periods;
    return ref;
}

OrderMap reference_unwrap(const ImageD& phi, const MaskImage& mask, const ReferenceData& ref) {
    if (!phi.same_size(mask) || !phi.same_size(ref.phi_ref_abs))
        throw std::runtime_error("reference: map dimensions mismatched");
    if (ref.periods < 1) throw std::runtime_error("reference: periods not set");
    const int w = phi.width, h = phi.height;
    OrderMap out;
    out.k = Image<int32_t>(w, h, 1, -1);
    out.confidence = ImageD(w, h);
    out.mask = MaskImage(w, h, 1, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y) || !ref.mask.at(x, y)) continue;
            const double p = phi.at(x, y);
            const double target = ref.phi_ref_abs.at(x, y);
            int k = static_cast<int>(std::lround((target - p) / (2.0 * M_PI)));
            k = std::clamp(k, 0, ref.periods - 1);
            out.k.at(x, y) = k;
            out.confidence.at(x, y) = std::abs(p + 2.0 * M_PI * k - target);
            out.mask.at(x, y) = 1;
        }
    return out;
}

OrderMap tpu_hierarchical(const ImageD& phi_high, const ImageD& phi_unit, const MaskImage& mask,
                          int periods) {
    if (!phi_high.same_size(phi_unit) || !phi_high.same_size(mask))
        throw std::runtime_error("tpu: map dimensions mismatched");
    if (periods < 1) throw std::runtime_error("tpu: periods must be positive");
    const int w = phi_high.width, h = phi_high.height;
    OrderMap out;
    out.k = Image<int32_t>(w, h, 1, -1);
    out.confidence = ImageD(w, h);
    out.mask = MaskImage(w, h, 1, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y)) continue;
            const double scaled = periods * phi_unit.at(x, y);
            int k = static_cast<int>(std::lround((scaled - phi_high.at(x, y)) / (2.0 * M_PI)));
            k = std::clamp(k, 0, periods - 1);
            out.k.at(x, y) = k;
            out.confidence.at(x, y) =
                std::abs(scaled - (phi_high.at(x, y) + 2.0 * M_PI * k));
            out.mask.at(x, y) = 1;
        }
    return out;
}

ImageD unwrap_apply(const ImageD& phi, const OrderMap& k) {
    if (!phi.same_size(k.k) || !phi.same_size(k.mask))
        throw std::runtime_error("unwrap: map dimensions mismatched");
    ImageD out(phi.width, phi.height);
    for (size_t i = 0; i < out.data.size(); ++i)
        if (k.mask.data[i]) out.data[i] = phi.data[i] + 2.0 * M_PI * k.k.data[i];
    return out;
}

}  // namespace fpp
