#include <doctest.h>

#include <cmath>

#include "fpp/phase_retrieval.hpp"
#include "fpp/rng.hpp"
#include "fpp/scene.hpp"
#include "fpp/simulator.hpp"
#include "fpp/unwrapping.hpp"

using namespace fpp;
using Eigen::Vector2d;
using Eigen::Vector3d;

namespace {

double wrap(double a) { return std::remainder(a, 2 * M_PI); }

struct RenderedPair {
    RenderResult r1, r2, r3;
    PhaseMaps p1, p2, p3;
};

RenderedPair render_views(const Rig& rig, const Scene& scene, uint64_t seed) {
    RenderedPair out;
    out.r1 = render_fringe_stack(scene, rig.cameras[0], rig.projector, 3, derive_seed(seed, 1));
    out.r2 = render_fringe_stack(scene, rig.cameras[1], rig.projector, 3, derive_seed(seed, 2));
    out.r3 = render_fringe_stack(scene, rig.cameras[2], rig.projector, 3, derive_seed(seed, 3));
    out.p1 = retrieve_phase(out.r1.stack);
    out.p2 = retrieve_phase(out.r2.stack);
    out.p3 = retrieve_phase(out.r3.stack);
    return out;
}

struct Tally {
    int wrong = 0, decided = 0, total = 0;
};

Tally tally_orders(const OrderMap& om, const GroundTruth& gt) {
    Tally t;
    for (int y = 0; y < gt.mask.height; ++y)
        for (int x = 0; x < gt.mask.width; ++x) {
            if (!gt.mask.at(x, y)) continue;
            ++t.total;
            if (!om.mask.at(x, y)) continue;
            ++t.decided;
            if (om.k.at(x, y) != gt.order.at(x, y)) ++t.wrong;
        }
    return t;
}

}  // namespace

TEST_CASE("candidate sets enumerate every order and contain the truth") {
    Rig rig = make_desk_rig();
    Scene scene = make_plane_scene(25.0);
    scene.noise = {0.0, false};
    RenderResult r = render_fringe_stack(scene, rig.cameras[0], rig.projector, 3, 1);

    DepthRange full = DepthRange::full_volume(rig);
    int verified = 0;
    for (int y = 10; y < r.gt.mask.height - 10; y += 9)
        for (int x = 10; x < r.gt.mask.width - 10; x += 9) {
            if (!r.gt.mask.at(x, y)) continue;
            CandidateSet cs = build_candidates(Vector2d(x, y), r.gt.phi_wrapped.at(x, y), rig, full);
            REQUIRE(cs.cands.size() == static_cast<size_t>(rig.projector.periods));
            const Candidate& truth = cs.cands[r.gt.order.at(x, y)];
            CHECK(truth.in_range);
            CHECK(std::abs(truth.point.z() - r.gt.depth.at(x, y)) < 1e-6);
            ++verified;
        }
    CHECK(verified > 50);
}

TEST_CASE("depth pruning discards candidates outside the band") {
    Rig rig = make_desk_rig();
    Scene scene = make_plane_scene(25.0);
    scene.noise = {0.0, false};
    RenderResult r = render_fringe_stack(scene, rig.cameras[0], rig.projector, 3, 1);

    int x = r.gt.mask.width / 2, y = r.gt.mask.height / 2;
    REQUIRE(r.gt.mask.at(x, y));
    DepthRange tight = DepthRange::global(20.0, 30.0);
    CandidateSet cs = build_candidates(Vector2d(x, y), r.gt.phi_wrapped.at(x, y), rig, tight);
    for (const Candidate& c : cs.cands)
        if (c.in_range) {
            CHECK(c.point.z() >= 20.0);
            CHECK(c.point.z() <= 30.0);
        }
    CHECK(cs.n_in_range() >= 1);
    CHECK(cs.n_in_range() < rig.projector.periods);
    CHECK(cs.cands[r.gt.order.at(x, y)].in_range);
}

TEST_CASE("phase similarity selection scores wrapped mismatches correctly") {
    // Hand-built camera-2 phase values; the wrap metric must treat 3.1 and
    // -3.1 as 0.083 apart, not 6.2.
    ImageD phi2(3, 3, 1, 0.0);
    for (int y = 0; y < 3; ++y) {
        phi2.at(0, y) = -3.0;
        phi2.at(1, y) = 0.2;
        phi2.at(2, y) = 2.9;
    }
    PhasorField field = PhasorField::from(phi2);

    CandidateSet cs;
    cs.cands.resize(3);
    for (int k = 0; k < 3; ++k) {
        cs.cands[k].k = k;
        cs.cands[k].in_range = true;
        cs.cands[k].px2 = Vector2d(k, 1);
    }

    // observed wrapped phase 0.25: candidate 1 is 0.05 away, candidate 2 is
    // 2.65 away, candidate 0 is wrap(-3.0 - 0.25) = 3.03 away
    Selection sel = phase_similarity_select(cs, field, 0.25);
    CHECK(sel.k == 1);
    CHECK(sel.confidence == doctest::Approx(0.05).epsilon(1e-9));

    // wrap metric across the branch cut
    ImageD phi2b(2, 2, 1, 3.1);
    PhasorField fb = PhasorField::from(phi2b);
    CandidateSet cb;
    cb.cands.resize(1);
    cb.cands[0].k = 0;
    cb.cands[0].in_range = true;
    cb.cands[0].px2 = Vector2d(0.5, 0.5);
    SpuParams p;
    p.window = 0;
    Selection sb = phase_similarity_select(cb, fb, -3.1, p);
    CHECK(sb.k == 0);
    CHECK(sb.confidence == doctest::Approx(2 * M_PI - 6.2).epsilon(1e-9));
}

TEST_CASE("selection refuses rejects and near ties") {
    ImageD phi2(3, 2);
    for (int y = 0; y < 2; ++y) {
        phi2.at(0, y) = 1.0;
        phi2.at(1, y) = 1.04;
        phi2.at(2, y) = 2.8;
    }
    PhasorField field = PhasorField::from(phi2);
    SpuParams p;
    p.window = 0;

    CandidateSet two;
    two.cands.resize(2);
    for (int k = 0; k < 2; ++k) {
        two.cands[k].k = k;
        two.cands[k].in_range = true;
        two.cands[k].px2 = Vector2d(k, 0);
    }
    // both candidates within 0.04 rad of the observation: ambiguous
    Selection tie = phase_similarity_select(two, field, 1.02, p);
    CHECK(tie.k == -1);

    CandidateSet one;
    one.cands.resize(1);
    one.cands[0].k = 0;
    one.cands[0].in_range = true;
    one.cands[0].px2 = Vector2d(2, 0);
    // sole candidate 1.3 rad away: above the reject threshold
    Selection rej = phase_similarity_select(one, field, 1.5, p);
    CHECK(rej.k == -1);
}

TEST_CASE("phasor interpolation survives the branch cut") {
    // neighbours +3.1 and -3.1: a naive average gives ~0, the phasor
    // average stays near +-pi
    ImageD phi(2, 2);
    phi.at(0, 0) = phi.at(0, 1) = 3.1;
    phi.at(1, 0) = phi.at(1, 1) = -3.1;
    PhasorField f = PhasorField::from(phi);
    auto v = f.sample_phase(Vector2d(0.5, 0.5), 0);
    REQUIRE(v.has_value());
    CHECK(std::abs(wrap(*v - M_PI)) < 1e-9);
}

TEST_CASE("phasor sampling declines invalid support and borders") {
    ImageD phi(4, 4, 1, 1.0);
    MaskImage mask(4, 4, 1, 1);
    mask.at(2, 2) = 0;
    PhasorField f = PhasorField::from(phi, &mask);
    CHECK_FALSE(f.sample_phase(Vector2d(1.5, 1.5), 0).has_value());  // touches (2,2)
    CHECK(f.sample_phase(Vector2d(0.5, 0.5), 0).has_value());
    CHECK_FALSE(f.sample_phase(Vector2d(3.6, 1.0), 0).has_value());  // outside
    CHECK(f.sample_phase(Vector2d(0.5, 1.0), 1).has_value());        // edge cell ok
    CHECK_FALSE(f.sample_phase(Vector2d(0.5, 1.0), 2).has_value());  // margin pushes in
    CHECK_FALSE(f.sample_phase(Vector2d(-0.2, 1.0), 0).has_value());  // negative
}

TEST_CASE("stereo unwrapping is error-free on a clean scene") {
    Rig rig = make_desk_rig();
    Scene scene = make_plane_scene(15.0);
    scene.noise = {0.0, false};
    RenderedPair v = render_views(rig, scene, 4);

    OrderMap om = spu_unwrap(v.p1.phi, v.p1.mask, v.p2.phi, v.p2.mask, nullptr, nullptr, rig,
                             DepthRange::full_volume(rig), 2);
    Tally t = tally_orders(om, v.r1.gt);
    CHECK(t.wrong == 0);
    CHECK(t.decided > 0.97 * t.total);

    // unwrap_apply reconstructs the absolute phase exactly on decided pixels
    ImageD abs_phi = unwrap_apply(v.p1.phi, om);
    for (int y = 0; y < om.mask.height; y += 5)
        for (int x = 0; x < om.mask.width; x += 5)
            if (om.mask.at(x, y) && v.r1.gt.mask.at(x, y))
                CHECK(std::abs(abs_phi.at(x, y) - v.r1.gt.phi_abs.at(x, y)) < 1e-9);
}

TEST_CASE("a third view repairs noisy two-view failures") {
    Rig rig = make_desk48_rig();
    Scene scene = make_plane_scene(5.0);
    scene.noise = {0.01, true};

    int improved = 0, trials = 6;
    for (int trial = 0; trial < trials; ++trial) {
        RenderedPair v = render_views(rig, scene, 100 + trial);
        DepthRange full = DepthRange::full_volume(rig);
        OrderMap om2 = spu_unwrap(v.p1.phi, v.p1.mask, v.p2.phi, v.p2.mask, nullptr, nullptr,
                                  rig, full, 2);
        OrderMap om3 = spu_unwrap(v.p1.phi, v.p1.mask, v.p2.phi, v.p2.mask, &v.p3.phi,
                                  &v.p3.mask, rig, full, 3);
        Tally t2 = tally_orders(om2, v.r1.gt);
        Tally t3 = tally_orders(om3, v.r1.gt);
        if (t3.wrong <= t2.wrong) ++improved;
    }
    CHECK(improved >= trials - 1);
}

TEST_CASE("tightening the depth band never adds errors on a clean scene") {
    Rig rig = make_desk_rig();
    Scene scene = make_plane_scene(0.0);
    scene.noise = {0.0, false};
    RenderedPair v = render_views(rig, scene, 8);

    int prev_wrong = -1;
    for (double half : {150.0, 60.0, 10.0}) {
        OrderMap om = spu_unwrap(v.p1.phi, v.p1.mask, v.p2.phi, v.p2.mask, nullptr, nullptr,
                                 rig, DepthRange::global(-half, half), 2);
        Tally t = tally_orders(om, v.r1.gt);
        CHECK(t.wrong == 0);
        if (prev_wrong >= 0) CHECK(t.wrong <= prev_wrong);
        prev_wrong = t.wrong;
    }
}

TEST_CASE("depth windows clip to the band and fall back in holes") {
    DepthRange fallback = DepthRange::global(-50.0, 50.0);
    ImageD prev(4, 4, 1, 40.0);
    MaskImage valid(4, 4, 1, 1);
    valid.at(0, 0) = 0;  // hole

    DepthRange adc = adc_update(prev, valid, 20.0, fallback);
    REQUIRE(adc.per_pixel());
    // window [20, 60] clips to the global band top at 50
    CHECK(adc.contains(1, 1, 45.0));
    CHECK_FALSE(adc.contains(1, 1, 55.0));
    CHECK_FALSE(adc.contains(1, 1, 15.0));
    // hole pixel: global band applies
    CHECK(adc.contains(0, 0, -45.0));
    CHECK(adc.contains(0, 0, 45.0));
    CHECK_FALSE(adc.contains(0, 0, 55.0));

    // a huge window behaves exactly like the global range
    DepthRange wide = adc_update(prev, valid, 1e6, fallback);
    for (double z : {-49.0, 0.0, 49.0}) CHECK(wide.contains(2, 2, z));
    CHECK_FALSE(wide.contains(2, 2, 51.0));
}

TEST_CASE("depth range validation rejects inverted bands") {
    CHECK_THROWS_AS(DepthRange::global(10.0, -10.0), std::runtime_error);
    DepthRange ok = DepthRange::global(-10.0, 10.0);
    CHECK_NOTHROW(ok.validate());
    DepthRange bad_window = ok;
    bad_window.z_center = ImageD(2, 2, 1, 0.0);
    bad_window.center_valid = MaskImage(2, 2, 1, 1);
    bad_window.half_width = -1.0;
    CHECK_THROWS_AS(bad_window.validate(), std::runtime_error);
}

TEST_CASE("a static scene's previous depths sharpen the next unwrap") {
    Rig rig = make_desk48_rig();
    Scene scene = make_plane_scene(5.0);
    scene.noise = {0.015, true};

    int not_worse = 0, strictly_better_somewhere = 0, trials = 5;
    for (int trial = 0; trial < trials; ++trial) {
        RenderedPair v = render_views(rig, scene, 300 + trial);
        DepthRange full = DepthRange::full_volume(rig);
        OrderMap base = spu_unwrap(v.p1.phi, v.p1.mask, v.p2.phi, v.p2.mask, nullptr, nullptr,
                                   rig, full, 2);
        // bootstrap the window from the exact previous-frame depth
        DepthRange adc = adc_update(v.r1.gt.depth, v.r1.gt.mask, 5.0, full);
        OrderMap tight = spu_unwrap(v.p1.phi, v.p1.mask, v.p2.phi, v.p2.mask, nullptr, nullptr,
                                    rig, adc, 2);
        Tally tb = tally_orders(base, v.r1.gt);
        Tally tt = tally_orders(tight, v.r1.gt);
        if (tt.wrong <= tb.wrong) ++not_worse;
        if (tt.wrong < tb.wrong) ++strictly_better_somewhere;
    }
    CHECK(not_worse >= trials - 1);
    CHECK(strictly_better_somewhere >= 1);
}

TEST_CASE("reference unwrapping is exact inside its half-period trust band") {
    // Scalar contract first: Phi_ref = 20.0, K large enough.
    ImageD phi(3, 1);
    MaskImage mask(3, 1, 1, 1);
    ReferenceData ref;
    ref.periods = 12;
    ref.k_ref = Image<int32_t>(3, 1, 1, 3);
    ref.phi_ref_abs = ImageD(3, 1, 1, 20.0);
    ref.mask = MaskImage(3, 1, 1, 1);

    // Phi = 20.5 -> phi = wrap(20.5) = 20.5 - 6*pi ~ 1.650, k = round((20.0
    // - 1.650) / 2pi) = round(2.92) = 3 -> Phi_hat = 1.650 + 6*pi = 20.5
    phi.at(0, 0) = wrap(20.5);
    // Phi = 24.0 (1.27 periods above reference): the band is exceeded, the
    // recovered phase cannot equal 24
    phi.at(1, 0) = wrap(24.0);
    // phi exactly equal to the wrapped reference phase: k must equal k_ref
    phi.at(2, 0) = wrap(20.0);

    OrderMap om = reference_unwrap(phi, mask, ref);
    ImageD abs_phi = unwrap_apply(phi, om);
    CHECK(abs_phi.at(0, 0) == doctest::Approx(20.5).epsilon(1e-9));
    CHECK(std::abs(abs_phi.at(1, 0) - 24.0) > 1.0);
    CHECK(om.k.at(2, 0) == 3);
    CHECK(abs_phi.at(2, 0) == doctest::Approx(20.0).epsilon(1e-9));
}

TEST_CASE("reference unwrapping handles a rendered in-band scene exactly") {
    Rig rig = make_desk_rig();
    ReferenceData ref = make_reference_data(render_reference(rig, 3));
    CHECK(ref.periods == rig.projector.periods);

    Scene scene = make_plane_scene(20.0);  // well inside the +-half-period band
    scene.noise = {0.0, false};
    RenderResult r = render_fringe_stack(scene, rig.cameras[0], rig.projector, 3, 2);
    PhaseMaps p = retrieve_phase(r.stack);

    OrderMap om = reference_unwrap(p.phi, p.mask, ref);
    Tally t;
    for (int y = 0; y < om.mask.height; ++y)
        for (int x = 0; x < om.mask.width; ++x) {
            if (!r.gt.mask.at(x, y) || !ref.mask.at(x, y)) continue;
            ++t.total;
            if (!om.mask.at(x, y)) continue;
            ++t.decided;
            if (om.k.at(x, y) != r.gt.order.at(x, y)) ++t.wrong;
        }
    CHECK(t.total > 5000);
    CHECK(t.decided == t.total);
    CHECK(t.wrong == 0);
}

TEST_CASE("reference unwrapping breaks beyond the trust band") {
    Rig rig = make_desk_rig();
    ReferenceData ref = make_reference_data(render_reference(rig, 3));
    // three periods of depth away from the plane: far outside the band
    double z3 = depth_of_phase_offset(rig, 0.0, 3 * 2 * M_PI);
    Scene scene = make_plane_scene(z3);
    scene.noise = {0.0, false};
    RenderResult r = render_fringe_stack(scene, rig.cameras[0], rig.projector, 3, 2);
    PhaseMaps p = retrieve_phase(r.stack);
    OrderMap om = reference_unwrap(p.phi, p.mask, ref);

    int wrong = 0, decided = 0;
    for (int y = 0; y < om.mask.height; ++y)
        for (int x = 0; x < om.mask.width; ++x) {
            if (!r.gt.mask.at(x, y) || !ref.mask.at(x, y) || !om.mask.at(x, y)) continue;
            ++decided;
            if (om.k.at(x, y) != r.gt.order.at(x, y)) ++wrong;
        }
    CHECK(decided > 3000);
    CHECK(wrong > 0.95 * decided);
}

TEST_CASE("two-frequency unwrapping reads the order off the unit phase") {
    // Scalar cases: K = 8, Phi_high = 10 -> phi_unit = 10/8, phi_high =
    // wrap(10) = 10 - 4*pi; k = round((10 - (10 - 4*pi)) / 2pi) = 2
    ImageD phi_high(2, 1), phi_unit(2, 1);
    MaskImage mask(2, 1, 1, 1);
    phi_high.at(0, 0) = wrap(10.0);
    phi_unit.at(0, 0) = 10.0 / 8.0;
    phi_high.at(1, 0) = 0.0;
    phi_unit.at(1, 0) = 0.0;
    OrderMap om = tpu_hierarchical(phi_high, phi_unit, mask, 8);
    CHECK(om.k.at(0, 0) == 2);
    CHECK(om.k.at(1, 0) == 0);
}

TEST_CASE("two-frequency unwrapping matches truth on a rendered scene") {
    // Shift the projector principal point so the unit-frequency pattern
    // covers the full panel within its positive half-period.
    Rig rig = make_desk_rig();
    rig.projector.cam.cx = 45.0;

    Scene scene = make_plane_scene(10.0);
    scene.noise = {0.0, false};
    RenderResult high = render_fringe_stack(scene, rig.cameras[0], rig.projector, 3, 1);
    Rig unit_rig = rig;
    unit_rig.projector.periods = 1;
    RenderResult unit = render_fringe_stack(scene, unit_rig.cameras[0], unit_rig.projector, 3, 1);

    PhaseMaps ph = retrieve_phase(high.stack);
    PhaseMaps pu = retrieve_phase(unit.stack);

    MaskImage joint(ph.mask.width, ph.mask.height, 1, 0);
    for (size_t i = 0; i < joint.data.size(); ++i)
        joint.data[i] = ph.mask.data[i] && pu.mask.data[i] && high.gt.mask.data[i] &&
                        unit.gt.mask.data[i];

    OrderMap om = tpu_hierarchical(ph.phi, pu.phi, joint, rig.projector.periods);
    Tally t = tally_orders(om, high.gt);
    CHECK(t.decided > 4000);
    CHECK(t.wrong == 0);
}

TEST_CASE("stereo confidence is calibrated: confident pixels fail less") {
    Rig rig = make_desk48_rig();
    Scene scene = make_plane_scene(5.0);
    scene.noise = {0.02, true};
    RenderedPair v = render_views(rig, scene, 77);
    OrderMap om = spu_unwrap(v.p1.phi, v.p1.mask, v.p2.phi, v.p2.mask, nullptr, nullptr, rig,
                             DepthRange::full_volume(rig), 2);

    int conf_wrong = 0, conf_n = 0, all_wrong = 0, all_n = 0;
    for (int y = 0; y < om.mask.height; ++y)
        for (int x = 0; x < om.mask.width; ++x) {
            if (!om.mask.at(x, y) || !v.r1.gt.mask.at(x, y)) continue;
            bool wrong_px = om.k.at(x, y) != v.r1.gt.order.at(x, y);
            ++all_n;
            all_wrong += wrong_px;
            if (om.confidence.at(x, y) < 0.1) {
                ++conf_n;
                conf_wrong += wrong_px;
            }
        }
    REQUIRE(all_n > 10000);
    REQUIRE(conf_n > 1000);
    REQUIRE(all_wrong > 0);  // the noise level is chosen to cause failures
    CHECK(static_cast<double>(conf_wrong) / conf_n <
          static_cast<double>(all_wrong) / all_n);
}
