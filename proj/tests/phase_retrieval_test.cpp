#include <doctest.h>

#include <cmath>
#include <functional>

#include "fpp/phase_retrieval.hpp"
#include "fpp/rng.hpp"
#include "fpp/scene.hpp"
#include "fpp/simulator.hpp"

using namespace fpp;

namespace {

// Synthetic stack with a prescribed phase field (no geometry involved).
FringeStack synthetic_stack(int w, int h, int steps, double A, double B,
                            const std::function<double(int, int)>& phase) {
    FringeStack s;
    s.frames = ImageD(w, h, steps);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int n = 0; n < steps; ++n)
                s.frames.at(x, y, n) = A + B * std::cos(phase(x, y) + 2 * M_PI * n / steps);
    return s;
}

double wrap(double a) { return std::remainder(a, 2 * M_PI); }

}  // namespace

TEST_CASE("numerator and denominator take their textbook values") {
    // Phi = 0, N = 3, A = 0.5, B = 0.25: I_n = 0.5 + 0.25 cos(2 pi n / 3)
    // M = sum I_n sin(2 pi n/3) = -(3/2) * 0.25 * sin 0 = 0
    // D = sum I_n cos(2 pi n/3) =  (3/2) * 0.25 * cos 0 = 0.375
    FringeStack s = synthetic_stack(4, 3, 3, 0.5, 0.25, [](int, int) { return 0.0; });
    ImageD M, D;
    ps_numerator_denominator(s, M, D);
    CHECK(M.at(1, 1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(D.at(1, 1) == doctest::Approx(0.375).epsilon(1e-12));

    // Phi = pi/2: M = -(3/2) B sin(pi/2) = -0.375, D = 0
    FringeStack s2 = synthetic_stack(4, 3, 3, 0.5, 0.25, [](int, int) { return M_PI / 2; });
    ps_numerator_denominator(s2, M, D);
    CHECK(M.at(1, 1) == doctest::Approx(-0.375).epsilon(1e-12));
    CHECK(D.at(1, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("numerator and denominator require at least three frames") {
    FringeStack s = synthetic_stack(4, 3, 2, 0.5, 0.25, [](int, int) { return 0.0; });
    ImageD M, D;
    CHECK_THROWS_AS(ps_numerator_denominator(s, M, D), std::runtime_error);
}

TEST_CASE("wrapped phase recovers the signal phase with the sign convention") {
    ImageD M(2, 1), D(2, 1);
    M.at(0, 0) = 0.0;
    D.at(0, 0) = 0.375;  // Phi = 0
    M.at(1, 0) = -0.375;
    D.at(1, 0) = 0.0;  // Phi = +pi/2
    ImageD phi = wrapped_phase(M, D);
    CHECK(phi.at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(phi.at(1, 0) == doctest::Approx(M_PI / 2).epsilon(1e-12));
}

TEST_CASE("degenerate pixels are flagged invalid") {
    ImageD M(2, 1, 1, 0.0), D(2, 1, 1, 0.0);
    D.at(1, 0) = 0.1;
    MaskImage invalid;
    ImageD phi = wrapped_phase(M, D, &invalid);
    CHECK(phi.at(0, 0) == 0.0);
    CHECK(invalid.at(0, 0) == 1);
    CHECK(invalid.at(1, 0) == 0);
}

TEST_CASE("modulation recovers B and thresholds the mask") {
    FringeStack s = synthetic_stack(6, 4, 3, 0.5, 0.25, [](int x, int) { return 0.7 * x; });
    ImageD M, D, B;
    MaskImage mask;
    ps_numerator_denominator(s, M, D);
    modulation(M, D, 3, B, mask, 0.02);
    for (int x = 0; x < 6; ++x) {
        CHECK(B.at(x, 2) == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(mask.at(x, 2) == 1);
    }
    modulation(M, D, 3, B, mask, 0.3);  // threshold above B: everything drops
    for (int x = 0; x < 6; ++x) CHECK(mask.at(x, 2) == 0);
}

TEST_CASE("phase-step retrieval is exact for every supported step count") {
    for (int steps : {3, 4, 8, 12}) {
        FringeStack s = synthetic_stack(64, 32, steps, 0.5, 0.3, [](int x, int y) {
            return 0.11 * x + 0.03 * y - 2.0;  // arbitrary smooth field
        });
        PhaseMaps maps = retrieve_phase(s);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 64; ++x) {
                REQUIRE(maps.mask.at(x, y) == 1);
                double expect = wrap(0.11 * x + 0.03 * y - 2.0);
                CHECK(std::abs(wrap(maps.phi.at(x, y) - expect)) < 1e-9);
            }
    }
}

TEST_CASE("retrieval is exact on rendered stacks across fringe densities") {
    for (const Rig& rig : {make_desk_rig(), make_desk48_rig()}) {
        Scene scene = make_plane_scene(20.0);
        scene.noise = {0.0, false};
        RenderResult r = render_fringe_stack(scene, rig.cameras[0], rig.projector, 3, 1);
        PhaseMaps maps = retrieve_phase(r.stack);
        double worst = 0;
        int n = 0;
        for (int y = 0; y < maps.phi.height; ++y)
            for (int x = 0; x < maps.phi.width; ++x) {
                if (!r.gt.mask.at(x, y) || !maps.mask.at(x, y)) continue;
                worst = std::max(worst,
                                 std::abs(wrap(maps.phi.at(x, y) - r.gt.phi_wrapped.at(x, y))));
                ++n;
            }
        CHECK(n > 5000);
        CHECK(worst < 1e-9);
    }
}

TEST_CASE("retrieval is invariant to a global phase shift of the stack") {
    auto base = [](int x, int y) { return 0.2 * x - 0.05 * y; };
    FringeStack s0 = synthetic_stack(32, 16, 4, 0.5, 0.3, base);
    FringeStack s1 = synthetic_stack(32, 16, 4, 0.5, 0.3,
                                     [&](int x, int y) { return base(x, y) + 1.234; });
    PhaseMaps a = retrieve_phase(s0), b = retrieve_phase(s1);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 32; ++x)
            CHECK(std::abs(wrap(b.phi.at(x, y) - a.phi.at(x, y) - 1.234)) < 1e-9);
}

TEST_CASE("phase is invariant to intensity scale, modulation is not") {
    FringeStack s = synthetic_stack(16, 8, 3, 0.4, 0.2, [](int x, int y) { return 0.3 * x + y; });
    FringeStack s2 = s;
    for (double& v : s2.frames.data) v *= 2.0;
    PhaseMaps a = retrieve_phase(s), b = retrieve_phase(s2);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 16; ++x) {
            CHECK(std::abs(wrap(b.phi.at(x, y) - a.phi.at(x, y))) < 1e-12);
            CHECK(b.B_mod.at(x, y) == doctest::Approx(2 * a.B_mod.at(x, y)).epsilon(1e-12));
        }
}

TEST_CASE("spectral demodulation tracks a clean carrier") {
    // pure carrier + gentle phase modulation, constant amplitude
    const int w = 128, h = 64;
    const double carrier = 0.11;  // cycles / px
    ImageD img(w, h);
    auto mod = [](int x, int y) { return 0.8 * std::sin(0.05 * x) * std::cos(0.07 * y); };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            img.at(x, y) = 0.5 + 0.3 * std::cos(2 * M_PI * carrier * x + mod(x, y));

    ImageD phi;
    MaskImage mask;
    ft_wrapped_phase(img, carrier, phi, mask);

    double worst = 0;
    int n = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y)) continue;
            // interior only: windowing can never fix the outermost pixels
            if (x < 16 || x >= w - 16 || y < 8 || y >= h - 8) continue;
            double expect = wrap(2 * M_PI * carrier * x + mod(x, y));
            worst = std::max(worst, std::abs(wrap(phi.at(x, y) - expect)));
            ++n;
        }
    CHECK(n > 1000);
    // single-sideband filtering leaks a little of the modulation's own
    // spectrum, so the interior error is small but not machine precision
    CHECK(worst < 0.1);
}

TEST_CASE("spectral demodulation refuses a fringe-free image") {
    ImageD img(64, 64, 1, 0.5);
    ImageD phi;
    MaskImage mask;
    CHECK_THROWS_WITH_AS(ft_wrapped_phase(img, 0.001, phi, mask),
                         doctest::Contains("carrier too low"), std::runtime_error);
}

TEST_CASE("single-shot retrieval trails the N-step method at depth edges") {
    Rig rig = make_desk_rig();
    Scene scene = make_discontinuity_scene(rig, 0.5);  // visible seam
    scene.noise = {0.0, false};
    RenderResult r = render_fringe_stack(scene, rig.cameras[0], rig.projector, 3, 1);

    PhaseMaps ps = retrieve_phase(r.stack);

    // carrier estimate straight from the truth: mean d(phi)/dx over a row
    double carrier = 0;
    {
        int y = r.gt.mask.height / 2, n = 0;
        for (int x = 1; x < r.gt.mask.width; ++x)
            if (r.gt.mask.at(x, y) && r.gt.mask.at(x - 1, y)) {
                carrier += r.gt.phi_abs.at(x, y) - r.gt.phi_abs.at(x - 1, y);
                ++n;
            }
        carrier /= 2 * M_PI * n;
    }

    ImageD frame0(r.stack.frames.width, r.stack.frames.height);
    for (int y = 0; y < frame0.height; ++y)
        for (int x = 0; x < frame0.width; ++x) frame0.at(x, y) = r.stack.frames.at(x, y, 0);
    ImageD ft_phi;
    MaskImage ft_mask;
    ft_wrapped_phase(frame0, carrier, ft_phi, ft_mask);

    auto rmse = [&](const ImageD& phi, const MaskImage& mask) {
        double acc = 0;
        int n = 0;
        for (int y = 0; y < phi.height; ++y)
            for (int x = 0; x < phi.width; ++x) {
                if (!mask.at(x, y) || !r.gt.mask.at(x, y)) continue;
                double e = wrap(phi.at(x, y) - r.gt.phi_wrapped.at(x, y));
                acc += e * e;
                ++n;
            }
        return std::sqrt(acc / n);
    };
    double e_ps = rmse(ps.phi, ps.mask);
    double e_ft = rmse(ft_phi, ft_mask);
    CHECK(e_ps < 1e-9);
    CHECK(e_ft > 100 * e_ps);  // the seam leaks across the spectrum
    CHECK(e_ft < 1.5);         // but it still demodulates the bulk
}
