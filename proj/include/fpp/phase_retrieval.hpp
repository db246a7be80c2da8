#pragma once

#include "fpp/image.hpp"

namespace fpp {

struct FringeStack;

// Wrapped-phase products of one fringe stack. phi is the wrapped arctangent
// of the stored M, D under the signed convention below; mask is a subset of
// {B_mod >= threshold}.
struct PhaseMaps {
    ImageD M;      // numerator, intensity units
    ImageD D;      // denominator, intensity units
    ImageD phi;    // wrapped phase, rad in (-pi, pi]
    ImageD B_mod;  // modulation, intensity units
    MaskImage mask;
};

// Per pixel: M = sum_n I_n sin(2*pi*n/N), D = sum_n I_n cos(2*pi*n/N).
// Requires N >= 3 frames of identical dimensions.
void ps_numerator_denominator(const FringeStack& stack, ImageD& M, ImageD& D);

// phi = atan2(-M, D). The raw arctangent of (M, D) recovers the negated
// signal phase (analytically M = -(N*B/2) sin Phi, D = (N*B/2) cos Phi), so
// the sign flip makes phi equal the projected phase wrapped to (-pi, pi].
// Degenerate pixels (M = D = 0) come out 0; `invalid` marks them when given.
ImageD wrapped_phase(const ImageD& M, const ImageD& D, MaskImage* invalid = nullptr);

// B_mod = (2/N) sqrt(M^2 + D^2); mask = B_mod >= threshold.
void modulation(const ImageD& M, const ImageD& D, int steps, ImageD& B_mod, MaskImage& mask,
                double threshold = 0.02);

// The full N-step pipeline on one stack.
PhaseMaps retrieve_phase(const FringeStack& stack, double mod_threshold = 0.02);

// Single-shot wrapped phase via spectral demodulation: 2-D FFT, keep the
// fundamental lobe nearest the carrier estimate (cycles/px along x), inverse
// transform, take the wrapped angle of the analytic signal. The carrier is
// retained so output is comparable with the N-step phi on the same scene.
// A border band of half the window width is masked. Throws "carrier too
// low" when the lobe sits within 2 bins of DC.
void ft_wrapped_phase(const ImageD& image, double carrier_freq, ImageD& phi, MaskImage& mask);

}  // namespace fpp
