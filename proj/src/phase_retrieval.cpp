#include "fpp/phase_retrieval.hpp"

#include <fftw3.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fpp/simulator.hpp"

namespace fpp {

void ps_numerator_denominator(const FringeStack& stack, ImageD& M, ImageD& D) {
    const int n_steps = stack.steps();
    if (n_steps < 3) throw std::runtime_error("stack: needs at least 3 steps");
    const int w = stack.frames.width, h = stack.frames.height;

    std::vector<double> sn(n_steps), cn(n_steps);
    for (int n = 0; n < n_steps; ++n) {
        sn[n] = std::sin(2.0 * M_PI * n / n_steps);
        cn[n] = std::cos(2.0 * M_PI * n / n_steps);
    }

    M = ImageD(w, h);
    D = ImageD(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double m = 0.0, d = 0.0;
            for (int n = 0; n < n_steps; ++n) {
                const double I = stack.frames.at(x, y, n);
                m += I * sn[n];
                d += I * cn[n];
            }
            M.at(x, y) = m;
            D.at(x, y) = d;
        }
}

ImageD wrapped_phase(const ImageD& M, const ImageD& D, MaskImage* invalid) {
    if (!M.same_size(D) || M.channels != 1 || D.channels != 1)
        throw std::runtime_error("phase maps: mismatched dimensions");
    ImageD phi(M.width, M.height);
    if (invalid) *invalid = MaskImage(M.width, M.height, 1, 0);
    for (size_t i = 0; i < phi.data.size(); ++i) {
        const double m = M.data[i], d = D.data[i];
        if (m == 0.0 && d == 0.0) {
            phi.data[i] = 0.0;
            if (invalid) invalid->data[i] = 1;
            continue;
        }
        double p = std::atan2(-m, d);
        if (p == -M_PI) p = M_PI;
        phi.data[i] = p;
    }
    return phi;
}

void modulation(const ImageD& M, const ImageD& D, int steps, ImageD& B_mod, MaskImage& mask,
                double threshold) {
    if (steps < 3) throw std::runtime_error("modulation: needs at least 3 steps");
    if (!M.same_size(D)) throw std::runtime_error("phase maps: mismatched dimensions");
    B_mod = ImageD(M.width, M.height);
    mask = MaskImage(M.width, M.height, 1, 0);
    for (size_t i = 0; i < B_mod.data.size(); ++i) {
        const double b = (2.0 / steps) * std::hypot(M.data[i], D.data[i]);
        B_mod.data[i] = b;
        mask.data[i] = b >= threshold ? 1 : 0;
    }
}

PhaseMaps retrieve_phase(const FringeStack& stack, double mod_threshold) {
    PhaseMaps maps;
    ps_numerator_denominator(stack, maps.M, maps.D);
    MaskImage invalid;
    maps.phi = wrapped_phase(maps.M, maps.D, &invalid);
    modulation(maps.M, maps.D, stack.steps(), maps.B_mod, maps.mask, mod_threshold);
    for (size_t i = 0; i < maps.mask.data.size(); ++i)
        if (invalid.data[i]) maps.mask.data[i] = 0;
    return maps;
}

void ft_wrapped_phase(const ImageD& image, double carrier_freq, ImageD& phi, MaskImage& mask) {
    if (image.channels != 1) throw std::runtime_error("ft: expects a single-channel image");
    const int w = image.width, h = image.height;
    const double kc = carrier_freq * w;  // carrier position in bins along x
    if (!(kc >= 2.0)) throw std::runtime_error("carrier too low");

    std::vector<fftw_complex> buf(size_t(w) * h), spec(size_t(w) * h);
    for (size_t i = 0; i < buf.size(); ++i) {
        buf[i][0] = image.data[i];
        buf[i][1] = 0.0;
    }
    fftw_plan fwd = fftw_plan_dft_2d(h, w, buf.data(), spec.data(), FFTW_FORWARD, FFTW_ESTIMATE);
    fftw_execute(fwd);
    fftw_destroy_plan(fwd);

    auto mag = [&](int ix, int iy) {
        const fftw_complex& c = spec[size_t(iy) * w + ix];
        return std::hypot(c[0], c[1]);
    };

    // Hunt for the fundamental lobe near the carrier estimate, positive
    // x-frequencies only (fringes brighten along +x by convention).
    const int kx_lo = std::max(2, int(std::floor(0.5 * kc)));
    const int kx_hi = std::min(w / 2 - 1, int(std::ceil(1.5 * kc)));
    const int ky_span = std::max(2, h / 8);
    if (kx_lo > kx_hi) throw std::runtime_error("carrier too low");
    int px = -1, py = 0;
    double peak = -1.0;
    for (int iy = -ky_span; iy <= ky_span; ++iy) {
        const int row = (iy + h) % h;
        for (int ix = kx_lo; ix <= kx_hi; ++ix) {
            const double m = mag(ix, row);
            if (m > peak) {
                peak = m;
                px = ix;
                py = iy;
            }
        }
    }
    const double dc = mag(0, 0);
    if (px < 2 || peak < 1e-6 * (dc + 1e-300)) throw std::runtime_error("carrier too low");

    // Raised-cosine window around the lobe, then back to the spatial domain.
    const double hw = std::max(2.0, kc / 2.0);
    for (int iy = 0; iy < h; ++iy) {
        const int fy = iy <= h / 2 ? iy : iy - h;
        for (int ix = 0; ix < w; ++ix) {
            const int fx = ix <= w / 2 ? ix : ix - w;
            const double dx = fx - px, dy = fy - py;
            double wgt = 0.0;
            if (std::abs(dx) < hw && std::abs(dy) < hw)
                wgt = 0.25 * (1.0 + std::cos(M_PI * dx / hw)) * (1.0 + std::cos(M_PI * dy / hw));
            fftw_complex& c = spec[size_t(iy) * w + ix];
            c[0] *= wgt;
            c[1] *= wgt;
        }
    }
    fftw_plan bwd = fftw_plan_dft_2d(h, w, spec.data(), buf.data(), FFTW_BACKWARD, FFTW_ESTIMATE);
    fftw_execute(bwd);
    fftw_destroy_plan(bwd);

    phi = ImageD(w, h);
    mask = MaskImage(w, h, 1, 0);
    const int band = std::max(1, int(std::lround(1.0 / carrier_freq)));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const fftw_complex& c = buf[size_t(y) * w + x];
            double p = std::atan2(c[1], c[0]);
            if (p == -M_PI) p = M_PI;
            phi.at(x, y) = p;
            const bool interior = x >= band && x < w - band && y >= band && y < h - band;
            mask.at(x, y) = interior && std::hypot(c[0], c[1]) > 0.0 ? 1 : 0;
        }
}

}  // namespace fpp
