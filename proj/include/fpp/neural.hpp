#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fpp/image.hpp"
#include "fpp/simulator.hpp"
#include "fpp/unwrapping.hpp"

namespace fpp {

// Activation tensor: H x W with interleaved channels, matching the image
// layout used elsewhere.  Float for training, double for gradient checks.
template <typename T>
struct Tensor {
    int h = 0, w = 0, c = 0;
    std::vector<T> v;

    Tensor() = default;
    Tensor(int h_, int w_, int c_) : h(h_), w(w_), c(c_), v(size_t(h_) * w_ * c_, T(0)) {}

    T& at(int y, int x, int ch) { return v[(size_t(y) * w + x) * c + ch]; }
    const T& at(int y, int x, int ch) const { return v[(size_t(y) * w + x) * c + ch]; }
    size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return h == o.h && w == o.w && c == o.c; }
    void zero() { std::fill(v.begin(), v.end(), T(0)); }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// ---------------------------------------------------------------------------
// Layer kernels.  Weights for a 3x3 convolution are stored flat as
// [ky][kx][cin][cout]; all convolutions zero-pad so spatial size is kept.
// Each kernel has a matching backward that accumulates into caller-provided
// buffers (pass nullptr to skip an input gradient).

template <typename T>
void conv3x3(const Tensor<T>& in, const std::vector<T>& w, const std::vector<T>& b, int cout,
             Tensor<T>& out);

template <typename T>
void conv3x3_backward(const Tensor<T>& in, const std::vector<T>& w, int cout,
                      const Tensor<T>& gout, Tensor<T>* gin, std::vector<T>* gw,
                      std::vector<T>* gb);

template <typename T>
void relu(Tensor<T>& x);

// `post` holds the forward output (post-activation); entries that were
// clamped to zero get zero gradient.
template <typename T>
void relu_backward(const Tensor<T>& post, Tensor<T>& g);

// factor-f max pooling over non-overlapping windows; `argmax` (flat indices
// into `in.v`, one per output element) feeds the backward pass, which routes
// each gradient to the winning position only.
template <typename T>
void maxpool(const Tensor<T>& in, int factor, Tensor<T>& out, std::vector<int32_t>& argmax);

template <typename T>
void maxpool_backward(const std::vector<int32_t>& argmax, const Tensor<T>& gout, Tensor<T>& gin);

template <typename T>
void upsample_nearest(const Tensor<T>& in, int factor, Tensor<T>& out);

template <typename T>
void upsample_nearest_backward(const Tensor<T>& gout, int factor, Tensor<T>& gin);

template <typename T>
void concat_channels(const std::vector<const Tensor<T>*>& parts, Tensor<T>& out);

template <typename T>
void concat_channels_backward(const Tensor<T>& gout, const std::vector<Tensor<T>*>& gparts);

// Sum of squared errors over masked pixels (all channels of a masked pixel
// count).  Returns the sum and the number of contributing entries; when
// `gout` is given it receives the unscaled residual 2*(out - target) on the
// mask (zero elsewhere) so callers can apply the 1/count mean afterwards.
template <typename T>
double sse_masked(const Tensor<T>& out, const Tensor<T>& target, const MaskImage* mask,
                  size_t& count, Tensor<T>* gout);

// ---------------------------------------------------------------------------
// Four-path network.

struct ModelSpec {
    int input_channels = 1;
    int filters = 16;       // per-conv filter count (C)
    int res_blocks = 4;     // residual blocks per path
    int output_channels = 2;

    void validate() const;
};

template <typename T>
struct PTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<T> v;

    size_t size() const { return v.size(); }
};

template <typename T>
struct ParamsT {
    ModelSpec spec;
    std::vector<PTensor<T>> t;

    size_t total_size() const;
    template <typename U>
    ParamsT<U> cast() const {
        ParamsT<U> r;
        r.spec = spec;
        r.t.reserve(t.size());
        for (const auto& p : t) {
            PTensor<U> q;
            q.name = p.name;
            q.shape = p.shape;
            q.v.assign(p.v.begin(), p.v.end());
            r.t.push_back(std::move(q));
        }
        return r;
    }
};

using Params = ParamsT<float>;

// He-normal weights (fan-in of a 3x3 conv), zero biases, in a fixed order so
// one seed always yields the same byte-for-byte parameter set.
template <typename T>
ParamsT<T> build_model(const ModelSpec& spec, uint64_t init_seed);

template <typename T>
Tensor<T> forward(const ParamsT<T>& params, const Tensor<T>& input);

struct TrainSample {
    TensorF input;
    TensorF target;
    MaskImage mask;  // empty mask image => supervise everywhere
};

// Mean of squared error over every masked entry in the batch; gradients are
// accumulated across samples and scaled by the same mean.
template <typename T>
double loss_and_grad(const ParamsT<T>& params, const std::vector<const TrainSample*>& batch,
                     ParamsT<T>& grads);

struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t t = 0;
    std::vector<std::vector<float>> m, v;
};

void adam_init(const Params& params, AdamState& state);
void adam_step(Params& params, const ParamsT<float>& grads, AdamState& state);

struct TrainConfig {
    int epochs = 100;
    uint64_t seed = 1;
    double lr = 1e-4;
    // when positive, the step size decays geometrically from lr to lr_final
    // over the run; zero keeps it constant
    double lr_final = 0.0;
    int batch_size = 1;
    std::string curve_csv;  // optional: write "epoch,train_loss,val_loss" lines
};

struct TrainResult {
    Params best;                 // parameters at the best validation epoch
    int best_epoch = -1;
    std::vector<std::array<double, 3>> curve;  // epoch, train loss, val loss
};

TrainResult train_network(const ModelSpec& spec, const std::vector<TrainSample>& train_set,
                          const std::vector<TrainSample>& val_set, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Task-level wrappers.

// Single fringe image in [0,1] -> numerator / denominator maps.
std::pair<ImageD, ImageD> infer_cnn1(const Params& params, const ImageD& fringe);

// Five-channel stack (cam1 fringe, cam2 fringe, reference fringes, reference
// order / K) -> fringe order map: k = round(output * K) clamped to [0, K-1].
OrderMap infer_cnn2(const Params& params, const TensorF& stack, int periods);

// Dataset adapters.  CNN1 samples pair the first frame of each camera's
// stack with that camera's phase-shift numerator/denominator; CNN2 samples
// stack both cameras' first frames with the reference record's frames and
// normalized order map, targeting the camera-1 order map / K.
std::vector<TrainSample> make_cnn1_samples(const DatasetManifest& manifest,
                                           const std::string& split);
std::vector<TrainSample> make_cnn2_samples(const DatasetManifest& manifest,
                                           const std::string& split);

// Assembles the five-channel order-net input for a fresh capture, reusing the
// reference frames and order map the network was trained against.
TensorF cnn2_stack(const ImageD& cam1_frame, const ImageD& cam2_frame, const ImageD& ref1_frame,
                   const ImageD& ref2_frame, const Image<int32_t>& ref_order, int periods);

// Weights file: "FPNN1\n", one JSON header line (spec + tensor table), then
// raw little-endian float32 tensor data in table order.
void save_weights(const std::string& path, const Params& params);
Params load_weights(const std::string& path);

}  // namespace fpp
