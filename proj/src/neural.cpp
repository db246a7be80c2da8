#include "fpp/neural.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fpp/rng.hpp"

namespace fpp {

using nlohmann::json;

// --- layer kernels --------------------------------------------------------------

template <typename T>
void conv3x3(const Tensor<T>& in, const std::vector<T>& w, const std::vector<T>& b, int cout,
             Tensor<T>& out) {
    const int H = in.h, W = in.w, cin = in.c;
    if (w.size() != size_t(9) * cin * cout || b.size() != size_t(cout))
        throw std::runtime_error("conv: weight size mismatch");
    out = Tensor<T>(H, W, cout);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            T* o = &out.v[(size_t(y) * W + x) * cout];
            for (int co = 0; co < cout; ++co) o[co] = b[co];
            for (int ky = -1; ky <= 1; ++ky) {
                const int yy = y + ky;
                if (yy < 0 || yy >= H) continue;
                for (int kx = -1; kx <= 1; ++kx) {
                    const int xx = x + kx;
                    if (xx < 0 || xx >= W) continue;
                    const T* ip = &in.v[(size_t(yy) * W + xx) * cin];
                    const T* wp = &w[size_t((ky + 1) * 3 + (kx + 1)) * cin * cout];
                    for (int ci = 0; ci < cin; ++ci) {
                        const T val = ip[ci];
                        const T* wc = wp + size_t(ci) * cout;
                        for (int co = 0; co < cout; ++co) o[co] += val * wc[co];
                    }
                }
            }
        }
    }
}

template <typename T>
void conv3x3_backward(const Tensor<T>& in, const std::vector<T>& w, int cout,
                      const Tensor<T>& gout, Tensor<T>* gin, std::vector<T>* gw,
                      std::vector<T>* gb) {
    const int H = in.h, W = in.w, cin = in.c;
    if (gout.h != H || gout.w != W || gout.c != cout)
        throw std::runtime_error("conv backward: gradient shape mismatch");
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const T* go = &gout.v[(size_t(y) * W + x) * cout];
            if (gb)
                for (int co = 0; co < cout; ++co) (*gb)[co] += go[co];
            for (int ky = -1; ky <= 1; ++ky) {
                const int yy = y + ky;
                if (yy < 0 || yy >= H) continue;
                for (int kx = -1; kx <= 1; ++kx) {
                    const int xx = x + kx;
                    if (xx < 0 || xx >= W) continue;
                    const size_t base = size_t((ky + 1) * 3 + (kx + 1)) * cin * cout;
                    const T* ip = &in.v[(size_t(yy) * W + xx) * cin];
                    T* gip = gin ? &gin->v[(size_t(yy) * W + xx) * cin] : nullptr;
                    for (int ci = 0; ci < cin; ++ci) {
                        const T* wc = &w[base + size_t(ci) * cout];
                        T* gwc = gw ? &(*gw)[base + size_t(ci) * cout] : nullptr;
                        const T ival = ip[ci];
                        T acc = 0;
                        if (gwc) {
                            for (int co = 0; co < cout; ++co) {
                                acc += wc[co] * go[co];
                                gwc[co] += ival * go[co];
                            }
                        } else {
                            for (int co = 0; co < cout; ++co) acc += wc[co] * go[co];
                        }
                        if (gip) gip[ci] += acc;
                    }
                }
            }
        }
    }
}

template <typename T>
void relu(Tensor<T>& x) {
    for (T& v : x.v)
        if (v < T(0)) v = T(0);
}

template <typename T>
void relu_backward(const Tensor<T>& post, Tensor<T>& g) {
    if (!post.same_shape(g)) throw std::runtime_error("relu backward: shape mismatch");
    for (size_t i = 0; i < g.v.size(); ++i)
        if (!(post.v[i] > T(0))) g.v[i] = T(0);
}

template <typename T>
void maxpool(const Tensor<T>& in, int factor, Tensor<T>& out, std::vector<int32_t>& argmax) {
    if (factor < 1 || in.h % factor || in.w % factor)
        throw std::runtime_error("pool: size not divisible by factor");
    const int H = in.h / factor, W = in.w / factor, C = in.c;
    out = Tensor<T>(H, W, C);
    argmax.assign(out.size(), 0);
    for (int oy = 0; oy < H; ++oy)
        for (int ox = 0; ox < W; ++ox)
            for (int ch = 0; ch < C; ++ch) {
                T best = -std::numeric_limits<T>::infinity();
                int32_t best_i = 0;
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx) {
                        const int32_t i = int32_t(
                            (size_t(oy * factor + dy) * in.w + (ox * factor + dx)) * C + ch);
                        if (in.v[i] > best) {
                            best = in.v[i];
                            best_i = i;
                        }
                    }
                out.at(oy, ox, ch) = best;
                argmax[(size_t(oy) * W + ox) * C + ch] = best_i;
            }
}

template <typename T>
void maxpool_backward(const std::vector<int32_t>& argmax, const Tensor<T>& gout, Tensor<T>& gin) {
    if (argmax.size() != gout.size()) throw std::runtime_error("pool backward: index mismatch");
    for (size_t i = 0; i < argmax.size(); ++i) gin.v[argmax[i]] += gout.v[i];
}

template <typename T>
void upsample_nearest(const Tensor<T>& in, int factor, Tensor<T>& out) {
    const int H = in.h * factor, W = in.w * factor, C = in.c;
    out = Tensor<T>(H, W, C);
    for (int y = 0; y < H; ++y) {
        const int sy = y / factor;
        for (int x = 0; x < W; ++x) {
            const T* src = &in.v[(size_t(sy) * in.w + x / factor) * C];
            T* dst = &out.v[(size_t(y) * W + x) * C];
            for (int ch = 0; ch < C; ++ch) dst[ch] = src[ch];
        }
    }
}

template <typename T>
void upsample_nearest_backward(const Tensor<T>& gout, int factor, Tensor<T>& gin) {
    if (gout.h != gin.h * factor || gout.w != gin.w * factor || gout.c != gin.c)
        throw std::runtime_error("upsample backward: shape mismatch");
    const int C = gin.c;
    for (int y = 0; y < gout.h; ++y) {
        const int sy = y / factor;
        for (int x = 0; x < gout.w; ++x) {
            const T* src = &gout.v[(size_t(y) * gout.w + x) * C];
            T* dst = &gin.v[(size_t(sy) * gin.w + x / factor) * C];
            for (int ch = 0; ch < C; ++ch) dst[ch] += src[ch];
        }
    }
}

template <typename T>
void concat_channels(const std::vector<const Tensor<T>*>& parts, Tensor<T>& out) {
    if (parts.empty()) throw std::runtime_error("concat: no inputs");
    const int H = parts[0]->h, W = parts[0]->w;
    int C = 0;
    for (const auto* p : parts) {
        if (p->h != H || p->w != W) throw std::runtime_error("concat: spatial size mismatch");
        C += p->c;
    }
    out = Tensor<T>(H, W, C);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            T* dst = &out.v[(size_t(y) * W + x) * C];
            for (const auto* p : parts) {
                const T* src = &p->v[(size_t(y) * W + x) * p->c];
                for (int ch = 0; ch < p->c; ++ch) *dst++ = src[ch];
            }
        }
}

template <typename T>
void concat_channels_backward(const Tensor<T>& gout, const std::vector<Tensor<T>*>& gparts) {
    for (int y = 0; y < gout.h; ++y)
        for (int x = 0; x < gout.w; ++x) {
            const T* src = &gout.v[(size_t(y) * gout.w + x) * gout.c];
            for (auto* p : gparts) {
                T* dst = &p->v[(size_t(y) * p->w + x) * p->c];
                for (int ch = 0; ch < p->c; ++ch) dst[ch] += *src++;
            }
        }
}

template <typename T>
double sse_masked(const Tensor<T>& out, const Tensor<T>& target, const MaskImage* mask,
                  size_t& count, Tensor<T>* gout) {
    if (!out.same_shape(target)) throw std::runtime_error("loss: target shape mismatch");
    if (mask && (mask->width != out.w || mask->height != out.h))
        throw std::runtime_error("loss: mask shape mismatch");
    if (gout) *gout = Tensor<T>(out.h, out.w, out.c);
    double sse = 0;
    count = 0;
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
            if (mask && !mask->at(x, y)) continue;
            for (int ch = 0; ch < out.c; ++ch) {
                const double r = double(out.at(y, x, ch)) - double(target.at(y, x, ch));
                sse += r * r;
                ++count;
                if (gout) gout->at(y, x, ch) = T(2 * r);
            }
        }
    return sse;
}

// --- model ----------------------------------------------------------------------

void ModelSpec::validate() const {
    if (input_channels < 1) throw std::runtime_error("model: input_channels must be positive");
    if (filters < 1) throw std::runtime_error("model: filters must be positive");
    if (res_blocks < 1) throw std::runtime_error("model: res_blocks must be positive");
    if (output_channels != 1 && output_channels != 2)
        throw std::runtime_error("model: output_channels must be 1 or 2");
}

template <typename T>
size_t ParamsT<T>::total_size() const {
    size_t n = 0;
    for (const auto& p : t) n += p.size();
    return n;
}

namespace {

struct Idx {
    int w = -1, b = -1;
};
struct PathIdx {
    Idx in;
    std::vector<std::array<Idx, 2>> res;
    Idx out, up;
};
struct Layout {
    std::array<PathIdx, 4> path;
    Idx fin;
};

// Tensor order mirrors build_model exactly; both walk paths 0..3, then the
// final convolution, two tensors (weight, bias) per layer.
Layout make_layout(const ModelSpec& s) {
    Layout L;
    int i = 0;
    auto take = [&i]() {
        Idx d{i, i + 1};
        i += 2;
        return d;
    };
    for (int p = 0; p < 4; ++p) {
        auto& P = L.path[p];
        P.in = take();
        P.res.resize(s.res_blocks);
        for (int r = 0; r < s.res_blocks; ++r) {
            P.res[r][0] = take();
            P.res[r][1] = take();
        }
        P.out = take();
        if (p > 0) P.up = take();
    }
    L.fin = take();
    return L;
}

}  // namespace

template <typename T>
ParamsT<T> build_model(const ModelSpec& spec, uint64_t init_seed) {
    spec.validate();
    ParamsT<T> P;
    P.spec = spec;
    Rng rng(init_seed);
    auto add_conv = [&](const std::string& name, int cin, int cout) {
        PTensor<T> w;
        w.name = name + ".w";
        w.shape = {3, 3, cin, cout};
        w.v.resize(size_t(9) * cin * cout);
        const double stddev = std::sqrt(2.0 / (9.0 * cin));  // He-normal, fan-in
        for (T& x : w.v) x = T(rng.normal() * stddev);
        PTensor<T> b;
        b.name = name + ".b";
        b.shape = {cout};
        b.v.assign(cout, T(0));
        P.t.push_back(std::move(w));
        P.t.push_back(std::move(b));
    };
    const int C = spec.filters;
    for (int p = 0; p < 4; ++p) {
        const std::string pre = "path" + std::to_string(p) + ".";
        add_conv(pre + "in", spec.input_channels, C);
        for (int r = 0; r < spec.res_blocks; ++r) {
            add_conv(pre + "res" + std::to_string(r) + ".c1", C, C);
            add_conv(pre + "res" + std::to_string(r) + ".c2", C, C);
        }
        add_conv(pre + "out", C, C);
        if (p > 0) add_conv(pre + "up", C, C);
    }
    add_conv("final", 4 * C, spec.output_channels);
    return P;
}

namespace {

template <typename T>
struct PathTrace {
    Tensor<T> pooled;            // conv input at the path's resolution
    std::vector<Tensor<T>> xs;   // xs[0] = relu(in conv); xs[r+1] = xs[r] + branch
    std::vector<Tensor<T>> h1;   // post-ReLU branch activations per block
    std::vector<Tensor<T>> h2;
    Tensor<T> a_out;             // relu(out conv)
    Tensor<T> up_in, a_up;       // paths 1..3: resized a_out, relu(up conv)

    const Tensor<T>& out() const { return a_up.size() ? a_up : a_out; }
};

template <typename T>
struct NetTrace {
    std::array<PathTrace<T>, 4> path;
    Tensor<T> cat;
    Tensor<T> out;
};

template <typename T>
void conv_relu(const ParamsT<T>& P, Idx idx, const Tensor<T>& in, Tensor<T>& out) {
    conv3x3(in, P.t[idx.w].v, P.t[idx.b].v, int(P.t[idx.b].v.size()), out);
    relu(out);
}

template <typename T>
const Tensor<T>& net_forward(const ParamsT<T>& P, const Tensor<T>& input, NetTrace<T>& t) {
    P.spec.validate();
    if (input.c != P.spec.input_channels)
        throw std::runtime_error("network: input channel mismatch");
    if (input.h % 8 || input.w % 8) throw std::runtime_error("shape incompatible with path 4");
    const Layout L = make_layout(P.spec);
    const int R = P.spec.res_blocks;
    std::vector<const Tensor<T>*> parts;
    for (int p = 0; p < 4; ++p) {
        auto& pt = t.path[p];
        const int f = 1 << p;
        if (p == 0) {
            pt.pooled = input;
        } else {
            std::vector<int32_t> idx;
            maxpool(input, f, pt.pooled, idx);
        }
        pt.xs.assign(R + 1, Tensor<T>());
        pt.h1.assign(R, Tensor<T>());
        pt.h2.assign(R, Tensor<T>());
        conv_relu(P, L.path[p].in, pt.pooled, pt.xs[0]);
        for (int r = 0; r < R; ++r) {
            conv_relu(P, L.path[p].res[r][0], pt.xs[r], pt.h1[r]);
            conv_relu(P, L.path[p].res[r][1], pt.h1[r], pt.h2[r]);
            pt.xs[r + 1] = pt.xs[r];
            for (size_t i = 0; i < pt.xs[r + 1].v.size(); ++i)
                pt.xs[r + 1].v[i] += pt.h2[r].v[i];
        }
        conv_relu(P, L.path[p].out, pt.xs[R], pt.a_out);
        if (p > 0) {
            upsample_nearest(pt.a_out, f, pt.up_in);
            conv_relu(P, L.path[p].up, pt.up_in, pt.a_up);
        }
        parts.push_back(&pt.out());
    }
    concat_channels(parts, t.cat);
    conv3x3(t.cat, P.t[L.fin.w].v, P.t[L.fin.b].v, P.spec.output_channels, t.out);
    return t.out;
}

template <typename T>
ParamsT<T> zero_like(const ParamsT<T>& P) {
    ParamsT<T> G;
    G.spec = P.spec;
    G.t.reserve(P.t.size());
    for (const auto& p : P.t) {
        PTensor<T> q;
        q.name = p.name;
        q.shape = p.shape;
        q.v.assign(p.v.size(), T(0));
        G.t.push_back(std::move(q));
    }
    return G;
}

template <typename T>
void net_backward(const ParamsT<T>& P, const NetTrace<T>& t, const Tensor<T>& gout,
                  ParamsT<T>& G) {
    const Layout L = make_layout(P.spec);
    const int C = P.spec.filters, R = P.spec.res_blocks;
    Tensor<T> gcat(t.cat.h, t.cat.w, t.cat.c);
    conv3x3_backward(t.cat, P.t[L.fin.w].v, P.spec.output_channels, gout, &gcat,
                     &G.t[L.fin.w].v, &G.t[L.fin.b].v);
    std::vector<Tensor<T>> gp(4);
    std::vector<Tensor<T>*> gparts;
    for (int p = 0; p < 4; ++p) {
        const auto& o = t.path[p].out();
        gp[p] = Tensor<T>(o.h, o.w, o.c);
        gparts.push_back(&gp[p]);
    }
    concat_channels_backward(gcat, gparts);
    for (int p = 0; p < 4; ++p) {
        const auto& pt = t.path[p];
        const auto& lp = L.path[p];
        const int f = 1 << p;
        Tensor<T> g_aout;
        if (p > 0) {
            relu_backward(pt.a_up, gp[p]);
            Tensor<T> g_upin(pt.up_in.h, pt.up_in.w, pt.up_in.c);
            conv3x3_backward(pt.up_in, P.t[lp.up.w].v, C, gp[p], &g_upin, &G.t[lp.up.w].v,
                             &G.t[lp.up.b].v);
            g_aout = Tensor<T>(pt.a_out.h, pt.a_out.w, pt.a_out.c);
            upsample_nearest_backward(g_upin, f, g_aout);
        } else {
            g_aout = std::move(gp[p]);
        }
        relu_backward(pt.a_out, g_aout);
        Tensor<T> gx(pt.xs[R].h, pt.xs[R].w, pt.xs[R].c);
        conv3x3_backward(pt.xs[R], P.t[lp.out.w].v, C, g_aout, &gx, &G.t[lp.out.w].v,
                         &G.t[lp.out.b].v);
        for (int r = R - 1; r >= 0; --r) {
            // xs[r+1] = xs[r] + branch: the skip keeps gx as-is, the branch
            // gradient is added back into gx by the first conv's backward.
            Tensor<T> gh2 = gx;
            relu_backward(pt.h2[r], gh2);
            Tensor<T> gh1(pt.h1[r].h, pt.h1[r].w, pt.h1[r].c);
            conv3x3_backward(pt.h1[r], P.t[lp.res[r][1].w].v, C, gh2, &gh1,
                             &G.t[lp.res[r][1].w].v, &G.t[lp.res[r][1].b].v);
            relu_backward(pt.h1[r], gh1);
            conv3x3_backward(pt.xs[r], P.t[lp.res[r][0].w].v, C, gh1, &gx,
                             &G.t[lp.res[r][0].w].v, &G.t[lp.res[r][0].b].v);
        }
        relu_backward(pt.xs[0], gx);
        // No input gradient needed below the first conv (data is a leaf), so
        // the pooling layers never see a backward pass inside the net.
        conv3x3_backward(pt.pooled, P.t[lp.in.w].v, C, gx, static_cast<Tensor<T>*>(nullptr),
                         &G.t[lp.in.w].v, &G.t[lp.in.b].v);
    }
}

template <typename T>
const Tensor<T>& as_tensor(const TensorF& x, Tensor<T>& tmp) {
    if constexpr (std::is_same_v<T, float>) {
        (void)tmp;
        return x;
    } else {
        tmp.h = x.h;
        tmp.w = x.w;
        tmp.c = x.c;
        tmp.v.assign(x.v.begin(), x.v.end());
        return tmp;
    }
}

}  // namespace

template <typename T>
Tensor<T> forward(const ParamsT<T>& params, const Tensor<T>& input) {
    NetTrace<T> t;
    return net_forward(params, input, t);
}

template <typename T>
double loss_and_grad(const ParamsT<T>& params, const std::vector<const TrainSample*>& batch,
                     ParamsT<T>& grads) {
    if (batch.empty()) throw std::runtime_error("loss: empty batch");
    grads = zero_like(params);
    double sse = 0;
    size_t count = 0;
    for (const TrainSample* s : batch) {
        Tensor<T> in_tmp, tg_tmp;
        const Tensor<T>& in = as_tensor<T>(s->input, in_tmp);
        const Tensor<T>& tg = as_tensor<T>(s->target, tg_tmp);
        NetTrace<T> tr;
        const Tensor<T>& out = net_forward(params, in, tr);
        const MaskImage* mask = s->mask.width ? &s->mask : nullptr;
        size_t n = 0;
        Tensor<T> gout;
        sse += sse_masked(out, tg, mask, n, &gout);
        count += n;
        if (n) net_backward(params, tr, gout, grads);
    }
    if (count == 0) throw std::runtime_error("no supervised pixels");
    const T scale = T(1.0 / double(count));
    for (auto& g : grads.t)
        for (T& v : g.v) v *= scale;
    return sse / double(count);
}

// --- optimizer ------------------------------------------------------------------

void adam_init(const Params& params, AdamState& state) {
    state.t = 0;
    state.m.clear();
    state.v.clear();
    for (const auto& p : params.t) {
        state.m.emplace_back(p.v.size(), 0.f);
        state.v.emplace_back(p.v.size(), 0.f);
    }
}

void adam_step(Params& params, const ParamsT<float>& grads, AdamState& state) {
    if (grads.t.size() != params.t.size() || state.m.size() != params.t.size())
        throw std::runtime_error("adam: state shape mismatch");
    for (size_t i = 0; i < grads.t.size(); ++i)
        for (float g : grads.t[i].v)
            if (!std::isfinite(g)) throw std::runtime_error("diverged");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.t));
    for (size_t i = 0; i < params.t.size(); ++i) {
        auto& th = params.t[i].v;
        const auto& g = grads.t[i].v;
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (g.size() != th.size()) throw std::runtime_error("adam: gradient shape mismatch");
        for (size_t j = 0; j < th.size(); ++j) {
            m[j] = float(state.beta1 * m[j] + (1.0 - state.beta1) * g[j]);
            v[j] = float(state.beta2 * v[j] + (1.0 - state.beta2) * double(g[j]) * g[j]);
            const double mh = m[j] / bc1;
            const double vh = v[j] / bc2;
            th[j] = float(th[j] - state.lr * mh / (std::sqrt(vh) + state.eps));
        }
    }
}

// --- training loop ----------------------------------------------------------------

TrainResult train_network(const ModelSpec& spec, const std::vector<TrainSample>& train_set,
                          const std::vector<TrainSample>& val_set, const TrainConfig& cfg) {
    if (train_set.empty()) throw std::runtime_error("training: empty train set");
    if (val_set.empty()) throw std::runtime_error("training: empty validation set");
    if (cfg.batch_size < 1) throw std::runtime_error("training: batch size must be positive");

    Params P = build_model<float>(spec, derive_seed(cfg.seed, 0x1417));
    AdamState st;
    st.lr = cfg.lr;
    adam_init(P, st);

    auto val_loss_of = [&](const Params& params) {
        double sse = 0;
        size_t count = 0;
        for (const auto& s : val_set) {
            NetTrace<float> tr;
            const TensorF& out = net_forward(params, s.input, tr);
            const MaskImage* mask = s.mask.width ? &s.mask : nullptr;
            size_t n = 0;
            sse += sse_masked(out, s.target, mask, n, static_cast<TensorF*>(nullptr));
            count += n;
        }
        if (count == 0) throw std::runtime_error("no supervised pixels");
        return sse / double(count);
    };

    TrainResult res;
    res.best = P;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), size_t(0));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.lr_final > 0.0 && cfg.epochs > 1)
            st.lr = cfg.lr * std::pow(cfg.lr_final / cfg.lr,
                                      double(epoch) / double(cfg.epochs - 1));
        Rng rng(derive_seed(cfg.seed, 3000 + uint64_t(epoch)));
        rng.shuffle(order);
        double epoch_loss = 0;
        int n_batches = 0;
        for (size_t at = 0; at < order.size(); at += cfg.batch_size) {
            std::vector<const TrainSample*> batch;
            for (size_t i = at; i < std::min(order.size(), at + cfg.batch_size); ++i)
                batch.push_back(&train_set[order[i]]);
            ParamsT<float> grads;
            epoch_loss += loss_and_grad(P, batch, grads);
            adam_step(P, grads, st);
            ++n_batches;
        }
        epoch_loss /= n_batches;
        const double vl = val_loss_of(P);
        if (!std::isfinite(vl)) throw std::runtime_error("diverged");
        res.curve.push_back({double(epoch), epoch_loss, vl});
        if (vl < best_val) {
            best_val = vl;
            res.best = P;
            res.best_epoch = epoch;
        }
    }

    if (!cfg.curve_csv.empty()) {
        std::ofstream f(cfg.curve_csv);
        if (!f) throw std::runtime_error("training: cannot write " + cfg.curve_csv);
        f << "epoch,train_loss,val_loss\n";
        char line[128];
        for (const auto& row : res.curve) {
            std::snprintf(line, sizeof line, "%d,%.17g,%.17g\n", int(row[0]), row[1], row[2]);
            f << line;
        }
    }
    return res;
}

// --- task wrappers ----------------------------------------------------------------

std::pair<ImageD, ImageD> infer_cnn1(const Params& params, const ImageD& fringe) {
    if (params.spec.input_channels != 1 || params.spec.output_channels != 2)
        throw std::runtime_error("cnn1: model is not a 1-in 2-out network");
    TensorF in(fringe.height, fringe.width, 1);
    for (int y = 0; y < fringe.height; ++y)
        for (int x = 0; x < fringe.width; ++x) in.at(y, x, 0) = float(fringe.at(x, y));
    const TensorF out = forward(params, in);
    ImageD M(fringe.width, fringe.height), D(fringe.width, fringe.height);
    for (int y = 0; y < fringe.height; ++y)
        for (int x = 0; x < fringe.width; ++x) {
            M.at(x, y) = out.at(y, x, 0);
            D.at(x, y) = out.at(y, x, 1);
        }
    return {std::move(M), std::move(D)};
}

OrderMap infer_cnn2(const Params& params, const TensorF& stack, int periods) {
    if (params.spec.output_channels != 1)
        throw std::runtime_error("cnn2: model is not a single-channel network");
    if (periods < 1) throw std::runtime_error("cnn2: periods must be positive");
    const TensorF out = forward(params, stack);
    OrderMap om;
    om.k = Image<int32_t>(stack.w, stack.h, 1, -1);
    om.confidence = ImageD(stack.w, stack.h, 1, 0.0);
    om.mask = MaskImage(stack.w, stack.h, 1, 1);
    for (int y = 0; y < stack.h; ++y)
        for (int x = 0; x < stack.w; ++x) {
            const double raw = double(out.at(y, x, 0)) * periods;
            int k = int(std::lround(raw));
            k = std::clamp(k, 0, periods - 1);
            om.k.at(x, y) = k;
            om.confidence.at(x, y) = std::fabs(raw - k);
        }
    return om;
}

// --- dataset adapters ---------------------------------------------------------------

namespace {

std::string join_path(const std::string& root, const std::string& rel) {
    if (rel.empty() || rel.front() == '/') return rel;
    if (root.empty()) return rel;
    return root.back() == '/' ? root + rel : root + "/" + rel;
}

// one channel of a stored stack as a single-channel tensor
void copy_channel(const ImageF& img, int src_ch, TensorF& dst, int dst_ch) {
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) dst.at(y, x, dst_ch) = img.at(x, y, src_ch);
}

}  // namespace

std::vector<TrainSample> make_cnn1_samples(const DatasetManifest& manifest,
                                           const std::string& split) {
    std::vector<TrainSample> out;
    for (const auto& rec : manifest.records) {
        if (rec.split != split) continue;
        const std::array<std::pair<std::string, std::pair<std::string, std::string>>, 2> cams = {
            {{rec.stack_paths.at(0), {rec.m1_path, rec.d1_path}},
             {rec.stack_paths.at(1), {rec.m2_path, rec.d2_path}}}};
        for (const auto& [stack_rel, md] : cams) {
            const ImageF stack = read_fpi(join_path(manifest.root_dir, stack_rel));
            const ImageF m = read_fpi(join_path(manifest.root_dir, md.first));
            const ImageF d = read_fpi(join_path(manifest.root_dir, md.second));
            TrainSample s;
            s.input = TensorF(stack.height, stack.width, 1);
            copy_channel(stack, 0, s.input, 0);
            s.target = TensorF(stack.height, stack.width, 2);
            copy_channel(m, 0, s.target, 0);
            copy_channel(d, 0, s.target, 1);
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::vector<TrainSample> make_cnn2_samples(const DatasetManifest& manifest,
                                           const std::string& split) {
    const SampleRecord* ref = nullptr;
    for (const auto& rec : manifest.records)
        if (rec.is_reference) ref = &rec;
    if (!ref) throw std::runtime_error("dataset: manifest has no reference record");
    if (manifest.periods < 1) throw std::runtime_error("dataset: manifest periods not set");
    const double K = manifest.periods;

    const ImageF ref1 = read_fpi(join_path(manifest.root_dir, ref->stack_paths.at(0)));
    const ImageF ref2 = read_fpi(join_path(manifest.root_dir, ref->stack_paths.at(1)));
    const ImageF ref_k = read_fpi(join_path(manifest.root_dir, ref->gt_order_path));

    std::vector<TrainSample> out;
    for (const auto& rec : manifest.records) {
        if (rec.is_reference || rec.split != split) continue;
        const ImageF cam1 = read_fpi(join_path(manifest.root_dir, rec.stack_paths.at(0)));
        const ImageF cam2 = read_fpi(join_path(manifest.root_dir, rec.stack_paths.at(1)));
        const ImageF k1 = read_fpi(join_path(manifest.root_dir, rec.gt_order_path));
        const MaskImage mask = read_fpi_mask(join_path(manifest.root_dir, rec.gt_mask_path));

        TrainSample s;
        s.input = TensorF(cam1.height, cam1.width, 5);
        copy_channel(cam1, 0, s.input, 0);
        copy_channel(cam2, 0, s.input, 1);
        copy_channel(ref1, 0, s.input, 2);
        copy_channel(ref2, 0, s.input, 3);
        for (int y = 0; y < cam1.height; ++y)
            for (int x = 0; x < cam1.width; ++x)
                s.input.at(y, x, 4) = float(ref_k.at(x, y) / K);
        s.target = TensorF(cam1.height, cam1.width, 1);
        s.mask = mask;
        for (int y = 0; y < cam1.height; ++y)
            for (int x = 0; x < cam1.width; ++x) {
                const double k = k1.at(x, y);
                if (k < 0) s.mask.at(x, y) = 0;
                s.target.at(y, x, 0) = float(k / K);
            }
        out.push_back(std::move(s));
    }
    return out;
}

// Builds the five-channel order-net input for fresh captures against a
// trained-dataset reference record.
TensorF cnn2_stack(const ImageD& cam1_frame, const ImageD& cam2_frame, const ImageD& ref1_frame,
                   const ImageD& ref2_frame, const Image<int32_t>& ref_order, int periods) {
    TensorF in(cam1_frame.height, cam1_frame.width, 5);
    auto put = [&](const ImageD& img, int ch) {
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) in.at(y, x, ch) = float(img.at(x, y));
    };
    put(cam1_frame, 0);
    put(cam2_frame, 1);
    put(ref1_frame, 2);
    put(ref2_frame, 3);
    for (int y = 0; y < cam1_frame.height; ++y)
        for (int x = 0; x < cam1_frame.width; ++x)
            in.at(y, x, 4) = float(double(ref_order.at(x, y)) / periods);
    return in;
}

// --- weights I/O ----------------------------------------------------------------------

void save_weights(const std::string& path, const Params& params) {
    json header;
    header["input_channels"] = params.spec.input_channels;
    header["filters"] = params.spec.filters;
    header["res_blocks"] = params.spec.res_blocks;
    header["output_channels"] = params.spec.output_channels;
    json table = json::array();
    for (const auto& p : params.t) table.push_back({{"name", p.name}, {"shape", p.shape}});
    header["tensors"] = std::move(table);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("weights: cannot write " + path);
    f << "FPNN1\n" << header.dump() << "\n";
    for (const auto& p : params.t)
        f.write(reinterpret_cast<const char*>(p.v.data()),
                std::streamsize(p.v.size() * sizeof(float)));
    if (!f) throw std::runtime_error("weights: write failed for " + path);
}

Params load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("weights: cannot open " + path);
    std::string magic, header_line;
    if (!std::getline(f, magic) || magic != "FPNN1")
        throw std::runtime_error("weights: bad magic");
    if (!std::getline(f, header_line)) throw std::runtime_error("weights: truncated");
    json header = json::parse(header_line);

    Params P;
    P.spec.input_channels = header.at("input_channels");
    P.spec.filters = header.at("filters");
    P.spec.res_blocks = header.at("res_blocks");
    P.spec.output_channels = header.at("output_channels");
    P.spec.validate();
    for (const auto& jt : header.at("tensors")) {
        PTensor<float> p;
        p.name = jt.at("name");
        p.shape = jt.at("shape").get<std::vector<int>>();
        size_t n = 1;
        for (int s : p.shape) {
            if (s < 1) throw std::runtime_error("weights: bad tensor shape");
            n *= size_t(s);
        }
        p.v.resize(n);
        f.read(reinterpret_cast<char*>(p.v.data()), std::streamsize(n * sizeof(float)));
        if (size_t(f.gcount()) != n * sizeof(float))
            throw std::runtime_error("weights: truncated");
        P.t.push_back(std::move(p));
    }
    // The stored table must be exactly the build layout for this spec.
    const Params fresh = build_model<float>(P.spec, 0);
    if (fresh.t.size() != P.t.size()) throw std::runtime_error("weights: bad tensor table");
    for (size_t i = 0; i < P.t.size(); ++i)
        if (fresh.t[i].name != P.t[i].name || fresh.t[i].shape != P.t[i].shape)
            throw std::runtime_error("weights: bad tensor table");
    return P;
}

// --- explicit instantiations ----------------------------------------------------------

#define FPP_NN_INSTANTIATE(T)                                                                  \
    template void conv3x3<T>(const Tensor<T>&, const std::vector<T>&, const std::vector<T>&,  \
                             int, Tensor<T>&);                                                 \
    template void conv3x3_backward<T>(const Tensor<T>&, const std::vector<T>&, int,           \
                                      const Tensor<T>&, Tensor<T>*, std::vector<T>*,          \
                                      std::vector<T>*);                                        \
    template void relu<T>(Tensor<T>&);                                                        \
    template void relu_backward<T>(const Tensor<T>&, Tensor<T>&);                             \
    template void maxpool<T>(const Tensor<T>&, int, Tensor<T>&, std::vector<int32_t>&);       \
    template void maxpool_backward<T>(const std::vector<int32_t>&, const Tensor<T>&,          \
                                      Tensor<T>&);                                             \
    template void upsample_nearest<T>(const Tensor<T>&, int, Tensor<T>&);                     \
    template void upsample_nearest_backward<T>(const Tensor<T>&, int, Tensor<T>&);            \
    template void concat_channels<T>(const std::vector<const Tensor<T>*>&, Tensor<T>&);       \
    template void concat_channels_backward<T>(const Tensor<T>&,                               \
                                              const std::vector<Tensor<T>*>&);                 \
    template double sse_masked<T>(const Tensor<T>&, const Tensor<T>&, const MaskImage*,       \
                                  size_t&, Tensor<T>*);                                        \
    template size_t ParamsT<T>::total_size() const;                                           \
    template ParamsT<T> build_model<T>(const ModelSpec&, uint64_t);                           \
    template Tensor<T> forward<T>(const ParamsT<T>&, const Tensor<T>&);                       \
    template double loss_and_grad<T>(const ParamsT<T>&,                                       \
                                     const std::vector<const TrainSample*>&, ParamsT<T>&);

FPP_NN_INSTANTIATE(float)
FPP_NN_INSTANTIATE(double)

#undef FPP_NN_INSTANTIATE

}  // namespace fpp
