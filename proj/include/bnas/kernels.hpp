#pragma once

#include <algorithm>
#include <cmath>

#include "bnas/layers.hpp"
#include "bnas/tensor.hpp"

// Dense CPU kernels. Loop order is fixed everywhere, so results are
// bit-reproducible run to run. Inner loops run over the contiguous spatial
// axis to vectorize.
namespace bnas::kernels {

template <typename T>
inline T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

// Valid output range [lo, hi] such that ix = ox*stride + k - pad stays inside [0, in_w).
inline void conv_span(int64_t in_w, int64_t out_w, int k, int stride, int pad, int64_t& lo, int64_t& hi) {
    const int64_t num = pad - k;
    lo = num <= 0 ? 0 : (num + stride - 1) / stride;
    hi = std::min(out_w - 1, (in_w - 1 + pad - k) / stride);
}

// ---------------------------------------------------------------- conv2d

template <typename T>
void conv2d_forward(const LayerSpec& s, const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>* b,
                    Tensor<T>& out) {
    const int64_t N = in.shape[0], IC = in.shape[1], H = in.shape[2], W = in.shape[3];
    const int64_t OC = out.shape[1], OH = out.shape[2], OW = out.shape[3];
    const int K = s.kernel, st = s.stride, P = s.padding;
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t oc = 0; oc < OC; ++oc) {
            T* obase = out.ptr() + ((n * OC + oc) * OH) * OW;
            const T bias = b ? b->data[oc] : T(0);
            std::fill(obase, obase + OH * OW, bias);
            for (int64_t ic = 0; ic < IC; ++ic) {
                const T* ibase = in.ptr() + ((n * IC + ic) * H) * W;
                const T* wbase = w.ptr() + ((oc * IC + ic) * K) * K;
                for (int ky = 0; ky < K; ++ky) {
                    for (int kx = 0; kx < K; ++kx) {
                        const T wv = wbase[ky * K + kx];
                        int64_t xlo, xhi;
                        conv_span(W, OW, kx, st, P, xlo, xhi);
                        for (int64_t oy = 0; oy < OH; ++oy) {
                            const int64_t iy = oy * st + ky - P;
                            if (iy < 0 || iy >= H) continue;
                            const T* irow = ibase + iy * W + (xlo * st + kx - P);
                            T* orow = obase + oy * OW;
                            if (st == 1) {
                                for (int64_t ox = xlo; ox <= xhi; ++ox) orow[ox] += wv * irow[ox - xlo];
                            } else {
                                for (int64_t ox = xlo; ox <= xhi; ++ox) orow[ox] += wv * irow[(ox - xlo) * st];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward(const LayerSpec& s, const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& dout,
                     Tensor<T>& din, Tensor<T>& dw, Tensor<T>* db) {
    const int64_t N = in.shape[0], IC = in.shape[1], H = in.shape[2], W = in.shape[3];
    const int64_t OC = dout.shape[1], OH = dout.shape[2], OW = dout.shape[3];
    const int K = s.kernel, st = s.stride, P = s.padding;
    // input gradient
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t oc = 0; oc < OC; ++oc) {
            const T* dobase = dout.ptr() + ((n * OC + oc) * OH) * OW;
            for (int64_t ic = 0; ic < IC; ++ic) {
                T* dibase = din.ptr() + ((n * IC + ic) * H) * W;
                const T* wbase = w.ptr() + ((oc * IC + ic) * K) * K;
                for (int ky = 0; ky < K; ++ky) {
                    for (int kx = 0; kx < K; ++kx) {
                        const T wv = wbase[ky * K + kx];
                        int64_t xlo, xhi;
                        conv_span(W, OW, kx, st, P, xlo, xhi);
                        for (int64_t oy = 0; oy < OH; ++oy) {
                            const int64_t iy = oy * st + ky - P;
                            if (iy < 0 || iy >= H) continue;
                            T* dirow = dibase + iy * W + (xlo * st + kx - P);
                            const T* dorow = dobase + oy * OW;
                            if (st == 1) {
                                for (int64_t ox = xlo; ox <= xhi; ++ox) dirow[ox - xlo] += wv * dorow[ox];
                            } else {
                                for (int64_t ox = xlo; ox <= xhi; ++ox) dirow[(ox - xlo) * st] += wv * dorow[ox];
                            }
                        }
                    }
                }
            }
        }
    }
    // weight gradient
    for (int64_t oc = 0; oc < OC; ++oc) {
        for (int64_t ic = 0; ic < IC; ++ic) {
            T* dwbase = dw.ptr() + ((oc * IC + ic) * K) * K;
            for (int ky = 0; ky < K; ++ky) {
                for (int kx = 0; kx < K; ++kx) {
                    int64_t xlo, xhi;
                    conv_span(W, OW, kx, st, P, xlo, xhi);
                    double acc = 0.0;
                    for (int64_t n = 0; n < N; ++n) {
                        const T* dobase = dout.ptr() + ((n * OC + oc) * OH) * OW;
                        const T* ibase = in.ptr() + ((n * IC + ic) * H) * W;
                        for (int64_t oy = 0; oy < OH; ++oy) {
                            const int64_t iy = oy * st + ky - P;
                            if (iy < 0 || iy >= H) continue;
                            const T* irow = ibase + iy * W + (xlo * st + kx - P);
                            const T* dorow = dobase + oy * OW;
                            double racc = 0.0;
                            if (st == 1) {
                                for (int64_t ox = xlo; ox <= xhi; ++ox)
                                    racc += double(dorow[ox]) * double(irow[ox - xlo]);
                            } else {
                                for (int64_t ox = xlo; ox <= xhi; ++ox)
                                    racc += double(dorow[ox]) * double(irow[(ox - xlo) * st]);
                            }
                            acc += racc;
                        }
                    }
                    dwbase[ky * K + kx] += T(acc);
                }
            }
        }
    }
    if (db) {
        for (int64_t oc = 0; oc < OC; ++oc) {
            double acc = 0.0;
            for (int64_t n = 0; n < N; ++n) {
                const T* dobase = dout.ptr() + ((n * OC + oc) * OH) * OW;
                for (int64_t i = 0; i < OH * OW; ++i) acc += double(dobase[i]);
            }
            db->data[oc] += T(acc);
        }
    }
}

// ------------------------------------------------------ depthwise conv2d

template <typename T>
void depthwise_forward(const LayerSpec& s, const Tensor<T>& in, const Tensor<T>& w, Tensor<T>& out) {
    const int64_t N = in.shape[0], C = in.shape[1], H = in.shape[2], W = in.shape[3];
    const int64_t OH = out.shape[2], OW = out.shape[3];
    const int K = s.kernel, st = s.stride, P = s.padding;
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t c = 0; c < C; ++c) {
            const T* ibase = in.ptr() + ((n * C + c) * H) * W;
            T* obase = out.ptr() + ((n * C + c) * OH) * OW;
            std::fill(obase, obase + OH * OW, T(0));
            const T* wbase = w.ptr() + c * K * K;
            for (int ky = 0; ky < K; ++ky) {
                for (int kx = 0; kx < K; ++kx) {
                    const T wv = wbase[ky * K + kx];
                    int64_t xlo, xhi;
                    conv_span(W, OW, kx, st, P, xlo, xhi);
                    for (int64_t oy = 0; oy < OH; ++oy) {
                        const int64_t iy = oy * st + ky - P;
                        if (iy < 0 || iy >= H) continue;
                        const T* irow = ibase + iy * W + (xlo * st + kx - P);
                        T* orow = obase + oy * OW;
                        if (st == 1) {
                            for (int64_t ox = xlo; ox <= xhi; ++ox) orow[ox] += wv * irow[ox - xlo];
                        } else {
                            for (int64_t ox = xlo; ox <= xhi; ++ox) orow[ox] += wv * irow[(ox - xlo) * st];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void depthwise_backward(const LayerSpec& s, const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& dout,
                        Tensor<T>& din, Tensor<T>& dw) {
    const int64_t N = in.shape[0], C = in.shape[1], H = in.shape[2], W = in.shape[3];
    const int64_t OH = dout.shape[2], OW = dout.shape[3];
    const int K = s.kernel, st = s.stride, P = s.padding;
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t c = 0; c < C; ++c) {
            const T* dobase = dout.ptr() + ((n * C + c) * OH) * OW;
            T* dibase = din.ptr() + ((n * C + c) * H) * W;
            const T* wbase = w.ptr() + c * K * K;
            for (int ky = 0; ky < K; ++ky) {
                for (int kx = 0; kx < K; ++kx) {
                    const T wv = wbase[ky * K + kx];
                    int64_t xlo, xhi;
                    conv_span(W, OW, kx, st, P, xlo, xhi);
                    for (int64_t oy = 0; oy < OH; ++oy) {
                        const int64_t iy = oy * st + ky - P;
                        if (iy < 0 || iy >= H) continue;
                        T* dirow = dibase + iy * W + (xlo * st + kx - P);
                        const T* dorow = dobase + oy * OW;
                        if (st == 1) {
                            for (int64_t ox = xlo; ox <= xhi; ++ox) dirow[ox - xlo] += wv * dorow[ox];
                        } else {
                            for (int64_t ox = xlo; ox <= xhi; ++ox) dirow[(ox - xlo) * st] += wv * dorow[ox];
                        }
                    }
                }
            }
        }
    }
    for (int64_t c = 0; c < C; ++c) {
        T* dwbase = dw.ptr() + c * K * K;
        for (int ky = 0; ky < K; ++ky) {
            for (int kx = 0; kx < K; ++kx) {
                int64_t xlo, xhi;
                conv_span(W, OW, kx, st, P, xlo, xhi);
                double acc = 0.0;
                for (int64_t n = 0; n < N; ++n) {
                    const T* dobase = dout.ptr() + ((n * C + c) * OH) * OW;
                    const T* ibase = in.ptr() + ((n * C + c) * H) * W;
                    for (int64_t oy = 0; oy < OH; ++oy) {
                        const int64_t iy = oy * st + ky - P;
                        if (iy < 0 || iy >= H) continue;
                        const T* irow = ibase + iy * W + (xlo * st + kx - P);
                        const T* dorow = dobase + oy * OW;
                        double racc = 0.0;
                        if (st == 1) {
                            for (int64_t ox = xlo; ox <= xhi; ++ox) racc += double(dorow[ox]) * double(irow[ox - xlo]);
                        } else {
                            for (int64_t ox = xlo; ox <= xhi; ++ox)
                                racc += double(dorow[ox]) * double(irow[(ox - xlo) * st]);
                        }
                        acc += racc;
                    }
                }
                dwbase[ky * K + kx] += T(acc);
            }
        }
    }
}

// -------------------------------------------------------------- batchnorm

// Per-channel batch statistics saved for backward. Variance is the biased
// (population) estimate; running stats use the same convention.
template <typename T>
struct BnCtx {
    std::vector<T> mean, invstd;
};

template <typename T>
void batchnorm_forward_train(const LayerSpec& s, const Tensor<T>& in, const Tensor<T>& gamma,
                             const Tensor<T>& beta, Tensor<T>& rmean, Tensor<T>& rvar, Tensor<T>& out,
                             BnCtx<T>& ctx) {
    const int64_t N = in.shape[0], C = in.shape[1], HW = in.shape[2] * in.shape[3];
    const int64_t m = N * HW;
    ctx.mean.resize(C);
    ctx.invstd.resize(C);
    const double mom = s.bn_momentum;
    for (int64_t c = 0; c < C; ++c) {
        double sum = 0.0;
        for (int64_t n = 0; n < N; ++n) {
            const T* p = in.ptr() + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) sum += double(p[i]);
        }
        const double mean = sum / double(m);
        double vsum = 0.0;
        for (int64_t n = 0; n < N; ++n) {
            const T* p = in.ptr() + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) {
                const double d = double(p[i]) - mean;
                vsum += d * d;
            }
        }
        const double var = vsum / double(m);
        const double invstd = 1.0 / std::sqrt(var + s.bn_eps);
        ctx.mean[c] = T(mean);
        ctx.invstd[c] = T(invstd);
        rmean.data[c] = T(mom * double(rmean.data[c]) + (1.0 - mom) * mean);
        rvar.data[c] = T(mom * double(rvar.data[c]) + (1.0 - mom) * var);
        const T g = gamma.data[c], b = beta.data[c];
        const T mu = T(mean), is = T(invstd);
        for (int64_t n = 0; n < N; ++n) {
            const T* p = in.ptr() + (n * C + c) * HW;
            T* q = out.ptr() + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) q[i] = g * ((p[i] - mu) * is) + b;
        }
    }
}

template <typename T>
void batchnorm_forward_eval(const LayerSpec& s, const Tensor<T>& in, const Tensor<T>& gamma,
                            const Tensor<T>& beta, const Tensor<T>& rmean, const Tensor<T>& rvar,
                            Tensor<T>& out) {
    const int64_t N = in.shape[0], C = in.shape[1], HW = in.shape[2] * in.shape[3];
    for (int64_t c = 0; c < C; ++c) {
        const T mu = rmean.data[c];
        const T is = T(1.0 / std::sqrt(double(rvar.data[c]) + s.bn_eps));
        const T g = gamma.data[c], b = beta.data[c];
        for (int64_t n = 0; n < N; ++n) {
            const T* p = in.ptr() + (n * C + c) * HW;
            T* q = out.ptr() + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) q[i] = g * ((p[i] - mu) * is) + b;
        }
    }
}

template <typename T>
void batchnorm_backward_train(const Tensor<T>& in, const Tensor<T>& gamma, const BnCtx<T>& ctx,
                              const Tensor<T>& dout, Tensor<T>& din, Tensor<T>& dgamma, Tensor<T>& dbeta) {
    const int64_t N = in.shape[0], C = in.shape[1], HW = in.shape[2] * in.shape[3];
    const int64_t m = N * HW;
    for (int64_t c = 0; c < C; ++c) {
        const double mu = double(ctx.mean[c]), is = double(ctx.invstd[c]);
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int64_t n = 0; n < N; ++n) {
            const T* p = in.ptr() + (n * C + c) * HW;
            const T* dy = dout.ptr() + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) {
                const double xh = (double(p[i]) - mu) * is;
                sum_dy += double(dy[i]);
                sum_dy_xhat += double(dy[i]) * xh;
            }
        }
        dgamma.data[c] += T(sum_dy_xhat);
        dbeta.data[c] += T(sum_dy);
        const double g = double(gamma.data[c]);
        const double k1 = sum_dy / double(m), k2 = sum_dy_xhat / double(m);
        for (int64_t n = 0; n < N; ++n) {
            const T* p = in.ptr() + (n * C + c) * HW;
            const T* dy = dout.ptr() + (n * C + c) * HW;
            T* dx = din.ptr() + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) {
                const double xh = (double(p[i]) - mu) * is;
                dx[i] += T(g * is * (double(dy[i]) - k1 - xh * k2));
            }
        }
    }
}

template <typename T>
void batchnorm_backward_eval(const LayerSpec& s, const Tensor<T>& in, const Tensor<T>& gamma,
                             const Tensor<T>& rmean, const Tensor<T>& rvar, const Tensor<T>& dout,
                             Tensor<T>& din, Tensor<T>& dgamma, Tensor<T>& dbeta) {
    const int64_t N = in.shape[0], C = in.shape[1], HW = in.shape[2] * in.shape[3];
    for (int64_t c = 0; c < C; ++c) {
        const double mu = double(rmean.data[c]);
        const double is = 1.0 / std::sqrt(double(rvar.data[c]) + s.bn_eps);
        const double g = double(gamma.data[c]);
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int64_t n = 0; n < N; ++n) {
            const T* p = in.ptr() + (n * C + c) * HW;
            const T* dy = dout.ptr() + (n * C + c) * HW;
            T* dx = din.ptr() + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) {
                const double xh = (double(p[i]) - mu) * is;
                sum_dy += double(dy[i]);
                sum_dy_xhat += double(dy[i]) * xh;
                dx[i] += T(g * is * double(dy[i]));
            }
        }
        dgamma.data[c] += T(sum_dy_xhat);
        dbeta.data[c] += T(sum_dy);
    }
}

// ------------------------------------------------------------- activation

template <typename T>
void activation_forward(Act a, const Tensor<T>& in, Tensor<T>& out) {
    const int64_t n = in.numel();
    const T* p = in.ptr();
    T* q = out.ptr();
    switch (a) {
        case Act::relu:
            for (int64_t i = 0; i < n; ++i) q[i] = p[i] > T(0) ? p[i] : T(0);
            break;
        case Act::sigmoid:
            for (int64_t i = 0; i < n; ++i) q[i] = sigmoid(p[i]);
            break;
        case Act::swish:
            for (int64_t i = 0; i < n; ++i) q[i] = p[i] * sigmoid(p[i]);
            break;
    }
}

template <typename T>
void activation_backward(Act a, const Tensor<T>& in, const Tensor<T>& dout, Tensor<T>& din) {
    const int64_t n = in.numel();
    const T* p = in.ptr();
    const T* dy = dout.ptr();
    T* dx = din.ptr();
    switch (a) {
        case Act::relu:
            for (int64_t i = 0; i < n; ++i) dx[i] += p[i] > T(0) ? dy[i] : T(0);
            break;
        case Act::sigmoid:
            for (int64_t i = 0; i < n; ++i) {
                const T s = sigmoid(p[i]);
                dx[i] += dy[i] * s * (T(1) - s);
            }
            break;
        case Act::swish:
            for (int64_t i = 0; i < n; ++i) {
                const T s = sigmoid(p[i]);
                dx[i] += dy[i] * (s + p[i] * s * (T(1) - s));
            }
            break;
    }
}

// ---------------------------------------------------------- squeeze-excite

// z = GAP(x); h = swish(W1 z); gate = sigmoid(W2 h); y = x * gate.
// W1: [R, C], W2: [C, R]. No biases (cost accounting counts none).
template <typename T>
struct SeCtx {
    Tensor<T> z, u, h, gate;  // z,gate: [N,C]; u,h: [N,R]
};

template <typename T>
void squeeze_excite_forward(const Tensor<T>& in, const Tensor<T>& w1, const Tensor<T>& w2, Tensor<T>& out,
                            SeCtx<T>& ctx) {
    const int64_t N = in.shape[0], C = in.shape[1], HW = in.shape[2] * in.shape[3];
    const int64_t R = w1.shape[0];
    ctx.z = Tensor<T>({N, C});
    ctx.u = Tensor<T>({N, R});
    ctx.h = Tensor<T>({N, R});
    ctx.gate = Tensor<T>({N, C});
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t c = 0; c < C; ++c) {
            const T* p = in.ptr() + (n * C + c) * HW;
            double acc = 0.0;
            for (int64_t i = 0; i < HW; ++i) acc += double(p[i]);
            ctx.z.at2(n, c) = T(acc / double(HW));
        }
        for (int64_t r = 0; r < R; ++r) {
            double acc = 0.0;
            const T* wrow = w1.ptr() + r * C;
            for (int64_t c = 0; c < C; ++c) acc += double(wrow[c]) * double(ctx.z.at2(n, c));
            const T u = T(acc);
            ctx.u.at2(n, r) = u;
            ctx.h.at2(n, r) = u * sigmoid(u);
        }
        for (int64_t c = 0; c < C; ++c) {
            double acc = 0.0;
            const T* wrow = w2.ptr() + c * R;
            for (int64_t r = 0; r < R; ++r) acc += double(wrow[r]) * double(ctx.h.at2(n, r));
            ctx.gate.at2(n, c) = sigmoid(T(acc));
        }
        for (int64_t c = 0; c < C; ++c) {
            const T g = ctx.gate.at2(n, c);
            const T* p = in.ptr() + (n * C + c) * HW;
            T* q = out.ptr() + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) q[i] = p[i] * g;
        }
    }
}

template <typename T>
void squeeze_excite_backward(const Tensor<T>& in, const Tensor<T>& w1, const Tensor<T>& w2, const SeCtx<T>& ctx,
                             const Tensor<T>& dout, Tensor<T>& din, Tensor<T>& dw1, Tensor<T>& dw2) {
    const int64_t N = in.shape[0], C = in.shape[1], HW = in.shape[2] * in.shape[3];
    const int64_t R = w1.shape[0];
    Tensor<T> dlogit({N, C});
    Tensor<T> du({N, R});
    for (int64_t n = 0; n < N; ++n) {
        // through the scale: din += dout * gate; dgate = sum(dout * in)
        for (int64_t c = 0; c < C; ++c) {
            const T g = ctx.gate.at2(n, c);
            const T* p = in.ptr() + (n * C + c) * HW;
            const T* dy = dout.ptr() + (n * C + c) * HW;
            T* dx = din.ptr() + (n * C + c) * HW;
            double dg = 0.0;
            for (int64_t i = 0; i < HW; ++i) {
                dx[i] += dy[i] * g;
                dg += double(dy[i]) * double(p[i]);
            }
            dlogit.at2(n, c) = T(dg) * g * (T(1) - g);
        }
        // through W2
        for (int64_t r = 0; r < R; ++r) {
            double acc = 0.0;
            for (int64_t c = 0; c < C; ++c) acc += double(dlogit.at2(n, c)) * double(w2.ptr()[c * R + r]);
            // swish'(u)
            const T u = ctx.u.at2(n, r);
            const T s = sigmoid(u);
            du.at2(n, r) = T(acc) * (s + u * s * (T(1) - s));
        }
        // dz and the broadcast back into din
        for (int64_t c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int64_t r = 0; r < R; ++r) acc += double(du.at2(n, r)) * double(w1.ptr()[r * C + c]);
            const T dz = T(acc / double(HW));
            T* dx = din.ptr() + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) dx[i] += dz;
        }
    }
    for (int64_t c = 0; c < C; ++c)
        for (int64_t r = 0; r < R; ++r) {
            double acc = 0.0;
            for (int64_t n = 0; n < N; ++n) acc += double(dlogit.at2(n, c)) * double(ctx.h.at2(n, r));
            dw2.ptr()[c * R + r] += T(acc);
        }
    for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int64_t n = 0; n < N; ++n) acc += double(du.at2(n, r)) * double(ctx.z.at2(n, c));
            dw1.ptr()[r * C + c] += T(acc);
        }
}

// --------------------------------------------------------- pooling and fc

template <typename T>
void global_avg_pool_forward(const Tensor<T>& in, Tensor<T>& out) {
    const int64_t N = in.shape[0], C = in.shape[1], HW = in.shape[2] * in.shape[3];
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const T* p = in.ptr() + (n * C + c) * HW;
            double acc = 0.0;
            for (int64_t i = 0; i < HW; ++i) acc += double(p[i]);
            out.at2(n, c) = T(acc / double(HW));
        }
}

template <typename T>
void global_avg_pool_backward(const Shape& in_shape, const Tensor<T>& dout, Tensor<T>& din) {
    const int64_t N = in_shape[0], C = in_shape[1], HW = in_shape[2] * in_shape[3];
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const T d = dout.at2(n, c) / T(HW);
            T* dx = din.ptr() + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) dx[i] += d;
        }
}

template <typename T>
void fully_connected_forward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>* b, Tensor<T>& out) {
    const int64_t N = in.shape[0], F = in.shape[1], O = out.shape[1];
    for (int64_t n = 0; n < N; ++n)
        for (int64_t o = 0; o < O; ++o) {
            const T* wrow = w.ptr() + o * F;
            const T* irow = in.ptr() + n * F;
            double acc = b ? double(b->data[o]) : 0.0;
            for (int64_t f = 0; f < F; ++f) acc += double(wrow[f]) * double(irow[f]);
            out.at2(n, o) = T(acc);
        }
}

template <typename T>
void fully_connected_backward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& dout, Tensor<T>& din,
                              Tensor<T>& dw, Tensor<T>* db) {
    const int64_t N = in.shape[0], F = in.shape[1], O = dout.shape[1];
    for (int64_t n = 0; n < N; ++n)
        for (int64_t f = 0; f < F; ++f) {
            double acc = 0.0;
            for (int64_t o = 0; o < O; ++o) acc += double(dout.at2(n, o)) * double(w.ptr()[o * F + f]);
            din.at2(n, f) += T(acc);
        }
    for (int64_t o = 0; o < O; ++o)
        for (int64_t f = 0; f < F; ++f) {
            double acc = 0.0;
            for (int64_t n = 0; n < N; ++n) acc += double(dout.at2(n, o)) * double(in.at2(n, f));
            dw.ptr()[o * F + f] += T(acc);
        }
    if (db)
        for (int64_t o = 0; o < O; ++o) {
            double acc = 0.0;
            for (int64_t n = 0; n < N; ++n) acc += double(dout.at2(n, o));
            db->data[o] += T(acc);
        }
}

// ----------------------------------------------------------------- losses

// Mean over all elements (batch included), matching a 1/K reduction over
// the feature tensor.
template <typename T>
double mse_loss(const Tensor<T>& a, const Tensor<T>& b) {
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = double(a.data[i]) - double(b.data[i]);
        acc += d * d;
    }
    return acc / double(a.numel());
}

template <typename T>
void mse_backward(const Tensor<T>& a, const Tensor<T>& b, double dloss, Tensor<T>& da, Tensor<T>* db) {
    const double k = 2.0 * dloss / double(a.numel());
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = double(a.data[i]) - double(b.data[i]);
        da.data[i] += T(k * d);
        if (db) db->data[i] -= T(k * d);
    }
}

// Mean over the batch of -log softmax(logits)[label]. Saves probabilities.
template <typename T>
double softmax_ce_loss(const Tensor<T>& logits, const Tensor<T>& labels, Tensor<T>& probs) {
    const int64_t N = logits.shape[0], K = logits.shape[1];
    probs = Tensor<T>({N, K});
    double acc = 0.0;
    for (int64_t n = 0; n < N; ++n) {
        const T* row = logits.ptr() + n * K;
        double mx = double(row[0]);
        for (int64_t k = 1; k < K; ++k) mx = std::max(mx, double(row[k]));
        double denom = 0.0;
        for (int64_t k = 0; k < K; ++k) denom += std::exp(double(row[k]) - mx);
        const auto y = static_cast<int64_t>(labels.data[n]);
        for (int64_t k = 0; k < K; ++k) probs.at2(n, k) = T(std::exp(double(row[k]) - mx) / denom);
        acc += -(double(row[y]) - mx - std::log(denom));
    }
    return acc / double(N);
}

template <typename T>
void softmax_ce_backward(const Tensor<T>& probs, const Tensor<T>& labels, double dloss, Tensor<T>& dlogits) {
    const int64_t N = probs.shape[0], K = probs.shape[1];
    const double k1 = dloss / double(N);
    for (int64_t n = 0; n < N; ++n) {
        const auto y = static_cast<int64_t>(labels.data[n]);
        for (int64_t k = 0; k < K; ++k)
            dlogits.at2(n, k) += T(k1 * (double(probs.at2(n, k)) - (k == y ? 1.0 : 0.0)));
    }
}

template <typename T>
void add_forward(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out) {
    for (int64_t i = 0; i < a.numel(); ++i) out.data[i] = a.data[i] + b.data[i];
}

}  // namespace bnas::kernels
