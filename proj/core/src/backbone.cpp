#include "tta/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "tta/evalstat.hpp"

namespace tta {

namespace {
constexpr std::size_t kChunk = 8;  // fixed reduction chunk: merge order never
                                   // depends on the worker count
}

void ArchDescriptor::validate() const {
    require(input_channels >= 1, "arch: input_channels must be >= 1");
    require(hidden >= 1, "arch: hidden must be >= 1");
    require(blocks >= 1, "arch: blocks must be >= 1");
    require(kernel >= 1, "arch: kernel must be >= 1");
    require(dilations.size() == static_cast<std::size_t>(blocks),
            "arch: need one dilation per block");
    for (int d : dilations) require(d >= 1, "arch: dilation must be >= 1");
}

void TrainConfig::validate() const {
    require(learning_rate > 0.0, "train: learning rate must be > 0");
    require(patience >= 1, "train: patience must be >= 1");
    require(batch_size >= 1, "train: batch size must be >= 1");
    require(max_epochs >= 1, "train: max_epochs must be >= 1");
    require(weight_decay >= 0.0, "train: weight decay must be >= 0");
    require(bn_momentum > 0.0 && bn_momentum <= 1.0, "train: bn momentum in (0,1]");
}

void bn_apply(const double* u, std::size_t n, double mu, double sigma, double gamma, double beta,
              double* h_out, double* y_out) {
    if (!(sigma > 0.0)) throw Error("bn_apply: non-positive sigma after flooring");
    const double inv = 1.0 / sigma;
    for (std::size_t i = 0; i < n; ++i) {
        const double h = (u[i] - mu) * inv;
        h_out[i] = h;
        y_out[i] = gamma * h + beta;
    }
}

void grad_bn_affine(const double* upstream, const double* h, std::size_t n, double& d_gamma,
                    double& d_beta) {
    double sg = 0.0, sgh = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sg += upstream[i];
        sgh += upstream[i] * h[i];
    }
    d_gamma = sgh;
    d_beta = sg;
}

// ---------------------------------------------------------------------------
// construction

Backbone::Backbone(ArchDescriptor arch, TaskHead head, std::uint64_t init_seed)
    : arch_(std::move(arch)), head_(head), init_seed_(init_seed) {
    arch_.validate();
    require(head_.horizon >= 1, "head: horizon must be >= 1");

    Rng rng(derive_seed(init_seed_, "backbone-init"));
    auto init_conv = [&rng](Conv& cv, int in_ch, int out_ch, int kernel, int dilation) {
        cv.in_ch = in_ch;
        cv.out_ch = out_ch;
        cv.kernel = kernel;
        cv.dilation = dilation;
        cv.w.resize(static_cast<std::size_t>(out_ch) * in_ch * kernel);
        cv.b.resize(static_cast<std::size_t>(out_ch));
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch) * kernel);
        for (auto& v : cv.w) v = rng.uniform(-bound, bound);
        for (auto& v : cv.b) v = rng.uniform(-bound, bound);
    };

    convs_.resize(static_cast<std::size_t>(arch_.blocks) * 2);
    bn_.resize(static_cast<std::size_t>(arch_.blocks) * 2);
    for (int b = 0; b < arch_.blocks; ++b) {
        const int in_ch = b == 0 ? arch_.input_channels : arch_.hidden;
        init_conv(convs_[2 * b], in_ch, arch_.hidden, arch_.kernel, arch_.dilations[b]);
        init_conv(convs_[2 * b + 1], arch_.hidden, arch_.hidden, arch_.kernel, arch_.dilations[b]);
    }
    init_conv(skip_, arch_.input_channels, arch_.hidden, 1, 1);
    for (auto& bn : bn_) {
        bn.gamma.assign(static_cast<std::size_t>(arch_.hidden), 1.0);
        bn.beta.assign(static_cast<std::size_t>(arch_.hidden), 0.0);
        bn.run_mean.assign(static_cast<std::size_t>(arch_.hidden), 0.0);
        bn.run_var.assign(static_cast<std::size_t>(arch_.hidden), 1.0);
    }

    const int out = head_.out_dim();
    head_w_.resize(static_cast<std::size_t>(out) * arch_.hidden);
    head_b_.resize(static_cast<std::size_t>(out));
    const double bound = 1.0 / std::sqrt(static_cast<double>(arch_.hidden));
    for (auto& v : head_w_) v = rng.uniform(-bound, bound);
    for (auto& v : head_b_) v = rng.uniform(-bound, bound);
}

void Backbone::check_batch(const WindowBatch& batch) const {
    if (batch.d != arch_.input_channels)
        throw ShapeError("forward: batch has " + std::to_string(batch.d) +
                         " channels, architecture expects " +
                         std::to_string(arch_.input_channels));
    require(batch.count >= 1 && batch.L >= 1, "forward: empty batch");
    require(batch.data.size() == batch.count * batch.window_size(),
            "forward: batch buffer size mismatch");
    for (std::size_t i = 0; i < batch.count; ++i) {
        const double* w = batch.window(i);
        for (std::size_t j = 0; j < batch.window_size(); ++j)
            if (!std::isfinite(w[j]))
                throw InputError("forward: non-finite input at window " + std::to_string(i));
    }
}

// ---------------------------------------------------------------------------
// forward machinery

namespace {

// Inner kernels accumulate all taps of one (oc, ic) pair in a single pass
// over time; tap count 3 is specialized since it dominates.

// yrow[t] += sum_k wrow[k] * xrow[t - (K-1-k)*dil], zero padding on the left
inline void conv_row_acc(const double* wrow, const double* xrow, double* yrow, int L, int kernel,
                         int dilation) {
    const int lead = (kernel - 1) * dilation;
    const int head = std::min(lead, L);
    for (int t = 0; t < head; ++t) {
        double acc = 0.0;
        for (int k = 0; k < kernel; ++k) {
            const int src = t - (kernel - 1 - k) * dilation;
            if (src >= 0) acc += wrow[k] * xrow[src];
        }
        yrow[t] += acc;
    }
    if (kernel == 3) {
        const double w0 = wrow[0], w1 = wrow[1], w2 = wrow[2];
        const double* x0 = xrow - 2 * dilation;
        const double* x1 = xrow - dilation;
        for (int t = head; t < L; ++t) yrow[t] += w0 * x0[t] + w1 * x1[t] + w2 * xrow[t];
    } else if (kernel == 1) {
        const double w0 = wrow[0];
        for (int t = head; t < L; ++t) yrow[t] += w0 * xrow[t];
    } else {
        for (int t = head; t < L; ++t) {
            double acc = 0.0;
            for (int k = 0; k < kernel; ++k)
                acc += wrow[k] * xrow[t - (kernel - 1 - k) * dilation];
            yrow[t] += acc;
        }
    }
}

// dxrow[s] += sum_k wrow[k] * dyrow[s + (K-1-k)*dil], truncated on the right
inline void conv_row_acc_transposed(const double* wrow, const double* dyrow, double* dxrow, int L,
                                    int kernel, int dilation) {
    const int lead = (kernel - 1) * dilation;
    const int tail = std::max(0, L - lead);
    if (kernel == 3) {
        const double w0 = wrow[0], w1 = wrow[1], w2 = wrow[2];
        const double* y0 = dyrow + 2 * dilation;
        const double* y1 = dyrow + dilation;
        for (int s = 0; s < tail; ++s) dxrow[s] += w0 * y0[s] + w1 * y1[s] + w2 * dyrow[s];
    } else if (kernel == 1) {
        const double w0 = wrow[0];
        for (int s = 0; s < tail; ++s) dxrow[s] += w0 * dyrow[s];
    } else {
        for (int s = 0; s < tail; ++s) {
            double acc = 0.0;
            for (int k = 0; k < kernel; ++k)
                acc += wrow[k] * dyrow[s + (kernel - 1 - k) * dilation];
            dxrow[s] += acc;
        }
    }
    for (int s = tail; s < L; ++s) {
        double acc = 0.0;
        for (int k = 0; k < kernel; ++k) {
            const int dst = s + (kernel - 1 - k) * dilation;
            if (dst < L) acc += wrow[k] * dyrow[dst];
        }
        dxrow[s] += acc;
    }
}

// y[b][oc][t] = bias[oc] + sum_{ic,k} w[oc][ic][k] * x[b][ic][t - (K-1-k)*dil]
// (causal left zero padding)
void conv_forward(int in_ch, int out_ch, int kernel, int dilation, const std::vector<double>& w,
                  const std::vector<double>& bias, const double* x, double* y, std::size_t B,
                  int L) {
    const std::size_t in_sz = static_cast<std::size_t>(in_ch) * L;
    const std::size_t out_sz = static_cast<std::size_t>(out_ch) * L;
    parallel_chunks(B, kChunk, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t bi = lo; bi < hi; ++bi) {
            const double* xb = x + bi * in_sz;
            double* yb = y + bi * out_sz;
            for (int oc = 0; oc < out_ch; ++oc) {
                double* yrow = yb + static_cast<std::size_t>(oc) * L;
                std::fill(yrow, yrow + L, bias[static_cast<std::size_t>(oc)]);
                for (int ic = 0; ic < in_ch; ++ic) {
                    conv_row_acc(w.data() + (static_cast<std::size_t>(oc) * in_ch + ic) * kernel,
                                 xb + static_cast<std::size_t>(ic) * L, yrow, L, kernel, dilation);
                }
            }
        }
    });
}

// dx[b][ic][t-off] += w[oc][ic][k] * dy[b][oc][t]
void conv_backward_input(int in_ch, int out_ch, int kernel, int dilation,
                         const std::vector<double>& w, const double* dy, double* dx, std::size_t B,
                         int L) {
    const std::size_t in_sz = static_cast<std::size_t>(in_ch) * L;
    const std::size_t out_sz = static_cast<std::size_t>(out_ch) * L;
    parallel_chunks(B, kChunk, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t bi = lo; bi < hi; ++bi) {
            const double* dyb = dy + bi * out_sz;
            double* dxb = dx + bi * in_sz;
            for (int ic = 0; ic < in_ch; ++ic) {
                double* dxrow = dxb + static_cast<std::size_t>(ic) * L;
                for (int oc = 0; oc < out_ch; ++oc) {
                    conv_row_acc_transposed(
                        w.data() + (static_cast<std::size_t>(oc) * in_ch + ic) * kernel,
                        dyb + static_cast<std::size_t>(oc) * L, dxrow, L, kernel, dilation);
                }
            }
        }
    });
}

// dw[oc][ic][k] = sum_{b,t} dy[b][oc][t] * x[b][ic][t-off]; db[oc] = sum dy.
// Per-chunk partials merged in chunk order for determinism.
void conv_backward_weights(int in_ch, int out_ch, int kernel, int dilation, const double* x,
                           const double* dy, std::vector<double>& dw, std::vector<double>& db,
                           std::size_t B, int L) {
    const std::size_t in_sz = static_cast<std::size_t>(in_ch) * L;
    const std::size_t out_sz = static_cast<std::size_t>(out_ch) * L;
    const std::size_t wn = static_cast<std::size_t>(out_ch) * in_ch * kernel;
    const std::size_t nchunks = (B + kChunk - 1) / kChunk;
    std::vector<std::vector<double>> dw_part(nchunks), db_part(nchunks);
    parallel_chunks(B, kChunk, [&](std::size_t lo, std::size_t hi) {
        const std::size_t c = lo / kChunk;
        auto& dwc = dw_part[c];
        auto& dbc = db_part[c];
        dwc.assign(wn, 0.0);
        dbc.assign(static_cast<std::size_t>(out_ch), 0.0);
        for (std::size_t bi = lo; bi < hi; ++bi) {
            const double* xb = x + bi * in_sz;
            const double* dyb = dy + bi * out_sz;
            for (int oc = 0; oc < out_ch; ++oc) {
                const double* dyrow = dyb + static_cast<std::size_t>(oc) * L;
                double s = 0.0;
                for (int t = 0; t < L; ++t) s += dyrow[t];
                dbc[static_cast<std::size_t>(oc)] += s;
                for (int ic = 0; ic < in_ch; ++ic) {
                    const double* xrow = xb + static_cast<std::size_t>(ic) * L;
                    double* dwrow = dwc.data() + (static_cast<std::size_t>(oc) * in_ch + ic) * kernel;
                    if (kernel == 3) {
                        // all taps in one sweep; each accumulator still sums
                        // in ascending t, matching the generic path bit-exactly
                        const int lead = std::min(2 * dilation, L);
                        double a0 = 0.0, a1 = 0.0, a2 = 0.0;
                        for (int t = 0; t < lead; ++t) {
                            const double g = dyrow[t];
                            if (t - 2 * dilation >= 0) a0 += g * xrow[t - 2 * dilation];
                            if (t - dilation >= 0) a1 += g * xrow[t - dilation];
                            a2 += g * xrow[t];
                        }
                        for (int t = lead; t < L; ++t) {
                            const double g = dyrow[t];
                            a0 += g * xrow[t - 2 * dilation];
                            a1 += g * xrow[t - dilation];
                            a2 += g * xrow[t];
                        }
                        dwrow[0] += a0;
                        dwrow[1] += a1;
                        dwrow[2] += a2;
                    } else {
                        for (int k = 0; k < kernel; ++k) {
                            const int off = (kernel - 1 - k) * dilation;
                            if (off >= L) continue;
                            double acc = 0.0;
                            for (int t = off; t < L; ++t) acc += dyrow[t] * xrow[t - off];
                            dwrow[k] += acc;
                        }
                    }
                }
            }
        }
    });
    for (std::size_t c = 0; c < nchunks; ++c) {
        for (std::size_t i = 0; i < wn; ++i) dw[i] += dw_part[c][i];
        for (int oc = 0; oc < out_ch; ++oc)
            db[static_cast<std::size_t>(oc)] += db_part[c][static_cast<std::size_t>(oc)];
    }
}

// population moments per channel over batch x time
void batch_moments(const double* u, std::size_t B, int C, int L, std::vector<double>& mean,
                   std::vector<double>& var) {
    mean.assign(static_cast<std::size_t>(C), 0.0);
    var.assign(static_cast<std::size_t>(C), 0.0);
    const double n = static_cast<double>(B) * L;
    for (std::size_t bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c) {
            const double* row = u + (bi * C + c) * static_cast<std::size_t>(L);
            double s = 0.0;
            for (int t = 0; t < L; ++t) s += row[t];
            mean[static_cast<std::size_t>(c)] += s;
        }
    for (auto& m : mean) m /= n;
    for (std::size_t bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c) {
            const double* row = u + (bi * C + c) * static_cast<std::size_t>(L);
            const double m = mean[static_cast<std::size_t>(c)];
            double s = 0.0;
            for (int t = 0; t < L; ++t) {
                const double dlt = row[t] - m;
                s += dlt * dlt;
            }
            var[static_cast<std::size_t>(c)] += s;
        }
    for (auto& v : var) v /= n;
}

}  // namespace

ForwardResult Backbone::run_forward(const WindowBatch& batch, BnMode mode, bool want_cache,
                                    bool update_running, double momentum) {
    check_batch(batch);
    const std::size_t B = batch.count;
    const int L = batch.L;
    const int Ch = arch_.hidden;
    const std::size_t hid_sz = static_cast<std::size_t>(Ch) * L;

    ForwardCache cache;
    cache.mode = mode;
    cache.batch = B;
    if (want_cache) {
        cache.x.resize(static_cast<std::size_t>(arch_.blocks) + 1);
        cache.mid.resize(static_cast<std::size_t>(arch_.blocks));
        cache.bn.resize(bn_.size());
    }

    std::vector<double> x = batch.data;  // [B][C][L]
    if (want_cache) cache.x[0] = x;

    std::vector<double> u(B * hid_sz), y(B * hid_sz), skip_out;
    std::vector<double> bmean, bvar;

    auto apply_bn = [&](std::size_t layer, const std::vector<double>& in, std::vector<double>& out,
                        std::vector<double>* h_store) {
        Bn& bn = bn_[layer];
        const double* mu;
        std::vector<double> sigma_inv(static_cast<std::size_t>(Ch));
        std::vector<double> used_mean;
        if (mode == BnMode::BatchStats) {
            if (B * static_cast<std::size_t>(L) < 2)
                throw InputError("bn: batch too small to estimate variance");
            batch_moments(in.data(), B, Ch, L, bmean, bvar);
            if (update_running) {
                for (int c = 0; c < Ch; ++c) {
                    auto ci = static_cast<std::size_t>(c);
                    bn.run_mean[ci] = (1.0 - momentum) * bn.run_mean[ci] + momentum * bmean[ci];
                    bn.run_var[ci] = (1.0 - momentum) * bn.run_var[ci] + momentum * bvar[ci];
                }
            }
            used_mean = bmean;
            for (int c = 0; c < Ch; ++c)
                sigma_inv[static_cast<std::size_t>(c)] =
                    1.0 / std::sqrt(bvar[static_cast<std::size_t>(c)] + kBnEps);
            mu = used_mean.data();
        } else {
            used_mean = bn.run_mean;
            for (int c = 0; c < Ch; ++c)
                sigma_inv[static_cast<std::size_t>(c)] =
                    1.0 / std::sqrt(bn.run_var[static_cast<std::size_t>(c)] + kBnEps);
            mu = used_mean.data();
        }
        if (h_store) h_store->resize(in.size());
        parallel_chunks(B, kChunk, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t bi = lo; bi < hi; ++bi)
                for (int c = 0; c < Ch; ++c) {
                    const auto ci = static_cast<std::size_t>(c);
                    const double m = mu[ci];
                    const double inv = sigma_inv[ci];
                    const double g = bn.gamma[ci];
                    const double be = bn.beta[ci];
                    const double* in_row = in.data() + (bi * Ch + c) * static_cast<std::size_t>(L);
                    double* out_row = out.data() + (bi * Ch + c) * static_cast<std::size_t>(L);
                    double* h_row = h_store
                                        ? h_store->data() + (bi * Ch + c) * static_cast<std::size_t>(L)
                                        : nullptr;
                    for (int t = 0; t < L; ++t) {
                        const double h = (in_row[t] - m) * inv;
                        if (h_row) h_row[t] = h;
                        out_row[t] = g * h + be;
                    }
                }
        });
        if (want_cache) {
            cache.bn[layer].mean = used_mean;
            cache.bn[layer].inv_std = sigma_inv;
        }
    };

    for (int b = 0; b < arch_.blocks; ++b) {
        const Conv& c1 = convs_[static_cast<std::size_t>(2 * b)];
        const Conv& c2 = convs_[static_cast<std::size_t>(2 * b) + 1];

        u.assign(B * hid_sz, 0.0);
        conv_forward(c1.in_ch, c1.out_ch, c1.kernel, c1.dilation, c1.w, c1.b, x.data(), u.data(),
                     B, L);
        y.resize(B * hid_sz);
        apply_bn(static_cast<std::size_t>(2 * b), u, y,
                 want_cache ? &cache.bn[static_cast<std::size_t>(2 * b)].h : nullptr);
        for (auto& v : y) v = v > 0.0 ? v : 0.0;  // ReLU
        std::vector<double> mid = y;
        if (want_cache) cache.mid[static_cast<std::size_t>(b)] = mid;

        u.assign(B * hid_sz, 0.0);
        conv_forward(c2.in_ch, c2.out_ch, c2.kernel, c2.dilation, c2.w, c2.b, mid.data(), u.data(),
                     B, L);
        y.resize(B * hid_sz);
        apply_bn(static_cast<std::size_t>(2 * b) + 1, u, y,
                 want_cache ? &cache.bn[static_cast<std::size_t>(2 * b) + 1].h : nullptr);

        if (b == 0) {
            skip_out.assign(B * hid_sz, 0.0);
            conv_forward(skip_.in_ch, skip_.out_ch, skip_.kernel, skip_.dilation, skip_.w, skip_.b,
                         x.data(), skip_out.data(), B, L);
            for (std::size_t i = 0; i < y.size(); ++i) y[i] += skip_out[i];
        } else {
            for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
        }
        for (auto& v : y) v = v > 0.0 ? v : 0.0;
        x = y;
        if (want_cache) cache.x[static_cast<std::size_t>(b) + 1] = x;
    }

    // global average over time, then the linear head
    std::vector<double> pooled(B * static_cast<std::size_t>(Ch));
    for (std::size_t bi = 0; bi < B; ++bi)
        for (int c = 0; c < Ch; ++c) {
            const double* row = x.data() + (bi * Ch + c) * static_cast<std::size_t>(L);
            double s = 0.0;
            for (int t = 0; t < L; ++t) s += row[t];
            pooled[bi * Ch + c] = s / L;
        }
    if (want_cache) cache.pooled = pooled;

    const int out_dim = head_.out_dim();
    ForwardResult res;
    res.output.assign(B * static_cast<std::size_t>(out_dim), 0.0);
    for (std::size_t bi = 0; bi < B; ++bi)
        for (int o = 0; o < out_dim; ++o) {
            double s = head_b_[static_cast<std::size_t>(o)];
            const double* wrow = head_w_.data() + static_cast<std::size_t>(o) * Ch;
            const double* p = pooled.data() + bi * Ch;
            for (int c = 0; c < Ch; ++c) s += wrow[c] * p[c];
            res.output[bi * static_cast<std::size_t>(out_dim) + static_cast<std::size_t>(o)] = s;
        }

    if (head_.kind == HeadKind::Classification) {
        res.probs.resize(B * 2);
        for (std::size_t bi = 0; bi < B; ++bi) {
            const double z0 = res.output[bi * 2], z1 = res.output[bi * 2 + 1];
            const double m = std::max(z0, z1);
            const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
            res.probs[bi * 2] = e0 / (e0 + e1);
            res.probs[bi * 2 + 1] = e1 / (e0 + e1);
        }
    }
    if (want_cache) {
        res.cache = std::move(cache);
        res.has_cache = true;
    }
    return res;
}

ForwardResult Backbone::forward(const WindowBatch& batch, BnMode mode, bool want_cache) const {
    // no running-stat update on this path, so the const_cast never mutates
    return const_cast<Backbone*>(this)->run_forward(batch, mode, want_cache, false, 0.0);
}

ForwardResult Backbone::forward_train(const WindowBatch& batch, double momentum, bool want_cache) {
    return run_forward(batch, BnMode::BatchStats, want_cache, true, momentum);
}

void Backbone::refresh_bn_stats(const WindowBatch& batch) {
    run_forward(batch, BnMode::BatchStats, false, true, 1.0);
}

// ---------------------------------------------------------------------------
// backward

std::vector<double> Backbone::backward_phi(const ForwardCache& cache,
                                           const std::vector<double>& d_output) const {
    std::vector<double> phi_grad(phi_dim(), 0.0);
    backward_impl(cache, d_output, nullptr, &phi_grad);
    return phi_grad;
}

std::vector<double> Backbone::backward_all(const ForwardCache& cache,
                                           const std::vector<double>& d_output) const {
    std::vector<double> grad(trainable_dim(), 0.0);
    backward_impl(cache, d_output, &grad, nullptr);
    return grad;
}

void Backbone::backward_impl(const ForwardCache& cache, const std::vector<double>& d_output,
                             std::vector<double>* full_grad,
                             std::vector<double>* phi_grad) const {
    require(cache.batch > 0 && !cache.x.empty(), "backward: missing forward cache");
    const std::size_t B = cache.batch;
    const int Ch = arch_.hidden;
    const int out_dim = head_.out_dim();
    require(d_output.size() == B * static_cast<std::size_t>(out_dim),
            "backward: output gradient size mismatch");
    const int L = static_cast<int>(cache.x[0].size() / (B * static_cast<std::size_t>(arch_.input_channels)));
    const std::size_t hid_sz = static_cast<std::size_t>(Ch) * L;

    // trainable layout offsets
    std::vector<std::size_t> seg;
    if (full_grad) seg = trainable_offsets();

    // head backward
    std::vector<double> dpool(B * static_cast<std::size_t>(Ch), 0.0);
    for (std::size_t bi = 0; bi < B; ++bi)
        for (int o = 0; o < out_dim; ++o) {
            const double g = d_output[bi * static_cast<std::size_t>(out_dim) + o];
            const double* wrow = head_w_.data() + static_cast<std::size_t>(o) * Ch;
            double* dp = dpool.data() + bi * Ch;
            for (int c = 0; c < Ch; ++c) dp[c] += wrow[c] * g;
        }
    if (full_grad) {
        double* dhw = full_grad->data() + seg[seg.size() - 3];
        double* dhb = full_grad->data() + seg[seg.size() - 2];
        for (std::size_t bi = 0; bi < B; ++bi)
            for (int o = 0; o < out_dim; ++o) {
                const double g = d_output[bi * static_cast<std::size_t>(out_dim) + o];
                dhb[o] += g;
                const double* p = cache.pooled.data() + bi * Ch;
                double* row = dhw + static_cast<std::size_t>(o) * Ch;
                for (int c = 0; c < Ch; ++c) row[c] += g * p[c];
            }
    }

    // distribute pooling gradient over time
    std::vector<double> dx(B * hid_sz);
    const double invL = 1.0 / L;
    for (std::size_t bi = 0; bi < B; ++bi)
        for (int c = 0; c < Ch; ++c) {
            const double g = dpool[bi * Ch + c] * invL;
            double* row = dx.data() + (bi * Ch + c) * static_cast<std::size_t>(L);
            std::fill(row, row + L, g);
        }

    auto bn_backward = [&](std::size_t layer, const std::vector<double>& dy,
                           std::vector<double>& du, double* dgamma, double* dbeta) {
        const Bn& bn = bn_[layer];
        const BnCache& bc = cache.bn[layer];
        require(!bc.h.empty(), "backward: cache lacks normalized activations");
        const double n = static_cast<double>(B) * L;
        std::vector<double> sg(static_cast<std::size_t>(Ch), 0.0),
            sgh(static_cast<std::size_t>(Ch), 0.0);
        for (std::size_t bi = 0; bi < B; ++bi)
            for (int c = 0; c < Ch; ++c) {
                const double* gy = dy.data() + (bi * Ch + c) * static_cast<std::size_t>(L);
                const double* h = bc.h.data() + (bi * Ch + c) * static_cast<std::size_t>(L);
                double a = 0.0, b2 = 0.0;
                for (int t = 0; t < L; ++t) {
                    a += gy[t];
                    b2 += gy[t] * h[t];
                }
                sg[static_cast<std::size_t>(c)] += a;
                sgh[static_cast<std::size_t>(c)] += b2;
            }
        for (int c = 0; c < Ch; ++c) {
            dgamma[c] += sgh[static_cast<std::size_t>(c)];
            dbeta[c] += sg[static_cast<std::size_t>(c)];
        }
        du.resize(dy.size());
        parallel_chunks(B, kChunk, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t bi = lo; bi < hi; ++bi)
                for (int c = 0; c < Ch; ++c) {
                    const auto ci = static_cast<std::size_t>(c);
                    const double coef = bn.gamma[ci] * bc.inv_std[ci];
                    const double* gy = dy.data() + (bi * Ch + c) * static_cast<std::size_t>(L);
                    const double* h = bc.h.data() + (bi * Ch + c) * static_cast<std::size_t>(L);
                    double* out = du.data() + (bi * Ch + c) * static_cast<std::size_t>(L);
                    if (cache.mode == BnMode::BatchStats) {
                        const double mg = sg[ci] / n, mgh = sgh[ci] / n;
                        for (int t = 0; t < L; ++t) out[t] = coef * (gy[t] - mg - h[t] * mgh);
                    } else {
                        for (int t = 0; t < L; ++t) out[t] = coef * gy[t];
                    }
                }
        });
    };

    std::vector<double> phi_local(phi_dim(), 0.0);
    auto phi_seg = [&](std::size_t layer, bool beta) {
        return phi_local.data() + (2 * layer + (beta ? 1 : 0)) * static_cast<std::size_t>(Ch);
    };

    std::vector<double> dy, du, dmid;
    for (int b = arch_.blocks - 1; b >= 0; --b) {
        const Conv& c1 = convs_[static_cast<std::size_t>(2 * b)];
        const Conv& c2 = convs_[static_cast<std::size_t>(2 * b) + 1];
        const auto& xnext = cache.x[static_cast<std::size_t>(b) + 1];
        const auto& xin = cache.x[static_cast<std::size_t>(b)];
        const auto& mid = cache.mid[static_cast<std::size_t>(b)];

        // ReLU at block output
        dy.resize(dx.size());
        for (std::size_t i = 0; i < dx.size(); ++i) dy[i] = xnext[i] > 0.0 ? dx[i] : 0.0;
        // dy is both the BN2 output gradient and the skip gradient

        bn_backward(static_cast<std::size_t>(2 * b) + 1, dy, du,
                    phi_seg(static_cast<std::size_t>(2 * b) + 1, false),
                    phi_seg(static_cast<std::size_t>(2 * b) + 1, true));

        dmid.assign(B * hid_sz, 0.0);
        conv_backward_input(c2.in_ch, c2.out_ch, c2.kernel, c2.dilation, c2.w, du.data(),
                            dmid.data(), B, L);
        if (full_grad) {
            std::vector<double> dw(c2.w.size(), 0.0), db(c2.b.size(), 0.0);
            conv_backward_weights(c2.in_ch, c2.out_ch, c2.kernel, c2.dilation, mid.data(),
                                  du.data(), dw, db, B, L);
            const std::size_t base = seg[static_cast<std::size_t>(b) * 8 + 4];
            std::copy(dw.begin(), dw.end(), full_grad->begin() + base);
            std::copy(db.begin(), db.end(), full_grad->begin() + seg[static_cast<std::size_t>(b) * 8 + 5]);
        }

        // ReLU between the convs
        for (std::size_t i = 0; i < dmid.size(); ++i)
            if (!(mid[i] > 0.0)) dmid[i] = 0.0;

        bn_backward(static_cast<std::size_t>(2 * b), dmid, du,
                    phi_seg(static_cast<std::size_t>(2 * b), false),
                    phi_seg(static_cast<std::size_t>(2 * b), true));

        const std::size_t in_sz = static_cast<std::size_t>(c1.in_ch) * L;
        std::vector<double> dxin(B * in_sz, 0.0);
        conv_backward_input(c1.in_ch, c1.out_ch, c1.kernel, c1.dilation, c1.w, du.data(),
                            dxin.data(), B, L);
        if (full_grad) {
            std::vector<double> dw(c1.w.size(), 0.0), db(c1.b.size(), 0.0);
            conv_backward_weights(c1.in_ch, c1.out_ch, c1.kernel, c1.dilation, xin.data(),
                                  du.data(), dw, db, B, L);
            std::copy(dw.begin(), dw.end(), full_grad->begin() + seg[static_cast<std::size_t>(b) * 8 + 0]);
            std::copy(db.begin(), db.end(), full_grad->begin() + seg[static_cast<std::size_t>(b) * 8 + 1]);
        }

        if (b == 0) {
            conv_backward_input(skip_.in_ch, skip_.out_ch, skip_.kernel, skip_.dilation, skip_.w,
                                dy.data(), dxin.data(), B, L);
            if (full_grad) {
                std::vector<double> dw(skip_.w.size(), 0.0), db(skip_.b.size(), 0.0);
                conv_backward_weights(skip_.in_ch, skip_.out_ch, skip_.kernel, skip_.dilation,
                                      xin.data(), dy.data(), dw, db, B, L);
                const std::size_t sbase = seg[static_cast<std::size_t>(arch_.blocks) * 8];
                std::copy(dw.begin(), dw.end(), full_grad->begin() + sbase);
                std::copy(db.begin(), db.end(),
                          full_grad->begin() + seg[static_cast<std::size_t>(arch_.blocks) * 8 + 1]);
            }
        } else {
            for (std::size_t i = 0; i < dxin.size(); ++i) dxin[i] += dy[i];
        }
        dx = std::move(dxin);
    }

    if (full_grad) {
        // copy BN affine grads into the trainable layout
        for (int b = 0; b < arch_.blocks; ++b) {
            for (int which = 0; which < 2; ++which) {
                const std::size_t layer = static_cast<std::size_t>(2 * b + which);
                const std::size_t gbase = seg[static_cast<std::size_t>(b) * 8 + (which == 0 ? 2 : 6)];
                const double* gsrc = phi_local.data() + 2 * layer * static_cast<std::size_t>(Ch);
                std::copy(gsrc, gsrc + 2 * static_cast<std::size_t>(Ch),
                          full_grad->begin() + gbase);
            }
        }
    }
    if (phi_grad) *phi_grad = phi_local;
}

// ---------------------------------------------------------------------------
// parameter vector views

std::size_t Backbone::phi_dim() const {
    return 2 * bn_.size() * static_cast<std::size_t>(arch_.hidden);
}

std::vector<double> Backbone::phi() const {
    std::vector<double> out;
    out.reserve(phi_dim());
    for (const auto& bn : bn_) {
        out.insert(out.end(), bn.gamma.begin(), bn.gamma.end());
        out.insert(out.end(), bn.beta.begin(), bn.beta.end());
    }
    return out;
}

void Backbone::set_phi(const std::vector<double>& flat) {
    require(flat.size() == phi_dim(), "set_phi: dimension mismatch");
    std::size_t off = 0;
    for (auto& bn : bn_) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), bn.gamma.size(),
                    bn.gamma.begin());
        off += bn.gamma.size();
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), bn.beta.size(),
                    bn.beta.begin());
        off += bn.beta.size();
    }
}

std::vector<std::size_t> Backbone::trainable_offsets() const {
    // per block: conv1.w conv1.b bn1.gamma+beta(one segment start) ... laid out
    // as 8 segments per block, then skip.w skip.b, then head.w head.b
    std::vector<std::size_t> seg;
    std::size_t off = 0;
    for (int b = 0; b < arch_.blocks; ++b) {
        const Conv& c1 = convs_[static_cast<std::size_t>(2 * b)];
        const Conv& c2 = convs_[static_cast<std::size_t>(2 * b) + 1];
        const std::size_t bnsz = 2 * static_cast<std::size_t>(arch_.hidden);
        seg.push_back(off); off += c1.w.size();
        seg.push_back(off); off += c1.b.size();
        seg.push_back(off); off += bnsz;
        seg.push_back(off);  // placeholder: beta half lives inside the bn segment
        seg.push_back(off); off += c2.w.size();
        seg.push_back(off); off += c2.b.size();
        seg.push_back(off); off += bnsz;
        seg.push_back(off);  // placeholder
    }
    seg.push_back(off); off += skip_.w.size();
    seg.push_back(off); off += skip_.b.size();
    seg.push_back(off); off += head_w_.size();
    seg.push_back(off); off += head_b_.size();
    seg.push_back(off);  // total
    return seg;
}

std::size_t Backbone::trainable_dim() const { return trainable_offsets().back(); }

std::vector<double> Backbone::trainable() const {
    std::vector<double> out;
    out.reserve(trainable_dim());
    for (int b = 0; b < arch_.blocks; ++b) {
        const Conv& c1 = convs_[static_cast<std::size_t>(2 * b)];
        const Conv& c2 = convs_[static_cast<std::size_t>(2 * b) + 1];
        const Bn& b1 = bn_[static_cast<std::size_t>(2 * b)];
        const Bn& b2 = bn_[static_cast<std::size_t>(2 * b) + 1];
        out.insert(out.end(), c1.w.begin(), c1.w.end());
        out.insert(out.end(), c1.b.begin(), c1.b.end());
        out.insert(out.end(), b1.gamma.begin(), b1.gamma.end());
        out.insert(out.end(), b1.beta.begin(), b1.beta.end());
        out.insert(out.end(), c2.w.begin(), c2.w.end());
        out.insert(out.end(), c2.b.begin(), c2.b.end());
        out.insert(out.end(), b2.gamma.begin(), b2.gamma.end());
        out.insert(out.end(), b2.beta.begin(), b2.beta.end());
    }
    out.insert(out.end(), skip_.w.begin(), skip_.w.end());
    out.insert(out.end(), skip_.b.begin(), skip_.b.end());
    out.insert(out.end(), head_w_.begin(), head_w_.end());
    out.insert(out.end(), head_b_.begin(), head_b_.end());
    return out;
}

void Backbone::set_trainable(const std::vector<double>& flat) {
    require(flat.size() == trainable_dim(), "set_trainable: dimension mismatch");
    std::size_t off = 0;
    auto take = [&](std::vector<double>& dst) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), dst.size(), dst.begin());
        off += dst.size();
    };
    for (int b = 0; b < arch_.blocks; ++b) {
        Conv& c1 = convs_[static_cast<std::size_t>(2 * b)];
        Conv& c2 = convs_[static_cast<std::size_t>(2 * b) + 1];
        Bn& b1 = bn_[static_cast<std::size_t>(2 * b)];
        Bn& b2 = bn_[static_cast<std::size_t>(2 * b) + 1];
        take(c1.w); take(c1.b); take(b1.gamma); take(b1.beta);
        take(c2.w); take(c2.b); take(b2.gamma); take(b2.beta);
    }
    take(skip_.w); take(skip_.b); take(head_w_); take(head_b_);
}

std::vector<bool> Backbone::weight_decay_mask() const {
    std::vector<bool> mask(trainable_dim(), false);
    std::size_t off = 0;
    auto mark = [&](std::size_t n, bool v) {
        for (std::size_t i = 0; i < n; ++i) mask[off + i] = v;
        off += n;
    };
    for (int b = 0; b < arch_.blocks; ++b) {
        const Conv& c1 = convs_[static_cast<std::size_t>(2 * b)];
        const Conv& c2 = convs_[static_cast<std::size_t>(2 * b) + 1];
        const std::size_t bnsz = 2 * static_cast<std::size_t>(arch_.hidden);
        mark(c1.w.size(), true);
        mark(c1.b.size(), false);
        mark(bnsz, false);
        mark(c2.w.size(), true);
        mark(c2.b.size(), false);
        mark(bnsz, false);
    }
    mark(skip_.w.size(), true);
    mark(skip_.b.size(), false);
    mark(head_w_.size(), true);
    mark(head_b_.size(), false);
    return mask;
}

std::vector<double> Backbone::all_values() const {
    std::vector<double> out = trainable();
    for (const auto& bn : bn_) {
        out.insert(out.end(), bn.run_mean.begin(), bn.run_mean.end());
        out.insert(out.end(), bn.run_var.begin(), bn.run_var.end());
    }
    return out;
}

void Backbone::set_all_values(const std::vector<double>& flat) {
    const std::size_t td = trainable_dim();
    require(flat.size() == td + 2 * bn_.size() * static_cast<std::size_t>(arch_.hidden),
            "set_all_values: dimension mismatch");
    set_trainable({flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(td)});
    std::size_t off = td;
    for (auto& bn : bn_) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), bn.run_mean.size(),
                    bn.run_mean.begin());
        off += bn.run_mean.size();
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), bn.run_var.size(),
                    bn.run_var.begin());
        off += bn.run_var.size();
    }
}

const std::vector<double>& Backbone::bn_running_mean(std::size_t layer) const {
    return bn_.at(layer).run_mean;
}
const std::vector<double>& Backbone::bn_running_var(std::size_t layer) const {
    return bn_.at(layer).run_var;
}
std::vector<double> Backbone::bn_running_std(std::size_t layer) const {
    std::vector<double> s(bn_.at(layer).run_var.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::sqrt(bn_[layer].run_var[i] + kBnEps);
    return s;
}
void Backbone::set_bn_affine(std::size_t layer, std::vector<double> gamma,
                             std::vector<double> beta) {
    require(gamma.size() == bn_.at(layer).gamma.size() && beta.size() == bn_[layer].beta.size(),
            "set_bn_affine: size mismatch");
    bn_[layer].gamma = std::move(gamma);
    bn_[layer].beta = std::move(beta);
}

// ---------------------------------------------------------------------------
// supervised training

namespace {

struct AdamW {
    std::vector<double> m, v;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int t = 0;

    explicit AdamW(std::size_t dim) : m(dim, 0.0), v(dim, 0.0) {}

    void step(std::vector<double>& params, const std::vector<double>& grad,
              const std::vector<bool>& decay_mask, double lr, double weight_decay) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, t);
        const double bc2 = 1.0 - std::pow(beta2, t);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            double upd = mhat / (std::sqrt(vhat) + eps);
            if (decay_mask[i]) upd += weight_decay * params[i];
            params[i] -= lr * upd;
        }
    }
};

}  // namespace

TrainResult train_supervised(Backbone& net, const WindowDataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    require(ds.train_end > 0, "train: empty training split");
    require(ds.valid_end > ds.train_end, "train: empty validation split");
    require(ds.d == net.arch().input_channels, "train: dataset channel mismatch");
    if (net.head().kind == HeadKind::Regression)
        require(ds.label_dim() == net.head().horizon, "train: label dim != horizon");

    const bool cls = net.head().kind == HeadKind::Classification;
    Rng rng(derive_seed(cfg.seed, "train-shuffle"));

    std::vector<std::size_t> order(ds.train_end);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    AdamW opt(net.trainable_dim());
    const auto decay_mask = net.weight_decay_mask();

    auto eval_valid = [&]() {
        std::vector<double> scores, labels, errs;
        for (std::size_t first = ds.train_end; first < ds.valid_end;
             first += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t last =
                std::min(ds.valid_end, first + static_cast<std::size_t>(cfg.batch_size));
            auto wb = ds.batch(first, last);
            auto fr = net.forward(wb, BnMode::RunningStats, false);
            for (std::size_t i = 0; i < wb.count; ++i) {
                if (cls) {
                    scores.push_back(fr.probs[i * 2 + 1]);
                    labels.push_back(ds.label(first + i)[0]);
                } else {
                    for (int h = 0; h < ds.label_dim(); ++h) {
                        const double e = fr.output[i * static_cast<std::size_t>(ds.label_dim()) + h] -
                                         ds.label(first + i)[h];
                        errs.push_back(e * e);
                    }
                }
            }
        }
        if (cls) return rank_auc(scores, labels);
        double s = 0.0;
        for (double e : errs) s += e;
        return s / static_cast<double>(errs.size());
    };

    TrainResult result;
    Backbone best = net;
    double best_metric = cls ? -1.0 : std::numeric_limits<double>::infinity();
    int bad_epochs = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        // Fisher-Yates with the explicit rng
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = rng.uniform_index(i);
            std::swap(order[i - 1], order[j]);
        }
        for (std::size_t first = 0; first < order.size();
             first += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t last =
                std::min(order.size(), first + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::size_t> ids(order.begin() + static_cast<std::ptrdiff_t>(first),
                                         order.begin() + static_cast<std::ptrdiff_t>(last));
            auto wb = ds.batch(ids);
            auto fr = net.forward_train(wb, cfg.bn_momentum, true);

            const std::size_t bsz = wb.count;
            std::vector<double> dout(bsz * static_cast<std::size_t>(net.head().out_dim()), 0.0);
            double loss = 0.0;
            if (cls) {
                for (std::size_t i = 0; i < bsz; ++i) {
                    const int y = ds.label(ids[i])[0] > 0.5 ? 1 : 0;
                    const double p = std::max(fr.probs[i * 2 + static_cast<std::size_t>(y)], 1e-12);
                    loss -= std::log(p);
                    dout[i * 2] = (fr.probs[i * 2] - (y == 0 ? 1.0 : 0.0)) / static_cast<double>(bsz);
                    dout[i * 2 + 1] =
                        (fr.probs[i * 2 + 1] - (y == 1 ? 1.0 : 0.0)) / static_cast<double>(bsz);
                }
                loss /= static_cast<double>(bsz);
            } else {
                const int ld = ds.label_dim();
                const double scale = 1.0 / (static_cast<double>(bsz) * ld);
                for (std::size_t i = 0; i < bsz; ++i)
                    for (int h = 0; h < ld; ++h) {
                        const double e =
                            fr.output[i * static_cast<std::size_t>(ld) + h] - ds.label(ids[i])[h];
                        loss += e * e * scale;
                        dout[i * static_cast<std::size_t>(ld) + h] = 2.0 * e * scale;
                    }
            }
            if (!std::isfinite(loss))
                throw Error("train: non-finite loss at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(first / cfg.batch_size));

            auto grad = net.backward_all(fr.cache, dout);
            auto params = net.trainable();
            opt.step(params, grad, decay_mask, cfg.learning_rate, cfg.weight_decay);
            net.set_trainable(params);
        }

        const double metric = eval_valid();
        result.metric_history.push_back(metric);
        result.epochs_run = epoch + 1;
        const bool improved = cls ? metric > best_metric : metric < best_metric;
        if (improved) {
            best_metric = metric;
            best = net;
            result.best_epoch = epoch;
            bad_epochs = 0;
        } else {
            ++bad_epochs;
            if (bad_epochs >= cfg.patience) break;
        }
    }

    net = best;
    result.best_metric = best_metric;
    return result;
}

// ---------------------------------------------------------------------------
// checkpoint io

namespace {
constexpr char kCkptMagic[8] = {'T', 'T', 'A', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw InputError("checkpoint: truncated file");
    return v;
}
void put_vec(std::ofstream& out, const std::vector<double>& v) {
    put<std::uint64_t>(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}
std::vector<double> get_vec(std::ifstream& in) {
    auto n = get<std::uint64_t>(in);
    std::vector<double> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw InputError("checkpoint: truncated array");
    return v;
}
}  // namespace

void save_checkpoint(const std::string& path, const Backbone& net,
                     const std::vector<double>& scaler_mean, const std::vector<double>& scaler_std,
                     std::uint64_t train_seed) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write checkpoint '" + path + "'");
    out.write(kCkptMagic, sizeof(kCkptMagic));
    const auto& a = net.arch();
    put<std::int32_t>(out, a.input_channels);
    put<std::int32_t>(out, a.hidden);
    put<std::int32_t>(out, a.blocks);
    put<std::int32_t>(out, a.kernel);
    put<std::uint64_t>(out, a.dilations.size());
    for (int d : a.dilations) put<std::int32_t>(out, d);
    put<std::int32_t>(out, static_cast<std::int32_t>(net.head().kind));
    put<std::int32_t>(out, net.head().horizon);
    put<std::uint64_t>(out, net.init_seed());
    put_vec(out, net.all_values());
    put_vec(out, scaler_mean);
    put_vec(out, scaler_std);
    put<std::uint64_t>(out, train_seed);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open checkpoint '" + path + "'");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0)
        throw InputError(path + ": not a checkpoint file");
    ArchDescriptor a;
    a.input_channels = get<std::int32_t>(in);
    a.hidden = get<std::int32_t>(in);
    a.blocks = get<std::int32_t>(in);
    a.kernel = get<std::int32_t>(in);
    a.dilations.resize(get<std::uint64_t>(in));
    for (auto& d : a.dilations) d = get<std::int32_t>(in);
    TaskHead head;
    head.kind = static_cast<HeadKind>(get<std::int32_t>(in));
    head.horizon = get<std::int32_t>(in);
    const auto init_seed = get<std::uint64_t>(in);

    Checkpoint ck;
    ck.net = Backbone(a, head, init_seed);
    ck.net.set_all_values(get_vec(in));
    ck.scaler_mean = get_vec(in);
    ck.scaler_std = get_vec(in);
    ck.train_seed = get<std::uint64_t>(in);
    return ck;
}

}  // namespace tta
