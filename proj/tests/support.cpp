#include "support.hpp"

namespace ttest {

using tta::Backbone;

RefParams extract_params(const Backbone& net) {
    RefParams p;
    const auto& a = net.arch();
    p.d = a.input_channels;
    p.hidden = a.hidden;
    p.blocks = a.blocks;
    p.kernel = a.kernel;
    p.dilations = a.dilations;
    p.out_dim = net.head().out_dim();

    const auto flat = net.trainable();
    std::size_t off = 0;
    auto take = [&](std::size_t n) {
        std::vector<double> v(flat.begin() + static_cast<std::ptrdiff_t>(off),
                              flat.begin() + static_cast<std::ptrdiff_t>(off + n));
        off += n;
        return v;
    };
    auto as_conv = [&](int in_ch, int out_ch, int k) {
        auto w = take(static_cast<std::size_t>(out_ch) * in_ch * k);
        std::vector<std::vector<std::vector<double>>> conv(out_ch);
        std::size_t i = 0;
        for (int oc = 0; oc < out_ch; ++oc) {
            conv[oc].resize(in_ch);
            for (int ic = 0; ic < in_ch; ++ic) {
                conv[oc][ic].resize(k);
                for (int kk = 0; kk < k; ++kk) conv[oc][ic][kk] = w[i++];
            }
        }
        return conv;
    };

    for (int b = 0; b < p.blocks; ++b) {
        const int in_ch = b == 0 ? p.d : p.hidden;
        p.conv_w.push_back(as_conv(in_ch, p.hidden, p.kernel));
        p.conv_b.push_back(take(static_cast<std::size_t>(p.hidden)));
        p.gamma.push_back(take(static_cast<std::size_t>(p.hidden)));
        p.beta.push_back(take(static_cast<std::size_t>(p.hidden)));
        p.conv_w.push_back(as_conv(p.hidden, p.hidden, p.kernel));
        p.conv_b.push_back(take(static_cast<std::size_t>(p.hidden)));
        p.gamma.push_back(take(static_cast<std::size_t>(p.hidden)));
        p.beta.push_back(take(static_cast<std::size_t>(p.hidden)));
    }
    p.skip_w.push_back(as_conv(p.d, p.hidden, 1));
    p.skip_b.push_back(take(static_cast<std::size_t>(p.hidden)));
    {
        auto w = take(static_cast<std::size_t>(p.out_dim) * p.hidden);
        p.head_w.resize(p.out_dim);
        std::size_t i = 0;
        for (int o = 0; o < p.out_dim; ++o) {
            p.head_w[o].resize(p.hidden);
            for (int c = 0; c < p.hidden; ++c) p.head_w[o][c] = w[i++];
        }
        p.head_b = take(static_cast<std::size_t>(p.out_dim));
    }
    for (std::size_t layer = 0; layer < net.bn_layer_count(); ++layer) {
        p.rmean.push_back(net.bn_running_mean(layer));
        p.rvar.push_back(net.bn_running_var(layer));
    }
    return p;
}

namespace {

using Mat = std::vector<std::vector<double>>;

Mat conv_ref(const std::vector<std::vector<std::vector<double>>>& w,
             const std::vector<double>& bias, const Mat& x, int L, int dilation) {
    const int out_ch = static_cast<int>(w.size());
    const int in_ch = static_cast<int>(w[0].size());
    const int k = static_cast<int>(w[0][0].size());
    Mat y(out_ch, std::vector<double>(L));
    for (int oc = 0; oc < out_ch; ++oc)
        for (int t = 0; t < L; ++t) {
            double acc = bias[oc];
            for (int ic = 0; ic < in_ch; ++ic)
                for (int kk = 0; kk < k; ++kk) {
                    const int src = t - (k - 1 - kk) * dilation;
                    if (src >= 0) acc += w[oc][ic][kk] * x[ic][src];
                }
            y[oc][t] = acc;
        }
    return y;
}

void bn_relu_ref(Mat& u, const std::vector<double>& gamma, const std::vector<double>& beta,
                 const std::vector<double>& mean, const std::vector<double>& var, bool relu) {
    for (std::size_t c = 0; c < u.size(); ++c) {
        const double inv = 1.0 / std::sqrt(var[c] + tta::kBnEps);
        for (auto& v : u[c]) {
            v = gamma[c] * (v - mean[c]) * inv + beta[c];
            if (relu && v < 0.0) v = 0.0;
        }
    }
}

}  // namespace

std::vector<double> reference_forward(const RefParams& p, const std::vector<double>& window,
                                      int L) {
    Mat x(p.d, std::vector<double>(L));
    for (int c = 0; c < p.d; ++c)
        for (int t = 0; t < L; ++t) x[c][t] = window[static_cast<std::size_t>(c) * L + t];

    for (int b = 0; b < p.blocks; ++b) {
        Mat u1 = conv_ref(p.conv_w[2 * b], p.conv_b[2 * b], x, L, p.dilations[b]);
        bn_relu_ref(u1, p.gamma[2 * b], p.beta[2 * b], p.rmean[2 * b], p.rvar[2 * b], true);
        Mat u2 = conv_ref(p.conv_w[2 * b + 1], p.conv_b[2 * b + 1], u1, L, p.dilations[b]);
        bn_relu_ref(u2, p.gamma[2 * b + 1], p.beta[2 * b + 1], p.rmean[2 * b + 1],
                    p.rvar[2 * b + 1], false);
        Mat s = b == 0 ? conv_ref(p.skip_w[0], p.skip_b[0], x, L, 1) : x;
        for (int c = 0; c < p.hidden; ++c)
            for (int t = 0; t < L; ++t) {
                double v = u2[c][t] + s[c][t];
                u2[c][t] = v > 0.0 ? v : 0.0;
            }
        x = u2;
    }

    std::vector<double> pooled(p.hidden, 0.0);
    for (int c = 0; c < p.hidden; ++c) {
        for (int t = 0; t < L; ++t) pooled[c] += x[c][t];
        pooled[c] /= L;
    }
    std::vector<double> out(p.out_dim);
    for (int o = 0; o < p.out_dim; ++o) {
        double acc = p.head_b[o];
        for (int c = 0; c < p.hidden; ++c) acc += p.head_w[o][c] * pooled[c];
        out[o] = acc;
    }
    return out;
}

}  // namespace ttest
