// Shared helpers for the test suites: temp files, synthetic frames, and the
// independent straight-line forward reference used by the golden tests.
#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tta/backbone.hpp"
#include "tta/common.hpp"
#include "tta/dataset.hpp"
#include "tta/series.hpp"

namespace ttest {

inline std::string temp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("tta_test_" + tag);
    std::filesystem::create_directories(dir);
    return dir.string();
}

inline std::string write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
    return path;
}

// a small well-formed OHLCV csv with geometric-random-walk prices
inline std::string make_ohlcv_csv(const std::string& path, int rows, std::uint64_t seed,
                                  double drift = 0.0) {
    tta::Rng rng(seed);
    std::ofstream out(path);
    out << "date,open,high,low,close,volume\n";
    double close = 100.0;
    int y = 2015, m = 1, d = 1;
    auto next_day = [&]() {
        if (++d > 28) {
            d = 1;
            if (++m > 12) {
                m = 1;
                ++y;
            }
        }
    };
    for (int t = 0; t < rows; ++t) {
        const double open = close;
        close = open * std::exp(drift + 0.01 * rng.normal());
        const double high = std::max(open, close) * (1.0 + 0.005 * rng.uniform());
        const double low = std::min(open, close) * (1.0 - 0.005 * rng.uniform());
        char date[16];
        std::snprintf(date, sizeof(date), "%04d-%02d-%02d", y, m, d);
        out << date << ',' << tta::format_double(open) << ',' << tta::format_double(high) << ','
            << tta::format_double(low) << ',' << tta::format_double(close) << ','
            << 1000 + t << "\n";
        next_day();
    }
    return path;
}

// ETT-like hourly frame: 7 channels sharing a seasonal component plus
// channel-specific AR(1) noise; channel 6 ("OT") mixes the others so the
// target is genuinely predictable from the inputs.
inline tta::SeriesFrame make_ett_frame(int rows, std::uint64_t seed, double period = 24.0,
                                       double noise = 0.4) {
    tta::Rng rng(seed);
    std::vector<std::string> names = {"HUFL", "HULL", "MUFL", "MULL", "LUFL", "LULL", "OT"};
    std::vector<std::vector<double>> chans(7, std::vector<double>(rows));
    std::vector<double> ar(7, 0.0);
    constexpr double two_pi = 6.283185307179586;
    for (int t = 0; t < rows; ++t) {
        const double s1 = std::cos(two_pi * t / period);
        const double s2 = 0.5 * std::cos(two_pi * t / (period * 7.0) + 1.0);
        for (int c = 0; c < 6; ++c) {
            ar[c] = 0.7 * ar[c] + 0.3 * rng.normal();
            chans[c][t] = (1.0 + 0.15 * c) * (s1 + s2) + noise * ar[c] + 2.0 * c;
        }
        ar[6] = 0.7 * ar[6] + 0.3 * rng.normal();
        double mix = 0.0;
        for (int c = 0; c < 6; ++c) mix += chans[c][t];
        chans[6][t] = 0.25 * mix / 6.0 + 1.2 * (s1 + s2) + 0.75 * noise * ar[6];
    }
    std::vector<std::int64_t> epochs(rows);
    std::vector<std::string> stamps(rows);
    const std::int64_t start = tta::parse_timestamp("2016-07-01 00:00:00");
    for (int t = 0; t < rows; ++t) {
        epochs[t] = start + static_cast<std::int64_t>(t) * 3600;
        stamps[t] = tta::format_timestamp(epochs[t], true);
    }
    return tta::SeriesFrame(std::move(epochs), std::move(stamps), std::move(names),
                            std::move(chans), tta::Provenance::Raw);
}

inline std::string write_ett_csv(const std::string& path, const tta::SeriesFrame& frame) {
    tta::write_csv(frame, path);
    return path;
}

// a single-window batch from raw values laid out [channel][time]
inline tta::WindowBatch batch_from(const std::vector<double>& data, int L, int d,
                                   std::int64_t index = 0) {
    tta::WindowBatch b;
    b.L = L;
    b.d = d;
    b.count = data.size() / (static_cast<std::size_t>(L) * d);
    b.data = data;
    b.indices.assign(b.count, 0);
    for (std::size_t i = 0; i < b.count; ++i) b.indices[i] = index + static_cast<std::int64_t>(i);
    return b;
}

inline tta::WindowBatch random_batch(std::size_t count, int L, int d, std::uint64_t seed) {
    tta::Rng rng(seed);
    std::vector<double> data(count * static_cast<std::size_t>(L) * d);
    for (auto& v : data) v = rng.normal();
    return batch_from(data, L, d);
}

// -----------------------------------------------------------------------
// Straight-line reference forward pass, written independently of the library
// implementation: plain nested loops over std::vector<std::vector<double>>.
// Mirrors the same architecture contract (causal dilated convs, temporal BN
// with running stats, ReLU, projection skip on block 0, mean pool, linear
// head) and is only used as a test oracle.

struct RefParams {
    // pulled out of a Backbone via its accessors + trainable vector
    int d, hidden, blocks, kernel;
    std::vector<int> dilations;
    int out_dim;
    // per conv: w[oc][ic][k], b[oc]
    std::vector<std::vector<std::vector<std::vector<double>>>> conv_w;
    std::vector<std::vector<double>> conv_b;
    std::vector<std::vector<std::vector<std::vector<double>>>> skip_w;  // [1] entry
    std::vector<std::vector<double>> skip_b;
    std::vector<std::vector<double>> gamma, beta, rmean, rvar;
    std::vector<std::vector<double>> head_w;  // [o][c]
    std::vector<double> head_b;
};

RefParams extract_params(const tta::Backbone& net);

// forward for one window [channel][time], running statistics mode
std::vector<double> reference_forward(const RefParams& p, const std::vector<double>& window,
                                      int L);

}  // namespace ttest
