#include "tta/features.hpp"

#include <algorithm>
#include <cmath>

namespace tta {

SeriesFrame compute_features(const SeriesFrame& ohlcv, const FeatureConfig& cfg) {
    const std::size_t T = ohlcv.rows();
    const auto& open = ohlcv.channel(ohlcv.channel_index("open"));
    const auto& high = ohlcv.channel(ohlcv.channel_index("high"));
    const auto& low = ohlcv.channel(ohlcv.channel_index("low"));
    const auto& close = ohlcv.channel(ohlcv.channel_index("close"));

    for (std::size_t t = 0; t < T; ++t) {
        if (!(open[t] > 0 && high[t] > 0 && low[t] > 0 && close[t] > 0))
            throw InputError("non-positive price at row " + std::to_string(t));
        if (high[t] < low[t])
            throw InputError("high < low at row " + std::to_string(t));
    }
    require(cfg.atr_period >= 1, "atr_period must be >= 1");
    for (int n : cfg.momentum_windows) require(n >= 1, "momentum window must be >= 1");

    const double nan = std::nan("");
    std::vector<double> r(T, nan);
    for (std::size_t t = 1; t < T; ++t) r[t] = std::log(close[t]) - std::log(close[t - 1]);

    std::vector<std::vector<double>> mom(cfg.momentum_windows.size(), std::vector<double>(T, nan));
    std::vector<std::vector<double>> rev(cfg.momentum_windows.size(), std::vector<double>(T, nan));
    for (std::size_t w = 0; w < cfg.momentum_windows.size(); ++w) {
        const int N = cfg.momentum_windows[w];
        for (std::size_t t = static_cast<std::size_t>(N); t < T; ++t)
            mom[w][t] = std::log(close[t]) - std::log(close[t - N]);
        // REV_t = -sum_{i=1..N} r_{t-i}, defined once r_{t-N} exists
        for (std::size_t t = static_cast<std::size_t>(N) + 1; t < T; ++t) {
            double s = 0.0;
            for (int i = 1; i <= N; ++i) s += r[t - i];
            rev[w][t] = -s;
        }
    }

    std::vector<double> atr(T, nan);
    const double alpha = 2.0 / (cfg.atr_period + 1.0);
    for (std::size_t t = 1; t < T; ++t) {
        double tr = std::max({high[t] - low[t], std::fabs(high[t] - close[t - 1]),
                              std::fabs(low[t] - close[t - 1])});
        atr[t] = (t == 1) ? tr : alpha * tr + (1.0 - alpha) * atr[t - 1];
    }

    std::vector<double> park(T), gk(T);
    const double ln2 = std::log(2.0);
    for (std::size_t t = 0; t < T; ++t) {
        double hl = std::log(high[t] / low[t]);
        double co = std::log(close[t] / open[t]);
        park[t] = hl * hl / (4.0 * ln2);
        gk[t] = 0.5 * hl * hl - (2.0 * ln2 - 1.0) * co * co;
    }

    int max_n = 0;
    for (int n : cfg.momentum_windows) max_n = std::max(max_n, n);
    const std::size_t t0 = static_cast<std::size_t>(max_n) + 1;  // first row with every lag defined
    if (t0 >= T) throw InputError("series too short for requested feature lags");

    std::vector<std::string> names = {"r"};
    std::vector<std::vector<double>> chans;
    chans.emplace_back(r.begin() + t0, r.end());
    for (std::size_t w = 0; w < cfg.momentum_windows.size(); ++w) {
        names.push_back("mom" + std::to_string(cfg.momentum_windows[w]));
        chans.emplace_back(mom[w].begin() + t0, mom[w].end());
    }
    for (std::size_t w = 0; w < cfg.momentum_windows.size(); ++w) {
        names.push_back("rev" + std::to_string(cfg.momentum_windows[w]));
        chans.emplace_back(rev[w].begin() + t0, rev[w].end());
    }
    names.push_back("atr");
    chans.emplace_back(atr.begin() + t0, atr.end());
    names.push_back("var_parkinson");
    chans.emplace_back(park.begin() + t0, park.end());
    names.push_back("var_gk");
    chans.emplace_back(gk.begin() + t0, gk.end());

    for (const auto& ch : chans)
        if (!all_finite(ch)) throw Error("internal: non-finite feature after lag trim");

    return SeriesFrame({ohlcv.epochs().begin() + t0, ohlcv.epochs().end()},
                       {ohlcv.timestamps().begin() + t0, ohlcv.timestamps().end()},
                       std::move(names), std::move(chans), Provenance::Features);
}

}  // namespace tta
