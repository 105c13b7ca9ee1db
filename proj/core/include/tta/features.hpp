#pragma once

#include "tta/series.hpp"

namespace tta {

struct FeatureConfig {
    std::vector<int> momentum_windows = {5, 21};
    int atr_period = 14;
};

// Builds return/momentum/reversal/range-volatility channels from an OHLCV
// frame: r, MOM^(N), REV^(N), ATR (EMA of true range, smoothing 2/(period+1)),
// Parkinson variance and Garman-Klass variance. Leading rows with undefined
// lags are dropped; the result carries Provenance::Features.
SeriesFrame compute_features(const SeriesFrame& ohlcv, const FeatureConfig& cfg = {});

}  // namespace tta
