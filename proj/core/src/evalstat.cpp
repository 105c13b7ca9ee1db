#include "tta/evalstat.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tta {

RegressionMetrics regression_metrics(const std::vector<double>& preds,
                                     const std::vector<double>& targets) {
    require(!preds.empty() && preds.size() == targets.size(),
            "regression_metrics: empty or mismatched vectors");
    const double n = static_cast<double>(preds.size());
    double sae = 0.0, sse = 0.0, mean_t = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double e = preds[i] - targets[i];
        sae += std::fabs(e);
        sse += e * e;
        mean_t += targets[i];
    }
    mean_t /= n;
    double sst = 0.0;
    for (double t : targets) {
        const double dlt = t - mean_t;
        sst += dlt * dlt;
    }
    RegressionMetrics m;
    m.mae = sae / n;
    m.rmse = std::sqrt(sse / n);
    if (sst > 0.0) {
        m.r2 = 1.0 - sse / sst;
    } else {
        m.r2 = std::nan("");
        m.r2_defined = false;
    }
    return m;
}

double rank_auc(const std::vector<double>& scores, const std::vector<double>& labels) {
    require(scores.size() == labels.size() && !scores.empty(), "rank_auc: bad inputs");
    std::size_t n_pos = 0;
    for (double y : labels) n_pos += y > 0.5 ? 1 : 0;
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw Error("rank_auc: single-class label vector");

    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // average ranks over tie groups
    std::vector<double> rank(scores.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        const double r = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
        i = j + 1;
    }
    double rank_sum_pos = 0.0;
    for (std::size_t k = 0; k < labels.size(); ++k)
        if (labels[k] > 0.5) rank_sum_pos += rank[k];
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

namespace {

struct BinStats {
    double conf_sum = 0.0;
    double correct = 0.0;
    std::size_t n = 0;
};

std::vector<BinStats> bin_confidences(const std::vector<double>& prob_up,
                                      const std::vector<double>& labels, int bins) {
    require(bins >= 1, "calibration: bins must be >= 1");
    require(prob_up.size() == labels.size() && !prob_up.empty(), "calibration: bad inputs");
    std::vector<BinStats> bs(static_cast<std::size_t>(bins));
    for (std::size_t i = 0; i < prob_up.size(); ++i) {
        const int pred = prob_up[i] > 0.5 ? 1 : 0;
        const double conf = pred == 1 ? prob_up[i] : 1.0 - prob_up[i];
        int b = static_cast<int>(conf * bins);
        if (b == bins) b = bins - 1;  // conf == 1.0
        auto& s = bs[static_cast<std::size_t>(b)];
        s.conf_sum += conf;
        s.correct += (labels[i] > 0.5 ? 1 : 0) == pred ? 1.0 : 0.0;
        ++s.n;
    }
    return bs;
}

}  // namespace

double expected_calibration_error(const std::vector<double>& prob_up,
                                  const std::vector<double>& labels, int bins) {
    const auto bs = bin_confidences(prob_up, labels, bins);
    const double n = static_cast<double>(prob_up.size());
    double ece = 0.0;
    for (const auto& b : bs) {
        if (b.n == 0) continue;
        const double acc = b.correct / static_cast<double>(b.n);
        const double conf = b.conf_sum / static_cast<double>(b.n);
        ece += (static_cast<double>(b.n) / n) * std::fabs(acc - conf);
    }
    return ece;
}

std::vector<ReliabilityBin> reliability_diagram(const std::vector<double>& prob_up,
                                                const std::vector<double>& labels, int bins) {
    const auto bs = bin_confidences(prob_up, labels, bins);
    std::vector<ReliabilityBin> out(bs.size());
    for (std::size_t b = 0; b < bs.size(); ++b) {
        out[b].conf_lo = static_cast<double>(b) / bins;
        out[b].conf_hi = static_cast<double>(b + 1) / bins;
        out[b].count = bs[b].n;
        if (bs[b].n > 0) {
            out[b].mean_confidence = bs[b].conf_sum / static_cast<double>(bs[b].n);
            out[b].accuracy = bs[b].correct / static_cast<double>(bs[b].n);
        }
    }
    return out;
}

ClassificationMetrics classification_metrics(const std::vector<double>& prob_up,
                                             const std::vector<double>& labels) {
    require(prob_up.size() == labels.size() && !prob_up.empty(),
            "classification_metrics: bad inputs");
    for (double p : prob_up)
        require(p >= 0.0 && p <= 1.0, "classification_metrics: probability outside [0,1]");

    ClassificationMetrics m;
    std::size_t correct = 0, tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < prob_up.size(); ++i) {
        const int pred = prob_up[i] > 0.5 ? 1 : 0;
        const int y = labels[i] > 0.5 ? 1 : 0;
        if (pred == y) ++correct;
        if (pred == 1 && y == 1) ++tp;
        if (pred == 1 && y == 0) ++fp;
        if (pred == 0 && y == 1) ++fn;
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(prob_up.size());
    m.direction_accuracy = m.accuracy;
    m.f1 = tp == 0 ? 0.0
                   : 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    try {
        m.auc = rank_auc(prob_up, labels);
    } catch (const Error&) {
        m.auc = std::nan("");
        m.auc_defined = false;
    }
    m.ece = expected_calibration_error(prob_up, labels);
    return m;
}

// ---------------------------------------------------------------------------

std::string loss_kind_name(LossKind k) {
    switch (k) {
        case LossKind::CrossEntropy: return "cross-entropy";
        case LossKind::Absolute: return "absolute";
        case LossKind::Squared: return "squared";
    }
    return "?";
}

int newey_west_lag(std::size_t T) {
    return static_cast<int>(std::floor(4.0 * std::pow(static_cast<double>(T) / 100.0, 2.0 / 9.0)));
}

double bartlett_long_run_variance(const std::vector<double>& x, int q) {
    const std::size_t T = x.size();
    require(T >= 2, "long-run variance needs at least 2 points");
    require(q >= 0 && static_cast<std::size_t>(q) < T, "lag q out of range");
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(T);

    auto gamma = [&](int h) {
        double s = 0.0;
        for (std::size_t t = static_cast<std::size_t>(h); t < T; ++t)
            s += (x[t] - mean) * (x[t - static_cast<std::size_t>(h)] - mean);
        return s / static_cast<double>(T);
    };

    double lrv = gamma(0);
    for (int h = 1; h <= q; ++h) {
        const double w = 1.0 - static_cast<double>(h) / (q + 1.0);
        lrv += 2.0 * w * gamma(h);
    }
    // Bartlett weights keep the estimate PSD; only rounding can dip below 0
    require(lrv >= -1e-12 * std::max(1.0, std::fabs(gamma(0))),
            "long-run variance unexpectedly negative");
    return std::max(lrv, 0.0);
}

namespace {
double normal_two_sided_p(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }
}  // namespace

DMResult dm_test(const LossSeries& loss_a, const LossSeries& loss_b,
                 std::optional<int> lag_override) {
    require(loss_a.kind == loss_b.kind, "dm_test: loss kinds differ");
    require(loss_a.values.size() == loss_b.values.size(), "dm_test: series lengths differ");
    require(loss_a.epochs.size() == loss_a.values.size() || loss_a.epochs.empty(),
            "dm_test: malformed timestamps");
    if (!loss_a.epochs.empty() || !loss_b.epochs.empty())
        require(loss_a.epochs == loss_b.epochs, "dm_test: timestamps not aligned");
    const std::size_t T = loss_a.values.size();
    require(T >= 10, "dm_test: need at least 10 aligned days");
    require(all_finite(loss_a.values) && all_finite(loss_b.values), "dm_test: non-finite losses");

    std::vector<double> d(T);
    for (std::size_t t = 0; t < T; ++t) d[t] = loss_a.values[t] - loss_b.values[t];

    DMResult res;
    res.sample_size = T;
    res.lag_q = lag_override.value_or(newey_west_lag(T));
    const double lrv = bartlett_long_run_variance(d, res.lag_q);
    if (lrv <= 0.0)
        throw DegenerateTestError("dm_test: zero long-run variance (constant loss differential)");

    double dbar = 0.0;
    for (double v : d) dbar += v;
    dbar /= static_cast<double>(T);
    res.statistic = dbar / std::sqrt(lrv / static_cast<double>(T));
    res.p_value = normal_two_sided_p(res.statistic);
    return res;
}

NWMeanResult nw_mean_test(const std::vector<double>& series, std::optional<int> lag_override) {
    const std::size_t T = series.size();
    require(T >= 10, "nw_mean_test: need at least 10 points");
    require(all_finite(series), "nw_mean_test: non-finite values");

    NWMeanResult res;
    res.sample_size = T;
    res.lag_q = lag_override.value_or(newey_west_lag(T));
    const double lrv = bartlett_long_run_variance(series, res.lag_q);
    if (lrv <= 0.0) throw DegenerateTestError("nw_mean_test: zero variance series");

    double mean = 0.0;
    for (double v : series) mean += v;
    mean /= static_cast<double>(T);
    res.mean = mean;
    res.variance_of_mean = lrv / static_cast<double>(T);
    res.t_stat = mean / std::sqrt(res.variance_of_mean);
    return res;
}

BacktestReport backtest(const std::vector<double>& direction_prob_up,
                        const std::vector<double>& realized_returns, int trading_days_per_year) {
    require(direction_prob_up.size() == realized_returns.size() && !direction_prob_up.empty(),
            "backtest: misaligned series");
    require(trading_days_per_year >= 1, "backtest: bad annualization");

    BacktestReport rep;
    rep.daily_returns.resize(direction_prob_up.size());
    for (std::size_t t = 0; t < direction_prob_up.size(); ++t) {
        const double pos = direction_prob_up[t] > 0.5 ? 1.0 : -1.0;
        rep.daily_returns[t] = pos * realized_returns[t];
    }
    const double D = static_cast<double>(trading_days_per_year);
    const double n = static_cast<double>(rep.daily_returns.size());
    double mean = 0.0;
    for (double z : rep.daily_returns) mean += z;
    mean /= n;
    double var = 0.0;
    for (double z : rep.daily_returns) {
        const double dlt = z - mean;
        var += dlt * dlt;
    }
    var /= n;

    rep.annualized_return = mean * D;
    rep.annualized_volatility = std::sqrt(var) * std::sqrt(D);
    if (rep.annualized_volatility > 0.0) {
        rep.sharpe = rep.annualized_return / rep.annualized_volatility;
    } else {
        rep.sharpe = std::nan("");
        rep.sharpe_defined = false;
    }
    if (rep.daily_returns.size() >= 10) {
        try {
            rep.nw = nw_mean_test(rep.daily_returns);
        } catch (const DegenerateTestError&) {
            rep.nw = NWMeanResult{};
            rep.nw.sample_size = rep.daily_returns.size();
        }
    }
    return rep;
}

std::vector<double> rolling_mean(const std::vector<double>& values, std::size_t window) {
    require(window >= 1, "rolling_mean: window must be >= 1");
    require(window <= values.size(), "rolling_mean: window larger than record count");
    std::vector<double> out(values.size() - window + 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < window; ++i) acc += values[i];
    out[0] = acc / static_cast<double>(window);
    for (std::size_t i = window; i < values.size(); ++i) {
        acc += values[i] - values[i - window];
        out[i - window + 1] = acc / static_cast<double>(window);
    }
    return out;
}

}  // namespace tta
