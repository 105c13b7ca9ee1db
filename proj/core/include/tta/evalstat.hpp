#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tta/common.hpp"

namespace tta {

// Constant loss differential / zero variance: no fabricated p-values.
class DegenerateTestError : public Error {
public:
    explicit DegenerateTestError(const std::string& msg) : Error(msg) {}
};

struct RegressionMetrics {
    double mae = 0.0;
    double rmse = 0.0;
    double r2 = 0.0;
    bool r2_defined = true;  // false when target variance is zero
};
RegressionMetrics regression_metrics(const std::vector<double>& preds,
                                     const std::vector<double>& targets);

struct ClassificationMetrics {
    double accuracy = 0.0;
    double f1 = 0.0;
    double auc = 0.0;
    bool auc_defined = true;  // false for single-class label vectors
    double direction_accuracy = 0.0;
    double ece = 0.0;
};
// prob_up holds P(class 1); hard decisions at threshold 0.5.
ClassificationMetrics classification_metrics(const std::vector<double>& prob_up,
                                             const std::vector<double>& labels);

// Mann-Whitney rank AUC with average-rank tie handling. Throws on a
// single-class label vector.
double rank_auc(const std::vector<double>& scores, const std::vector<double>& labels);

// Expected calibration error: 10 equal-width confidence bins, bin-weighted
// |accuracy - confidence|.
double expected_calibration_error(const std::vector<double>& prob_up,
                                  const std::vector<double>& labels, int bins = 10);

struct ReliabilityBin {
    double conf_lo = 0.0, conf_hi = 0.0;
    double mean_confidence = 0.0;
    double accuracy = 0.0;
    std::size_t count = 0;
};
std::vector<ReliabilityBin> reliability_diagram(const std::vector<double>& prob_up,
                                                const std::vector<double>& labels, int bins = 10);

// ---------------------------------------------------------------------------
// Diebold-Mariano / Newey-West

enum class LossKind { CrossEntropy, Absolute, Squared };
std::string loss_kind_name(LossKind k);

struct LossSeries {
    LossKind kind = LossKind::Squared;
    std::vector<double> values;
    std::vector<std::int64_t> epochs;  // aligned timestamps (may be empty on both sides)
};

// Automatic truncation lag q = floor(4 (T/100)^{2/9}).
int newey_west_lag(std::size_t T);

// Bartlett-weighted long-run variance gamma_0 + 2 sum w_h gamma_h (never
// negative up to rounding).
double bartlett_long_run_variance(const std::vector<double>& x, int q);

struct DMResult {
    double statistic = 0.0;
    double p_value = 1.0;  // two-sided, standard-normal limit
    int lag_q = 0;
    std::size_t sample_size = 0;
    // negative statistic: the first series has lower average loss
    std::string sign_note = "negative favors first";
};
DMResult dm_test(const LossSeries& loss_a, const LossSeries& loss_b,
                 std::optional<int> lag_override = std::nullopt);

struct NWMeanResult {
    double mean = 0.0;
    double variance_of_mean = 0.0;
    double t_stat = 0.0;
    int lag_q = 0;
    std::size_t sample_size = 0;
};
NWMeanResult nw_mean_test(const std::vector<double>& series,
                          std::optional<int> lag_override = std::nullopt);

// ---------------------------------------------------------------------------
// directional backtest

struct BacktestReport {
    double annualized_return = 0.0;
    double annualized_volatility = 0.0;
    double sharpe = 0.0;
    bool sharpe_defined = true;
    NWMeanResult nw;
    std::vector<double> daily_returns;  // z_t = position_t * realized_t
};
// Positions are sign(p - 0.5) in {-1,+1} (0.5 maps to -1, matching the
// down-on-tie label convention). Population-std annualization.
BacktestReport backtest(const std::vector<double>& direction_prob_up,
                        const std::vector<double>& realized_returns, int trading_days_per_year);

// Trailing mean over a window; output[i] covers input [i, i+window).
std::vector<double> rolling_mean(const std::vector<double>& values, std::size_t window);

}  // namespace tta
