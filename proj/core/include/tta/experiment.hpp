#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tta/adapt.hpp"
#include "tta/backbone.hpp"
#include "tta/dataset.hpp"
#include "tta/evalstat.hpp"
#include "tta/shiftgen.hpp"

namespace tta {

struct SweepGrids {
    std::vector<int> context_w;
    std::vector<int> steps;
    std::vector<double> learning_rate;
    std::vector<double> tau_quantile;
    std::vector<std::vector<std::string>> augmentations;
    std::vector<std::pair<double, double>> loss_weights;  // (alpha, beta)
    bool allow_custom = false;  // lifts the reference-grid subset check

    bool empty() const;
    std::size_t product_size() const;
    void validate() const;
};

struct ExperimentConfig {
    int version = 1;
    std::string data_path;
    CsvSchema schema = CsvSchema::Ett;
    std::string target_channel = "OT";
    TaskKind task = TaskKind::Regression;
    int L = 96, H = 24;

    // split: either explicit dates or fractions
    std::optional<std::string> train_end_date, valid_end_date;
    std::optional<double> train_frac, valid_frac;
    std::vector<std::pair<std::string, std::string>> regimes;  // (name, start date)

    ArchDescriptor arch;
    TrainConfig train;
    AdaptConfig adapt;  // mode field ignored; modes below drive the deployment
    std::vector<std::string> adapt_modes = {"no_tta", "bn_stats", "norm_only"};
    std::vector<std::string> augmentation_names = {"scale", "jitter"};

    std::optional<ShiftSpec> shift;
    SweepGrids sweep;

    int rolling_window = 60;
    int trading_days_per_year = 252;

    std::string output_dir = "run";
    std::uint64_t master_seed = 42;
    std::optional<std::string> checkpoint_path;  // reuse instead of retraining

    void validate() const;
};

// Strict parser: unknown keys are rejected at every level.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config_json(const std::string& text, const std::string& origin);
std::string serialize_config(const ExperimentConfig& cfg);

// TTA_OUTPUT_ROOT env var prefixes relative output directories.
std::string resolve_output_dir(const std::string& dir);

// ---------------------------------------------------------------------------

struct RegimeMetrics {
    std::string name;
    std::size_t days = 0;
    RegressionMetrics reg;
    ClassificationMetrics cls;
};

struct ModeResult {
    AdaptMode mode = AdaptMode::NoTta;
    std::vector<DayLog> log;
    std::vector<double> prob_up;      // classification, per day
    std::vector<double> predictions;  // regression, [days][H]
    std::vector<double> day_loss;     // DM loss series (cross-entropy or absolute)
    std::uint64_t stream_hash = 0;
    std::size_t fallback_days = 0;

    bool has_cls = false;
    ClassificationMetrics cls;
    bool has_reg = false;
    RegressionMetrics reg;
    bool has_backtest = false;
    BacktestReport backtest;
    std::vector<RegimeMetrics> per_regime;
};

struct DMRow {
    std::string first, second;
    DMResult result;
};

struct ExperimentReport {
    double tau = 0.0;
    std::vector<ModeResult> modes;
    std::vector<DMRow> dm_rows;
    TrainResult train_info;
    std::string bundle_dir;
    std::size_t test_days = 0;
};

// Observability for audits: on_day_start fires before a day's windows are
// fetched; on_window_access reports the global sample index of every window
// fetched during calibration and deployment.
struct RunHooks {
    std::function<void(std::int64_t)> on_day_start;
    std::function<void(std::int64_t)> on_window_access;
};

// The full pipeline: load -> (shift) -> features -> split -> scale -> window
// -> train (or load checkpoint) -> calibrate tau -> stream each mode through
// the test days -> metrics/DM/backtest/curves -> report bundle on disk.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunHooks* hooks = nullptr);

// Grid sweep; one run_experiment per grid point in its own subdirectory,
// seeds derived by stable-hashing the grid coordinates. Guarded to <= 500
// points unless force is set.
struct SweepRow {
    std::size_t index = 0;
    int context_w = 0, steps = 0;
    double learning_rate = 0.0, tau_quantile = 0.0;
    std::string augmentations;
    double alpha = 1.0, beta = 1.0;
    std::uint64_t seed = 0;
    std::map<std::string, double> headline;  // "<mode>.<metric>" -> value
};
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, bool force = false);

// Aggregates several run bundles (metrics.json files) into table-shaped CSVs.
void aggregate_reports(const std::vector<std::string>& run_dirs, const std::string& out_dir);

// Internal pipeline pieces exposed for the CLI subcommands and tests.
struct PreparedData {
    SeriesFrame frame;          // standardized inputs
    std::vector<double> label_series;
    Scaler scaler;
    SplitDescriptor split;
    WindowDataset dataset;
    std::optional<ShiftMetadata> shift_meta;
};
PreparedData prepare_data(const ExperimentConfig& cfg);

double calibrate_tau(const Backbone& net, const WindowDataset& ds, const AdaptConfig& acfg,
                     std::uint64_t master_seed, const RunHooks* hooks = nullptr,
                     std::vector<double>* out_uncertainties = nullptr);

ModeResult deploy_mode(Backbone net, const WindowDataset& ds, AdaptConfig acfg, double tau,
                       std::uint64_t master_seed, const RunHooks* hooks = nullptr);

}  // namespace tta
