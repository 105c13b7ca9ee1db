#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tta/series.hpp"

namespace tta {

enum class TaskKind { Classification, Regression };
TaskKind parse_task(const std::string& name);
std::string task_name(TaskKind t);

// Per-channel standardization, population-std convention (divide by n),
// fit on training rows only.
class Scaler {
public:
    void fit(const SeriesFrame& frame, std::size_t train_begin, std::size_t train_end);
    SeriesFrame apply(const SeriesFrame& frame) const;
    SeriesFrame invert(const SeriesFrame& frame) const;

    bool fitted() const { return fitted_; }
    const std::vector<double>& mean() const { return mean_; }
    const std::vector<double>& stddev() const { return std_; }
    void set(std::vector<double> mean, std::vector<double> stddev);

private:
    std::vector<double> mean_, std_;
    bool fitted_ = false;
};

// Chronological row split plus regime boundaries for test-range tagging.
struct RegimeSpec {
    std::string name;
    std::int64_t start_epoch;  // regime covers [start_epoch, next regime's start)
};

struct SplitDescriptor {
    std::size_t train_end_row = 0;  // train rows [0, train_end_row)
    std::size_t valid_end_row = 0;  // valid rows [train_end_row, valid_end_row)
    std::vector<RegimeSpec> regimes;
};

// Rows with epoch <= train_end go to train, <= valid_end to validation, the
// rest to test. All three splits must be non-empty.
SplitDescriptor chrono_split(const SeriesFrame& frame, std::int64_t train_end_epoch,
                             std::int64_t valid_end_epoch, std::vector<RegimeSpec> regimes = {});
SplitDescriptor chrono_split_fractions(const SeriesFrame& frame, double train_frac,
                                       double valid_frac, std::vector<RegimeSpec> regimes = {});

// How per-step regression labels are read off the label series.
enum class LabelKind {
    Direct,     // label step h is series[t+h] (e.g. a log-return channel)
    Difference  // label step h is series[t+h] - series[t+h-1]
};

// A batch of unlabeled context windows, laid out [window][channel][time].
struct WindowBatch {
    int L = 0;
    int d = 0;
    std::size_t count = 0;
    std::vector<double> data;
    std::vector<std::int64_t> indices;  // global sample index per window

    const double* window(std::size_t i) const { return data.data() + i * static_cast<std::size_t>(L) * d; }
    double* window(std::size_t i) { return data.data() + i * static_cast<std::size_t>(L) * d; }
    std::size_t window_size() const { return static_cast<std::size_t>(L) * d; }
};

// Windowed supervised dataset. Sample i has input rows [t-L+1, t] and label
// rows (t, t+H]; split ranges are disjoint and chronological; a train sample's
// label rows never cross the train/validation boundary.
struct WindowDataset {
    int L = 0, H = 0, d = 0;
    TaskKind task = TaskKind::Regression;
    LabelKind label_kind = LabelKind::Direct;
    std::string label_channel;

    std::size_t count = 0;
    std::vector<double> inputs;             // [N][d][L]
    std::vector<double> labels;             // [N][label_dim]; cls: {0,1}, reg: H per-step values
    std::vector<double> forward_return;     // [N]: first-step label value (backtest alignment)
    std::vector<std::int64_t> end_row;      // [N]: frame row index of the window end t
    std::vector<std::string> label_stamp;   // [N]: timestamp of label start (row t+1)
    std::vector<int> regime;                // [N]: regime id for test samples, -1 otherwise

    std::size_t train_end = 0;  // sample ranges: train [0,train_end), valid [train_end,valid_end)
    std::size_t valid_end = 0;  // test [valid_end, count)
    std::vector<std::string> regime_names;

    int label_dim() const { return task == TaskKind::Classification ? 1 : H; }
    const double* input(std::size_t i) const {
        return inputs.data() + i * static_cast<std::size_t>(d) * L;
    }
    const double* label(std::size_t i) const {
        return labels.data() + i * static_cast<std::size_t>(label_dim());
    }

    // Copies samples [first, last) into a batch.
    WindowBatch batch(std::size_t first, std::size_t last) const;
    WindowBatch batch(const std::vector<std::size_t>& ids) const;
};

// Builds windows/labels over a standardized frame. `label_series` is aligned
// with the frame rows and supplies raw label values (kept unscaled so e.g.
// realized returns survive for backtests).
WindowDataset make_windows(const SeriesFrame& frame, const std::vector<double>& label_series,
                           int L, int H, TaskKind task, LabelKind label_kind,
                           const SplitDescriptor& split, const std::string& label_channel_name);

// Versioned binary cache keyed by (source hash, L, H, task, scaler).
struct DatasetCacheKey {
    std::uint64_t source_hash = 0;
    int L = 0, H = 0;
    TaskKind task = TaskKind::Regression;
    std::vector<double> scaler_mean, scaler_std;
};
void save_dataset_cache(const WindowDataset& ds, const DatasetCacheKey& key,
                        const std::string& path);
WindowDataset load_dataset_cache(const std::string& path, const DatasetCacheKey& expected_key);

std::uint64_t file_content_hash(const std::string& path);

}  // namespace tta
