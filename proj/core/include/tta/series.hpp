#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tta/common.hpp"

namespace tta {

enum class CsvSchema { Ett, Ohlcv };
enum class Provenance { Raw, Features, Shifted };

CsvSchema parse_schema(const std::string& name);
std::string schema_name(CsvSchema s);

// Timestamped multivariate series; the universal data carrier. Column-major
// channel storage: channel(c) is a contiguous vector over time.
class SeriesFrame {
public:
    SeriesFrame() = default;
    SeriesFrame(std::vector<std::int64_t> epochs, std::vector<std::string> stamps,
                std::vector<std::string> channel_names,
                std::vector<std::vector<double>> channels,
                Provenance provenance);

    std::size_t rows() const { return epochs_.size(); }
    std::size_t channel_count() const { return channels_.size(); }

    const std::vector<std::int64_t>& epochs() const { return epochs_; }
    const std::vector<std::string>& timestamps() const { return stamps_; }
    const std::vector<std::string>& channel_names() const { return names_; }

    const std::vector<double>& channel(std::size_t c) const { return channels_[c]; }
    std::vector<double>& channel(std::size_t c) { return channels_[c]; }
    std::size_t channel_index(const std::string& name) const;  // throws if absent

    Provenance provenance() const { return provenance_; }
    void set_provenance(Provenance p) { provenance_ = p; }

    // Rows [begin, end) as a new frame.
    SeriesFrame slice(std::size_t begin, std::size_t end) const;

    // d-dim row vector at time index t (channel order).
    std::vector<double> row(std::size_t t) const;

private:
    std::vector<std::int64_t> epochs_;      // strictly increasing
    std::vector<std::string> stamps_;       // original text form, same length
    std::vector<std::string> names_;
    std::vector<std::vector<double>> channels_;  // [channel][time]
    Provenance provenance_ = Provenance::Raw;
};

// Parses "YYYY-MM-DD" or "YYYY-MM-DD HH:MM[:SS]" as timezone-naive seconds.
std::int64_t parse_timestamp(const std::string& text);
std::string format_timestamp(std::int64_t epoch, bool with_time);

// Loads a CSV with a header row. ETT: "date" plus exactly 7 value columns.
// OHLCV: date,open,high,low,close,volume (case-insensitive header match).
// Timestamps must be strictly increasing; duplicates are rejected by date.
SeriesFrame load_csv(const std::string& path, CsvSchema schema);

// Writes the frame back out as CSV (header = date + channel names).
void write_csv(const SeriesFrame& frame, const std::string& path);

}  // namespace tta
