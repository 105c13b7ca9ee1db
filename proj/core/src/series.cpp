#include "tta/series.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tta {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string strip(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(strip(cell));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

// days since 1970-01-01 for a civil date
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int yy = static_cast<int>(yoe) + static_cast<int>(era) * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = yy + (m <= 2);
}

}  // namespace

std::int64_t parse_timestamp(const std::string& text) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    int n = std::sscanf(text.c_str(), "%d-%d-%d %d:%d:%d", &y, &mo, &d, &h, &mi, &s);
    if (n < 3) throw InputError("unparseable timestamp '" + text + "'");
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || (is_leap(y) ? false : (mo == 2 && d > 29)))
        throw InputError("invalid date in timestamp '" + text + "'");
    return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s;
}

std::string format_timestamp(std::int64_t epoch, bool with_time) {
    int y, m, d;
    civil_from_days(epoch >= 0 ? epoch / 86400 : (epoch - 86399) / 86400, y, m, d);
    std::int64_t sod = epoch % 86400;
    if (sod < 0) sod += 86400;
    char buf[32];
    if (with_time)
        std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d %02d:%02d:%02d", y, m, d,
                      static_cast<int>(sod / 3600), static_cast<int>((sod / 60) % 60),
                      static_cast<int>(sod % 60));
    else
        std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
    return buf;
}

CsvSchema parse_schema(const std::string& name) {
    std::string n = lower(name);
    if (n == "ett") return CsvSchema::Ett;
    if (n == "ohlcv") return CsvSchema::Ohlcv;
    throw InputError("unknown schema '" + name + "' (expected ett or ohlcv)");
}

std::string schema_name(CsvSchema s) { return s == CsvSchema::Ett ? "ett" : "ohlcv"; }

SeriesFrame::SeriesFrame(std::vector<std::int64_t> epochs, std::vector<std::string> stamps,
                         std::vector<std::string> channel_names,
                         std::vector<std::vector<double>> channels, Provenance provenance)
    : epochs_(std::move(epochs)),
      stamps_(std::move(stamps)),
      names_(std::move(channel_names)),
      channels_(std::move(channels)),
      provenance_(provenance) {
    require(stamps_.size() == epochs_.size(), "SeriesFrame: timestamp/epoch length mismatch");
    require(names_.size() == channels_.size(), "SeriesFrame: channel name/data mismatch");
    for (const auto& ch : channels_)
        if (ch.size() != epochs_.size()) throw ShapeError("SeriesFrame: ragged channel lengths");
    for (std::size_t i = 1; i < epochs_.size(); ++i)
        if (epochs_[i] <= epochs_[i - 1])
            throw InputError("SeriesFrame: non-increasing timestamp at row " + std::to_string(i));
}

std::size_t SeriesFrame::channel_index(const std::string& name) const {
    for (std::size_t c = 0; c < names_.size(); ++c)
        if (names_[c] == name) return c;
    throw InputError("unknown channel '" + name + "'");
}

SeriesFrame SeriesFrame::slice(std::size_t begin, std::size_t end) const {
    require(begin <= end && end <= rows(), "SeriesFrame::slice: bad range");
    std::vector<std::vector<double>> chans(channels_.size());
    for (std::size_t c = 0; c < channels_.size(); ++c)
        chans[c].assign(channels_[c].begin() + begin, channels_[c].begin() + end);
    return SeriesFrame({epochs_.begin() + begin, epochs_.begin() + end},
                       {stamps_.begin() + begin, stamps_.begin() + end}, names_, std::move(chans),
                       provenance_);
}

std::vector<double> SeriesFrame::row(std::size_t t) const {
    std::vector<double> r(channels_.size());
    for (std::size_t c = 0; c < channels_.size(); ++c) r[c] = channels_[c][t];
    return r;
}

SeriesFrame load_csv(const std::string& path, CsvSchema schema) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw InputError("empty file '" + path + "'");
    auto header = split_csv_line(line);
    if (header.empty() || lower(header[0]) != "date")
        throw InputError(path + ": first column must be 'date'");

    std::vector<std::string> names(header.begin() + 1, header.end());
    if (schema == CsvSchema::Ett) {
        if (names.size() != 7)
            throw InputError(path + ": ett schema expects date + 7 value columns, got " +
                             std::to_string(names.size()));
    } else {
        const char* want[] = {"open", "high", "low", "close", "volume"};
        if (names.size() != 5) throw InputError(path + ": ohlcv schema expects date,open,high,low,close,volume");
        for (int i = 0; i < 5; ++i)
            if (lower(names[i]) != want[i])
                throw InputError(path + ": ohlcv header column " + std::to_string(i + 1) +
                                 " should be '" + want[i] + "', got '" + names[i] + "'");
        for (auto& n : names) n = lower(n);
    }

    const std::size_t d = names.size();
    std::vector<std::int64_t> epochs;
    std::vector<std::string> stamps;
    std::vector<std::vector<double>> channels(d);

    std::size_t row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (strip(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != d + 1)
            throw InputError(path + ": row " + std::to_string(row_no) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(d + 1));
        std::int64_t ep = parse_timestamp(cells[0]);
        if (!epochs.empty()) {
            if (ep == epochs.back())
                throw InputError(path + ": duplicate timestamp '" + cells[0] + "'");
            if (ep < epochs.back())
                throw InputError(path + ": non-monotone timestamp at row " + std::to_string(row_no));
        }
        for (std::size_t c = 0; c < d; ++c) {
            char* endp = nullptr;
            const std::string& cell = cells[c + 1];
            double v = std::strtod(cell.c_str(), &endp);
            if (cell.empty() || endp != cell.c_str() + cell.size())
                throw InputError(path + ": row " + std::to_string(row_no) +
                                 ": malformed value '" + cell + "'");
            channels[c].push_back(v);
        }
        epochs.push_back(ep);
        stamps.push_back(cells[0]);
    }
    if (epochs.empty()) throw InputError(path + ": no data rows");
    return SeriesFrame(std::move(epochs), std::move(stamps), std::move(names), std::move(channels),
                       Provenance::Raw);
}

void write_csv(const SeriesFrame& frame, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << "date";
    for (const auto& n : frame.channel_names()) out << "," << n;
    out << "\n";
    for (std::size_t t = 0; t < frame.rows(); ++t) {
        out << frame.timestamps()[t];
        for (std::size_t c = 0; c < frame.channel_count(); ++c)
            out << "," << format_double(frame.channel(c)[t]);
        out << "\n";
    }
}

}  // namespace tta
