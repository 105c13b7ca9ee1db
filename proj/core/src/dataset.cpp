#include "tta/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace tta {

TaskKind parse_task(const std::string& name) {
    if (name == "classification") return TaskKind::Classification;
    if (name == "regression") return TaskKind::Regression;
    throw InputError("unknown task '" + name + "'");
}

std::string task_name(TaskKind t) {
    return t == TaskKind::Classification ? "classification" : "regression";
}

void Scaler::fit(const SeriesFrame& frame, std::size_t train_begin, std::size_t train_end) {
    require(train_begin < train_end && train_end <= frame.rows(), "Scaler::fit: empty train range");
    const std::size_t n = train_end - train_begin;
    mean_.assign(frame.channel_count(), 0.0);
    std_.assign(frame.channel_count(), 0.0);
    for (std::size_t c = 0; c < frame.channel_count(); ++c) {
        const auto& ch = frame.channel(c);
        double m = 0.0;
        for (std::size_t t = train_begin; t < train_end; ++t) m += ch[t];
        m /= static_cast<double>(n);
        double v = 0.0;
        for (std::size_t t = train_begin; t < train_end; ++t) {
            double dlt = ch[t] - m;
            v += dlt * dlt;
        }
        v /= static_cast<double>(n);
        if (v <= 0.0)
            throw InputError("zero-variance channel '" + frame.channel_names()[c] +
                             "' in training range");
        mean_[c] = m;
        std_[c] = std::sqrt(v);
    }
    fitted_ = true;
}

void Scaler::set(std::vector<double> mean, std::vector<double> stddev) {
    require(mean.size() == stddev.size(), "Scaler::set: size mismatch");
    for (double s : stddev) require(s > 0.0, "Scaler::set: non-positive std");
    mean_ = std::move(mean);
    std_ = std::move(stddev);
    fitted_ = true;
}

SeriesFrame Scaler::apply(const SeriesFrame& frame) const {
    require(fitted_, "Scaler::apply: not fitted");
    require(frame.channel_count() == mean_.size(), "Scaler::apply: channel count mismatch");
    std::vector<std::vector<double>> chans(frame.channel_count());
    for (std::size_t c = 0; c < frame.channel_count(); ++c) {
        chans[c].resize(frame.rows());
        const auto& src = frame.channel(c);
        for (std::size_t t = 0; t < frame.rows(); ++t)
            chans[c][t] = (src[t] - mean_[c]) / std_[c];
    }
    return SeriesFrame(frame.epochs(), frame.timestamps(), frame.channel_names(), std::move(chans),
                       frame.provenance());
}

SeriesFrame Scaler::invert(const SeriesFrame& frame) const {
    require(fitted_, "Scaler::invert: not fitted");
    require(frame.channel_count() == mean_.size(), "Scaler::invert: channel count mismatch");
    std::vector<std::vector<double>> chans(frame.channel_count());
    for (std::size_t c = 0; c < frame.channel_count(); ++c) {
        chans[c].resize(frame.rows());
        const auto& src = frame.channel(c);
        for (std::size_t t = 0; t < frame.rows(); ++t) chans[c][t] = src[t] * std_[c] + mean_[c];
    }
    return SeriesFrame(frame.epochs(), frame.timestamps(), frame.channel_names(), std::move(chans),
                       frame.provenance());
}

SplitDescriptor chrono_split(const SeriesFrame& frame, std::int64_t train_end_epoch,
                             std::int64_t valid_end_epoch, std::vector<RegimeSpec> regimes) {
    require(train_end_epoch < valid_end_epoch, "chrono_split: boundaries out of order");
    const auto& ep = frame.epochs();
    require(!ep.empty(), "chrono_split: empty frame");
    require(train_end_epoch >= ep.front() && valid_end_epoch <= ep.back(),
            "chrono_split: boundaries outside frame time range");

    SplitDescriptor s;
    s.train_end_row = static_cast<std::size_t>(
        std::upper_bound(ep.begin(), ep.end(), train_end_epoch) - ep.begin());
    s.valid_end_row = static_cast<std::size_t>(
        std::upper_bound(ep.begin(), ep.end(), valid_end_epoch) - ep.begin());
    require(s.train_end_row > 0, "chrono_split: empty train split");
    require(s.valid_end_row > s.train_end_row, "chrono_split: empty validation split");
    require(s.valid_end_row < frame.rows(), "chrono_split: empty test split");

    for (std::size_t i = 1; i < regimes.size(); ++i)
        require(regimes[i].start_epoch > regimes[i - 1].start_epoch,
                "chrono_split: regime boundaries out of order");
    s.regimes = std::move(regimes);
    return s;
}

SplitDescriptor chrono_split_fractions(const SeriesFrame& frame, double train_frac,
                                       double valid_frac, std::vector<RegimeSpec> regimes) {
    require(train_frac > 0 && valid_frac > 0 && train_frac + valid_frac < 1.0,
            "chrono_split_fractions: fractions must be positive and sum below 1");
    const std::size_t T = frame.rows();
    auto r_tr = static_cast<std::size_t>(train_frac * static_cast<double>(T));
    auto r_va = static_cast<std::size_t>((train_frac + valid_frac) * static_cast<double>(T));
    require(r_tr >= 1 && r_va > r_tr && r_va < T, "chrono_split_fractions: degenerate split");
    SplitDescriptor s;
    s.train_end_row = r_tr;
    s.valid_end_row = r_va;
    s.regimes = std::move(regimes);
    return s;
}

WindowBatch WindowDataset::batch(std::size_t first, std::size_t last) const {
    require(first <= last && last <= count, "WindowDataset::batch: bad range");
    const std::size_t wsz = static_cast<std::size_t>(d) * L;
    WindowBatch b;
    b.L = L;
    b.d = d;
    b.count = last - first;
    b.data.assign(inputs.begin() + static_cast<std::ptrdiff_t>(first * wsz),
                  inputs.begin() + static_cast<std::ptrdiff_t>(last * wsz));
    b.indices.resize(b.count);
    for (std::size_t i = 0; i < b.count; ++i) b.indices[i] = static_cast<std::int64_t>(first + i);
    return b;
}

WindowBatch WindowDataset::batch(const std::vector<std::size_t>& ids) const {
    const std::size_t wsz = static_cast<std::size_t>(d) * L;
    WindowBatch b;
    b.L = L;
    b.d = d;
    b.count = ids.size();
    b.data.resize(ids.size() * wsz);
    b.indices.resize(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        require(ids[i] < count, "WindowDataset::batch: index out of range");
        std::copy_n(input(ids[i]), wsz, b.data.data() + i * wsz);
        b.indices[i] = static_cast<std::int64_t>(ids[i]);
    }
    return b;
}

WindowDataset make_windows(const SeriesFrame& frame, const std::vector<double>& label_series,
                           int L, int H, TaskKind task, LabelKind label_kind,
                           const SplitDescriptor& split, const std::string& label_channel_name) {
    const std::size_t T = frame.rows();
    require(L >= 1 && H >= 1, "make_windows: L and H must be >= 1");
    require(label_series.size() == T, "make_windows: label series misaligned with frame");
    if (T < static_cast<std::size_t>(L + H)) throw InputError("make_windows: frame too short");

    WindowDataset ds;
    ds.L = L;
    ds.H = H;
    ds.d = static_cast<int>(frame.channel_count());
    ds.task = task;
    ds.label_kind = label_kind;
    ds.label_channel = label_channel_name;

    const std::size_t N = T - static_cast<std::size_t>(L) - static_cast<std::size_t>(H) + 1;
    ds.count = N;
    const std::size_t wsz = static_cast<std::size_t>(ds.d) * L;
    ds.inputs.resize(N * wsz);
    const int ld = ds.label_dim();
    ds.labels.resize(N * static_cast<std::size_t>(ld));
    ds.forward_return.resize(N);
    ds.end_row.resize(N);
    ds.label_stamp.resize(N);
    ds.regime.assign(N, -1);

    auto step_label = [&](std::size_t t, int h) {
        const std::size_t j = t + static_cast<std::size_t>(h);
        return label_kind == LabelKind::Direct ? label_series[j]
                                               : label_series[j] - label_series[j - 1];
    };

    for (std::size_t i = 0; i < N; ++i) {
        const std::size_t t = i + static_cast<std::size_t>(L) - 1;  // window end row
        double* w = ds.inputs.data() + i * wsz;
        for (int c = 0; c < ds.d; ++c) {
            const auto& ch = frame.channel(static_cast<std::size_t>(c));
            std::copy_n(ch.data() + (t + 1 - static_cast<std::size_t>(L)), L,
                        w + static_cast<std::size_t>(c) * L);
        }
        const double first_step = step_label(t, 1);
        ds.forward_return[i] = first_step;
        if (task == TaskKind::Classification) {
            ds.labels[i] = first_step > 0.0 ? 1.0 : 0.0;  // tie -> down
        } else {
            for (int h = 1; h <= H; ++h)
                ds.labels[i * static_cast<std::size_t>(ld) + (h - 1)] = step_label(t, h);
        }
        ds.end_row[i] = static_cast<std::int64_t>(t);
        ds.label_stamp[i] = frame.timestamps()[t + 1];
    }

    // Sample split membership: every label row must stay inside the sample's
    // split, so assignment goes by the label end row t+H.
    std::size_t n_tr = 0, n_va = 0;
    for (std::size_t i = 0; i < N; ++i) {
        const std::size_t label_end = static_cast<std::size_t>(ds.end_row[i]) + H;
        if (label_end < split.train_end_row)
            ++n_tr;
        else if (label_end < split.valid_end_row)
            ++n_va;
    }
    ds.train_end = n_tr;
    ds.valid_end = n_tr + n_va;

    if (!split.regimes.empty()) {
        ds.regime_names.reserve(split.regimes.size());
        for (const auto& r : split.regimes) ds.regime_names.push_back(r.name);
        for (std::size_t i = ds.valid_end; i < N; ++i) {
            const std::int64_t ep = frame.epochs()[static_cast<std::size_t>(ds.end_row[i]) + 1];
            int tag = -1;
            for (std::size_t k = 0; k < split.regimes.size(); ++k)
                if (ep >= split.regimes[k].start_epoch) tag = static_cast<int>(k);
            ds.regime[i] = tag;
        }
    }
    return ds;
}

std::uint64_t file_content_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "' for hashing");
    char buf[1 << 16];
    std::uint64_t h = 0xcbf29ce484222325ULL;
    while (in) {
        in.read(buf, sizeof(buf));
        h = hash_bytes(buf, static_cast<std::size_t>(in.gcount()), h);
    }
    return h;
}

namespace {

constexpr std::uint32_t kCacheMagic = 0x54544144;  // "TTAD"
constexpr std::uint32_t kCacheVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw InputError("dataset cache: truncated file");
    return v;
}
void put_vec(std::ofstream& out, const std::vector<double>& v) {
    put<std::uint64_t>(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}
std::vector<double> get_vec(std::ifstream& in) {
    auto n = get<std::uint64_t>(in);
    std::vector<double> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw InputError("dataset cache: truncated array");
    return v;
}
void put_str(std::ofstream& out, const std::string& s) {
    put<std::uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string get_str(std::ifstream& in) {
    auto n = get<std::uint64_t>(in);
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw InputError("dataset cache: truncated string");
    return s;
}

}  // namespace

void save_dataset_cache(const WindowDataset& ds, const DatasetCacheKey& key,
                        const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    put(out, kCacheMagic);
    put(out, kCacheVersion);
    put(out, key.source_hash);
    put<std::int32_t>(out, key.L);
    put<std::int32_t>(out, key.H);
    put<std::int32_t>(out, static_cast<std::int32_t>(key.task));
    put_vec(out, key.scaler_mean);
    put_vec(out, key.scaler_std);

    put<std::int32_t>(out, ds.L);
    put<std::int32_t>(out, ds.H);
    put<std::int32_t>(out, ds.d);
    put<std::int32_t>(out, static_cast<std::int32_t>(ds.task));
    put<std::int32_t>(out, static_cast<std::int32_t>(ds.label_kind));
    put_str(out, ds.label_channel);
    put<std::uint64_t>(out, ds.count);
    put<std::uint64_t>(out, ds.train_end);
    put<std::uint64_t>(out, ds.valid_end);
    put_vec(out, ds.inputs);
    put_vec(out, ds.labels);
    put_vec(out, ds.forward_return);
    put<std::uint64_t>(out, ds.end_row.size());
    out.write(reinterpret_cast<const char*>(ds.end_row.data()),
              static_cast<std::streamsize>(ds.end_row.size() * sizeof(std::int64_t)));
    put<std::uint64_t>(out, ds.label_stamp.size());
    for (const auto& s : ds.label_stamp) put_str(out, s);
    put<std::uint64_t>(out, ds.regime.size());
    out.write(reinterpret_cast<const char*>(ds.regime.data()),
              static_cast<std::streamsize>(ds.regime.size() * sizeof(int)));
    put<std::uint64_t>(out, ds.regime_names.size());
    for (const auto& s : ds.regime_names) put_str(out, s);
}

WindowDataset load_dataset_cache(const std::string& path, const DatasetCacheKey& expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    if (get<std::uint32_t>(in) != kCacheMagic) throw InputError(path + ": not a dataset cache");
    if (get<std::uint32_t>(in) != kCacheVersion) throw InputError(path + ": unsupported cache version");
    if (get<std::uint64_t>(in) != expected.source_hash)
        throw InputError(path + ": cache source hash mismatch");
    if (get<std::int32_t>(in) != expected.L || get<std::int32_t>(in) != expected.H)
        throw InputError(path + ": cache window geometry mismatch");
    if (get<std::int32_t>(in) != static_cast<std::int32_t>(expected.task))
        throw InputError(path + ": cache task mismatch");
    if (get_vec(in) != expected.scaler_mean || get_vec(in) != expected.scaler_std)
        throw InputError(path + ": cache scaler mismatch");

    WindowDataset ds;
    ds.L = get<std::int32_t>(in);
    ds.H = get<std::int32_t>(in);
    ds.d = get<std::int32_t>(in);
    ds.task = static_cast<TaskKind>(get<std::int32_t>(in));
    ds.label_kind = static_cast<LabelKind>(get<std::int32_t>(in));
    ds.label_channel = get_str(in);
    ds.count = get<std::uint64_t>(in);
    ds.train_end = get<std::uint64_t>(in);
    ds.valid_end = get<std::uint64_t>(in);
    ds.inputs = get_vec(in);
    ds.labels = get_vec(in);
    ds.forward_return = get_vec(in);
    ds.end_row.resize(get<std::uint64_t>(in));
    in.read(reinterpret_cast<char*>(ds.end_row.data()),
            static_cast<std::streamsize>(ds.end_row.size() * sizeof(std::int64_t)));
    ds.label_stamp.resize(get<std::uint64_t>(in));
    for (auto& s : ds.label_stamp) s = get_str(in);
    ds.regime.resize(get<std::uint64_t>(in));
    in.read(reinterpret_cast<char*>(ds.regime.data()),
            static_cast<std::streamsize>(ds.regime.size() * sizeof(int)));
    ds.regime_names.resize(get<std::uint64_t>(in));
    for (auto& s : ds.regime_names) s = get_str(in);
    if (!in) throw InputError(path + ": truncated dataset cache");
    return ds;
}

}  // namespace tta
