#include "tta/shiftgen.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tta {

ShiftKind parse_shift_kind(const std::string& name) {
    if (name == "gradual") return ShiftKind::Gradual;
    if (name == "noise") return ShiftKind::NoiseInflation;
    if (name == "structural") return ShiftKind::Structural;
    throw InputError("unknown shift kind '" + name + "'");
}

std::string shift_kind_name(ShiftKind k) {
    switch (k) {
        case ShiftKind::Gradual: return "gradual";
        case ShiftKind::NoiseInflation: return "noise";
        case ShiftKind::Structural: return "structural";
    }
    return "?";
}

std::vector<double> gradual_drift(const std::vector<double>& series, double kappa, double nu,
                                  double mu0) {
    require(!series.empty(), "gradual_drift: empty series");
    require(std::isfinite(kappa) && std::isfinite(nu) && std::isfinite(mu0),
            "gradual_drift: non-finite coefficients");
    const double T = static_cast<double>(series.size());
    std::vector<double> out(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double frac = static_cast<double>(i + 1) / T;  // t/T with t = 1..T
        out[i] = (1.0 + kappa * frac) * series[i] + mu0 + nu * frac;
    }
    return out;
}

GradualCoeffs calibrate_gradual(double train_mean, double train_std, std::size_t segment_length,
                                double mean_target_per_1000, double std_target_per_1000) {
    require(train_std > 0.0, "calibrate_gradual: non-positive training std");
    require(segment_length > 0, "calibrate_gradual: empty segment");
    const double horizon = static_cast<double>(segment_length) / 1000.0;
    GradualCoeffs c;
    c.kappa = std_target_per_1000 * horizon;
    c.nu = mean_target_per_1000 * horizon * train_std - c.kappa * train_mean;
    c.mu0 = 0.0;
    return c;
}

std::vector<std::pair<std::size_t, std::size_t>> sample_segments(std::size_t series_length,
                                                                 std::size_t n_segments,
                                                                 std::size_t len_lo,
                                                                 std::size_t len_hi, Rng& rng) {
    require(len_lo >= 1 && len_lo <= len_hi, "sample_segments: bad length range");
    require(len_hi <= series_length, "sample_segments: segments longer than series");
    std::vector<std::pair<std::size_t, std::size_t>> segs;
    const int max_tries = 10000;
    int tries = 0;
    while (segs.size() < n_segments) {
        if (++tries > max_tries)
            throw Error("sample_segments: cannot place non-overlapping segments");
        const std::size_t len = len_lo + rng.uniform_index(len_hi - len_lo + 1);
        const std::size_t start = rng.uniform_index(series_length - len + 1);
        bool clash = false;
        for (const auto& s : segs)
            if (start < s.first + s.second && s.first < start + len) {
                clash = true;
                break;
            }
        if (!clash) segs.emplace_back(start, len);
    }
    std::sort(segs.begin(), segs.end());
    return segs;
}

NoiseInflationResult noise_inflation(const std::vector<double>& series, double k,
                                     const std::vector<std::pair<std::size_t, std::size_t>>& segments,
                                     double sigma_base, Rng& rng) {
    require(k > 0.0, "noise_inflation: k must be > 0");
    require(sigma_base >= 0.0, "noise_inflation: sigma must be >= 0");
    NoiseInflationResult res;
    res.series = series;
    res.mask.assign(series.size(), 0);
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto [start, len] = segments[i];
        if (start + len > series.size())
            throw InputError("noise_inflation: segment exceeds series bounds");
        for (std::size_t j = i + 1; j < segments.size(); ++j)
            if (start < segments[j].first + segments[j].second &&
                segments[j].first < start + len)
                throw InputError("noise_inflation: overlapping segments");
        for (std::size_t t = start; t < start + len; ++t) res.mask[t] = 1;
    }
    if (sigma_base == 0.0) return res;
    for (std::size_t t = 0; t < series.size(); ++t) {
        const double sd = res.mask[t] ? k * sigma_base : sigma_base;
        res.series[t] += rng.normal(0.0, sd);
    }
    return res;
}

StructuralResult structural_switch(std::size_t length, double period, int harmonics,
                                   std::vector<std::size_t> change_points,
                                   const RedrawBounds& bounds, double sigma, Rng& rng,
                                   const std::vector<double>& initial_amplitudes,
                                   const std::vector<double>& initial_phases) {
    require(length >= 1, "structural_switch: empty series");
    require(period > 0.0, "structural_switch: period must be > 0");
    require(harmonics >= 1, "structural_switch: need at least one harmonic");
    require(sigma >= 0.0, "structural_switch: sigma must be >= 0");
    require(bounds.amp_lo > 0.0 && bounds.amp_lo <= bounds.amp_hi,
            "structural_switch: bad redraw bounds");
    for (std::size_t j = 0; j < change_points.size(); ++j) {
        if (change_points[j] == 0 || change_points[j] >= length)
            throw InputError("structural_switch: change point outside (0, length)");
        if (j > 0 && change_points[j] <= change_points[j - 1])
            throw InputError("structural_switch: change points must be strictly increasing");
    }

    const auto M = static_cast<std::size_t>(harmonics);
    std::vector<double> amp(M, 1.0), phase(M, 0.0);
    if (!initial_amplitudes.empty()) {
        require(initial_amplitudes.size() == M, "structural_switch: amplitude count != harmonics");
        amp = initial_amplitudes;
    }
    if (!initial_phases.empty()) {
        require(initial_phases.size() == M, "structural_switch: phase count != harmonics");
        phase = initial_phases;
    }

    constexpr double two_pi = 6.283185307179586476925286766559;
    StructuralResult res;
    res.series.resize(length);
    res.change_points = change_points;

    std::size_t next_cp = 0;
    for (std::size_t t = 0; t < length; ++t) {
        if (next_cp < change_points.size() && t == change_points[next_cp]) {
            for (std::size_t m = 0; m < M; ++m) {
                amp[m] *= rng.uniform(bounds.amp_lo, bounds.amp_hi);
                phase[m] = rng.uniform(0.0, two_pi);
            }
            ++next_cp;
        }
        double c = 0.0;
        for (std::size_t m = 0; m < M; ++m)
            c += amp[m] * std::cos(two_pi * static_cast<double>(m + 1) *
                                       static_cast<double>(t) / period +
                                   phase[m]);
        res.series[t] = c + (sigma > 0.0 ? rng.normal(0.0, sigma) : 0.0);
    }
    return res;
}

// ---------------------------------------------------------------------------

void ShiftSpec::validate() const {
    require(mean_target_per_1000 >= 0.0 && std_target_per_1000 >= 0.0,
            "shift: drift targets must be >= 0");
    if (kind == ShiftKind::NoiseInflation) {
        require(noise_k > 0.0, "shift: noise multiplier must be > 0");
        require(noise_segments >= 1, "shift: need at least one segment");
        require(segment_len_lo >= 1 && segment_len_lo <= segment_len_hi,
                "shift: bad segment length range");
    }
    if (kind == ShiftKind::Structural) {
        require(period > 0.0 && harmonics >= 1, "shift: bad seasonal parameters");
        require(change_point_count >= 0, "shift: bad change point count");
        require(structural_sigma >= 0.0, "shift: sigma must be >= 0");
    }
}

namespace {

void channel_moments(const std::vector<double>& ch, std::size_t n, double& mean, double& sd) {
    require(n >= 2, "shift calibration: too few training rows");
    mean = 0.0;
    for (std::size_t t = 0; t < n; ++t) mean += ch[t];
    mean /= static_cast<double>(n);
    double v = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double d = ch[t] - mean;
        v += d * d;
    }
    sd = std::sqrt(v / static_cast<double>(n));
    require(sd > 0.0, "shift calibration: zero-variance channel");
}

// residual std after removing a centered moving-average trend (window ~ P)
double residual_std(const std::vector<double>& ch, std::size_t n, std::size_t window) {
    if (window < 2) window = 2;
    if (window > n) window = n;
    double sum = 0.0;
    std::size_t cnt = 0;
    const std::size_t half = window / 2;
    for (std::size_t t = half; t + half < n; ++t) {
        double ma = 0.0;
        for (std::size_t j = t - half; j < t - half + window; ++j) ma += ch[j];
        ma /= static_cast<double>(window);
        const double r = ch[t] - ma;
        sum += r * r;
        ++cnt;
    }
    require(cnt > 0, "shift calibration: series too short for residual std");
    return std::sqrt(sum / static_cast<double>(cnt));
}

}  // namespace

ShiftMetadata apply_shift(SeriesFrame& frame, const ShiftSpec& spec, std::size_t first_row) {
    spec.validate();
    require(first_row < frame.rows(), "apply_shift: nothing to shift");
    ShiftMetadata meta;
    meta.kind = spec.kind;
    meta.seed = spec.seed;
    meta.first_shifted_row = first_row;

    const std::size_t seg_len = frame.rows() - first_row;
    Rng rng(derive_seed(spec.seed, "shiftgen"));

    switch (spec.kind) {
        case ShiftKind::Gradual: {
            for (std::size_t c = 0; c < frame.channel_count(); ++c) {
                auto& ch = frame.channel(c);
                double m, sd;
                channel_moments(ch, std::max<std::size_t>(first_row, 2), m, sd);
                const auto coef = calibrate_gradual(m, sd, seg_len, spec.mean_target_per_1000,
                                                    spec.std_target_per_1000);
                std::vector<double> seg(ch.begin() + static_cast<std::ptrdiff_t>(first_row),
                                        ch.end());
                auto shifted = gradual_drift(seg, coef.kappa, coef.nu, coef.mu0 + spec.mu0);
                std::copy(shifted.begin(), shifted.end(),
                          ch.begin() + static_cast<std::ptrdiff_t>(first_row));
                meta.gradual.push_back(coef);
            }
            break;
        }
        case ShiftKind::NoiseInflation: {
            auto segments = sample_segments(seg_len, static_cast<std::size_t>(spec.noise_segments),
                                            std::min<std::size_t>(spec.segment_len_lo, seg_len),
                                            std::min<std::size_t>(spec.segment_len_hi, seg_len),
                                            rng);
            meta.segments = segments;
            for (std::size_t c = 0; c < frame.channel_count(); ++c) {
                auto& ch = frame.channel(c);
                const double sigma_base =
                    residual_std(ch, std::max<std::size_t>(first_row, 2),
                                 static_cast<std::size_t>(std::lround(spec.period)));
                std::vector<double> seg(ch.begin() + static_cast<std::ptrdiff_t>(first_row),
                                        ch.end());
                auto res = noise_inflation(seg, spec.noise_k, segments, sigma_base, rng);
                std::copy(res.series.begin(), res.series.end(),
                          ch.begin() + static_cast<std::ptrdiff_t>(first_row));
            }
            break;
        }
        case ShiftKind::Structural: {
            std::vector<std::size_t> cps;
            if (spec.change_point_count > 0) {
                // evenly spread draws, kept strictly increasing
                for (int j = 0; j < spec.change_point_count; ++j) {
                    const double lo = static_cast<double>(j + 1) /
                                      (spec.change_point_count + 1.0) * 0.5;
                    const double hi = static_cast<double>(j + 1) /
                                      (spec.change_point_count + 1.0) * 1.5;
                    auto cp = static_cast<std::size_t>(
                        std::clamp(rng.uniform(lo, hi), 0.05, 0.95) *
                        static_cast<double>(seg_len));
                    if (!cps.empty() && cp <= cps.back()) cp = cps.back() + 1;
                    if (cp >= seg_len) cp = seg_len - 1;
                    cps.push_back(cp);
                }
            }
            meta.change_points = cps;
            for (std::size_t c = 0; c < frame.channel_count(); ++c) {
                auto& ch = frame.channel(c);
                double m, sd;
                channel_moments(ch, std::max<std::size_t>(first_row, 2), m, sd);
                auto res = structural_switch(seg_len, spec.period, spec.harmonics, cps,
                                             spec.redraw, spec.structural_sigma, rng);
                // rescale to the channel's training moments (mean preserved)
                for (std::size_t t = 0; t < seg_len; ++t)
                    ch[first_row + t] = m + sd * res.series[t];
            }
            break;
        }
    }
    frame.set_provenance(Provenance::Shifted);
    return meta;
}

std::string ShiftMetadata::to_json() const {
    std::ostringstream os;
    os << "{\n  \"kind\": \"" << shift_kind_name(kind) << "\",\n  \"seed\": " << seed
       << ",\n  \"first_shifted_row\": " << first_shifted_row;
    if (!gradual.empty()) {
        os << ",\n  \"gradual\": [";
        for (std::size_t i = 0; i < gradual.size(); ++i) {
            if (i) os << ", ";
            os << "{\"kappa\": " << format_double(gradual[i].kappa)
               << ", \"nu\": " << format_double(gradual[i].nu)
               << ", \"mu0\": " << format_double(gradual[i].mu0) << "}";
        }
        os << "]";
    }
    if (!segments.empty()) {
        os << ",\n  \"segments\": [";
        for (std::size_t i = 0; i < segments.size(); ++i) {
            if (i) os << ", ";
            os << "[" << segments[i].first << ", " << segments[i].second << "]";
        }
        os << "]";
    }
    if (!change_points.empty()) {
        os << ",\n  \"change_points\": [";
        for (std::size_t i = 0; i < change_points.size(); ++i) {
            if (i) os << ", ";
            os << change_points[i];
        }
        os << "]";
    }
    os << "\n}\n";
    return os.str();
}

}  // namespace tta
