#include "tta/augment.hpp"

#include <algorithm>
#include <cmath>

namespace tta {

TransformKind parse_transform(const std::string& name) {
    if (name == "scale") return TransformKind::AmplitudeScale;
    if (name == "jitter") return TransformKind::GaussianJitter;
    if (name == "shift") return TransformKind::TimeJitter;
    if (name == "cutout") return TransformKind::TimeCutout;
    throw InputError("unknown transform '" + name + "'");
}

std::string transform_name(TransformKind k) {
    switch (k) {
        case TransformKind::AmplitudeScale: return "scale";
        case TransformKind::GaussianJitter: return "jitter";
        case TransformKind::TimeJitter: return "shift";
        case TransformKind::TimeCutout: return "cutout";
    }
    return "?";
}

void amplitude_scale(double* window, int L, int d, double factor) {
    const std::size_t n = static_cast<std::size_t>(L) * d;
    for (std::size_t i = 0; i < n; ++i) window[i] *= factor;
}

void gaussian_jitter(double* window, int L, int d, const std::vector<double>& sd_per_feature,
                     Rng& rng) {
    require(sd_per_feature.size() == static_cast<std::size_t>(d),
            "gaussian_jitter: std vector size mismatch");
    // layout [channel][time]
    for (int c = 0; c < d; ++c) {
        const double sd = sd_per_feature[static_cast<std::size_t>(c)];
        double* ch = window + static_cast<std::size_t>(c) * L;
        if (sd == 0.0) continue;
        for (int t = 0; t < L; ++t) ch[t] += rng.normal(0.0, sd);
    }
}

void time_shift(double* window, int L, int d, int shift) {
    require(shift >= -1 && shift <= 1, "time_shift: shift must be in {-1,0,+1}");
    if (shift == 0 || L < 2) return;
    for (int c = 0; c < d; ++c) {
        double* ch = window + static_cast<std::size_t>(c) * L;
        if (shift > 0) {
            for (int t = L - 1; t >= 1; --t) ch[t] = ch[t - 1];
            ch[0] = ch[1];  // already the old boundary value
        } else {
            for (int t = 0; t < L - 1; ++t) ch[t] = ch[t + 1];
            ch[L - 1] = ch[L - 2];
        }
    }
}

void time_cutout(double* window, int L, int d, int start, int len) {
    require(len >= 0 && start >= 0 && start + len <= L, "time_cutout: span out of bounds");
    if (len == 0) return;
    for (int c = 0; c < d; ++c) {
        double* ch = window + static_cast<std::size_t>(c) * L;
        double mean = 0.0;
        for (int t = 0; t < L; ++t) mean += ch[t];
        mean /= L;
        for (int t = start; t < start + len; ++t) ch[t] = mean;
    }
}

AugmentationSet AugmentationSet::from_names(const std::vector<std::string>& names,
                                            std::vector<double> train_std) {
    require(!names.empty(), "augmentation set must not be empty");
    AugmentationSet set;
    set.kinds.clear();
    for (const auto& n : names) set.kinds.push_back(parse_transform(n));
    set.train_std = std::move(train_std);
    return set;
}

void apply_transform(double* window, int L, int d, const TransformSpec& spec,
                     const std::vector<double>& train_std, Rng& rng) {
    switch (spec.kind) {
        case TransformKind::AmplitudeScale: {
            require(spec.scale_lo >= 0.9 && spec.scale_hi <= 1.1 && spec.scale_lo <= spec.scale_hi,
                    "amplitude scale range out of bounds");
            amplitude_scale(window, L, d, rng.uniform(spec.scale_lo, spec.scale_hi));
            break;
        }
        case TransformKind::GaussianJitter: {
            require(spec.jitter_rel_sd >= 0.0 && spec.jitter_rel_sd <= 0.1,
                    "jitter std out of bounds");
            std::vector<double> sd(train_std.size());
            for (std::size_t c = 0; c < train_std.size(); ++c)
                sd[c] = spec.jitter_rel_sd * train_std[c];
            gaussian_jitter(window, L, d, sd, rng);
            break;
        }
        case TransformKind::TimeJitter: {
            require(spec.max_shift == 1, "time jitter is defined for +-1 step");
            time_shift(window, L, d, rng.uniform_int(-1, 1));
            break;
        }
        case TransformKind::TimeCutout: {
            require(spec.max_cutout >= 1 && spec.max_cutout <= L, "cutout span out of bounds");
            const int len = rng.uniform_int(1, spec.max_cutout);
            const int start = rng.uniform_int(0, L - len);
            time_cutout(window, L, d, start, len);
            break;
        }
    }
}

WindowBatch transform_batch(const WindowBatch& batch, const AugmentationSet& set, Rng& rng) {
    require(!set.kinds.empty(), "transform_batch: empty augmentation set");
    TransformSpec spec = set.params;
    spec.kind = set.kinds[rng.uniform_index(set.kinds.size())];
    if (spec.kind == TransformKind::GaussianJitter)
        require(set.train_std.size() == static_cast<std::size_t>(batch.d),
                "transform_batch: jitter needs per-feature training stds");
    WindowBatch out = batch;
    for (std::size_t i = 0; i < out.count; ++i)
        apply_transform(out.window(i), out.L, out.d, spec, set.train_std, rng);
    return out;
}

}  // namespace tta
