#pragma once

#include <string>
#include <vector>

#include "tta/common.hpp"
#include "tta/dataset.hpp"

namespace tta {

enum class TransformKind { AmplitudeScale, GaussianJitter, TimeJitter, TimeCutout };

TransformKind parse_transform(const std::string& name);
std::string transform_name(TransformKind k);

// Fixed-parameter primitives. All preserve the L x d shape and read nothing
// outside the window.
void amplitude_scale(double* window, int L, int d, double factor);
void gaussian_jitter(double* window, int L, int d, const std::vector<double>& sd_per_feature,
                     Rng& rng);
// shift in {-1,0,+1}; the vacated edge repeats the boundary value
void time_shift(double* window, int L, int d, int shift);
// replaces [start, start+len) with the per-feature window mean
void time_cutout(double* window, int L, int d, int start, int len);

struct TransformSpec {
    TransformKind kind = TransformKind::AmplitudeScale;
    double scale_lo = 0.95, scale_hi = 1.05;
    double jitter_rel_sd = 0.01;  // times the per-feature training std
    int max_shift = 1;
    int max_cutout = 5;
};

// The enabled weak-transform set plus the training stds the jitter needs.
struct AugmentationSet {
    std::vector<TransformKind> kinds = {TransformKind::AmplitudeScale};
    std::vector<double> train_std;  // per feature, required when jitter enabled
    TransformSpec params;

    static AugmentationSet from_names(const std::vector<std::string>& names,
                                      std::vector<double> train_std);
};

// Applies one transform with parameters drawn from rng (per window).
void apply_transform(double* window, int L, int d, const TransformSpec& spec,
                     const std::vector<double>& train_std, Rng& rng);

// Samples a transform kind from the set, then applies it to every window of
// the batch with per-window parameter draws.
WindowBatch transform_batch(const WindowBatch& batch, const AugmentationSet& set, Rng& rng);

}  // namespace tta
