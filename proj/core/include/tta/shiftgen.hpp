#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tta/common.hpp"
#include "tta/series.hpp"

namespace tta {

enum class ShiftKind { Gradual, NoiseInflation, Structural };
ShiftKind parse_shift_kind(const std::string& name);
std::string shift_kind_name(ShiftKind k);

// x_t = (1 + kappa t/T) * s_t + mu0 + nu t/T, t = 1..T, elementwise per call.
std::vector<double> gradual_drift(const std::vector<double>& series, double kappa, double nu,
                                  double mu0);

// Calibrates (kappa, nu) so the end-of-segment mean and std change equal
// `target_per_1000` training stds per thousand steps:
//   kappa       = s_target * T/1000
//   nu          = m_target * T/1000 * train_std - kappa * train_mean
struct GradualCoeffs {
    double kappa = 0.0;
    double nu = 0.0;
    double mu0 = 0.0;
};
GradualCoeffs calibrate_gradual(double train_mean, double train_std, std::size_t segment_length,
                                double mean_target_per_1000, double std_target_per_1000);

// Draws non-overlapping segments with lengths in [len_lo, len_hi] by
// rejection sampling of uniform starts.
std::vector<std::pair<std::size_t, std::size_t>> sample_segments(std::size_t series_length,
                                                                 std::size_t n_segments,
                                                                 std::size_t len_lo,
                                                                 std::size_t len_hi, Rng& rng);

// Adds N(0, sigma_base^2) noise everywhere and N(0, (k sigma_base)^2) inside
// the given segments; returns the per-step segment mask.
struct NoiseInflationResult {
    std::vector<double> series;
    std::vector<std::uint8_t> mask;  // 1 inside an inflated segment
};
NoiseInflationResult noise_inflation(const std::vector<double>& series, double k,
                                     const std::vector<std::pair<std::size_t, std::size_t>>& segments,
                                     double sigma_base, Rng& rng);

// Piecewise-stationary seasonal series: c_t = sum_m A_m cos(2 pi m t/P + phi_m)
// plus N(0, sigma^2) noise; amplitudes/phases are redrawn at each change point
// (amplitude scale uniform in redraw bounds x original, phase uniform in
// [0, 2pi)); no constant term, so the unconditional mean stays 0.
struct StructuralResult {
    std::vector<double> series;
    std::vector<std::size_t> change_points;
};
struct RedrawBounds {
    double amp_lo = 0.5, amp_hi = 1.5;
};
StructuralResult structural_switch(std::size_t length, double period, int harmonics,
                                   std::vector<std::size_t> change_points,
                                   const RedrawBounds& bounds, double sigma, Rng& rng,
                                   const std::vector<double>& initial_amplitudes = {},
                                   const std::vector<double>& initial_phases = {});

// ---------------------------------------------------------------------------
// frame-level application for the pipeline / CLI

struct ShiftSpec {
    ShiftKind kind = ShiftKind::Gradual;
    // gradual
    double mean_target_per_1000 = 0.3;
    double std_target_per_1000 = 0.3;
    double mu0 = 0.0;
    // noise inflation
    double noise_k = 1.5;            // in {1.5, 2.0} on the reference grid
    int noise_segments = 3;
    std::size_t segment_len_lo = 96;
    std::size_t segment_len_hi = 192;
    // structural
    double period = 24.0;
    int harmonics = 2;
    int change_point_count = 2;      // J in {2, 3} on the reference grid
    RedrawBounds redraw;
    double structural_sigma = 0.1;

    std::uint64_t seed = 0;
    bool apply_to_test_only = true;  // pipeline: shift the test rows only

    void validate() const;
};

struct ShiftMetadata {
    ShiftKind kind = ShiftKind::Gradual;
    std::uint64_t seed = 0;
    std::size_t first_shifted_row = 0;
    // per channel coefficients (gradual), segments (noise), change points (structural)
    std::vector<GradualCoeffs> gradual;
    std::vector<std::pair<std::size_t, std::size_t>> segments;
    std::vector<std::size_t> change_points;
    std::string to_json() const;
};

// Applies the shift channel-wise to rows [first_row, rows). Training statistics
// (per channel mean/std over [0, first_row)) calibrate the generators; for
// `structural` the channels are replaced by freshly generated seasonal series
// scaled to the channel's training moments.
ShiftMetadata apply_shift(SeriesFrame& frame, const ShiftSpec& spec, std::size_t first_row);

}  // namespace tta
