#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tta/augment.hpp"
#include "tta/backbone.hpp"
#include "tta/common.hpp"
#include "tta/dataset.hpp"

namespace tta {

enum class AdaptMode { NoTta, BnStats, NormOnly };
AdaptMode parse_adapt_mode(const std::string& name);
std::string adapt_mode_name(AdaptMode m);

enum class UncertaintyKind { MeanEntropy, MeanAugmentationVariance };

struct AdaptConfig {
    AdaptMode mode = AdaptMode::NormOnly;
    int context_w = 64;        // W
    int steps = 5;             // S
    double learning_rate = 1e-4;
    double alpha = 1.0;
    double beta = 1.0;
    double gamma_drift = 1e-3;
    double ema_rho = 0.9;
    int k_transforms = 4;      // K for variance/uncertainty
    double tau_quantile = 0.8;
    AugmentationSet augmentations;

    void validate() const;
};

struct UncertaintyProxy {
    UncertaintyKind kind = UncertaintyKind::MeanEntropy;
    double value = 0.0;  // nats, or squared prediction units
};

struct DayLog {
    std::int64_t day = 0;
    std::string stamp;
    AdaptMode mode = AdaptMode::NoTta;
    double u = std::nan("");
    double tau = std::nan("");
    bool fallback = false;
    double loss_total = std::nan("");
    double loss_primary = std::nan("");    // entropy (cls) or variance (reg)
    double loss_secondary = std::nan("");  // consistency (cls) or distillation (reg)
    double loss_drift = std::nan("");
    double delta_phi_norm = 0.0;
    int steps_run = 0;
    double prediction = std::nan("");  // p(up) or summed H-step output
};

struct AdaptState {
    std::vector<double> phi_prev;  // previous day's BN affine parameters
    Backbone teacher;              // EMA teacher, full copy
    double tau = 0.0;
    std::int64_t day_counter = 0;
    std::vector<DayLog> log;       // append-only

    static AdaptState init(const Backbone& net, double tau);
};

// ---------------------------------------------------------------------------
// unsupervised losses (probs laid out [B][2], predictions [B][dim])

// mean over the batch of -sum_c p_c log p_c; rows must sum to 1 within 1e-4
double entropy_loss(const std::vector<double>& probs);

// mean squared Euclidean distance between matching probability rows
double consistency_loss(const std::vector<double>& probs, const std::vector<double>& probs_aug);

// mean over windows of the K-transform sample variance (denominator K-1);
// preds_per_transform[k][i] is the (H-summed) prediction of window i under
// transform k
double variance_loss(const std::vector<std::vector<double>>& preds_per_transform);

// mean over the batch of squared Euclidean distance student vs teacher
double distill_loss(const std::vector<double>& student, const std::vector<double>& teacher,
                    int dim);

// elementwise rho*teacher + (1-rho)*student
std::vector<double> ema_update(const std::vector<double>& teacher,
                               const std::vector<double>& student, double rho);

// gamma_drift * ||phi - phi_prev||^2
double drift_penalty(const std::vector<double>& phi, const std::vector<double>& phi_prev,
                     double gamma_drift);

// alpha*primary + beta*secondary + drift; negative weights rejected
double total_loss(double primary, double secondary, double alpha, double beta, double drift);

// ---------------------------------------------------------------------------

UncertaintyProxy uncertainty(const Backbone& net, const WindowBatch& batch, UncertaintyKind kind,
                             const AugmentationSet& augmentations, int k_transforms, Rng& rng);

// empirical quantile with linear interpolation between order statistics
double calibrate_threshold(std::vector<double> validation_uncertainties, double tau_quantile);

// gradient-free replacement of every BN layer's running moments by the
// current batch's moments; affine parameters untouched
void refresh_bn_stats(Backbone& net, const WindowBatch& batch);

// closed-form restorative affine under a pure location-scale shift
void moment_match_affine(double gamma, double beta, double mu, double sigma, double mu_shift,
                         double sigma_shift, double& gamma_out, double& beta_out);

// ---------------------------------------------------------------------------
// the per-day loop

struct DayOutcome {
    std::vector<double> output;  // [out_dim] for the day's window
    std::vector<double> probs;   // [2] for classification
    DayLog log;
};

// Runs one deployment day: computes the uncertainty proxy, falls back to a
// BN-statistics refresh when it exceeds tau, otherwise takes S gradient steps
// on the BN affine subset, then predicts today's window. Mutates net/state.
DayOutcome adapt_day(Backbone& net, AdaptState& state, const WindowBatch& context,
                     const WindowBatch& today, std::int64_t today_index, const AdaptConfig& cfg,
                     Rng& rng);

// Append-only tabular per-day log (CSV).
void write_adapt_log(const std::string& path, const std::vector<DayLog>& log);

}  // namespace tta
