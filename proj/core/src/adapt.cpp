#include "tta/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace tta {

AdaptMode parse_adapt_mode(const std::string& name) {
    if (name == "no_tta") return AdaptMode::NoTta;
    if (name == "bn_stats") return AdaptMode::BnStats;
    if (name == "norm_only") return AdaptMode::NormOnly;
    throw InputError("unknown adaptation mode '" + name + "'");
}

std::string adapt_mode_name(AdaptMode m) {
    switch (m) {
        case AdaptMode::NoTta: return "no_tta";
        case AdaptMode::BnStats: return "bn_stats";
        case AdaptMode::NormOnly: return "norm_only";
    }
    return "?";
}

void AdaptConfig::validate() const {
    require(context_w >= 1, "adapt: W must be >= 1");
    require(steps >= 0, "adapt: S must be >= 0");
    require(learning_rate >= 0.0, "adapt: learning rate must be >= 0");
    require(ema_rho >= 0.0 && ema_rho <= 1.0, "adapt: rho must lie in [0,1]");
    require(tau_quantile > 0.0 && tau_quantile < 1.0, "adapt: quantile must lie in (0,1)");
    require(alpha >= 0.0 && beta >= 0.0, "adapt: loss weights must be >= 0");
    require(gamma_drift >= 0.0, "adapt: drift coefficient must be >= 0");
    require(k_transforms >= 2, "adapt: K must be >= 2");
}

AdaptState AdaptState::init(const Backbone& net, double tau) {
    AdaptState s;
    s.phi_prev = net.phi();
    s.teacher = net;
    s.tau = tau;
    return s;
}

// ---------------------------------------------------------------------------
// losses

namespace {

constexpr double kProbFloor = 1e-12;

void check_prob_rows(const std::vector<double>& probs, const char* who) {
    require(!probs.empty() && probs.size() % 2 == 0, std::string(who) + ": expected [B][2] rows");
    for (std::size_t i = 0; i < probs.size(); i += 2) {
        const double s = probs[i] + probs[i + 1];
        if (std::fabs(s - 1.0) > 1e-4)
            throw InputError(std::string(who) + ": row " + std::to_string(i / 2) +
                             " is not a distribution (sum " + format_double(s) + ")");
    }
}

double row_entropy(double p0, double p1) {
    const double a = std::clamp(p0, kProbFloor, 1.0);
    const double b = std::clamp(p1, kProbFloor, 1.0);
    return -(p0 * std::log(a) + p1 * std::log(b));
}

}  // namespace

double entropy_loss(const std::vector<double>& probs) {
    check_prob_rows(probs, "entropy_loss");
    double s = 0.0;
    const std::size_t B = probs.size() / 2;
    for (std::size_t i = 0; i < B; ++i) s += row_entropy(probs[2 * i], probs[2 * i + 1]);
    return s / static_cast<double>(B);
}

double consistency_loss(const std::vector<double>& probs, const std::vector<double>& probs_aug) {
    if (probs.size() != probs_aug.size()) throw ShapeError("consistency_loss: shape mismatch");
    check_prob_rows(probs, "consistency_loss");
    check_prob_rows(probs_aug, "consistency_loss");
    const std::size_t B = probs.size() / 2;
    double s = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double d = probs[i] - probs_aug[i];
        s += d * d;
    }
    return s / static_cast<double>(B);
}

double variance_loss(const std::vector<std::vector<double>>& preds_per_transform) {
    const std::size_t K = preds_per_transform.size();
    if (K < 2) throw InputError("variance_loss: K must be >= 2");
    const std::size_t B = preds_per_transform[0].size();
    require(B >= 1, "variance_loss: empty batch");
    for (const auto& p : preds_per_transform)
        if (p.size() != B) throw ShapeError("variance_loss: ragged predictions");
    double total = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        double mean = 0.0;
        for (std::size_t k = 0; k < K; ++k) mean += preds_per_transform[k][i];
        mean /= static_cast<double>(K);
        double v = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double d = preds_per_transform[k][i] - mean;
            v += d * d;
        }
        total += v / static_cast<double>(K - 1);
    }
    return total / static_cast<double>(B);
}

double distill_loss(const std::vector<double>& student, const std::vector<double>& teacher,
                    int dim) {
    if (student.size() != teacher.size()) throw ShapeError("distill_loss: shape mismatch");
    require(dim >= 1 && student.size() % static_cast<std::size_t>(dim) == 0,
            "distill_loss: bad dimension");
    const std::size_t B = student.size() / static_cast<std::size_t>(dim);
    double s = 0.0;
    for (std::size_t i = 0; i < student.size(); ++i) {
        const double d = student[i] - teacher[i];
        s += d * d;
    }
    return s / static_cast<double>(B);
}

std::vector<double> ema_update(const std::vector<double>& teacher,
                               const std::vector<double>& student, double rho) {
    if (teacher.size() != student.size()) throw ShapeError("ema_update: shape mismatch");
    require(rho >= 0.0 && rho <= 1.0, "ema_update: rho outside [0,1]");
    std::vector<double> out(teacher.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = rho * teacher[i] + (1.0 - rho) * student[i];
    return out;
}

double drift_penalty(const std::vector<double>& phi, const std::vector<double>& phi_prev,
                     double gamma_drift) {
    if (phi.size() != phi_prev.size()) throw ShapeError("drift_penalty: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i) {
        const double d = phi[i] - phi_prev[i];
        s += d * d;
    }
    return gamma_drift * s;
}

double total_loss(double primary, double secondary, double alpha, double beta, double drift) {
    require(alpha >= 0.0 && beta >= 0.0, "total_loss: negative weights rejected");
    return alpha * primary + beta * secondary + drift;
}

// ---------------------------------------------------------------------------
// uncertainty + calibration

namespace {

// sum of the H-step outputs per window
std::vector<double> summed_outputs(const ForwardResult& fr, std::size_t B, int out_dim) {
    std::vector<double> s(B, 0.0);
    for (std::size_t i = 0; i < B; ++i)
        for (int h = 0; h < out_dim; ++h)
            s[i] += fr.output[i * static_cast<std::size_t>(out_dim) + h];
    return s;
}

}  // namespace

UncertaintyProxy uncertainty(const Backbone& net, const WindowBatch& batch, UncertaintyKind kind,
                             const AugmentationSet& augmentations, int k_transforms, Rng& rng) {
    require(batch.count >= 1, "uncertainty: empty batch");
    UncertaintyProxy u;
    u.kind = kind;
    if (kind == UncertaintyKind::MeanEntropy) {
        auto fr = net.forward(batch, BnMode::RunningStats, false);
        require(!fr.probs.empty(), "uncertainty: entropy proxy needs a classification head");
        u.value = entropy_loss(fr.probs);
    } else {
        require(k_transforms >= 2, "uncertainty: variance proxy needs K >= 2");
        std::vector<std::vector<double>> preds;
        preds.reserve(static_cast<std::size_t>(k_transforms));
        for (int k = 0; k < k_transforms; ++k) {
            auto aug = transform_batch(batch, augmentations, rng);
            auto fr = net.forward(aug, BnMode::RunningStats, false);
            preds.push_back(summed_outputs(fr, batch.count, net.head().out_dim()));
        }
        u.value = variance_loss(preds);
    }
    return u;
}

double calibrate_threshold(std::vector<double> values, double tau_quantile) {
    require(!values.empty(), "calibrate_threshold: empty sequence");
    require(all_finite(values), "calibrate_threshold: non-finite value");
    require(tau_quantile > 0.0 && tau_quantile <= 1.0, "calibrate_threshold: bad quantile");
    std::sort(values.begin(), values.end());
    if (values.size() == 1) return values[0];
    const double pos = tau_quantile * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= values.size()) return values.back();
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

void refresh_bn_stats(Backbone& net, const WindowBatch& batch) { net.refresh_bn_stats(batch); }

void moment_match_affine(double gamma, double beta, double mu, double sigma, double mu_shift,
                         double sigma_shift, double& gamma_out, double& beta_out) {
    require(sigma_shift > 0.0, "moment_match_affine: shifted sigma must be > 0");
    gamma_out = gamma * sigma / sigma_shift;
    beta_out = beta + gamma * (mu - mu_shift) / sigma_shift;
}

// ---------------------------------------------------------------------------
// per-day adaptation

namespace {

// dL/dz rows from dL/dp rows through the softmax Jacobian
void softmax_vjp(const std::vector<double>& probs, const std::vector<double>& dprob,
                 std::vector<double>& dlogit) {
    dlogit.assign(probs.size(), 0.0);
    for (std::size_t i = 0; i < probs.size(); i += 2) {
        const double inner = dprob[i] * probs[i] + dprob[i + 1] * probs[i + 1];
        dlogit[i] = probs[i] * (dprob[i] - inner);
        dlogit[i + 1] = probs[i + 1] * (dprob[i + 1] - inner);
    }
}

struct StepLosses {
    double primary = std::nan("");
    double secondary = std::nan("");
    double drift = std::nan("");
    double total = std::nan("");
};

// One unsupervised gradient step on phi. Returns false when the loss went
// non-finite (caller falls back).
bool gradient_step(Backbone& net, const AdaptState& state, const WindowBatch& context,
                   const AdaptConfig& cfg, Rng& rng, StepLosses& out) {
    const bool cls = net.head().kind == HeadKind::Classification;
    const std::size_t B = context.count;
    const int out_dim = net.head().out_dim();
    const auto phi = net.phi();

    std::vector<double> phi_grad(net.phi_dim(), 0.0);
    auto add = [&phi_grad](const std::vector<double>& g, double scale) {
        for (std::size_t i = 0; i < g.size(); ++i) phi_grad[i] += scale * g[i];
    };

    if (cls) {
        auto fr = net.forward(context, BnMode::RunningStats, true);
        auto aug = transform_batch(context, cfg.augmentations, rng);
        auto fr_aug = net.forward(aug, BnMode::RunningStats, true);

        out.primary = entropy_loss(fr.probs);
        out.secondary = consistency_loss(fr.probs, fr_aug.probs);

        // entropy: dH/dz_j = -p_j (log p_j + H_row), averaged over the batch
        std::vector<double> dz_plain(fr.probs.size(), 0.0);
        const double invB = 1.0 / static_cast<double>(B);
        for (std::size_t i = 0; i < B; ++i) {
            const double p0 = fr.probs[2 * i], p1 = fr.probs[2 * i + 1];
            const double H = row_entropy(p0, p1);
            const double l0 = std::log(std::clamp(p0, kProbFloor, 1.0));
            const double l1 = std::log(std::clamp(p1, kProbFloor, 1.0));
            dz_plain[2 * i] += cfg.alpha * invB * (-p0 * (l0 + H));
            dz_plain[2 * i + 1] += cfg.alpha * invB * (-p1 * (l1 + H));
        }
        // consistency gradient flows through both branches
        std::vector<double> dp_plain(fr.probs.size()), dp_aug(fr.probs.size());
        for (std::size_t i = 0; i < fr.probs.size(); ++i) {
            const double g = 2.0 * invB * (fr.probs[i] - fr_aug.probs[i]);
            dp_plain[i] = cfg.beta * g;
            dp_aug[i] = -cfg.beta * g;
        }
        std::vector<double> tmp;
        softmax_vjp(fr.probs, dp_plain, tmp);
        for (std::size_t i = 0; i < tmp.size(); ++i) dz_plain[i] += tmp[i];
        std::vector<double> dz_aug;
        softmax_vjp(fr_aug.probs, dp_aug, dz_aug);

        add(net.backward_phi(fr.cache, dz_plain), 1.0);
        add(net.backward_phi(fr_aug.cache, dz_aug), 1.0);
    } else {
        const int K = cfg.k_transforms;
        std::vector<ForwardResult> frs;
        frs.reserve(static_cast<std::size_t>(K));
        std::vector<std::vector<double>> sums;
        for (int k = 0; k < K; ++k) {
            auto aug = transform_batch(context, cfg.augmentations, rng);
            frs.push_back(net.forward(aug, BnMode::RunningStats, true));
            sums.push_back(summed_outputs(frs.back(), B, out_dim));
        }
        out.primary = variance_loss(sums);

        // dVar/dyhat_m = 2 (yhat_m - mean) / (K-1), each H step shares dyhat
        const double invB = 1.0 / static_cast<double>(B);
        for (int k = 0; k < K; ++k) {
            std::vector<double> dz(B * static_cast<std::size_t>(out_dim), 0.0);
            for (std::size_t i = 0; i < B; ++i) {
                double mean = 0.0;
                for (int m = 0; m < K; ++m) mean += sums[static_cast<std::size_t>(m)][i];
                mean /= static_cast<double>(K);
                const double g = cfg.alpha * invB * 2.0 *
                                 (sums[static_cast<std::size_t>(k)][i] - mean) /
                                 static_cast<double>(K - 1);
                for (int h = 0; h < out_dim; ++h)
                    dz[i * static_cast<std::size_t>(out_dim) + h] = g;
            }
            add(net.backward_phi(frs[static_cast<std::size_t>(k)].cache, dz), 1.0);
        }

        if (cfg.beta > 0.0) {
            auto fr_student = net.forward(context, BnMode::RunningStats, true);
            auto fr_teacher = state.teacher.forward(context, BnMode::RunningStats, false);
            out.secondary = distill_loss(fr_student.output, fr_teacher.output, out_dim);
            std::vector<double> dz(fr_student.output.size());
            for (std::size_t i = 0; i < dz.size(); ++i)
                dz[i] = cfg.beta * invB * 2.0 * (fr_student.output[i] - fr_teacher.output[i]);
            add(net.backward_phi(fr_student.cache, dz), 1.0);
        } else {
            out.secondary = 0.0;
        }
    }

    out.drift = drift_penalty(phi, state.phi_prev, cfg.gamma_drift);
    out.total = total_loss(out.primary, out.secondary, cfg.alpha, cfg.beta, out.drift);
    if (!std::isfinite(out.total)) return false;

    // drift gradient + SGD step on phi only
    auto phi_new = phi;
    for (std::size_t i = 0; i < phi_new.size(); ++i) {
        const double g =
            phi_grad[i] + 2.0 * cfg.gamma_drift * (phi[i] - state.phi_prev[i]);
        phi_new[i] -= cfg.learning_rate * g;
    }
    if (!all_finite(phi_new)) return false;
    net.set_phi(phi_new);
    return true;
}

double phi_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace

DayOutcome adapt_day(Backbone& net, AdaptState& state, const WindowBatch& context,
                     const WindowBatch& today, std::int64_t today_index, const AdaptConfig& cfg,
                     Rng& rng) {
    cfg.validate();
    require(today.count == 1, "adapt_day: today must be a single window");
    require(context.count >= 1, "adapt_day: empty context");
    require(state.phi_prev.size() == net.phi_dim(), "adapt_day: state/params phi mismatch");
    for (auto idx : context.indices)
        if (idx > today_index)
            throw CausalityError("adapt_day: context window " + std::to_string(idx) +
                                 " lies beyond day " + std::to_string(today_index));

    const bool cls = net.head().kind == HeadKind::Classification;
    const UncertaintyKind ukind =
        cls ? UncertaintyKind::MeanEntropy : UncertaintyKind::MeanAugmentationVariance;

    DayOutcome day;
    day.log.day = today_index;
    day.log.mode = cfg.mode;
    day.log.tau = state.tau;

    const auto phi_start = net.phi();

    if (cfg.mode == AdaptMode::BnStats) {
        net.refresh_bn_stats(context);
    } else if (cfg.mode == AdaptMode::NormOnly) {
        const auto u = uncertainty(net, context, ukind, cfg.augmentations, cfg.k_transforms, rng);
        day.log.u = u.value;
        if (u.value > state.tau) {
            day.log.fallback = true;
            net.refresh_bn_stats(context);
        } else {
            bool aborted = false;
            StepLosses losses;
            for (int s = 0; s < cfg.steps; ++s) {
                if (!gradient_step(net, state, context, cfg, rng, losses)) {
                    aborted = true;
                    break;
                }
                ++day.log.steps_run;
            }
            if (aborted) {
                // do-no-harm: restore phi, refresh statistics, flag the day
                net.set_phi(phi_start);
                day.log.fallback = true;
                day.log.steps_run = 0;
                net.refresh_bn_stats(context);
            } else {
                day.log.loss_primary = losses.primary;
                day.log.loss_secondary = losses.secondary;
                day.log.loss_drift = losses.drift;
                day.log.loss_total = losses.total;
                state.phi_prev = net.phi();
                state.teacher.set_all_values(
                    ema_update(state.teacher.all_values(), net.all_values(), cfg.ema_rho));
            }
        }
    }

    day.log.delta_phi_norm = phi_distance(net.phi(), phi_start);

    auto fr = net.forward(today, BnMode::RunningStats, false);
    day.output = fr.output;
    day.probs = fr.probs;
    day.log.prediction = cls ? fr.probs[1]
                             : summed_outputs(fr, 1, net.head().out_dim())[0];
    day.log.stamp = "";
    state.day_counter += 1;
    state.log.push_back(day.log);
    return day;
}

void write_adapt_log(const std::string& path, const std::vector<DayLog>& log) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write adaptation log '" + path + "'");
    out << "day,stamp,mode,u,tau,fallback,loss_total,loss_primary,loss_secondary,loss_drift,"
           "delta_phi_norm,steps,prediction\n";
    for (const auto& e : log) {
        out << e.day << ',' << e.stamp << ',' << adapt_mode_name(e.mode) << ','
            << format_double(e.u) << ',' << format_double(e.tau) << ',' << (e.fallback ? 1 : 0)
            << ',' << format_double(e.loss_total) << ',' << format_double(e.loss_primary) << ','
            << format_double(e.loss_secondary) << ',' << format_double(e.loss_drift) << ','
            << format_double(e.delta_phi_norm) << ',' << e.steps_run << ','
            << format_double(e.prediction) << "\n";
    }
}

}  // namespace tta
