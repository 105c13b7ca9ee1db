#include "tta/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tta/features.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tta {

// ---------------------------------------------------------------------------
// sweep grids

namespace {

const std::vector<int> kRefW = {32, 64, 96};
const std::vector<int> kRefS = {1, 3, 5};
const std::vector<double> kRefLr = {5e-5, 1e-4, 2e-4};
const std::vector<double> kRefQ = {0.7, 0.8, 0.9};
const std::vector<std::vector<std::string>> kRefAug = {
    {"scale"}, {"scale", "jitter"}, {"scale", "jitter", "cutout"}};
const std::vector<std::pair<double, double>> kRefLoss = {{1, 0}, {0, 1}, {1, 1}};

bool close(double a, double b) { return std::fabs(a - b) <= 1e-12 * std::max(1.0, std::fabs(b)); }

template <typename T, typename Eq>
bool subset_of(const std::vector<T>& values, const std::vector<T>& ref, Eq eq) {
    for (const auto& v : values) {
        bool found = false;
        for (const auto& r : ref)
            if (eq(v, r)) {
                found = true;
                break;
            }
        if (!found) return false;
    }
    return true;
}

}  // namespace

bool SweepGrids::empty() const {
    return context_w.empty() && steps.empty() && learning_rate.empty() && tau_quantile.empty() &&
           augmentations.empty() && loss_weights.empty();
}

std::size_t SweepGrids::product_size() const {
    auto dim = [](std::size_t n) { return n == 0 ? std::size_t{1} : n; };
    return dim(context_w.size()) * dim(steps.size()) * dim(learning_rate.size()) *
           dim(tau_quantile.size()) * dim(augmentations.size()) * dim(loss_weights.size());
}

void SweepGrids::validate() const {
    if (allow_custom) return;
    auto eq_int = [](int a, int b) { return a == b; };
    auto eq_d = [](double a, double b) { return close(a, b); };
    require(subset_of(context_w, kRefW, eq_int), "sweep: W grid outside reference {32,64,96}");
    require(subset_of(steps, kRefS, eq_int), "sweep: S grid outside reference {1,3,5}");
    require(subset_of(learning_rate, kRefLr, eq_d),
            "sweep: learning-rate grid outside reference {5e-5,1e-4,2e-4}");
    require(subset_of(tau_quantile, kRefQ, eq_d),
            "sweep: quantile grid outside reference {0.7,0.8,0.9}");
    require(subset_of(augmentations, kRefAug,
                      [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
                          return a == b;
                      }),
            "sweep: augmentation sets outside the reference subsets");
    require(subset_of(loss_weights, kRefLoss,
                      [&](const std::pair<double, double>& a, const std::pair<double, double>& b) {
                          return close(a.first, b.first) && close(a.second, b.second);
                      }),
            "sweep: loss-weight grid outside reference {(1,0),(0,1),(1,1)}");
}

void ExperimentConfig::validate() const {
    require(version == 1, "config: unsupported version");
    require(!data_path.empty(), "config: data.path required");
    require(L >= 1 && H >= 1, "config: window.L and window.H must be >= 1");
    const bool dates = train_end_date.has_value() && valid_end_date.has_value();
    const bool fracs = train_frac.has_value() && valid_frac.has_value();
    require(dates || fracs, "config: split needs train_end/valid_end dates or fractions");
    arch.validate();
    train.validate();
    adapt.validate();
    require(!adapt_modes.empty(), "config: adapt.modes must not be empty");
    for (const auto& m : adapt_modes) parse_adapt_mode(m);
    for (const auto& a : augmentation_names) parse_transform(a);
    sweep.validate();
    require(rolling_window >= 1, "config: eval.rolling_window must be >= 1");
    require(trading_days_per_year >= 1, "config: eval.trading_days_per_year must be >= 1");
    if (shift) shift->validate();
    require(!output_dir.empty(), "config: output_dir required");
}

// ---------------------------------------------------------------------------
// config parsing

namespace {

void check_keys(const json& j, const std::string& where,
                std::initializer_list<std::string_view> allowed) {
    require(j.is_object(), "config: " + where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (auto a : allowed)
            if (it.key() == a) {
                ok = true;
                break;
            }
        if (!ok) throw InputError("config: unknown key '" + it.key() + "' in " + where);
    }
}

}  // namespace

ExperimentConfig parse_config_json(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InputError(origin + ": " + e.what());
    }
    try {
        ExperimentConfig cfg;
        check_keys(j, "top level",
                   {"version", "data", "task", "window", "split", "arch", "train", "adapt",
                    "shift", "eval", "sweep", "output_dir", "master_seed", "checkpoint"});
        cfg.version = j.value("version", 1);

        const auto& jd = j.at("data");
        check_keys(jd, "data", {"path", "schema", "target_channel"});
        cfg.data_path = jd.at("path").get<std::string>();
        cfg.schema = parse_schema(jd.at("schema").get<std::string>());
        cfg.target_channel = jd.value("target_channel", std::string("OT"));

        cfg.task = parse_task(j.at("task").get<std::string>());

        const auto& jw = j.at("window");
        check_keys(jw, "window", {"L", "H"});
        cfg.L = jw.at("L").get<int>();
        cfg.H = jw.at("H").get<int>();

        const auto& js = j.at("split");
        check_keys(js, "split", {"train_end", "valid_end", "train_frac", "valid_frac", "regimes"});
        if (js.contains("train_end")) cfg.train_end_date = js.at("train_end").get<std::string>();
        if (js.contains("valid_end")) cfg.valid_end_date = js.at("valid_end").get<std::string>();
        if (js.contains("train_frac")) cfg.train_frac = js.at("train_frac").get<double>();
        if (js.contains("valid_frac")) cfg.valid_frac = js.at("valid_frac").get<double>();
        if (js.contains("regimes")) {
            for (const auto& r : js.at("regimes")) {
                check_keys(r, "split.regimes[]", {"name", "start"});
                cfg.regimes.emplace_back(r.at("name").get<std::string>(),
                                         r.at("start").get<std::string>());
            }
        }

        if (j.contains("arch")) {
            const auto& ja = j.at("arch");
            check_keys(ja, "arch", {"blocks", "hidden", "kernel", "dilations"});
            cfg.arch.blocks = ja.value("blocks", 3);
            cfg.arch.hidden = ja.value("hidden", 64);
            cfg.arch.kernel = ja.value("kernel", 3);
            if (ja.contains("dilations"))
                cfg.arch.dilations = ja.at("dilations").get<std::vector<int>>();
            else {
                cfg.arch.dilations.resize(static_cast<std::size_t>(cfg.arch.blocks));
                int d = 1;
                for (auto& v : cfg.arch.dilations) {
                    v = d;
                    d *= 2;
                }
            }
        }

        if (j.contains("train")) {
            const auto& jt = j.at("train");
            check_keys(jt, "train",
                       {"learning_rate", "batch_size", "max_epochs", "patience", "weight_decay",
                        "bn_momentum"});
            cfg.train.learning_rate = jt.value("learning_rate", 1e-4);
            cfg.train.batch_size = jt.value("batch_size", 512);
            cfg.train.max_epochs = jt.value("max_epochs", 100);
            cfg.train.patience = jt.value("patience", 10);
            cfg.train.weight_decay = jt.value("weight_decay", 1e-2);
            cfg.train.bn_momentum = jt.value("bn_momentum", 0.1);
        }

        if (j.contains("adapt")) {
            const auto& ja = j.at("adapt");
            check_keys(ja, "adapt",
                       {"modes", "context_w", "steps", "learning_rate", "alpha", "beta",
                        "gamma_drift", "ema_rho", "k_transforms", "tau_quantile",
                        "augmentations"});
            if (ja.contains("modes")) cfg.adapt_modes = ja.at("modes").get<std::vector<std::string>>();
            cfg.adapt.context_w = ja.value("context_w", 64);
            cfg.adapt.steps = ja.value("steps", 5);
            cfg.adapt.learning_rate = ja.value("learning_rate", 1e-4);
            cfg.adapt.alpha = ja.value("alpha", 1.0);
            cfg.adapt.beta = ja.value("beta", 1.0);
            cfg.adapt.gamma_drift = ja.value("gamma_drift", 1e-3);
            cfg.adapt.ema_rho = ja.value("ema_rho", 0.9);
            cfg.adapt.k_transforms = ja.value("k_transforms", 4);
            cfg.adapt.tau_quantile = ja.value("tau_quantile", 0.8);
            if (ja.contains("augmentations"))
                cfg.augmentation_names = ja.at("augmentations").get<std::vector<std::string>>();
        }

        if (j.contains("shift") && !j.at("shift").is_null()) {
            const auto& jf = j.at("shift");
            check_keys(jf, "shift",
                       {"kind", "mean_per_1000", "std_per_1000", "mu0", "noise_k", "segments",
                        "segment_len_lo", "segment_len_hi", "period", "harmonics",
                        "change_points", "sigma", "seed", "apply_to_test_only"});
            ShiftSpec spec;
            spec.kind = parse_shift_kind(jf.at("kind").get<std::string>());
            spec.mean_target_per_1000 = jf.value("mean_per_1000", 0.3);
            spec.std_target_per_1000 = jf.value("std_per_1000", 0.3);
            spec.mu0 = jf.value("mu0", 0.0);
            spec.noise_k = jf.value("noise_k", 1.5);
            spec.noise_segments = jf.value("segments", 3);
            spec.segment_len_lo = jf.value("segment_len_lo", 96);
            spec.segment_len_hi = jf.value("segment_len_hi", 192);
            spec.period = jf.value("period", 24.0);
            spec.harmonics = jf.value("harmonics", 2);
            spec.change_point_count = jf.value("change_points", 2);
            spec.structural_sigma = jf.value("sigma", 0.1);
            spec.seed = jf.value("seed", 0);
            spec.apply_to_test_only = jf.value("apply_to_test_only", true);
            cfg.shift = spec;
        }

        if (j.contains("eval")) {
            const auto& je = j.at("eval");
            check_keys(je, "eval", {"rolling_window", "trading_days_per_year"});
            cfg.rolling_window = je.value("rolling_window", 60);
            cfg.trading_days_per_year = je.value("trading_days_per_year", 252);
        }

        if (j.contains("sweep") && !j.at("sweep").is_null()) {
            const auto& jq = j.at("sweep");
            check_keys(jq, "sweep",
                       {"context_w", "steps", "learning_rate", "tau_quantile", "augmentations",
                        "loss_weights", "allow_custom"});
            if (jq.contains("context_w"))
                cfg.sweep.context_w = jq.at("context_w").get<std::vector<int>>();
            if (jq.contains("steps")) cfg.sweep.steps = jq.at("steps").get<std::vector<int>>();
            if (jq.contains("learning_rate"))
                cfg.sweep.learning_rate = jq.at("learning_rate").get<std::vector<double>>();
            if (jq.contains("tau_quantile"))
                cfg.sweep.tau_quantile = jq.at("tau_quantile").get<std::vector<double>>();
            if (jq.contains("augmentations"))
                cfg.sweep.augmentations =
                    jq.at("augmentations").get<std::vector<std::vector<std::string>>>();
            if (jq.contains("loss_weights"))
                for (const auto& lw : jq.at("loss_weights")) {
                    require(lw.is_array() && lw.size() == 2,
                            "config: sweep.loss_weights entries must be [alpha, beta]");
                    cfg.sweep.loss_weights.emplace_back(lw[0].get<double>(), lw[1].get<double>());
                }
            cfg.sweep.allow_custom = jq.value("allow_custom", false);
        }

        cfg.output_dir = j.value("output_dir", std::string("run"));
        cfg.master_seed = j.value("master_seed", std::uint64_t{42});
        if (j.contains("checkpoint"))
            cfg.checkpoint_path = j.at("checkpoint").get<std::string>();

        cfg.train.seed = derive_seed(cfg.master_seed, "train");
        cfg.validate();
        return cfg;
    } catch (const json::exception& e) {
        throw InputError(origin + ": " + e.what());
    }
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_json(ss.str(), path);
}

std::string serialize_config(const ExperimentConfig& cfg) {
    json j;
    j["version"] = cfg.version;
    j["data"] = {{"path", cfg.data_path},
                 {"schema", schema_name(cfg.schema)},
                 {"target_channel", cfg.target_channel}};
    j["task"] = task_name(cfg.task);
    j["window"] = {{"L", cfg.L}, {"H", cfg.H}};
    json js = json::object();
    if (cfg.train_end_date) js["train_end"] = *cfg.train_end_date;
    if (cfg.valid_end_date) js["valid_end"] = *cfg.valid_end_date;
    if (cfg.train_frac) js["train_frac"] = *cfg.train_frac;
    if (cfg.valid_frac) js["valid_frac"] = *cfg.valid_frac;
    if (!cfg.regimes.empty()) {
        json jr = json::array();
        for (const auto& [name, start] : cfg.regimes)
            jr.push_back({{"name", name}, {"start", start}});
        js["regimes"] = jr;
    }
    j["split"] = js;
    j["arch"] = {{"blocks", cfg.arch.blocks},
                 {"hidden", cfg.arch.hidden},
                 {"kernel", cfg.arch.kernel},
                 {"dilations", cfg.arch.dilations}};
    j["train"] = {{"learning_rate", cfg.train.learning_rate},
                  {"batch_size", cfg.train.batch_size},
                  {"max_epochs", cfg.train.max_epochs},
                  {"patience", cfg.train.patience},
                  {"weight_decay", cfg.train.weight_decay},
                  {"bn_momentum", cfg.train.bn_momentum}};
    j["adapt"] = {{"modes", cfg.adapt_modes},
                  {"context_w", cfg.adapt.context_w},
                  {"steps", cfg.adapt.steps},
                  {"learning_rate", cfg.adapt.learning_rate},
                  {"alpha", cfg.adapt.alpha},
                  {"beta", cfg.adapt.beta},
                  {"gamma_drift", cfg.adapt.gamma_drift},
                  {"ema_rho", cfg.adapt.ema_rho},
                  {"k_transforms", cfg.adapt.k_transforms},
                  {"tau_quantile", cfg.adapt.tau_quantile},
                  {"augmentations", cfg.augmentation_names}};
    if (cfg.shift) {
        const auto& s = *cfg.shift;
        j["shift"] = {{"kind", shift_kind_name(s.kind)},
                      {"mean_per_1000", s.mean_target_per_1000},
                      {"std_per_1000", s.std_target_per_1000},
                      {"mu0", s.mu0},
                      {"noise_k", s.noise_k},
                      {"segments", s.noise_segments},
                      {"segment_len_lo", s.segment_len_lo},
                      {"segment_len_hi", s.segment_len_hi},
                      {"period", s.period},
                      {"harmonics", s.harmonics},
                      {"change_points", s.change_point_count},
                      {"sigma", s.structural_sigma},
                      {"seed", s.seed},
                      {"apply_to_test_only", s.apply_to_test_only}};
    }
    j["eval"] = {{"rolling_window", cfg.rolling_window},
                 {"trading_days_per_year", cfg.trading_days_per_year}};
    if (!cfg.sweep.empty()) {
        json jq = json::object();
        if (!cfg.sweep.context_w.empty()) jq["context_w"] = cfg.sweep.context_w;
        if (!cfg.sweep.steps.empty()) jq["steps"] = cfg.sweep.steps;
        if (!cfg.sweep.learning_rate.empty()) jq["learning_rate"] = cfg.sweep.learning_rate;
        if (!cfg.sweep.tau_quantile.empty()) jq["tau_quantile"] = cfg.sweep.tau_quantile;
        if (!cfg.sweep.augmentations.empty()) jq["augmentations"] = cfg.sweep.augmentations;
        if (!cfg.sweep.loss_weights.empty()) {
            json lw = json::array();
            for (const auto& [a, b] : cfg.sweep.loss_weights) lw.push_back({a, b});
            jq["loss_weights"] = lw;
        }
        if (cfg.sweep.allow_custom) jq["allow_custom"] = true;
        j["sweep"] = jq;
    }
    j["output_dir"] = cfg.output_dir;
    j["master_seed"] = cfg.master_seed;
    if (cfg.checkpoint_path) j["checkpoint"] = *cfg.checkpoint_path;
    return j.dump(2) + "\n";
}

std::string resolve_output_dir(const std::string& dir) {
    if (const char* root = std::getenv("TTA_OUTPUT_ROOT")) {
        fs::path p(dir);
        if (p.is_relative()) return (fs::path(root) / p).string();
    }
    return dir;
}

// ---------------------------------------------------------------------------
// data preparation

PreparedData prepare_data(const ExperimentConfig& cfg) {
    cfg.validate();
    SeriesFrame raw = load_csv(cfg.data_path, cfg.schema);

    auto working_frame = [&](const SeriesFrame& r) {
        return cfg.schema == CsvSchema::Ohlcv ? compute_features(r) : r;
    };
    auto split_of = [&](const SeriesFrame& f) {
        std::vector<RegimeSpec> regimes;
        for (const auto& [name, start] : cfg.regimes)
            regimes.push_back({name, parse_timestamp(start)});
        if (cfg.train_end_date)
            return chrono_split(f, parse_timestamp(*cfg.train_end_date),
                                parse_timestamp(*cfg.valid_end_date), regimes);
        return chrono_split_fractions(f, *cfg.train_frac, *cfg.valid_frac, regimes);
    };

    PreparedData out;
    SeriesFrame work = working_frame(raw);
    SplitDescriptor split = split_of(work);

    if (cfg.shift) {
        // shift is applied to the raw series; the test region starts at the
        // first raw row past the last validation timestamp
        std::size_t first_raw = raw.rows();
        const std::int64_t valid_last_epoch = work.epochs()[split.valid_end_row - 1];
        if (!cfg.shift->apply_to_test_only) {
            first_raw = 0;
        } else {
            for (std::size_t t = 0; t < raw.rows(); ++t)
                if (raw.epochs()[t] > valid_last_epoch) {
                    first_raw = t;
                    break;
                }
        }
        require(first_raw < raw.rows(), "shift: empty test region");
        out.shift_meta = apply_shift(raw, *cfg.shift, first_raw);
        work = working_frame(raw);
        split = split_of(work);
    }

    out.split = split;
    out.scaler.fit(work, 0, split.train_end_row);
    out.frame = out.scaler.apply(work);

    LabelKind kind;
    std::string label_channel;
    if (cfg.schema == CsvSchema::Ohlcv) {
        kind = LabelKind::Direct;
        label_channel = "r";
        out.label_series = work.channel(work.channel_index("r"));  // unscaled returns
    } else {
        // standard long-horizon protocol: forecast the standardized target level
        kind = LabelKind::Direct;
        label_channel = cfg.target_channel;
        out.label_series = out.frame.channel(out.frame.channel_index(cfg.target_channel));
    }
    require(cfg.task == TaskKind::Regression || cfg.schema == CsvSchema::Ohlcv,
            "classification task expects the ohlcv schema");

    out.dataset = make_windows(out.frame, out.label_series, cfg.L, cfg.H, cfg.task, kind,
                               split, label_channel);
    require(out.dataset.train_end > 0, "prepare_data: no training samples");
    require(out.dataset.valid_end > out.dataset.train_end, "prepare_data: no validation samples");
    require(out.dataset.count > out.dataset.valid_end, "prepare_data: no test samples");
    return out;
}

// ---------------------------------------------------------------------------
// calibration + deployment

namespace {

WindowBatch context_batch(const WindowDataset& ds, std::size_t day, int W,
                          const RunHooks* hooks) {
    const std::size_t lo = day + 1 >= static_cast<std::size_t>(W) ? day + 1 - W : 0;
    auto b = ds.batch(lo, day + 1);
    if (hooks && hooks->on_window_access)
        for (auto idx : b.indices) hooks->on_window_access(idx);
    return b;
}

UncertaintyKind proxy_kind(const Backbone& net) {
    return net.head().kind == HeadKind::Classification ? UncertaintyKind::MeanEntropy
                                                       : UncertaintyKind::MeanAugmentationVariance;
}

}  // namespace

double calibrate_tau(const Backbone& net, const WindowDataset& ds, const AdaptConfig& acfg,
                     std::uint64_t master_seed, const RunHooks* hooks,
                     std::vector<double>* out_uncertainties) {
    const auto kind = proxy_kind(net);
    std::vector<double> us;
    us.reserve(ds.valid_end - ds.train_end);
    for (std::size_t k = ds.train_end; k < ds.valid_end; ++k) {
        if (hooks && hooks->on_day_start) hooks->on_day_start(static_cast<std::int64_t>(k));
        auto context = context_batch(ds, k, acfg.context_w, hooks);
        Rng rng(derive_seed(master_seed, "calibrate-day", static_cast<std::int64_t>(k)));
        us.push_back(
            uncertainty(net, context, kind, acfg.augmentations, acfg.k_transforms, rng).value);
    }
    const double tau = calibrate_threshold(us, acfg.tau_quantile);
    if (out_uncertainties) *out_uncertainties = std::move(us);
    return tau;
}

ModeResult deploy_mode(Backbone net, const WindowDataset& ds, AdaptConfig acfg, double tau,
                       std::uint64_t master_seed, const RunHooks* hooks) {
    ModeResult res;
    res.mode = acfg.mode;
    AdaptState state = AdaptState::init(net, tau);
    const std::uint64_t mode_seed =
        derive_seed(master_seed, "deploy-" + adapt_mode_name(acfg.mode));
    const bool cls = net.head().kind == HeadKind::Classification;
    const int out_dim = net.head().out_dim();

    std::uint64_t stream_hash = 0xcbf29ce484222325ULL;
    for (std::size_t k = ds.valid_end; k < ds.count; ++k) {
        if (hooks && hooks->on_day_start) hooks->on_day_start(static_cast<std::int64_t>(k));
        auto context = context_batch(ds, k, acfg.context_w, hooks);
        auto today = ds.batch(k, k + 1);
        if (hooks && hooks->on_window_access) hooks->on_window_access(today.indices[0]);
        stream_hash = hash_bytes(context.data.data(), context.data.size() * sizeof(double),
                                 stream_hash);
        stream_hash =
            hash_bytes(today.data.data(), today.data.size() * sizeof(double), stream_hash);

        Rng rng(derive_seed(mode_seed, "day", static_cast<std::int64_t>(k)));
        auto day = adapt_day(net, state, context, today, static_cast<std::int64_t>(k), acfg, rng);
        state.log.back().stamp = ds.label_stamp[k];

        if (cls) {
            const double p_up = day.probs[1];
            res.prob_up.push_back(p_up);
            const int y = ds.label(k)[0] > 0.5 ? 1 : 0;
            const double p_y = std::max(y == 1 ? p_up : 1.0 - p_up, 1e-12);
            res.day_loss.push_back(-std::log(p_y));
        } else {
            res.predictions.insert(res.predictions.end(), day.output.begin(), day.output.end());
            double mae = 0.0;
            for (int h = 0; h < out_dim; ++h)
                mae += std::fabs(day.output[static_cast<std::size_t>(h)] - ds.label(k)[h]);
            res.day_loss.push_back(mae / out_dim);
        }
    }
    res.log = std::move(state.log);
    res.stream_hash = stream_hash;
    for (const auto& e : res.log) res.fallback_days += e.fallback ? 1 : 0;
    return res;
}

// ---------------------------------------------------------------------------
// metrics + bundle

namespace {

void compute_mode_metrics(ModeResult& m, const WindowDataset& ds, const ExperimentConfig& cfg) {
    const std::size_t first = ds.valid_end;
    const std::size_t days = ds.count - first;
    if (ds.task == TaskKind::Classification) {
        std::vector<double> labels(days);
        for (std::size_t i = 0; i < days; ++i) labels[i] = ds.label(first + i)[0];
        m.cls = classification_metrics(m.prob_up, labels);
        m.has_cls = true;
        if (cfg.schema == CsvSchema::Ohlcv) {
            std::vector<double> realized(days);
            for (std::size_t i = 0; i < days; ++i) realized[i] = ds.forward_return[first + i];
            m.backtest = backtest(m.prob_up, realized, cfg.trading_days_per_year);
            m.has_backtest = true;
        }
        for (std::size_t r = 0; r < ds.regime_names.size(); ++r) {
            RegimeMetrics rm;
            rm.name = ds.regime_names[r];
            std::vector<double> p, y;
            for (std::size_t i = 0; i < days; ++i)
                if (ds.regime[first + i] == static_cast<int>(r)) {
                    p.push_back(m.prob_up[i]);
                    y.push_back(ds.label(first + i)[0]);
                }
            rm.days = p.size();
            if (!p.empty()) rm.cls = classification_metrics(p, y);
            m.per_regime.push_back(std::move(rm));
        }
    } else {
        const int H = ds.label_dim();
        std::vector<double> preds, targets;
        preds.reserve(days * static_cast<std::size_t>(H));
        for (std::size_t i = 0; i < days; ++i)
            for (int h = 0; h < H; ++h) {
                preds.push_back(m.predictions[i * static_cast<std::size_t>(H) + h]);
                targets.push_back(ds.label(first + i)[h]);
            }
        m.reg = regression_metrics(preds, targets);
        m.has_reg = true;
        for (std::size_t r = 0; r < ds.regime_names.size(); ++r) {
            RegimeMetrics rm;
            rm.name = ds.regime_names[r];
            std::vector<double> p, y;
            for (std::size_t i = 0; i < days; ++i)
                if (ds.regime[first + i] == static_cast<int>(r))
                    for (int h = 0; h < H; ++h) {
                        p.push_back(m.predictions[i * static_cast<std::size_t>(H) + h]);
                        y.push_back(ds.label(first + i)[h]);
                    }
            rm.days = p.size() / static_cast<std::size_t>(H);
            if (!p.empty()) rm.reg = regression_metrics(p, y);
            m.per_regime.push_back(std::move(rm));
        }
    }
}

json metrics_to_json(const ModeResult& m) {
    json out;
    if (m.has_cls) {
        out["accuracy"] = m.cls.accuracy;
        out["f1"] = m.cls.f1;
        out["auc"] = m.cls.auc_defined ? json(m.cls.auc) : json();
        out["direction_accuracy"] = m.cls.direction_accuracy;
        out["ece"] = m.cls.ece;
    }
    if (m.has_reg) {
        out["mae"] = m.reg.mae;
        out["rmse"] = m.reg.rmse;
        out["r2"] = m.reg.r2_defined ? json(m.reg.r2) : json();
    }
    return out;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_curves_csv(const std::string& path, const ModeResult& m, const WindowDataset& ds,
                      int window) {
    const std::size_t first = ds.valid_end;
    const std::size_t days = ds.count - first;
    const auto w = static_cast<std::size_t>(std::min<std::size_t>(window, days));

    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path + "'");
    std::vector<double> day_metric(days), day_sq;
    if (ds.task == TaskKind::Classification) {
        out << "day,stamp,regime,rolling_accuracy\n";
        for (std::size_t i = 0; i < days; ++i) {
            const int pred = m.prob_up[i] > 0.5 ? 1 : 0;
            const int y = ds.label(first + i)[0] > 0.5 ? 1 : 0;
            day_metric[i] = pred == y ? 1.0 : 0.0;
        }
        auto roll = rolling_mean(day_metric, w);
        for (std::size_t i = 0; i + w <= days; ++i) {
            const std::size_t k = first + i + w - 1;
            const int rg = ds.regime[k];
            out << ds.end_row[k] << ',' << ds.label_stamp[k] << ','
                << (rg >= 0 ? ds.regime_names[static_cast<std::size_t>(rg)] : "") << ','
                << format_double(roll[i]) << "\n";
        }
    } else {
        out << "day,stamp,regime,rolling_mae,rolling_rmse\n";
        const int H = ds.label_dim();
        day_sq.resize(days);
        for (std::size_t i = 0; i < days; ++i) {
            double mae = 0.0, mse = 0.0;
            for (int h = 0; h < H; ++h) {
                const double e =
                    m.predictions[i * static_cast<std::size_t>(H) + h] - ds.label(first + i)[h];
                mae += std::fabs(e);
                mse += e * e;
            }
            day_metric[i] = mae / H;
            day_sq[i] = mse / H;
        }
        auto roll_mae = rolling_mean(day_metric, w);
        auto roll_mse = rolling_mean(day_sq, w);
        for (std::size_t i = 0; i + w <= days; ++i) {
            const std::size_t k = first + i + w - 1;
            const int rg = ds.regime[k];
            out << ds.end_row[k] << ',' << ds.label_stamp[k] << ','
                << (rg >= 0 ? ds.regime_names[static_cast<std::size_t>(rg)] : "") << ','
                << format_double(roll_mae[i]) << ',' << format_double(std::sqrt(roll_mse[i]))
                << "\n";
        }
    }
}

void write_reliability_csv(const std::string& path, const ModeResult& m,
                           const WindowDataset& ds) {
    const std::size_t first = ds.valid_end;
    std::vector<double> labels(ds.count - first);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = ds.label(first + i)[0];
    auto bins = reliability_diagram(m.prob_up, labels);
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << "bin_lo,bin_hi,mean_confidence,accuracy,count\n";
    for (const auto& b : bins)
        out << format_double(b.conf_lo) << ',' << format_double(b.conf_hi) << ','
            << format_double(b.mean_confidence) << ',' << format_double(b.accuracy) << ','
            << b.count << "\n";
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunHooks* hooks) {
    auto data = prepare_data(cfg);
    const auto& ds = data.dataset;

    const std::string out_dir = resolve_output_dir(cfg.output_dir);
    fs::create_directories(out_dir);

    // per-feature training std of the standardized inputs (for jitter scaling)
    std::vector<double> train_std(static_cast<std::size_t>(ds.d), 0.0);
    {
        Scaler s;
        s.fit(data.frame, 0, data.split.train_end_row);
        train_std = s.stddev();
    }

    TaskHead head;
    head.kind = cfg.task == TaskKind::Classification ? HeadKind::Classification
                                                     : HeadKind::Regression;
    head.horizon = cfg.task == TaskKind::Classification ? 1 : cfg.H;

    ArchDescriptor arch = cfg.arch;
    arch.input_channels = ds.d;

    TrainConfig tcfg = cfg.train;
    tcfg.seed = derive_seed(cfg.master_seed, "train");

    ExperimentReport report;
    Backbone net;
    if (cfg.checkpoint_path && fs::exists(*cfg.checkpoint_path)) {
        auto ck = load_checkpoint(*cfg.checkpoint_path);
        require(ck.net.arch() == arch, "checkpoint: architecture mismatch with config");
        require(ck.scaler_mean == data.scaler.mean() && ck.scaler_std == data.scaler.stddev(),
                "checkpoint: scaler statistics do not match this dataset");
        net = std::move(ck.net);
    } else {
        net = Backbone(arch, head, derive_seed(cfg.master_seed, "init"));
        report.train_info = train_supervised(net, ds, tcfg);
    }
    save_checkpoint((fs::path(out_dir) / "checkpoint.bin").string(), net, data.scaler.mean(),
                    data.scaler.stddev(), tcfg.seed);

    AdaptConfig acfg = cfg.adapt;
    acfg.augmentations = AugmentationSet::from_names(cfg.augmentation_names, train_std);

    report.tau = calibrate_tau(net, ds, acfg, cfg.master_seed, hooks);
    report.test_days = ds.count - ds.valid_end;

    for (const auto& mode_name : cfg.adapt_modes) {
        AdaptConfig mode_cfg = acfg;
        mode_cfg.mode = parse_adapt_mode(mode_name);
        auto m = deploy_mode(net, ds, mode_cfg, report.tau, cfg.master_seed, hooks);
        compute_mode_metrics(m, ds, cfg);
        report.modes.push_back(std::move(m));
    }

    // identical window streams across modes
    for (std::size_t i = 1; i < report.modes.size(); ++i)
        require(report.modes[i].stream_hash == report.modes[0].stream_hash,
                "internal: modes consumed different window streams");

    // DM: each adapted mode against no_tta
    const ModeResult* baseline = nullptr;
    for (const auto& m : report.modes)
        if (m.mode == AdaptMode::NoTta) baseline = &m;
    if (baseline)
        for (const auto& m : report.modes) {
            if (m.mode == AdaptMode::NoTta) continue;
            DMRow row;
            row.first = adapt_mode_name(m.mode);
            row.second = "no_tta";
            LossSeries a{ds.task == TaskKind::Classification ? LossKind::CrossEntropy
                                                             : LossKind::Absolute,
                         m.day_loss,
                         {}};
            LossSeries b = a;
            b.values = baseline->day_loss;
            try {
                row.result = dm_test(a, b);
            } catch (const DegenerateTestError&) {
                row.result = DMResult{};
                row.result.statistic = std::nan("");
                row.result.p_value = std::nan("");
                row.result.sample_size = m.day_loss.size();
                row.result.sign_note = "degenerate: constant loss differential";
            }
            report.dm_rows.push_back(std::move(row));
        }

    // ------- bundle -------
    {
        std::ofstream cfg_out(fs::path(out_dir) / "config.json");
        cfg_out << serialize_config(cfg);
    }
    if (data.shift_meta) {
        std::ofstream sm(fs::path(out_dir) / "shift_metadata.json");
        sm << data.shift_meta->to_json();
    }

    json meta;
    meta["version"] = 1;
    meta["dataset"] = fs::path(cfg.data_path).stem().string();
    meta["task"] = task_name(cfg.task);
    meta["shift"] = cfg.shift ? json(shift_kind_name(cfg.shift->kind)) : json();
    meta["tau"] = report.tau;
    meta["test_days"] = report.test_days;
    meta["train"] = {{"best_epoch", report.train_info.best_epoch},
                     {"epochs_run", report.train_info.epochs_run},
                     {"best_metric", report.train_info.best_metric}};
    json jmodes = json::object();
    for (const auto& m : report.modes) {
        json jm;
        jm["metrics"] = metrics_to_json(m);
        jm["stream_hash"] = hex64(m.stream_hash);
        jm["fallback_days"] = m.fallback_days;
        if (m.has_backtest) {
            jm["backtest"] = {{"annualized_return", m.backtest.annualized_return},
                              {"annualized_volatility", m.backtest.annualized_volatility},
                              {"sharpe", m.backtest.sharpe_defined ? json(m.backtest.sharpe)
                                                                   : json()},
                              {"nw_t", m.backtest.nw.t_stat},
                              {"nw_lag", m.backtest.nw.lag_q}};
        }
        if (!m.per_regime.empty()) {
            json jr = json::object();
            for (const auto& r : m.per_regime) {
                json jrm;
                jrm["days"] = r.days;
                if (r.days > 0 && ds.task == TaskKind::Classification) {
                    jrm["accuracy"] = r.cls.accuracy;
                    jrm["f1"] = r.cls.f1;
                    jrm["ece"] = r.cls.ece;
                } else if (r.days > 0) {
                    jrm["mae"] = r.reg.mae;
                    jrm["rmse"] = r.reg.rmse;
                    jrm["r2"] = r.reg.r2_defined ? json(r.reg.r2) : json();
                }
                jr[r.name] = jrm;
            }
            jm["regimes"] = jr;
        }
        jmodes[adapt_mode_name(m.mode)] = jm;
    }
    meta["modes"] = jmodes;
    json jdm = json::array();
    for (const auto& row : report.dm_rows) {
        jdm.push_back({{"first", row.first},
                       {"second", row.second},
                       {"statistic", std::isfinite(row.result.statistic)
                                         ? json(row.result.statistic)
                                         : json()},
                       {"p_value", std::isfinite(row.result.p_value) ? json(row.result.p_value)
                                                                     : json()},
                       {"lag_q", row.result.lag_q},
                       {"sample_size", row.result.sample_size},
                       {"note", row.result.sign_note}});
    }
    meta["dm"] = jdm;
    {
        std::ofstream mj(fs::path(out_dir) / "metrics.json");
        mj << meta.dump(2) << "\n";
    }

    for (const auto& m : report.modes) {
        const std::string tag = adapt_mode_name(m.mode);
        write_adapt_log((fs::path(out_dir) / ("adapt_log_" + tag + ".csv")).string(), m.log);
        write_curves_csv((fs::path(out_dir) / ("curves_" + tag + ".csv")).string(), m, ds,
                         cfg.rolling_window);
        if (ds.task == TaskKind::Classification)
            write_reliability_csv((fs::path(out_dir) / ("reliability_" + tag + ".csv")).string(),
                                  m, ds);
    }

    report.bundle_dir = out_dir;
    return report;
}

// ---------------------------------------------------------------------------
// sweep

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, bool force) {
    cfg.validate();
    const std::size_t n = cfg.sweep.product_size();
    require(force || n <= 500,
            "sweep: grid product " + std::to_string(n) + " exceeds 500 (pass force to override)");

    auto pick_int = [](const std::vector<int>& grid, int fallback, std::size_t i) {
        return grid.empty() ? fallback : grid[i];
    };
    auto pick_d = [](const std::vector<double>& grid, double fallback, std::size_t i) {
        return grid.empty() ? fallback : grid[i];
    };
    auto dim = [](std::size_t v) { return v == 0 ? std::size_t{1} : v; };

    const std::size_t nw = dim(cfg.sweep.context_w.size());
    const std::size_t nsp = dim(cfg.sweep.steps.size());
    const std::size_t nlr = dim(cfg.sweep.learning_rate.size());
    const std::size_t nq = dim(cfg.sweep.tau_quantile.size());
    const std::size_t na = dim(cfg.sweep.augmentations.size());
    const std::size_t nl = dim(cfg.sweep.loss_weights.size());

    const std::string base_dir = resolve_output_dir(cfg.output_dir);
    fs::create_directories(base_dir);

    std::vector<SweepRow> rows;
    std::size_t idx = 0;
    for (std::size_t iw = 0; iw < nw; ++iw)
        for (std::size_t is = 0; is < nsp; ++is)
            for (std::size_t il = 0; il < nlr; ++il)
                for (std::size_t iq = 0; iq < nq; ++iq)
                    for (std::size_t ia = 0; ia < na; ++ia)
                        for (std::size_t ib = 0; ib < nl; ++ib, ++idx) {
                            ExperimentConfig point = cfg;
                            point.sweep = SweepGrids{};
                            point.adapt.context_w =
                                pick_int(cfg.sweep.context_w, cfg.adapt.context_w, iw);
                            point.adapt.steps = pick_int(cfg.sweep.steps, cfg.adapt.steps, is);
                            point.adapt.learning_rate =
                                pick_d(cfg.sweep.learning_rate, cfg.adapt.learning_rate, il);
                            point.adapt.tau_quantile =
                                pick_d(cfg.sweep.tau_quantile, cfg.adapt.tau_quantile, iq);
                            if (!cfg.sweep.augmentations.empty())
                                point.augmentation_names = cfg.sweep.augmentations[ia];
                            if (!cfg.sweep.loss_weights.empty()) {
                                point.adapt.alpha = cfg.sweep.loss_weights[ib].first;
                                point.adapt.beta = cfg.sweep.loss_weights[ib].second;
                            }

                            std::ostringstream label;
                            label << "sweep|w=" << point.adapt.context_w
                                  << "|s=" << point.adapt.steps
                                  << "|lr=" << format_double(point.adapt.learning_rate)
                                  << "|q=" << format_double(point.adapt.tau_quantile) << "|aug=";
                            for (const auto& a : point.augmentation_names) label << a << "+";
                            label << "|alpha=" << format_double(point.adapt.alpha)
                                  << "|beta=" << format_double(point.adapt.beta);
                            point.master_seed = derive_seed(cfg.master_seed, label.str());

                            char sub[32];
                            std::snprintf(sub, sizeof(sub), "points/p%04zu", idx);
                            point.output_dir = (fs::path(cfg.output_dir) / sub).string();

                            auto rep = run_experiment(point);

                            SweepRow row;
                            row.index = idx;
                            row.context_w = point.adapt.context_w;
                            row.steps = point.adapt.steps;
                            row.learning_rate = point.adapt.learning_rate;
                            row.tau_quantile = point.adapt.tau_quantile;
                            {
                                std::string a;
                                for (const auto& s : point.augmentation_names) {
                                    if (!a.empty()) a += "+";
                                    a += s;
                                }
                                row.augmentations = a;
                            }
                            row.alpha = point.adapt.alpha;
                            row.beta = point.adapt.beta;
                            row.seed = point.master_seed;
                            for (const auto& m : rep.modes) {
                                const std::string tag = adapt_mode_name(m.mode);
                                if (m.has_cls) {
                                    row.headline[tag + ".accuracy"] = m.cls.accuracy;
                                    row.headline[tag + ".auc"] = m.cls.auc;
                                    row.headline[tag + ".ece"] = m.cls.ece;
                                }
                                if (m.has_reg) {
                                    row.headline[tag + ".mae"] = m.reg.mae;
                                    row.headline[tag + ".rmse"] = m.reg.rmse;
                                    row.headline[tag + ".r2"] = m.reg.r2;
                                }
                            }
                            for (const auto& dmr : rep.dm_rows)
                                row.headline[dmr.first + ".dm_vs_no_tta"] = dmr.result.statistic;
                            rows.push_back(std::move(row));
                        }

    // one table over all grid points
    std::ofstream out(fs::path(base_dir) / "sweep.csv");
    out << "index,context_w,steps,learning_rate,tau_quantile,augmentations,alpha,beta,seed";
    std::vector<std::string> metric_cols;
    if (!rows.empty())
        for (const auto& [k, _] : rows.front().headline) metric_cols.push_back(k);
    for (const auto& k : metric_cols) out << ',' << k;
    out << "\n";
    for (const auto& r : rows) {
        out << r.index << ',' << r.context_w << ',' << r.steps << ','
            << format_double(r.learning_rate) << ',' << format_double(r.tau_quantile) << ','
            << r.augmentations << ',' << format_double(r.alpha) << ',' << format_double(r.beta)
            << ',' << r.seed;
        for (const auto& k : metric_cols) {
            auto it = r.headline.find(k);
            out << ',' << (it == r.headline.end() ? "" : format_double(it->second));
        }
        out << "\n";
    }
    return rows;
}

// ---------------------------------------------------------------------------
// report aggregation

void aggregate_reports(const std::vector<std::string>& run_dirs, const std::string& out_dir_raw) {
    require(!run_dirs.empty(), "report: no run directories given");
    const std::string out_dir = resolve_output_dir(out_dir_raw);
    fs::create_directories(out_dir);

    struct Run {
        std::string dir, dataset, task, shift;
        json meta;
    };
    std::vector<Run> runs;
    for (const auto& dir : run_dirs) {
        const auto path = fs::path(dir) / "metrics.json";
        std::ifstream in(path);
        if (!in) throw InputError("report: cannot open " + path.string());
        Run r;
        r.dir = dir;
        in >> r.meta;
        r.dataset = r.meta.value("dataset", std::string("?"));
        r.task = r.meta.value("task", std::string("?"));
        r.shift = r.meta.contains("shift") && !r.meta["shift"].is_null()
                      ? r.meta["shift"].get<std::string>()
                      : "";
        runs.push_back(std::move(r));
    }

    // shift-regime table (Table-1 shape)
    {
        std::ofstream out(fs::path(out_dir) / "table_shift.csv");
        out << "run,method,shift,mae,rmse,r2\n";
        for (const auto& r : runs) {
            if (r.task != "regression") continue;
            for (const auto& [mode, jm] : r.meta.at("modes").items()) {
                const auto& mm = jm.at("metrics");
                if (!mm.contains("mae")) continue;
                out << fs::path(r.dir).filename().string() << ',' << mode << ',' << r.shift << ','
                    << format_double(mm["mae"].get<double>()) << ','
                    << format_double(mm["rmse"].get<double>()) << ','
                    << (mm["r2"].is_null() ? "" : format_double(mm["r2"].get<double>())) << "\n";
            }
        }
    }

    // direction-accuracy table with average ranks (Table-2 shape)
    {
        std::vector<std::string> datasets, methods;
        std::map<std::string, std::map<std::string, double>> acc;  // method -> dataset -> value
        for (const auto& r : runs) {
            if (r.task != "classification") continue;
            if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end())
                datasets.push_back(r.dataset);
            for (const auto& [mode, jm] : r.meta.at("modes").items()) {
                const auto& mm = jm.at("metrics");
                if (!mm.contains("direction_accuracy")) continue;
                if (std::find(methods.begin(), methods.end(), mode) == methods.end())
                    methods.push_back(mode);
                acc[mode][r.dataset] = mm["direction_accuracy"].get<double>();
            }
        }
        std::ofstream out(fs::path(out_dir) / "table_direction.csv");
        out << "# avg_rank: rank 1 = highest accuracy per dataset, ties share the average rank\n";
        out << "method";
        for (const auto& dset : datasets) out << ',' << dset;
        out << ",avg_rank\n";
        for (const auto& method : methods) {
            out << method;
            double rank_sum = 0.0;
            std::size_t rank_n = 0;
            for (const auto& dset : datasets) {
                auto it = acc[method].find(dset);
                out << ',' << (it == acc[method].end() ? "" : format_double(it->second));
                if (it == acc[method].end()) continue;
                // rank within this dataset across methods (higher accuracy = rank 1)
                double better = 0.0, equal = 0.0;
                for (const auto& other : methods) {
                    auto jt = acc[other].find(dset);
                    if (jt == acc[other].end()) continue;
                    if (jt->second > it->second) better += 1.0;
                    if (jt->second == it->second) equal += 1.0;
                }
                rank_sum += better + (equal + 1.0) / 2.0;
                ++rank_n;
            }
            out << ',' << (rank_n ? format_double(rank_sum / static_cast<double>(rank_n)) : "");
            out << "\n";
        }
    }

    // DM table (Table-3 shape)
    {
        std::ofstream out(fs::path(out_dir) / "table_dm.csv");
        out << "comparison,dataset,dm_stat,p_value,note\n";
        for (const auto& r : runs)
            for (const auto& row : r.meta.value("dm", json::array())) {
                out << row["first"].get<std::string>() << " vs "
                    << row["second"].get<std::string>() << ',' << r.dataset << ','
                    << (row["statistic"].is_null() ? ""
                                                   : format_double(row["statistic"].get<double>()))
                    << ','
                    << (row["p_value"].is_null() ? "" : format_double(row["p_value"].get<double>()))
                    << ',' << row.value("note", std::string()) << "\n";
            }
    }

    // backtest table (Tables-4/5 shape)
    {
        std::ofstream out(fs::path(out_dir) / "table_backtest.csv");
        out << "dataset,strategy,ann_return,ann_volatility,sharpe,nw_t\n";
        for (const auto& r : runs)
            for (const auto& [mode, jm] : r.meta.at("modes").items()) {
                if (!jm.contains("backtest")) continue;
                const auto& bt = jm.at("backtest");
                out << r.dataset << ',' << mode << ','
                    << format_double(bt["annualized_return"].get<double>()) << ','
                    << format_double(bt["annualized_volatility"].get<double>()) << ','
                    << (bt["sharpe"].is_null() ? "" : format_double(bt["sharpe"].get<double>()))
                    << ',' << format_double(bt["nw_t"].get<double>()) << "\n";
            }
    }
}

}  // namespace tta
