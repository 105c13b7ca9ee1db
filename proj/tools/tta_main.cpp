// Command-line front end: train / adapt / shift / evaluate / sweep / report.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "tta/adapt.hpp"
#include "tta/backbone.hpp"
#include "tta/experiment.hpp"
#include "tta/shiftgen.hpp"

namespace fs = std::filesystem;
using namespace tta;

namespace {

int cmd_train(const std::string& config_path, const std::string& out_path) {
    auto cfg = load_config(config_path);
    auto data = prepare_data(cfg);

    TaskHead head;
    head.kind = cfg.task == TaskKind::Classification ? HeadKind::Classification
                                                     : HeadKind::Regression;
    head.horizon = cfg.task == TaskKind::Classification ? 1 : cfg.H;
    ArchDescriptor arch = cfg.arch;
    arch.input_channels = data.dataset.d;

    TrainConfig tcfg = cfg.train;
    tcfg.seed = derive_seed(cfg.master_seed, "train");

    Backbone net(arch, head, derive_seed(cfg.master_seed, "init"));
    auto res = train_supervised(net, data.dataset, tcfg);

    const std::string out = out_path.empty()
                                ? (fs::path(resolve_output_dir(cfg.output_dir)) / "checkpoint.bin")
                                      .string()
                                : out_path;
    fs::create_directories(fs::path(out).parent_path().empty() ? "."
                                                               : fs::path(out).parent_path());
    save_checkpoint(out, net, data.scaler.mean(), data.scaler.stddev(), tcfg.seed);
    std::cout << "trained " << res.epochs_run << " epochs, best epoch " << res.best_epoch
              << ", validation metric " << format_double(res.best_metric) << "\n"
              << "checkpoint: " << out << "\n";
    return 0;
}

int cmd_adapt(const std::string& config_path, const std::string& checkpoint_path,
              const std::string& mode_name, const std::string& out_path) {
    auto cfg = load_config(config_path);
    auto data = prepare_data(cfg);
    auto ck = load_checkpoint(checkpoint_path);
    require(ck.scaler_mean == data.scaler.mean() && ck.scaler_std == data.scaler.stddev(),
            "adapt: checkpoint scaler does not match this dataset");

    std::vector<double> train_std;
    {
        Scaler s;
        s.fit(data.frame, 0, data.split.train_end_row);
        train_std = s.stddev();
    }
    AdaptConfig acfg = cfg.adapt;
    acfg.mode = parse_adapt_mode(mode_name);
    acfg.augmentations = AugmentationSet::from_names(cfg.augmentation_names, train_std);

    const double tau = calibrate_tau(ck.net, data.dataset, acfg, cfg.master_seed);
    auto result = deploy_mode(ck.net, data.dataset, acfg, tau, cfg.master_seed);

    const std::string out = out_path.empty()
                                ? (fs::path(resolve_output_dir(cfg.output_dir)) /
                                   ("adapt_log_" + mode_name + ".csv"))
                                      .string()
                                : out_path;
    if (!fs::path(out).parent_path().empty()) fs::create_directories(fs::path(out).parent_path());
    write_adapt_log(out, result.log);
    std::cout << "mode " << mode_name << ": " << result.log.size() << " days, "
              << result.fallback_days << " fallback days, tau " << format_double(tau) << "\n"
              << "log: " << out << "\n";
    return 0;
}

int cmd_shift(const std::string& input, const std::string& schema_name_arg,
              const std::string& kind, const std::string& out_csv, double start_frac,
              std::uint64_t seed, double mean_per_1000, double std_per_1000, double noise_k,
              int segments, double period, int harmonics, int change_points, double sigma) {
    auto frame = load_csv(input, parse_schema(schema_name_arg));
    ShiftSpec spec;
    spec.kind = parse_shift_kind(kind);
    spec.mean_target_per_1000 = mean_per_1000;
    spec.std_target_per_1000 = std_per_1000;
    spec.noise_k = noise_k;
    spec.noise_segments = segments;
    spec.period = period;
    spec.harmonics = harmonics;
    spec.change_point_count = change_points;
    spec.structural_sigma = sigma;
    spec.seed = seed;

    require(start_frac > 0.0 && start_frac < 1.0, "shift: --start-frac must lie in (0,1)");
    const auto first_row =
        static_cast<std::size_t>(start_frac * static_cast<double>(frame.rows()));
    auto meta = apply_shift(frame, spec, first_row);

    write_csv(frame, out_csv);
    const std::string meta_path = out_csv + ".meta.json";
    std::ofstream mj(meta_path);
    mj << meta.to_json();
    std::cout << "shifted " << (frame.rows() - first_row) << " rows (" << kind << ")\n"
              << "series: " << out_csv << "\nmetadata: " << meta_path << "\n";
    return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& checkpoint,
                 const std::string& output_dir, std::int64_t seed) {
    auto cfg = load_config(config_path);
    if (!checkpoint.empty()) cfg.checkpoint_path = checkpoint;
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (seed >= 0) cfg.master_seed = static_cast<std::uint64_t>(seed);
    auto report = run_experiment(cfg);
    std::cout << "report bundle: " << report.bundle_dir << "\n";
    for (const auto& m : report.modes) {
        std::cout << "  " << adapt_mode_name(m.mode) << ": ";
        if (m.has_reg)
            std::cout << "mae " << format_double(m.reg.mae) << ", rmse "
                      << format_double(m.reg.rmse);
        if (m.has_cls)
            std::cout << "accuracy " << format_double(m.cls.accuracy) << ", auc "
                      << format_double(m.cls.auc) << ", ece " << format_double(m.cls.ece);
        std::cout << ", fallback days " << m.fallback_days << "\n";
    }
    for (const auto& dmr : report.dm_rows)
        std::cout << "  dm " << dmr.first << " vs " << dmr.second << ": "
                  << format_double(dmr.result.statistic)
                  << " (p=" << format_double(dmr.result.p_value) << ")\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, bool force) {
    auto cfg = load_config(config_path);
    auto rows = run_sweep(cfg, force);
    std::cout << "sweep: " << rows.size() << " grid points -> "
              << (fs::path(resolve_output_dir(cfg.output_dir)) / "sweep.csv").string() << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out_dir) {
    aggregate_reports(runs, out_dir);
    std::cout << "tables written to " << resolve_output_dir(out_dir) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"streaming test-time adaptation for causal time-series forecasting"};
    app.require_subcommand(1);

    std::string config_path, out_path, checkpoint_path, mode_name = "norm_only";
    std::string input, schema = "ett", kind = "gradual", output_dir;
    std::vector<std::string> run_dirs;
    double start_frac = 0.6, mean_per_1000 = 0.3, std_per_1000 = 0.3, noise_k = 1.5;
    double period = 24.0, sigma = 0.1;
    int segments = 3, harmonics = 2, change_points = 2;
    std::uint64_t seed = 0;
    std::int64_t master_seed = -1;
    bool force = false;

    auto* train = app.add_subcommand("train", "supervised pretraining of the TCN backbone");
    train->add_option("--config", config_path, "experiment config (json)")->required();
    train->add_option("--out", out_path, "checkpoint output path");

    auto* adapt = app.add_subcommand("adapt", "stream the test range through one TTA mode");
    adapt->add_option("--config", config_path, "experiment config (json)")->required();
    adapt->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    adapt->add_option("--mode", mode_name, "no_tta | bn_stats | norm_only");
    adapt->add_option("--out", out_path, "adaptation log output path");

    auto* shift = app.add_subcommand("shift", "apply a synthetic regime shift to a CSV");
    shift->add_option("--input", input, "input csv")->required();
    shift->add_option("--schema", schema, "ett | ohlcv");
    shift->add_option("--kind", kind, "gradual | noise | structural");
    shift->add_option("--out", out_path, "output csv")->required();
    shift->add_option("--start-frac", start_frac, "calibration/shift boundary (default 0.6)");
    shift->add_option("--seed", seed, "generator seed");
    shift->add_option("--mean-per-1000", mean_per_1000, "gradual: mean drift target");
    shift->add_option("--std-per-1000", std_per_1000, "gradual: std drift target");
    shift->add_option("--noise-k", noise_k, "noise: inflation multiplier");
    shift->add_option("--segments", segments, "noise: segment count");
    shift->add_option("--period", period, "structural: base period");
    shift->add_option("--harmonics", harmonics, "structural: harmonic count");
    shift->add_option("--change-points", change_points, "structural: change point count");
    shift->add_option("--sigma", sigma, "structural: noise std");

    auto* evaluate = app.add_subcommand(
        "evaluate", "full pipeline: train, calibrate, deploy all modes, write the report bundle");
    evaluate->add_option("--config", config_path, "experiment config (json)")->required();
    evaluate->add_option("--checkpoint", checkpoint_path, "reuse an existing checkpoint");
    evaluate->add_option("--output-dir", output_dir, "override config output_dir");
    evaluate->add_option("--seed", master_seed, "override config master_seed");

    auto* sweep = app.add_subcommand("sweep", "run the config's hyperparameter grids");
    sweep->add_option("--config", config_path, "experiment config (json)")->required();
    sweep->add_flag("--force", force, "allow grids larger than 500 points");

    auto* report = app.add_subcommand("report", "aggregate run bundles into table CSVs");
    report->add_option("--runs", run_dirs, "run bundle directories")->required();
    report->add_option("--out", output_dir, "output directory for tables")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(config_path, out_path);
        if (adapt->parsed()) return cmd_adapt(config_path, checkpoint_path, mode_name, out_path);
        if (shift->parsed())
            return cmd_shift(input, schema, kind, out_path, start_frac, seed, mean_per_1000,
                             std_per_1000, noise_k, segments, period, harmonics, change_points,
                             sigma);
        if (evaluate->parsed())
            return cmd_evaluate(config_path, checkpoint_path, output_dir, master_seed);
        if (sweep->parsed()) return cmd_sweep(config_path, force);
        if (report->parsed()) return cmd_report(run_dirs, output_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
