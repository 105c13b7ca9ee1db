#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "support.hpp"
#include "tta/experiment.hpp"

using namespace tta;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// a tiny but complete config over a synthetic OHLCV file
ExperimentConfig tiny_ohlcv_config(const std::string& dir, const std::string& tag,
                                   std::uint64_t seed = 7) {
    ExperimentConfig cfg;
    cfg.data_path = ttest::make_ohlcv_csv(dir + "/prices_" + tag + ".csv", 420, 1234);
    cfg.schema = CsvSchema::Ohlcv;
    cfg.task = TaskKind::Classification;
    cfg.L = 16;
    cfg.H = 1;
    cfg.train_frac = 0.5;
    cfg.valid_frac = 0.25;
    cfg.arch.blocks = 1;
    cfg.arch.hidden = 4;
    cfg.arch.kernel = 2;
    cfg.arch.dilations = {1};
    cfg.train.batch_size = 64;
    cfg.train.max_epochs = 2;
    cfg.train.patience = 2;
    cfg.adapt.context_w = 8;
    cfg.adapt.steps = 1;
    cfg.adapt.k_transforms = 2;
    cfg.augmentation_names = {"scale"};
    cfg.rolling_window = 10;
    cfg.output_dir = dir + "/run_" + tag;
    cfg.master_seed = seed;
    return cfg;
}

ExperimentConfig tiny_ett_config(const std::string& dir, const std::string& tag,
                                 bool with_shift) {
    ExperimentConfig cfg;
    auto frame = ttest::make_ett_frame(700, 99);
    cfg.data_path = ttest::write_ett_csv(dir + "/ett_" + tag + ".csv", frame);
    cfg.schema = CsvSchema::Ett;
    cfg.task = TaskKind::Regression;
    cfg.target_channel = "OT";
    cfg.L = 24;
    cfg.H = 4;
    cfg.train_frac = 0.5;
    cfg.valid_frac = 0.25;
    cfg.arch.blocks = 1;
    cfg.arch.hidden = 4;
    cfg.arch.kernel = 2;
    cfg.arch.dilations = {1};
    cfg.train.batch_size = 64;
    cfg.train.max_epochs = 2;
    cfg.train.patience = 2;
    cfg.adapt.context_w = 8;
    cfg.adapt.steps = 1;
    cfg.adapt.k_transforms = 2;
    cfg.augmentation_names = {"scale"};
    cfg.rolling_window = 10;
    cfg.output_dir = dir + "/run_" + tag;
    cfg.master_seed = 11;
    if (with_shift) {
        ShiftSpec s;
        s.kind = ShiftKind::Gradual;
        s.seed = 3;
        cfg.shift = s;
    }
    return cfg;
}

}  // namespace

TEST_CASE("config parser rejects unknown keys at every level") {
    const char* bad_top = R"({"version":1,"bogus":1,"data":{"path":"x","schema":"ett"},
        "task":"regression","window":{"L":8,"H":1},"split":{"train_frac":0.5,"valid_frac":0.2}})";
    CHECK_THROWS_AS(parse_config_json(bad_top, "test"), InputError);

    const char* bad_nested = R"({"version":1,"data":{"path":"x","schema":"ett","oops":2},
        "task":"regression","window":{"L":8,"H":1},"split":{"train_frac":0.5,"valid_frac":0.2}})";
    CHECK_THROWS_AS(parse_config_json(bad_nested, "test"), InputError);

    const char* bad_adapt = R"({"version":1,"data":{"path":"x","schema":"ett"},
        "task":"regression","window":{"L":8,"H":1},"split":{"train_frac":0.5,"valid_frac":0.2},
        "adapt":{"modes":["no_tta"],"step":3}})";
    CHECK_THROWS_AS(parse_config_json(bad_adapt, "test"), InputError);
}

TEST_CASE("config parser applies documented defaults and round-trips") {
    const char* minimal = R"({"version":1,"data":{"path":"x.csv","schema":"ett"},
        "task":"regression","window":{"L":96,"H":24},
        "split":{"train_frac":0.6,"valid_frac":0.2}})";
    auto cfg = parse_config_json(minimal, "test");
    CHECK(cfg.adapt.context_w == 64);
    CHECK(cfg.adapt.steps == 5);
    CHECK(cfg.adapt.learning_rate == doctest::Approx(1e-4));
    CHECK(cfg.adapt.alpha == doctest::Approx(1.0));
    CHECK(cfg.adapt.gamma_drift == doctest::Approx(1e-3));
    CHECK(cfg.adapt.tau_quantile == doctest::Approx(0.8));
    CHECK(cfg.arch.blocks == 3);
    CHECK(cfg.arch.hidden == 64);
    CHECK(cfg.arch.dilations == std::vector<int>{1, 2, 4});
    CHECK(cfg.train.batch_size == 512);
    CHECK(cfg.train.learning_rate == doctest::Approx(1e-4));
    CHECK(cfg.trading_days_per_year == 252);

    auto text = serialize_config(cfg);
    auto cfg2 = parse_config_json(text, "round-trip");
    CHECK(serialize_config(cfg2) == text);
}

TEST_CASE("sweep grids outside the reference sets are rejected unless overridden") {
    const char* custom = R"({"version":1,"data":{"path":"x.csv","schema":"ett"},
        "task":"regression","window":{"L":96,"H":24},
        "split":{"train_frac":0.6,"valid_frac":0.2},
        "sweep":{"context_w":[48]}})";
    CHECK_THROWS_AS(parse_config_json(custom, "test"), Error);

    const char* allowed = R"({"version":1,"data":{"path":"x.csv","schema":"ett"},
        "task":"regression","window":{"L":96,"H":24},
        "split":{"train_frac":0.6,"valid_frac":0.2},
        "sweep":{"context_w":[48],"allow_custom":true}})";
    CHECK(parse_config_json(allowed, "test").sweep.context_w == std::vector<int>{48});
}

TEST_CASE("run_experiment produces a complete, byte-identical report bundle") {
    const auto dir = ttest::temp_dir("exp_det");
    auto cfg1 = tiny_ohlcv_config(dir, "a");
    auto cfg2 = tiny_ohlcv_config(dir, "b");
    // same data file for both runs
    cfg2.data_path = cfg1.data_path;

    auto r1 = run_experiment(cfg1);
    auto r2 = run_experiment(cfg2);
    CHECK(r1.modes.size() == 3);

    const char* files[] = {"metrics.json",          "checkpoint.bin",
                           "adapt_log_no_tta.csv",  "adapt_log_bn_stats.csv",
                           "adapt_log_norm_only.csv", "curves_no_tta.csv",
                           "reliability_no_tta.csv"};
    for (const char* f : files) {
        CAPTURE(f);
        const auto a = read_file(fs::path(r1.bundle_dir) / f);
        const auto b = read_file(fs::path(r2.bundle_dir) / f);
        CHECK(a == b);
        CHECK(!a.empty());
    }
    // config snapshots differ only in the output path
    CHECK(read_file(fs::path(r1.bundle_dir) / "config.json")
              .find("\"master_seed\": 7") != std::string::npos);

    // different master seed changes the outcome
    auto cfg3 = tiny_ohlcv_config(dir, "c", 8);
    cfg3.data_path = cfg1.data_path;
    auto r3 = run_experiment(cfg3);
    CHECK(read_file(fs::path(r1.bundle_dir) / "metrics.json") !=
          read_file(fs::path(r3.bundle_dir) / "metrics.json"));
}

TEST_CASE("all modes consume the identical window stream") {
    const auto dir = ttest::temp_dir("exp_stream");
    auto cfg = tiny_ohlcv_config(dir, "s");
    auto rep = run_experiment(cfg);
    REQUIRE(rep.modes.size() == 3);
    CHECK(rep.modes[0].stream_hash == rep.modes[1].stream_hash);
    CHECK(rep.modes[1].stream_hash == rep.modes[2].stream_hash);
}

TEST_CASE("mode list {no_tta} only yields no DM comparisons") {
    const auto dir = ttest::temp_dir("exp_notta");
    auto cfg = tiny_ohlcv_config(dir, "n");
    cfg.adapt_modes = {"no_tta"};
    auto rep = run_experiment(cfg);
    CHECK(rep.modes.size() == 1);
    CHECK(rep.dm_rows.empty());
    const auto meta = read_file(fs::path(rep.bundle_dir) / "metrics.json");
    CHECK(meta.find("\"dm\": []") != std::string::npos);
}

TEST_CASE("stage-I shaped run (ett + gradual drift) writes the shift sidecar") {
    const auto dir = ttest::temp_dir("exp_shift");
    auto cfg = tiny_ett_config(dir, "g", true);
    auto rep = run_experiment(cfg);
    CHECK(fs::exists(fs::path(rep.bundle_dir) / "shift_metadata.json"));
    const auto meta = read_file(fs::path(rep.bundle_dir) / "shift_metadata.json");
    CHECK(meta.find("\"kind\": \"gradual\"") != std::string::npos);
    const auto metrics = read_file(fs::path(rep.bundle_dir) / "metrics.json");
    CHECK(metrics.find("\"shift\": \"gradual\"") != std::string::npos);
    for (const auto& m : rep.modes) CHECK(m.has_reg);
}

TEST_CASE("leakage audit: no day reads a window beyond itself") {
    const auto dir = ttest::temp_dir("exp_leak");
    auto cfg = tiny_ohlcv_config(dir, "l");
    std::int64_t current_day = -1;
    std::size_t accesses = 0;
    bool violation = false;
    RunHooks hooks;
    hooks.on_day_start = [&](std::int64_t day) { current_day = day; };
    hooks.on_window_access = [&](std::int64_t idx) {
        ++accesses;
        if (idx > current_day) violation = true;
    };
    run_experiment(cfg, &hooks);
    CHECK(accesses > 0);
    CHECK_FALSE(violation);
}

TEST_CASE("fallback fraction on the validation stream matches 1 - q") {
    const auto dir = ttest::temp_dir("exp_frac");
    auto cfg = tiny_ohlcv_config(dir, "f");
    auto data = prepare_data(cfg);

    TaskHead head{HeadKind::Classification, 1};
    ArchDescriptor arch = cfg.arch;
    arch.input_channels = data.dataset.d;
    Backbone net(arch, head, derive_seed(cfg.master_seed, "init"));

    AdaptConfig acfg = cfg.adapt;
    std::vector<double> train_std;
    {
        Scaler s;
        s.fit(data.frame, 0, data.split.train_end_row);
        train_std = s.stddev();
    }
    acfg.augmentations = AugmentationSet::from_names(cfg.augmentation_names, train_std);

    std::vector<double> us;
    const double tau = calibrate_tau(net, data.dataset, acfg, cfg.master_seed, nullptr, &us);
    double frac = 0.0;
    for (double u : us) frac += u > tau ? 1.0 : 0.0;
    frac /= static_cast<double>(us.size());
    CHECK(std::fabs(frac - (1.0 - acfg.tau_quantile)) <=
          2.0 / std::sqrt(static_cast<double>(us.size())));
}

TEST_CASE("run_sweep: 1x1 grid reproduces the single experiment headline") {
    const auto dir = ttest::temp_dir("exp_sweep1");
    auto cfg = tiny_ohlcv_config(dir, "w");
    cfg.adapt_modes = {"no_tta", "bn_stats"};
    cfg.sweep.context_w = {32};
    auto rows = run_sweep(cfg);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].context_w == 32);

    // the same point run directly
    ExperimentConfig point = cfg;
    point.sweep = SweepGrids{};
    point.adapt.context_w = 32;
    point.master_seed = rows[0].seed;
    point.output_dir = dir + "/direct";
    auto rep = run_experiment(point);
    CHECK(rows[0].headline.at("no_tta.accuracy") ==
          doctest::Approx(rep.modes[0].cls.accuracy).epsilon(1e-12));
}

TEST_CASE("run_sweep: 3x3 grid gives 9 rows with distinct seeds") {
    const auto dir = ttest::temp_dir("exp_sweep9");
    auto cfg = tiny_ohlcv_config(dir, "g9");
    cfg.adapt_modes = {"no_tta"};
    cfg.train.max_epochs = 1;
    cfg.sweep.context_w = {32, 64, 96};
    cfg.sweep.steps = {1, 3, 5};
    auto rows = run_sweep(cfg);
    REQUIRE(rows.size() == 9);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = i + 1; j < rows.size(); ++j) CHECK(rows[i].seed != rows[j].seed);
    CHECK(fs::exists(fs::path(resolve_output_dir(cfg.output_dir)) / "sweep.csv"));
}

TEST_CASE("run_sweep: loss-ablation grid sets (alpha, beta) per point") {
    const auto dir = ttest::temp_dir("exp_ablate");
    auto cfg = tiny_ohlcv_config(dir, "ab");
    cfg.adapt_modes = {"norm_only"};
    cfg.sweep.loss_weights = {{1, 0}, {0, 1}, {1, 1}};
    auto rows = run_sweep(cfg);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].alpha == doctest::Approx(1.0));
    CHECK(rows[0].beta == doctest::Approx(0.0));
    CHECK(rows[1].alpha == doctest::Approx(0.0));
    CHECK(rows[1].beta == doctest::Approx(1.0));
    CHECK(rows[2].alpha == doctest::Approx(1.0));
    CHECK(rows[2].beta == doctest::Approx(1.0));
}

TEST_CASE("run_sweep guards oversized grids") {
    const auto dir = ttest::temp_dir("exp_guard");
    auto cfg = tiny_ohlcv_config(dir, "gd");
    cfg.sweep.allow_custom = true;
    cfg.sweep.context_w.assign(600, 32);
    CHECK_THROWS_AS(run_sweep(cfg), Error);
}

TEST_CASE("aggregate_reports emits the four table shapes") {
    const auto dir = ttest::temp_dir("exp_agg");
    auto cls_cfg = tiny_ohlcv_config(dir, "t1");
    auto rep1 = run_experiment(cls_cfg);
    auto reg_cfg = tiny_ett_config(dir, "t2", true);
    auto rep2 = run_experiment(reg_cfg);

    const auto out = dir + "/tables";
    aggregate_reports({rep1.bundle_dir, rep2.bundle_dir}, out);

    auto direction = read_file(fs::path(out) / "table_direction.csv");
    CHECK(direction.find("avg_rank") != std::string::npos);
    CHECK(direction.find("no_tta") != std::string::npos);
    CHECK(direction.find("bn_stats") != std::string::npos);

    auto shift_table = read_file(fs::path(out) / "table_shift.csv");
    CHECK(shift_table.find("run,method,shift,mae,rmse,r2") == 0);
    CHECK(shift_table.find("gradual") != std::string::npos);

    auto dm_table = read_file(fs::path(out) / "table_dm.csv");
    CHECK(dm_table.find("comparison,dataset,dm_stat,p_value,note") == 0);
    CHECK(dm_table.find("bn_stats vs no_tta") != std::string::npos);

    auto bt = read_file(fs::path(out) / "table_backtest.csv");
    CHECK(bt.find("dataset,strategy,ann_return,ann_volatility,sharpe,nw_t") == 0);
    CHECK(bt.find("norm_only") != std::string::npos);
}

TEST_CASE("checkpoint reuse skips retraining and matches the scaler") {
    const auto dir = ttest::temp_dir("exp_ckpt");
    auto cfg = tiny_ohlcv_config(dir, "ck");
    auto rep = run_experiment(cfg);

    auto cfg2 = cfg;
    cfg2.output_dir = dir + "/run_ck2";
    cfg2.checkpoint_path = (fs::path(rep.bundle_dir) / "checkpoint.bin").string();
    auto rep2 = run_experiment(cfg2);
    // deployment results must match: same params, same stream, same seeds
    CHECK(rep2.modes[0].day_loss == rep.modes[0].day_loss);

    // a checkpoint from different data is rejected through the scaler check
    auto other = tiny_ohlcv_config(dir, "other", 9);
    other.data_path = ttest::make_ohlcv_csv(dir + "/prices_other.csv", 420, 777);
    auto rep3 = run_experiment(other);
    auto cfg3 = cfg;
    cfg3.output_dir = dir + "/run_ck3";
    cfg3.checkpoint_path = (fs::path(rep3.bundle_dir) / "checkpoint.bin").string();
    CHECK_THROWS_AS(run_experiment(cfg3), Error);
}
