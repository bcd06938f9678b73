// Command-line front end: ingest | synth | train | predict | evaluate | baseline.
// Every run resolves a flat key=value config (file + overrides), performs one
// unit of work and writes a manifest describing exactly what it ran with.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cstn/baselines.hpp"
#include "cstn/errors.hpp"
#include "cstn/evaluator.hpp"
#include "cstn/model.hpp"
#include "cstn/pipeline.hpp"
#include "cstn/runconfig.hpp"
#include "cstn/synth.hpp"
#include "cstn/timeutil.hpp"
#include "cstn/trainer.hpp"

namespace {

using namespace cstn;

std::string default_path(const RunConfig& cfg, const std::string& key, const std::string& fallback) {
    const std::string v = cfg.get_string(key);
    return v.empty() ? cfg.get_string("out_dir") + "/" + fallback : v;
}

std::string require_path(const RunConfig& cfg, const std::string& key) {
    const std::string v = cfg.get_string(key);
    if (v.empty()) throw ConfigError("key '" + key + "' is required for this command");
    return v;
}

void require_file(const std::string& path, const std::string& what) {
    if (!std::filesystem::exists(path)) throw MissingInputError(what + " '" + path + "' does not exist");
}

void prepare_out_dir(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.get_string("out_dir"));
}

void finish(const RunConfig& cfg, const std::string& command) {
    const std::string path = cfg.get_string("out_dir") + "/manifest-" + command + ".txt";
    cfg.write_manifest(path, command);
    std::cout << "manifest: " << path << "\n";
}

GridSpec grid_from_config(const RunConfig& cfg) {
    GridSpec grid;
    grid.lat_min = cfg.get_double("lat_min");
    grid.lat_max = cfg.get_double("lat_max");
    grid.lon_min = cfg.get_double("lon_min");
    grid.lon_max = cfg.get_double("lon_max");
    grid.rows = cfg.get_int("grid_rows");
    grid.cols = cfg.get_int("grid_cols");
    try {
        grid.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return grid;
}

CSTNConfig model_from_config(const RunConfig& cfg, const IntervalSeries& series) {
    CSTNConfig m;
    m.grid_rows = series.grid.rows;
    m.grid_cols = series.grid.cols;
    m.input_steps = cfg.get_int("input_steps");
    m.horizon = cfg.get_int("horizon");
    m.local_depth = cfg.get_int("local_depth");
    m.local_channels = cfg.get_int("local_channels");
    m.fuse_channels = cfg.get_int("fuse_channels");
    m.lstm_channels = cfg.get_int("lstm_channels");
    m.seq_channels = cfg.get_int("seq_channels");
    m.sim_channels = cfg.get_int("sim_channels");
    m.meteo_hidden1 = cfg.get_int("meteo_hidden1");
    m.meteo_hidden2 = cfg.get_int("meteo_hidden2");
    m.meteo_embed = cfg.get_int("meteo_embed");
    m.meteo_inputs = static_cast<int>(default_weather_vocab().size()) + kIndicatorCount;
    m.destination_view = cfg.get_bool("destination_view");
    m.meteo_enabled = cfg.get_bool("meteo_enabled");
    m.temporal_enabled = cfg.get_bool("temporal_enabled");
    m.correlation_enabled = cfg.get_bool("correlation_enabled");
    try {
        m.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return m;
}

TrainConfig train_from_config(const RunConfig& cfg) {
    TrainConfig t;
    t.batch_size = cfg.get_int("batch_size");
    t.base_lr = cfg.get_double("base_lr");
    t.lr_decay = cfg.get_double("lr_decay");
    t.lr_decay_every = cfg.get_int("lr_decay_every");
    t.epochs = cfg.get_int("epochs");
    t.seed = cfg.get_u64("seed");
    t.shuffle = cfg.get_bool("shuffle");
    t.threads = cfg.get_int("threads");
    t.stop_loss_ratio = cfg.get_double("stop_loss_ratio");
    try {
        t.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return t;
}

IntervalSeries load_cache(const RunConfig& cfg) {
    const std::string path = require_path(cfg, "cache");
    require_file(path, "dataset cache");
    return load_series(path);
}

void print_metrics_line(const std::string& subset, const std::string& mode,
                        const std::optional<MetricValues>& v) {
    if (v) {
        std::printf("  %-12s %-7s mape %7.2f%%  rmse %9.4f  entries %zu\n", subset.c_str(),
                    mode.c_str(), v->mape * 100.0, v->rmse, v->entries);
    } else {
        std::printf("  %-12s %-7s no entries above the demand threshold\n", subset.c_str(),
                    mode.c_str());
    }
}

// Shared by evaluate and baseline: full report over aligned predictions.
std::vector<ReportRow> build_report(const AlignedPredictions& aligned, const IntervalSeries& series,
                                    double min_demand, int high_k) {
    std::vector<ReportRow> rows;
    rows.push_back({"all", "od", od_metrics(aligned.preds, aligned.gts, min_demand)});
    rows.push_back({"all", "origin", origin_metrics(aligned.preds, aligned.gts, min_demand)});

    const int N = series.grid.region_count();
    const int k = std::min(high_k, N);
    if (k >= 1) {
        std::vector<Tensor> train_od(series.od.begin(), series.od.begin() + series.train_intervals);
        const std::vector<int> subset = high_demand_subset(train_od, k);
        rows.push_back({"high_demand", "od", od_metrics_subset(aligned.preds, aligned.gts, subset, min_demand)});
        rows.push_back(
            {"high_demand", "origin", origin_metrics_subset(aligned.preds, aligned.gts, subset, min_demand)});
    }
    for (const DaySplitRow& day : day_split_report(aligned.preds, aligned.gts, aligned.times, min_demand)) {
        rows.push_back({day.name, "od", day.od});
        rows.push_back({day.name, "origin", day.origin});
    }
    return rows;
}

void emit_report(const RunConfig& cfg, const std::string& csv_path,
                 const std::vector<ReportRow>& rows) {
    write_report_csv(csv_path, rows);
    for (const ReportRow& row : rows) print_metrics_line(row.subset, row.mode, row.values);
    std::cout << "report: " << csv_path << "\n";
    (void)cfg;
}

// --- commands ---

void run_ingest(const RunConfig& cfg) {
    prepare_out_dir(cfg);
    const std::string trips_path = require_path(cfg, "trips_csv");
    const std::string cache_path = require_path(cfg, "cache");
    require_file(trips_path, "trip csv");
    const std::string meteo_path = cfg.get_string("meteo_csv");
    if (!meteo_path.empty()) require_file(meteo_path, "weather csv");

    TripCsvStats csv_stats;
    const std::vector<TripRecord> trips = read_trip_csv(trips_path, &csv_stats);
    std::vector<MeteoRecord> meteo;
    if (!meteo_path.empty()) meteo = read_meteo_csv(meteo_path);

    IngestStats ingest;
    const IntervalSeries series = build_series(grid_from_config(cfg), trips, meteo,
                                               cfg.get_int("interval_minutes"),
                                               cfg.get_double("test_fraction"), &ingest);
    save_series(cache_path, series);

    std::printf("rows %zu (malformed %zu), trips used %zu (bad coords %zu, out of box %zu)\n",
                csv_stats.rows, csv_stats.malformed, ingest.used, ingest.invalid_coord,
                ingest.out_of_bounds);
    std::printf("intervals %d (train %d, test %d), start %s\n", series.interval_count(),
                series.train_intervals, series.interval_count() - series.train_intervals,
                format_datetime(series.start_time).c_str());
    std::cout << "cache: " << cache_path << "\n";
    finish(cfg, "ingest");
}

void run_synth(const RunConfig& cfg) {
    prepare_out_dir(cfg);
    const std::string cache_path = require_path(cfg, "cache");
    SynthParams params;
    params.grid_rows = cfg.get_int("grid_rows");
    params.grid_cols = cfg.get_int("grid_cols");
    params.interval_minutes = cfg.get_int("interval_minutes");
    params.intervals = cfg.get_int("synth_intervals");
    params.base_rate = cfg.get_double("synth_base_rate");
    params.diurnal_amplitude = cfg.get_double("synth_diurnal");
    params.weather_strength = cfg.get_double("synth_weather");
    params.poisson_noise = cfg.get_bool("synth_poisson");
    params.flat_rates = cfg.get_bool("synth_flat");
    params.test_fraction = cfg.get_double("test_fraction");
    params.seed = cfg.get_u64("seed");

    const IntervalSeries series = synth_generate(params);
    save_series(cache_path, series);
    std::printf("intervals %d (train %d, test %d), grid %dx%d, demand range [%g, %g]\n",
                series.interval_count(), series.train_intervals,
                series.interval_count() - series.train_intervals, series.grid.rows, series.grid.cols,
                series.stats.od_min, series.stats.od_max);
    std::cout << "cache: " << cache_path << "\n";
    finish(cfg, "synth");
}

// Loss over every horizon step of one sample.
Var window_loss(Tape& tape, ParamGroup& params, const CSTNConfig& model, const SampleWindow& w) {
    ModelInputs in{&w.inputs, model.meteo_enabled ? &w.meteo : nullptr};
    const std::vector<Var> preds = lcstn_forward(tape, params, model, in);
    Var loss = mean_squared_error(tape, preds[0], tape.constant_ref(&w.targets[0], "target[0]"));
    for (std::size_t s = 1; s < preds.size(); ++s) {
        Var step = mean_squared_error(tape, preds[s],
                                      tape.constant_ref(&w.targets[s], "target[" + std::to_string(s) + "]"));
        loss = add(tape, loss, step);
    }
    if (preds.size() > 1) loss = scale(tape, loss, 1.0 / static_cast<double>(preds.size()));
    return loss;
}

void run_train(const RunConfig& cfg) {
    prepare_out_dir(cfg);
    const IntervalSeries series = load_cache(cfg);
    const std::string ckpt_path = require_path(cfg, "checkpoint");
    const CSTNConfig requested = model_from_config(cfg, series);
    const TrainConfig train_cfg = train_from_config(cfg);

    Checkpoint state;
    Rng rng(train_cfg.seed);
    int start_epoch = 0;
    const std::string resume = cfg.get_string("resume_from");
    if (!resume.empty()) {
        require_file(resume, "checkpoint");
        state = load_checkpoint(resume);
        // A resumed run may extend the epoch budget; everything else that
        // shapes the trajectory must match the original run exactly.
        TrainConfig must_match = train_cfg;
        must_match.epochs = state.train.epochs;
        if (checkpoint_config_digest(state) !=
            checkpoint_config_digest(Checkpoint{requested, must_match, series.stats, 0, {}, {}}))
            throw ConfigError("resume checkpoint was trained with a different configuration");
        state.train = train_cfg;
        start_epoch = state.epochs_completed;
        rng.set_state({state.rng_state[0], state.rng_state[1], state.rng_state[2], state.rng_state[3]});
        std::printf("resuming from epoch %d\n", start_epoch);
    } else {
        state.model = requested;
        state.train = train_cfg;
        state.stats = series.stats;
        init_cstn_params(state.model, state.params, train_cfg.seed);
    }

    const std::vector<SampleWindow> windows =
        make_windows(series, state.model.input_steps, state.model.horizon, Split::Train);
    if (windows.empty()) throw ConfigError("training split has no complete windows");
    std::printf("training on %zu windows, %zu parameters tensors\n", windows.size(),
                state.params.size());

    auto loss_fn = [&](Tape& tape, int sample) {
        return window_loss(tape, state.params, state.model, windows[static_cast<std::size_t>(sample)]);
    };
    std::vector<EpochStats> history;
    const auto t0 = std::chrono::steady_clock::now();
    history = train_loop(state.params, static_cast<int>(windows.size()), train_cfg, loss_fn, rng,
                         start_epoch, [&](const EpochStats& s) {
                             std::printf("epoch %4d  loss %.6f  lr %g\n", s.epoch, s.mean_loss, s.lr);
                             std::fflush(stdout);
                         });
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    state.epochs_completed = history.empty() ? start_epoch : history.back().epoch + 1;
    const auto rng_state = rng.state();
    std::copy(rng_state.begin(), rng_state.end(), state.rng_state.begin());
    save_checkpoint(ckpt_path, state);

    const std::string loss_path = default_path(cfg, "loss_csv", "loss.csv");
    {
        std::ofstream out(loss_path, std::ios::trunc);
        out << "epoch,loss,lr\n";
        char buf[64];
        for (const EpochStats& s : history) {
            std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", s.epoch, s.mean_loss, s.lr);
            out << buf;
        }
    }
    std::printf("trained %zu epochs in %.1fs\n", history.size(), secs);
    std::cout << "checkpoint: " << ckpt_path << "\nloss trace: " << loss_path << "\n";
    finish(cfg, "train");
}

Checkpoint load_model(const RunConfig& cfg, const IntervalSeries& series) {
    const std::string path = require_path(cfg, "checkpoint");
    require_file(path, "checkpoint");
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.model.grid_rows != series.grid.rows || ckpt.model.grid_cols != series.grid.cols)
        throw ConfigError("checkpoint grid " + std::to_string(ckpt.model.grid_rows) + "x" +
                          std::to_string(ckpt.model.grid_cols) + " does not match dataset grid " +
                          std::to_string(series.grid.rows) + "x" + std::to_string(series.grid.cols));
    return ckpt;
}

void run_evaluate(const RunConfig& cfg) {
    prepare_out_dir(cfg);
    const IntervalSeries series = load_cache(cfg);
    Checkpoint ckpt = load_model(cfg, series);
    const std::vector<SampleWindow> windows =
        make_windows(series, ckpt.model.input_steps, ckpt.model.horizon, Split::Test);
    if (windows.empty()) throw ConfigError("test split has no complete windows");

    const auto preds = predict_windows_raw(ckpt.model, ckpt.params, windows, ckpt.stats);
    const AlignedPredictions aligned = align_with_truth(preds, windows, series);
    const auto rows = build_report(aligned, series, cfg.get_double("min_demand"),
                                   cfg.get_int("high_demand_k"));
    emit_report(cfg, default_path(cfg, "report_csv", "report.csv"), rows);
    finish(cfg, "evaluate");
}

void run_baseline(const RunConfig& cfg) {
    prepare_out_dir(cfg);
    const IntervalSeries series = load_cache(cfg);
    const std::string name = cfg.get_string("baseline");
    const int n = cfg.get_int("input_steps");
    const std::vector<SampleWindow> windows = make_windows(series, n, 1, Split::Test);
    if (windows.empty()) throw ConfigError("test split has no complete windows");

    std::vector<std::vector<Tensor>> preds;
    preds.reserve(windows.size());
    if (name == "ha_all") {
        HaAllBaseline model;
        model.fit(series);
        for (const SampleWindow& w : windows)
            preds.push_back({model.predict_raw(series, w.target_intervals.front())});
    } else if (name == "ha_rec") {
        for (const SampleWindow& w : windows) preds.push_back({ha_rec_predict_raw(w, series.stats)});
    } else if (name == "olsr") {
        const std::vector<SampleWindow> train = make_windows(series, n, 1, Split::Train);
        if (train.empty()) throw ConfigError("training split has no complete windows");
        OlsrBaseline model(cfg.get_double("olsr_ridge"));
        model.fit(train);
        for (const SampleWindow& w : windows) preds.push_back({model.predict_raw(w, series.stats)});
    } else if (name == "mlp") {
        const std::vector<SampleWindow> train = make_windows(series, n, 1, Split::Train);
        if (train.empty()) throw ConfigError("training split has no complete windows");
        MlpBaselineConfig mlp_cfg;
        mlp_cfg.train = train_from_config(cfg);
        mlp_cfg.train.epochs = cfg.get_int("mlp_epochs");
        mlp_cfg.train.base_lr = cfg.get_double("mlp_lr");
        mlp_cfg.train.stop_loss_ratio = 0.0;
        Rng rng(mlp_cfg.train.seed);
        MlpBaseline model;
        model.fit(train, mlp_cfg, rng);
        for (const SampleWindow& w : windows) preds.push_back({model.predict_raw(w, series.stats)});
    } else {
        throw ConfigError("unknown baseline '" + name + "' (expected ha_all, ha_rec, olsr or mlp)");
    }

    const AlignedPredictions aligned = align_with_truth(preds, windows, series);
    const auto rows = build_report(aligned, series, cfg.get_double("min_demand"),
                                   cfg.get_int("high_demand_k"));
    std::printf("baseline %s over %zu windows\n", name.c_str(), windows.size());
    emit_report(cfg, default_path(cfg, "report_csv", "report-" + name + ".csv"), rows);
    finish(cfg, "baseline");
}

void run_predict(const RunConfig& cfg) {
    prepare_out_dir(cfg);
    const IntervalSeries series = load_cache(cfg);
    Checkpoint ckpt = load_model(cfg, series);
    std::vector<SampleWindow> windows =
        make_windows(series, ckpt.model.input_steps, ckpt.model.horizon, Split::Test);
    if (windows.empty()) throw ConfigError("test split has no complete windows");
    const int limit = cfg.get_int("predict_limit");
    if (limit > 0 && static_cast<int>(windows.size()) > limit) windows.resize(limit);

    const auto preds = predict_windows_raw(ckpt.model, ckpt.params, windows, ckpt.stats);
    const std::string path = default_path(cfg, "predictions_csv", "predictions.csv");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw MissingInputError("cannot open '" + path + "' for writing");
    out << "interval,origin_i,origin_j,dest_i,dest_j,value\n";
    char buf[96];
    std::size_t written = 0;
    const int rows_n = series.grid.rows, cols_n = series.grid.cols;
    for (std::size_t w = 0; w < windows.size(); ++w) {
        for (std::size_t s = 0; s < preds[w].size(); ++s) {
            const Tensor& p = preds[w][s];
            const int interval = windows[w].target_intervals[s];
            for (int d = 0; d < p.dim(0); ++d)
                for (int oi = 0; oi < rows_n; ++oi)
                    for (int oj = 0; oj < cols_n; ++oj) {
                        const double v = p.at(d, oi, oj);
                        if (v == 0.0) continue;  // zero-demand rows stay out of the dump
                        std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%d,%.17g\n", interval, oi, oj,
                                      d / cols_n, d % cols_n, v);
                        out << buf;
                        ++written;
                    }
        }
    }
    std::printf("wrote %zu rows for %zu windows\n", written, windows.size());
    std::cout << "predictions: " << path << "\n";
    finish(cfg, "predict");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"origin-destination demand forecasting toolkit"};
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"ingest", "build a dataset cache from trip and weather csv files"},
        {"synth", "build a synthetic dataset cache"},
        {"train", "train the forecaster on a dataset cache"},
        {"predict", "dump raw-demand predictions for the test split"},
        {"evaluate", "score a checkpoint on the test split"},
        {"baseline", "score a reference predictor on the test split"},
    };
    struct SubState {
        CLI::App* sub = nullptr;
        std::string config_path;
    };
    std::vector<SubState> subs(commands.size());
    for (std::size_t i = 0; i < commands.size(); ++i) {
        subs[i].sub = app.add_subcommand(commands[i].first, commands[i].second);
        subs[i].sub->add_option("--config", subs[i].config_path, "key = value config file");
        subs[i].sub->allow_extras();  // trailing key=value pairs override the file
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        for (std::size_t i = 0; i < commands.size(); ++i) {
            if (!subs[i].sub->parsed()) continue;
            RunConfig cfg;
            if (!subs[i].config_path.empty()) cfg.load_file(subs[i].config_path);
            for (const std::string& extra : subs[i].sub->remaining()) cfg.set_override(extra);
            const std::string& name = commands[i].first;
            if (name == "ingest")
                run_ingest(cfg);
            else if (name == "synth")
                run_synth(cfg);
            else if (name == "train")
                run_train(cfg);
            else if (name == "predict")
                run_predict(cfg);
            else if (name == "evaluate")
                run_evaluate(cfg);
            else
                run_baseline(cfg);
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const MissingInputError& e) {
        std::cerr << "missing input: " << e.what() << "\n";
        return 3;
    } catch (const CorruptArtifactError& e) {
        std::cerr << "corrupt artifact: " << e.what() << "\n";
        return 4;
    } catch (const NumericalAbortError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
