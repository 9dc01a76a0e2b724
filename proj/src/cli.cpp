#include "gpupower/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include "gpupower/csv.hpp"
#include "gpupower/eval.hpp"
#include "gpupower/ingest.hpp"
#include "gpupower/predict.hpp"
#include "gpupower/replay.hpp"
#include "gpupower/synth.hpp"

namespace gpupower {

namespace {

struct ParamFlags {
    std::string params_file;
    std::optional<int> rounds;
    std::optional<double> learning_rate;
    std::optional<int> max_leaves;
    std::optional<int> min_samples_leaf;
    std::optional<int> bins;

    void add(CLI::App* app) {
        app->add_option("--params", params_file, "JSON file with boosting parameters");
        app->add_option("--rounds", rounds, "Boosting rounds")->check(CLI::PositiveNumber);
        app->add_option("--learning-rate", learning_rate, "Shrinkage")->check(CLI::PositiveNumber);
        app->add_option("--max-leaves", max_leaves, "Leaves per tree")->check(CLI::Range(2, 1 << 20));
        app->add_option("--min-leaf", min_samples_leaf, "Minimum samples per leaf")->check(CLI::PositiveNumber);
        app->add_option("--bins", bins, "Histogram bins per feature")->check(CLI::Range(2, 65535));
    }

    GbdtParams resolve() const {
        GbdtParams p;
        if (!params_file.empty()) {
            std::ifstream in(params_file);
            if (!in) throw DataError("cannot open params file: " + params_file);
            try {
                p = GbdtParams::from_json(Json::parse(in));
            } catch (const Json::exception& e) {
                throw DataError(std::string("malformed params file: ") + e.what());
            }
        }
        if (rounds) p.rounds = *rounds;
        if (learning_rate) p.learning_rate = *learning_rate;
        if (max_leaves) p.max_leaves = *max_leaves;
        if (min_samples_leaf) p.min_samples_leaf = *min_samples_leaf;
        if (bins) p.bins = *bins;
        p.validate();
        return p;
    }
};

struct FeatureFlags {
    std::vector<std::string> categorical;
    std::vector<std::string> numeric;
    bool categorical_set = false;
    bool numeric_set = false;
    CLI::Option* cat_opt = nullptr;
    CLI::Option* num_opt = nullptr;

    void add(CLI::App* app) {
        cat_opt = app->add_option("--categorical", categorical, "Categorical submission features")->delimiter(',');
        num_opt = app->add_option("--numeric", numeric, "Numeric submission features")->delimiter(',');
    }

    FeatureConfig resolve() const {
        FeatureConfig c;
        if (cat_opt && cat_opt->count() > 0) c.categorical = categorical;
        if (num_opt && num_opt->count() > 0) c.numeric = numeric;
        c.validate();
        return c;
    }
};

std::vector<JobTelemetry> jobs_with_targets(const std::string& path, std::ostream& err) {
    auto jobs = read_jobs(path);
    const auto before = jobs.size();
    std::erase_if(jobs, [](const JobTelemetry& j) { return !j.targets.has_value(); });
    if (jobs.size() != before) err << "note: skipped " << before - jobs.size() << " jobs without telemetry\n";
    if (jobs.size() < 2) throw DataError("need at least 2 jobs with telemetry, found " + std::to_string(jobs.size()));
    return jobs;
}

std::optional<std::array<double, 3>> parse_bands(const std::string& text) {
    if (text.empty() || text == "quantile") return std::nullopt;
    std::vector<double> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto v = csv::parse_double(item);
        if (!v) throw CLI::ValidationError("--bands", "not a number: '" + item + "'");
        values.push_back(*v);
    }
    if (values.size() != 3) throw CLI::ValidationError("--bands", "expected 'quantile' or three comma-separated watts");
    return std::array<double, 3>{values[0], values[1], values[2]};
}

std::string scheme_text(const PowerBandScheme& s) {
    const auto& b = s.boundaries();
    return csv::format_double(b[0]) + "," + csv::format_double(b[1]) + "," + csv::format_double(b[2]);
}

void write_json(const std::filesystem::path& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

std::string fmt(double v, int precision = 4) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(precision) << v;
    return ss.str();
}

std::string r2_text(const std::optional<double>& r2) { return r2 ? fmt(*r2) : "undefined"; }

void print_regression_row(std::ostream& out, const std::string& label, const std::string& target,
                          const RegressionReport& r) {
    out << std::left << std::setw(12) << label << std::setw(22) << target << " mae=" << fmt(r.mae)
        << " sym_acc=" << fmt(r.sym_accuracy) << " r2=" << r2_text(r.r2) << " n=" << r.n << '\n';
}

int cmd_ingest(const IngestConfig& cfg, const std::string& out_path, bool allow_rejects, std::ostream& out,
               std::ostream& err) {
    cfg.validate();
    const auto summary = ingest_files(cfg);
    const auto& jr = summary.joined;
    std::size_t attached = 0;
    for (const auto& j : jr.jobs) attached += j.samples.size();
    const std::size_t rejected = summary.slurm_rejects.size() + summary.dcgm_reject_count;
    out << jr.jobs.size() << " jobs, " << attached << " samples, " << jr.orphan_samples << " orphans, " << rejected
        << " rejected rows\n";
    out << "irregular samples dropped: " << summary.irregular_dropped << ", jobs without telemetry: "
        << jr.empty_jobs.size();
    if (cfg.application_filter) {
        out << ", filtered by application: " << jr.filtered_jobs << " jobs / " << jr.filtered_samples << " samples";
    }
    out << '\n';
    const auto report = [&](const char* file, const std::vector<RowReject>& rejects) {
        for (const auto& r : rejects) {
            err << file << " line " << r.line << (r.field.empty() ? "" : " [" + r.field + "]") << ": " << r.reason
                << '\n';
        }
    };
    report("slurm", summary.slurm_rejects);
    report("dcgm", summary.dcgm_rejects);
    if (summary.dcgm_reject_count > summary.dcgm_rejects.size()) {
        err << "dcgm: " << summary.dcgm_reject_count - summary.dcgm_rejects.size() << " further rejects not listed\n";
    }
    if (rejected > 0 && !allow_rejects) {
        err << "error: " << rejected << " rows rejected; fix the input or pass --allow-rejects\n";
        return kExitData;
    }
    write_jobs(out_path, jr.jobs);
    return kExitOk;
}

int cmd_stats(const std::string& in, const std::string& dir, int bins, std::ostream& out) {
    const auto jobs = read_jobs(in);
    const auto report = distribution_report(jobs, bins);
    write_distribution_report(report, dir);
    out << std::left << std::setw(22) << "metric";
    for (double p : kReportPercentiles) out << std::setw(10) << ("p" + std::to_string(static_cast<int>(p)));
    out << '\n';
    for (const auto& m : report.metrics) {
        out << std::setw(22) << m.metric;
        for (double v : m.percentiles) out << std::setw(10) << fmt(v, 2);
        out << '\n';
    }
    return kExitOk;
}

int cmd_train_stage1(const std::string& in, const std::string& model_path, double split, const GbdtParams& params,
                     const FeatureConfig& features, std::ostream& out, std::ostream& err) {
    const auto parts = chrono_split(jobs_with_targets(in, err), split);
    const auto predictor = train_stage1(parts.train, features, params);
    predictor.save(model_path);
    out << "stage 1: trained on " << parts.train.size() << " jobs, " << parts.test.size() << " held out; "
        << params.rounds << " rounds; model written to " << model_path << '\n';
    return kExitOk;
}

int cmd_eval_stage1(const std::string& in, const std::string& model_path, const std::string& dir, double split,
                    const std::string& baseline, int k, int min_jobs, std::ostream& out, std::ostream& err) {
    const auto predictor = Stage1Predictor::load(model_path);
    const auto parts = chrono_split(jobs_with_targets(in, err), split);
    std::filesystem::create_directories(dir);

    std::array<std::vector<double>, 3> truth, framework;
    for (const auto& j : parts.test) {
        const auto p = predictor.predict(j.record);
        for (std::size_t t = 0; t < 3; ++t) {
            truth[t].push_back(target_value(*j.targets, t));
            framework[t].push_back(target_value(p, t));
        }
    }
    Json report;
    report["split"] = {{"train", parts.train.size()}, {"test", parts.test.size()}};
    out << "stage 1 evaluation on " << parts.test.size() << " test jobs\n";
    for (std::size_t t = 0; t < 3; ++t) {
        const auto r = regression_report(truth[t], framework[t]);
        report["framework"][kTargetNames[t]] = to_json(r);
        print_regression_row(out, "framework", kTargetNames[t], r);
    }
    {
        std::ofstream pred(std::filesystem::path(dir) / "stage1_predictions.csv");
        csv::Writer w(pred);
        std::vector<std::string> header = {"job_id"};
        for (const auto& name : kTargetNames) {
            header.push_back(std::string("true_") + name);
            header.push_back(std::string("pred_") + name);
        }
        w.row(header);
        for (std::size_t i = 0; i < parts.test.size(); ++i) {
            std::vector<std::string> row = {parts.test[i].record.job_id};
            for (std::size_t t = 0; t < 3; ++t) {
                row.push_back(csv::format_double(truth[t][i]));
                row.push_back(csv::format_double(framework[t][i]));
            }
            w.row(row);
        }
    }
    const auto gain = predictor.importances(ImportanceKind::gain);
    const auto split_imp = predictor.importances(ImportanceKind::split);
    std::vector<std::string> columns;
    std::vector<std::vector<double>> values;
    for (std::size_t t = 0; t < 3; ++t) {
        columns.push_back(std::string(kTargetNames[t]) + "_gain");
        values.push_back(gain[t].defined ? gain[t].weights : std::vector<double>(predictor.pipeline.num_features(), 0.0));
        columns.push_back(std::string(kTargetNames[t]) + "_split");
        values.push_back(split_imp[t].defined ? split_imp[t].weights
                                              : std::vector<double>(predictor.pipeline.num_features(), 0.0));
    }
    write_importance_csv(std::filesystem::path(dir) / "stage1_importance.csv", predictor.pipeline.feature_names(),
                         columns, values);

    if (baseline == "uopc") {
        const auto uopc = UopcBaseline::train(parts.train, predictor.pipeline.config(), k, min_jobs);
        std::array<std::vector<double>, 3> truth_c, framework_c, uopc_c;
        std::set<std::string> covered_users, uncovered_users;
        std::size_t covered_jobs = 0;
        for (std::size_t i = 0; i < parts.test.size(); ++i) {
            const auto& j = parts.test[i];
            const auto p = uopc.predict(j.record);
            if (!p) {
                uncovered_users.insert(j.record.user);
                continue;
            }
            covered_users.insert(j.record.user);
            ++covered_jobs;
            for (std::size_t t = 0; t < 3; ++t) {
                truth_c[t].push_back(truth[t][i]);
                framework_c[t].push_back(framework[t][i]);
                uopc_c[t].push_back(target_value(*p, t));
            }
        }
        Json coverage{{"k", k},
                      {"min_jobs", min_jobs},
                      {"test_jobs", parts.test.size()},
                      {"framework_covered_jobs", parts.test.size()},
                      {"uopc_covered_jobs", covered_jobs},
                      {"uopc_trained_users", uopc.covered_user_count()},
                      {"uopc_excluded_train_users", uopc.excluded_users().size()},
                      {"test_users_covered", covered_users.size()},
                      {"test_users_excluded", uncovered_users.size()}};
        report["uopc_coverage"] = coverage;
        out << "coverage: framework " << parts.test.size() << "/" << parts.test.size() << " jobs; uopc "
            << covered_jobs << "/" << parts.test.size() << " jobs (" << covered_users.size() << " users covered, "
            << uncovered_users.size() << " excluded; k=" << k << ", min-jobs=" << min_jobs << ")\n";
        if (covered_jobs > 0) {
            for (std::size_t t = 0; t < 3; ++t) {
                const auto rf = regression_report(truth_c[t], framework_c[t]);
                const auto ru = regression_report(truth_c[t], uopc_c[t]);
                report["framework_on_uopc_covered"][kTargetNames[t]] = to_json(rf);
                report["uopc"][kTargetNames[t]] = to_json(ru);
                print_regression_row(out, "fw/covered", kTargetNames[t], rf);
                print_regression_row(out, "uopc", kTargetNames[t], ru);
            }
        } else {
            out << "uopc covers no test jobs\n";
        }
    } else if (!baseline.empty()) {
        throw CLI::ValidationError("--baseline", "unknown baseline '" + baseline + "'");
    }
    write_json(std::filesystem::path(dir) / "stage1_report.json", report);
    return kExitOk;
}

int cmd_train_stage2(const std::string& in, const std::string& model_path, double split, const std::string& bands,
                     int window, const GbdtParams& params, const FeatureConfig& features, std::ostream& out,
                     std::ostream& err) {
    const auto explicit_bands = parse_bands(bands);
    const auto parts = chrono_split(jobs_with_targets(in, err), split);
    const auto predictor = train_stage2_from_jobs(parts.train, features, explicit_bands, window, params);
    predictor.save(model_path);
    out << "stage 2: trained on " << parts.train.size() << " jobs; bands "
        << (explicit_bands ? "explicit " : "quantile ") << scheme_text(predictor.scheme) << "; window " << window
        << "; model written to " << model_path << '\n';
    return kExitOk;
}

int cmd_eval_stage2(const std::string& in, const std::string& model_path, const std::string& dir, double split,
                    const std::string& bands, std::optional<int> window, std::ostream& out, std::ostream& err) {
    const auto predictor = Stage2Predictor::load(model_path);
    if (const auto b = parse_bands(bands); b && PowerBandScheme(*b) != predictor.scheme) {
        throw DataError("model was trained with bands " + scheme_text(predictor.scheme) + ", not " + bands);
    }
    if (window && *window != predictor.window) {
        throw DataError("model was trained with window " + std::to_string(predictor.window));
    }
    const auto parts = chrono_split(jobs_with_targets(in, err), split);
    const auto windows = build_all_windows(parts.test, predictor);
    if (windows.empty()) throw DataError("test jobs yield no windows");
    std::filesystem::create_directories(dir);

    std::vector<int> truth, model, max_b, mean_b;
    std::ofstream trace(std::filesystem::path(dir) / "stage2_trace.csv");
    csv::Writer tw(trace);
    tw.row({"job_id", "timestamp", "next_power", "true_band", "model_band", "max_band", "mean_band"});
    for (const auto& w : windows) {
        truth.push_back(w.label);
        model.push_back(predictor.predict(w).band);
        max_b.push_back(baseline_max(w.window_power, predictor.scheme));
        mean_b.push_back(baseline_mean(w.window_power, predictor.scheme));
        tw.row({w.job_id, std::to_string(w.prediction_time), csv::format_double(w.next_power),
                std::to_string(truth.back()), std::to_string(model.back()), std::to_string(max_b.back()),
                std::to_string(mean_b.back())});
    }
    const std::array<std::pair<const char*, const std::vector<int>*>, 3> rows = {
        std::pair{"model", &model}, std::pair{"baseline_max", &max_b}, std::pair{"baseline_mean", &mean_b}};
    Json report;
    report["bands"] = predictor.scheme.boundaries();
    report["window"] = predictor.window;
    report["test_jobs"] = parts.test.size();
    report["windows"] = windows.size();
    out << "bands " << scheme_text(predictor.scheme) << " W, window " << predictor.window << ", " << windows.size()
        << " test windows from " << parts.test.size() << " jobs\n";
    for (const auto& [name, pred] : rows) {
        const auto r = classification_metrics(truth, *pred, kNumBands);
        report[name] = to_json(r);
        write_confusion_csv(std::filesystem::path(dir) / (std::string("confusion_") + name + ".csv"), r);
        out << std::left << std::setw(15) << name << " accuracy=" << fmt(r.accuracy) << " macro_f1=" << fmt(r.macro_f1)
            << '\n';
    }
    write_json(std::filesystem::path(dir) / "stage2_report.json", report);
    const auto gain = feature_importance(predictor.model, ImportanceKind::gain);
    const auto split_imp = feature_importance(predictor.model, ImportanceKind::split);
    const auto n = predictor.model.feature_names.size();
    write_importance_csv(std::filesystem::path(dir) / "stage2_importance.csv", predictor.model.feature_names,
                         {"gain", "split"},
                         {gain.defined ? gain.weights : std::vector<double>(n, 0.0),
                          split_imp.defined ? split_imp.weights : std::vector<double>(n, 0.0)});
    return kExitOk;
}

int cmd_replay(const std::string& in, const std::string& model_path, const std::string& job_id,
               const std::string& out_path, double top_cap, std::ostream& out) {
    const auto predictor = Stage2Predictor::load(model_path);
    const auto jobs = read_jobs(in);
    const auto it = std::find_if(jobs.begin(), jobs.end(), [&](const JobTelemetry& j) { return j.record.job_id == job_id; });
    if (it == jobs.end()) throw DataError("unknown job id '" + job_id + "'");
    const auto result = replay_job(*it, predictor, top_cap);
    write_directive_log(out_path, result);
    out << result.summary() << '\n';
    return kExitOk;
}

int cmd_synth(const std::string& config_path, const std::string& dir, std::optional<std::uint64_t> seed,
              std::optional<int> n_jobs, std::optional<double> irregular, const std::vector<std::string>& signal,
              std::ostream& out) {
    SynthConfig cfg;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw DataError("cannot open synth config: " + config_path);
        try {
            cfg = SynthConfig::from_json(Json::parse(in));
        } catch (const Json::exception& e) {
            throw DataError(std::string("malformed synth config: ") + e.what());
        }
    }
    if (seed) cfg.seed = *seed;
    if (n_jobs) cfg.n_jobs = *n_jobs;
    if (irregular) cfg.irregular_rate = *irregular;
    if (!signal.empty()) cfg = signal == std::vector<std::string>{"none"} ? (cfg.signal.clear(), cfg) : plant_signal(cfg, signal);
    cfg.validate();
    const auto trace = generate_trace(cfg);
    const auto files = write_trace(trace, cfg, dir);
    std::array<std::size_t, kNumBands> band_counts{};
    for (const auto& b : trace.bands) ++band_counts[static_cast<std::size_t>(b.band)];
    std::vector<double> power;
    for (const auto& t : trace.truth) power.push_back(t.targets.avg_power);
    std::sort(power.begin(), power.end());
    out << trace.records.size() << " jobs, " << trace.regular_samples << " regular samples, "
        << trace.irregular_samples << " injected irregular samples (seed " << cfg.seed << ", rng "
        << Rng::kAlgorithm << ")\n";
    out << "avg_power p10/p50/p90: " << fmt(percentile_sorted(power, 10), 2) << " / "
        << fmt(percentile_sorted(power, 50), 2) << " / " << fmt(percentile_sorted(power, 90), 2) << " W\n";
    out << "timestep bands under " << scheme_text(PowerBandScheme(cfg.band_boundaries)) << " W:";
    for (std::size_t b = 0; b < band_counts.size(); ++b) out << " " << b << "=" << band_counts[b];
    out << '\n' << "wrote " << files.slurm.string() << ", " << files.dcgm.string() << ", " << files.truth.string()
        << ", " << files.truth_bands.string() << '\n';
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"GPU resource and power prediction toolkit", "gpupower"};
    app.require_subcommand(1);
    app.set_version_flag("--version",
                         std::string("gpupower ") + kToolVersion + " (model schema 1, bundle 1, rng " + Rng::kAlgorithm + ")");
    app.set_config("--defaults", "", "INI/TOML file with default flag values; command-line flags win");

    auto* ingest = app.add_subcommand("ingest", "Parse, filter and join scheduler and telemetry files");
    IngestConfig icfg;
    std::string ingest_out, app_filter;
    bool allow_rejects = false;
    ingest->add_option("--slurm", icfg.slurm_path, "Scheduler accounting CSV")->required();
    ingest->add_option("--dcgm", icfg.dcgm_path, "Telemetry CSV")->required();
    ingest->add_option("--out", ingest_out, "Joined job file (JSON lines)")->required();
    ingest->add_option("--app-filter", app_filter, "Keep jobs whose executable matches this glob");
    ingest->add_option("--min-interval", icfg.min_interval_s, "Minimum sampling interval, s")->capture_default_str();
    ingest->add_option("--tolerance", icfg.interval_tolerance_s, "Interval tolerance, s")->capture_default_str();
    ingest->add_flag("--allow-rejects", allow_rejects, "Write output even when rows were rejected");

    auto* stats = app.add_subcommand("stats", "Percentile and histogram tables of the aggregate targets");
    std::string stats_in, stats_out;
    int stats_bins = 50;
    stats->add_option("--in", stats_in, "Joined job file")->required();
    stats->add_option("--out", stats_out, "Report directory")->required();
    stats->add_option("--bins", stats_bins, "Histogram bins")->check(CLI::PositiveNumber)->capture_default_str();

    std::string in_path, model_path, out_path, bands, baseline, job_id;
    double split = 0.8;
    int window = kDefaultWindow;
    int k = UopcBaseline::kDefaultK;
    int min_jobs = UopcBaseline::kDefaultMinJobs;
    double top_cap = 400.0;
    ParamFlags p1, p2;
    FeatureFlags f1, f2;
    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--in", in_path, "Joined job file")->required();
        sub->add_option("--model", model_path, "Model bundle path")->required();
        sub->add_option("--split", split, "Chronological train fraction")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    };

    auto* train1 = app.add_subcommand("train-stage1", "Train the pre-submission regressors");
    add_common(train1);
    p1.add(train1);
    f1.add(train1);

    auto* eval1 = app.add_subcommand("eval-stage1", "Evaluate stage 1 on the held-out jobs");
    add_common(eval1);
    eval1->add_option("--out", out_path, "Report directory")->required();
    eval1->add_option("--baseline", baseline, "Comparison baseline (uopc)")->check(CLI::IsMember({"uopc"}));
    eval1->add_option("--k", k, "UoPC neighbours")->check(CLI::PositiveNumber)->capture_default_str();
    eval1->add_option("--min-jobs", min_jobs, "UoPC per-user minimum")->check(CLI::PositiveNumber)->capture_default_str();

    auto* train2 = app.add_subcommand("train-stage2", "Train the runtime power band classifier");
    add_common(train2);
    train2->add_option("--bands", bands, "'quantile' or three thresholds w1,w2,w3")->capture_default_str();
    train2->add_option("--window", window, "Telemetry steps per window")->check(CLI::PositiveNumber)->capture_default_str();
    p2.add(train2);
    f2.add(train2);

    auto* eval2 = app.add_subcommand("eval-stage2", "Evaluate stage 2 against the max and mean baselines");
    std::optional<int> eval_window;
    add_common(eval2);
    eval2->add_option("--out", out_path, "Report directory")->required();
    eval2->add_option("--bands", bands, "Must match the model's scheme when given");
    eval2->add_option("--window", eval_window, "Must match the model's window when given")->check(CLI::PositiveNumber);

    auto* replay = app.add_subcommand("replay", "Stream one job through the stage 2 model and log cap directives");
    replay->add_option("--in", in_path, "Joined job file")->required();
    replay->add_option("--model", model_path, "Stage 2 model bundle")->required();
    replay->add_option("--job", job_id, "Job id")->required();
    replay->add_option("--out", out_path, "Directive log CSV")->required();
    replay->add_option("--top-cap", top_cap, "Cap for the highest band, W")->check(CLI::PositiveNumber)->capture_default_str();

    auto* synth = app.add_subcommand("synth", "Generate a synthetic trace with ground truth");
    std::string synth_config;
    std::optional<std::uint64_t> seed;
    std::optional<int> n_jobs;
    std::optional<double> irregular;
    std::vector<std::string> signal;
    synth->add_option("--config", synth_config, "JSON generator config");
    synth->add_option("--out", out_path, "Output directory")->required();
    synth->add_option("--seed", seed, "RNG seed");
    synth->add_option("--jobs", n_jobs, "Number of jobs")->check(CLI::PositiveNumber);
    synth->add_option("--irregular-rate", irregular, "Injected sub-interval point rate")->check(CLI::Range(0.0, 1.0));
    synth->add_option("--signal", signal, "Features carrying planted signal, or 'none'")->delimiter(',');

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*ingest) {
            if (!app_filter.empty()) icfg.application_filter = app_filter;
            return cmd_ingest(icfg, ingest_out, allow_rejects, out, err);
        }
        if (*stats) return cmd_stats(stats_in, stats_out, stats_bins, out);
        if (*train1) return cmd_train_stage1(in_path, model_path, split, p1.resolve(), f1.resolve(), out, err);
        if (*eval1) return cmd_eval_stage1(in_path, model_path, out_path, split, baseline, k, min_jobs, out, err);
        if (*train2) {
            return cmd_train_stage2(in_path, model_path, split, bands, window, p2.resolve(), f2.resolve(), out, err);
        }
        if (*eval2) return cmd_eval_stage2(in_path, model_path, out_path, split, bands, eval_window, out, err);
        if (*replay) return cmd_replay(in_path, model_path, job_id, out_path, top_cap, out);
        if (*synth) return cmd_synth(synth_config, out_path, seed, n_jobs, irregular, signal, out);
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const InvalidInput& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const DataError& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    err << "internal error: no command ran\n";
    return kExitInternal;
}

}  // namespace gpupower
