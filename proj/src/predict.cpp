#include "gpupower/predict.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace gpupower {

namespace {

constexpr int kBundleVersion = 1;

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write model file: " + path.string());
    out << text;
}

Json parse_bundle(const std::string& text, const char* kind) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::exception& e) {
        throw DataError(std::string("model bundle is not valid JSON: ") + e.what());
    }
    if (!j.contains("manifest") || j["manifest"].value("kind", "") != kind) {
        throw DataError(std::string("model bundle is not a ") + kind + " bundle");
    }
    return j;
}

}  // namespace

AggregateTargets Stage1Predictor::predict(const SlurmJobRecord& record) const {
    const auto x = pipeline.transform(record);
    AggregateTargets out;
    out.max_gpu_utilization = std::clamp(models[0].predict(x), 0.0, 100.0);
    out.max_mem_utilization = std::clamp(models[1].predict(x), 0.0, 100.0);
    out.avg_power = std::max(models[2].predict(x), 0.0);
    return out;
}

std::array<FeatureImportance, 3> Stage1Predictor::importances(ImportanceKind kind) const {
    return {feature_importance(models[0], kind), feature_importance(models[1], kind),
            feature_importance(models[2], kind)};
}

Json Stage1Predictor::to_json() const {
    Json j;
    j["manifest"] = Json{{"kind", "stage1"},
                         {"bundle_version", kBundleVersion},
                         {"targets", std::vector<std::string>(kTargetNames.begin(), kTargetNames.end())}};
    Json models_json = Json::object();
    for (std::size_t t = 0; t < 3; ++t) models_json[kTargetNames[t]] = models[t].to_json();
    j["models"] = std::move(models_json);
    return j;
}

Stage1Predictor Stage1Predictor::from_json(const Json& j) {
    Stage1Predictor p;
    try {
        for (std::size_t t = 0; t < 3; ++t) p.models[t] = GbdtModel::from_json(j.at("models").at(kTargetNames[t]));
    } catch (const Json::exception& e) {
        throw DataError(std::string("malformed stage-1 bundle: ") + e.what());
    }
    if (!p.models[0].pipeline) throw DataError("stage-1 bundle lacks the feature pipeline");
    p.pipeline = *p.models[0].pipeline;
    for (const auto& m : p.models) {
        if (m.task != Task::regression || !m.pipeline || !(*m.pipeline == p.pipeline)) {
            throw DataError("stage-1 bundle models disagree on task or feature pipeline");
        }
    }
    return p;
}

std::string Stage1Predictor::serialize() const { return to_json().dump(1) + "\n"; }

Stage1Predictor Stage1Predictor::deserialize(const std::string& text) {
    return from_json(parse_bundle(text, "stage1"));
}

void Stage1Predictor::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

Stage1Predictor Stage1Predictor::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

Stage1Predictor train_stage1(const std::vector<JobTelemetry>& train, const FeatureConfig& features,
                             const GbdtParams& params) {
    if (train.size() < 2) throw InvalidInput("stage 1 needs at least 2 training jobs");
    std::vector<SlurmJobRecord> records;
    records.reserve(train.size());
    for (const auto& j : train) records.push_back(j.record);
    Stage1Predictor p;
    p.pipeline = FeaturePipeline::fit(records, features);
    const auto m = build_stage1_matrix(train, p.pipeline);
    for (std::size_t t = 0; t < 3; ++t) {
        p.models[t] = fit_regression(m.features, m.targets[t], params);
        p.models[t].feature_names = p.pipeline.feature_names();
        p.models[t].pipeline = p.pipeline;
    }
    return p;
}

AggregateTargets predict_stage1(const Stage1Predictor& predictor, const SlurmJobRecord& record) {
    return predictor.predict(record);
}

ClassPrediction Stage2Predictor::predict(std::span<const double> window_features) const {
    return model.predict_class(window_features);
}

Json Stage2Predictor::to_json() const {
    Json j;
    j["manifest"] = Json{{"kind", "stage2"}, {"bundle_version", kBundleVersion}, {"window", window}};
    j["model"] = model.to_json();
    return j;
}

Stage2Predictor Stage2Predictor::from_json(const Json& j) {
    GbdtModel model;
    int window = kDefaultWindow;
    try {
        window = j.at("manifest").at("window").get<int>();
        model = GbdtModel::from_json(j.at("model"));
    } catch (const Json::exception& e) {
        throw DataError(std::string("malformed stage-2 bundle: ") + e.what());
    }
    if (model.task != Task::multiclass || !model.pipeline || !model.band_scheme) {
        throw DataError("stage-2 bundle lacks a classifier with pipeline and band scheme");
    }
    return Stage2Predictor{*model.pipeline, *model.band_scheme, window, std::move(model)};
}

std::string Stage2Predictor::serialize() const { return to_json().dump(1) + "\n"; }

Stage2Predictor Stage2Predictor::deserialize(const std::string& text) {
    return from_json(parse_bundle(text, "stage2"));
}

void Stage2Predictor::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

Stage2Predictor Stage2Predictor::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

Stage2Predictor train_stage2(const std::vector<WindowInstance>& train_windows, const FeaturePipeline& pipeline,
                             const PowerBandScheme& scheme, int window, const GbdtParams& params) {
    if (train_windows.empty()) throw InvalidInput("stage 2 needs at least one training window");
    Matrix X;
    std::vector<int> labels;
    std::set<int> bands;
    for (const auto& w : train_windows) {
        X.append_row(w.features);
        labels.push_back(w.label);
        bands.insert(w.label);
    }
    if (bands.size() < 2) throw InvalidInput("stage 2 needs at least two power bands among training windows");
    GbdtModel model = fit_multiclass(X, labels, params, kNumBands);
    model.feature_names = window_feature_names(pipeline, window);
    model.pipeline = pipeline;
    model.band_scheme = scheme;
    return Stage2Predictor{pipeline, scheme, window, std::move(model)};
}

Stage2Predictor train_stage2_from_jobs(const std::vector<JobTelemetry>& train, const FeatureConfig& features,
                                       const std::optional<std::array<double, 3>>& explicit_bands, int window,
                                       const GbdtParams& params) {
    std::vector<SlurmJobRecord> records;
    std::vector<double> power;
    for (const auto& j : train) {
        records.push_back(j.record);
        if (j.targets) power.push_back(j.targets->avg_power);
    }
    if (records.empty()) throw InvalidInput("stage 2 needs training jobs");
    const auto pipeline = FeaturePipeline::fit(records, features);
    const PowerBandScheme scheme =
        explicit_bands ? explicit_band_scheme(*explicit_bands) : fit_band_scheme(power);
    std::vector<WindowInstance> windows;
    for (const auto& j : train) {
        auto w = build_windows(j, pipeline, scheme, window);
        windows.insert(windows.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
    }
    return train_stage2(windows, pipeline, scheme, window, params);
}

ClassPrediction predict_stage2(const Stage2Predictor& predictor, const WindowInstance& w) {
    return predictor.predict(w);
}

std::vector<WindowInstance> build_all_windows(const std::vector<JobTelemetry>& jobs, const Stage2Predictor& predictor) {
    std::vector<WindowInstance> out;
    for (const auto& j : jobs) {
        auto w = build_windows(j, predictor.pipeline, predictor.scheme, predictor.window);
        out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
    }
    return out;
}

int baseline_max(std::span<const double> window_power, const PowerBandScheme& scheme) {
    if (window_power.empty()) throw InvalidInput("baseline needs at least one power value");
    return scheme.band_of(*std::max_element(window_power.begin(), window_power.end()));
}

int baseline_mean(std::span<const double> window_power, const PowerBandScheme& scheme) {
    if (window_power.empty()) throw InvalidInput("baseline needs at least one power value");
    const double sum = std::accumulate(window_power.begin(), window_power.end(), 0.0);
    return scheme.band_of(sum / static_cast<double>(window_power.size()));
}

UopcBaseline UopcBaseline::train(const std::vector<JobTelemetry>& train, const FeatureConfig& features, int k,
                                 int min_jobs) {
    if (k < 1) throw InvalidInput("k must be >= 1");
    if (min_jobs < 1) throw InvalidInput("min_jobs must be >= 1");
    std::vector<SlurmJobRecord> records;
    for (const auto& j : train) {
        if (!j.targets) throw InvalidInput("job " + j.record.job_id + " has no telemetry targets");
        records.push_back(j.record);
    }
    if (records.empty()) throw InvalidInput("UoPC needs training jobs");
    UopcBaseline b;
    b.k_ = k;
    b.min_jobs_ = min_jobs;
    b.pipeline_ = FeaturePipeline::fit(records, features);
    std::map<std::string, std::vector<const JobTelemetry*>> by_user;
    for (const auto& j : train) by_user[j.record.user].push_back(&j);
    for (const auto& [user, jobs] : by_user) {
        if (static_cast<int>(jobs.size()) < min_jobs) {
            b.excluded_.insert(user);
            continue;
        }
        UserModel um;
        for (const auto* j : jobs) {
            um.features.append_row(b.pipeline_.transform(j->record));
            um.targets.push_back(*j->targets);
        }
        b.users_.emplace(user, std::move(um));
    }
    return b;
}

std::optional<AggregateTargets> UopcBaseline::predict(const SlurmJobRecord& record) const {
    const auto it = users_.find(record.user);
    if (it == users_.end()) return std::nullopt;
    const auto& um = it->second;
    const auto x = pipeline_.transform(record);
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(um.features.rows());
    for (std::size_t r = 0; r < um.features.rows(); ++r) {
        const auto row = um.features.row(r);
        double d = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c) d += (row[c] - x[c]) * (row[c] - x[c]);
        dist.emplace_back(d, r);
    }
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(k_), dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    AggregateTargets out;
    for (std::size_t i = 0; i < k; ++i) {
        const auto& t = um.targets[dist[i].second];
        out.max_gpu_utilization += t.max_gpu_utilization;
        out.max_mem_utilization += t.max_mem_utilization;
        out.avg_power += t.avg_power;
    }
    const auto kk = static_cast<double>(k);
    out.max_gpu_utilization /= kk;
    out.max_mem_utilization /= kk;
    out.avg_power /= kk;
    return out;
}

std::optional<AggregateTargets> predict_uopc(const UopcBaseline& baseline, const SlurmJobRecord& record) {
    return baseline.predict(record);
}

}  // namespace gpupower
