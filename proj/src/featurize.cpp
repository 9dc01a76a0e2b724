#include "gpupower/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace gpupower {

SplitResult chrono_split(std::vector<JobTelemetry> jobs, double train_fraction) {
    if (jobs.size() < 2) throw InvalidInput("chrono_split needs at least 2 jobs");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidInput("train_fraction must be in (0,1)");
    std::sort(jobs.begin(), jobs.end(), [](const JobTelemetry& a, const JobTelemetry& b) {
        return std::tie(a.record.start_time, a.record.job_id) < std::tie(b.record.start_time, b.record.job_id);
    });
    const double n = static_cast<double>(jobs.size());
    // The epsilon absorbs representation error, e.g. 0.7 * 10 = 7.000000000000001.
    auto cut = static_cast<std::size_t>(std::ceil(train_fraction * n - 1e-9));
    cut = std::clamp<std::size_t>(cut, 1, jobs.size() - 1);
    SplitResult out;
    out.train.assign(std::make_move_iterator(jobs.begin()), std::make_move_iterator(jobs.begin() + cut));
    out.test.assign(std::make_move_iterator(jobs.begin() + cut), std::make_move_iterator(jobs.end()));
    return out;
}

OrdinalEncoder OrdinalEncoder::fit(std::vector<std::string> feature_names,
                                   const std::vector<std::vector<std::string>>& rows) {
    if (feature_names.empty()) throw InvalidInput("encoder needs at least one categorical feature");
    if (rows.empty()) throw InvalidInput("encoder needs at least one training row");
    OrdinalEncoder enc;
    enc.names_ = std::move(feature_names);
    enc.categories_.resize(enc.names_.size());
    enc.index_.resize(enc.names_.size());
    for (const auto& row : rows) {
        if (row.size() != enc.names_.size()) throw InvalidInput("encoder row width mismatch");
        for (std::size_t f = 0; f < row.size(); ++f) {
            auto [it, inserted] = enc.index_[f].emplace(row[f], static_cast<int>(enc.categories_[f].size()));
            if (inserted) enc.categories_[f].push_back(row[f]);
        }
    }
    return enc;
}

int OrdinalEncoder::encode(std::size_t feature, std::string_view value) const {
    const auto& idx = index_.at(feature);
    const auto it = idx.find(std::string(value));
    return it == idx.end() ? kUnseen : it->second;
}

const std::string& OrdinalEncoder::decode(std::size_t feature, int code) const {
    const auto& cats = categories_.at(feature);
    if (code < 0 || static_cast<std::size_t>(code) >= cats.size()) {
        throw InvalidInput("no category with code " + std::to_string(code));
    }
    return cats[static_cast<std::size_t>(code)];
}

Json OrdinalEncoder::to_json() const {
    return Json{{"features", names_}, {"categories", categories_}};
}

OrdinalEncoder OrdinalEncoder::from_json(const Json& j) {
    OrdinalEncoder enc;
    j.at("features").get_to(enc.names_);
    j.at("categories").get_to(enc.categories_);
    if (enc.categories_.size() != enc.names_.size()) throw DataError("encoder state is inconsistent");
    enc.index_.resize(enc.names_.size());
    for (std::size_t f = 0; f < enc.names_.size(); ++f) {
        for (std::size_t c = 0; c < enc.categories_[f].size(); ++c) {
            if (!enc.index_[f].emplace(enc.categories_[f][c], static_cast<int>(c)).second) {
                throw DataError("encoder state repeats a category");
            }
        }
    }
    return enc;
}

StandardScaler StandardScaler::fit(const Matrix& train) {
    if (train.rows() == 0) throw InvalidInput("scaler needs at least one training row");
    StandardScaler s;
    s.means_.resize(train.cols());
    s.scales_.resize(train.cols());
    const auto n = static_cast<long double>(train.rows());
    for (std::size_t c = 0; c < train.cols(); ++c) {
        bool constant = true;
        long double sum = 0.0L;
        for (std::size_t r = 0; r < train.rows(); ++r) {
            sum += train(r, c);
            constant = constant && train(r, c) == train(0, c);
        }
        if (constant) {
            s.means_[c] = train(0, c);
            s.scales_[c] = 1.0;
            continue;
        }
        const long double m = sum / n;
        long double ss = 0.0L;
        for (std::size_t r = 0; r < train.rows(); ++r) {
            const long double d = train(r, c) - m;
            ss += d * d;
        }
        const auto sd = static_cast<double>(std::sqrt(ss / n));
        s.means_[c] = static_cast<double>(m);
        s.scales_[c] = sd < 10.0 * std::numeric_limits<double>::epsilon() ? 1.0 : sd;
    }
    return s;
}

void StandardScaler::transform_row(std::span<double> row) const {
    if (row.size() != means_.size()) throw InvalidInput("scaler column count mismatch");
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - means_[c]) / scales_[c];
}

Matrix StandardScaler::transform(const Matrix& m) const {
    Matrix out = m;
    for (std::size_t r = 0; r < out.rows(); ++r) transform_row(out.row(r));
    return out;
}

Json StandardScaler::to_json() const { return Json{{"means", means_}, {"scales", scales_}}; }

StandardScaler StandardScaler::from_json(const Json& j) {
    StandardScaler s;
    j.at("means").get_to(s.means_);
    j.at("scales").get_to(s.scales_);
    if (s.means_.size() != s.scales_.size()) throw DataError("scaler state is inconsistent");
    return s;
}

namespace {

const std::set<std::string, std::less<>> kCategorical = {"user", "job_name", "account", "category", "executable"};
const std::set<std::string, std::less<>> kNumeric = {"req_cpus", "req_nodes", "req_gpus", "req_mem", "time_limit"};

}  // namespace

std::vector<std::string> FeatureConfig::names() const {
    std::vector<std::string> out = categorical;
    out.insert(out.end(), numeric.begin(), numeric.end());
    return out;
}

void FeatureConfig::validate() const {
    if (categorical.empty() && numeric.empty()) throw InvalidInput("feature set is empty");
    std::set<std::string> seen;
    for (const auto& f : categorical) {
        if (!kCategorical.contains(f)) throw InvalidInput("unknown categorical feature '" + f + "'");
        if (!seen.insert(f).second) throw InvalidInput("feature listed twice: " + f);
    }
    for (const auto& f : numeric) {
        if (!kNumeric.contains(f)) throw InvalidInput("unknown numeric feature '" + f + "'");
        if (!seen.insert(f).second) throw InvalidInput("feature listed twice: " + f);
    }
}

std::string categorical_value(const SlurmJobRecord& r, std::string_view feature) {
    if (feature == "user") return r.user;
    if (feature == "job_name") return r.job_name;
    if (feature == "account") return r.account;
    if (feature == "category") return r.category;
    if (feature == "executable") return r.executable;
    throw InvalidInput("unknown categorical feature '" + std::string(feature) + "'");
}

double numeric_value(const SlurmJobRecord& r, std::string_view feature) {
    if (feature == "req_cpus") return static_cast<double>(r.req_cpus);
    if (feature == "req_nodes") return static_cast<double>(r.req_nodes);
    if (feature == "req_gpus") return static_cast<double>(r.req_gpus);
    if (feature == "req_mem") return r.req_mem;
    if (feature == "time_limit") return static_cast<double>(r.time_limit);
    throw InvalidInput("unknown numeric feature '" + std::string(feature) + "'");
}

FeaturePipeline FeaturePipeline::fit(const std::vector<SlurmJobRecord>& train, FeatureConfig config) {
    config.validate();
    if (train.empty()) throw InvalidInput("feature pipeline needs at least one training record");
    FeaturePipeline p;
    p.config_ = std::move(config);
    if (!p.config_.categorical.empty()) {
        std::vector<std::vector<std::string>> rows;
        rows.reserve(train.size());
        for (const auto& r : train) {
            std::vector<std::string> row;
            for (const auto& f : p.config_.categorical) row.push_back(categorical_value(r, f));
            rows.push_back(std::move(row));
        }
        p.encoder_ = OrdinalEncoder::fit(p.config_.categorical, rows);
    }
    Matrix raw;
    for (const auto& r : train) raw.append_row(p.encode(r));
    p.scaler_ = StandardScaler::fit(raw);
    return p;
}

std::vector<double> FeaturePipeline::encode(const SlurmJobRecord& r) const {
    std::vector<double> row;
    row.reserve(num_features());
    for (std::size_t f = 0; f < config_.categorical.size(); ++f) {
        row.push_back(encoder_.encode(f, categorical_value(r, config_.categorical[f])));
    }
    for (const auto& f : config_.numeric) row.push_back(numeric_value(r, f));
    return row;
}

std::vector<double> FeaturePipeline::transform(const SlurmJobRecord& r) const {
    auto row = encode(r);
    scaler_.transform_row(row);
    return row;
}

Json FeaturePipeline::to_json() const {
    Json j{{"categorical", config_.categorical},
           {"numeric", config_.numeric},
           {"scaler", scaler_.to_json()}};
    j["encoder"] = config_.categorical.empty() ? Json(nullptr) : encoder_.to_json();
    return j;
}

FeaturePipeline FeaturePipeline::from_json(const Json& j) {
    FeaturePipeline p;
    j.at("categorical").get_to(p.config_.categorical);
    j.at("numeric").get_to(p.config_.numeric);
    p.config_.validate();
    if (!j.at("encoder").is_null()) p.encoder_ = OrdinalEncoder::from_json(j.at("encoder"));
    p.scaler_ = StandardScaler::from_json(j.at("scaler"));
    if (p.encoder_.num_features() != p.config_.categorical.size() || p.scaler_.means().size() != p.num_features()) {
        throw DataError("feature pipeline state does not match its feature list");
    }
    return p;
}

Stage1Matrix build_stage1_matrix(const std::vector<JobTelemetry>& jobs, const FeaturePipeline& pipeline) {
    Stage1Matrix m;
    m.features = Matrix(0, pipeline.num_features());
    for (const auto& job : jobs) {
        if (!job.targets) throw InvalidInput("job " + job.record.job_id + " has no telemetry targets");
        m.features.append_row(pipeline.transform(job.record));
        for (std::size_t t = 0; t < 3; ++t) m.targets[t].push_back(target_value(*job.targets, t));
        m.job_ids.push_back(job.record.job_id);
    }
    return m;
}

PowerBandScheme fit_band_scheme(std::span<const double> train_power) {
    std::vector<double> sorted(train_power.begin(), train_power.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> uniq = sorted;
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    if (uniq.size() < 4) throw InvalidInput("quantile bands need at least 4 distinct training power values");
    const std::array<double, 3> b = {percentile_sorted(sorted, 25.0), percentile_sorted(sorted, 50.0),
                                     percentile_sorted(sorted, 75.0)};
    if (!(b[0] < b[1] && b[1] < b[2])) {
        throw InvalidInput("training power quartiles are not strictly increasing; use explicit bands");
    }
    return PowerBandScheme(b);
}

PowerBandScheme explicit_band_scheme(std::span<const double> thresholds) {
    if (thresholds.size() != 3) throw InvalidInput("explicit bands need exactly 3 thresholds");
    return PowerBandScheme({thresholds[0], thresholds[1], thresholds[2]});
}

std::vector<StepMeans> aligned_steps(const JobTelemetry& job) {
    std::map<std::int64_t, std::pair<std::array<double, 8>, std::size_t>> bins;
    for (const auto& s : job.samples) {
        const Timestamp offset = s.timestamp - job.record.start_time;
        // floor division for samples recorded before the nominal start
        std::int64_t step = offset / kStepSeconds;
        if (offset % kStepSeconds != 0 && offset < 0) --step;
        auto& [sum, count] = bins[step];
        const std::array<double, 8> v = {s.gpu_utilization, 100.0 * s.fb_used / (s.fb_used + s.fb_free),
                                         s.sm_active,       s.sm_occupancy,
                                         s.dram_active,     s.fp64_active,
                                         s.tensor_active,   s.power_usage};
        for (std::size_t m = 0; m < v.size(); ++m) sum[m] += v[m];
        ++count;
    }
    std::vector<StepMeans> out;
    out.reserve(bins.size());
    for (const auto& [step, acc] : bins) {
        StepMeans sm;
        sm.step = step;
        sm.time = job.record.start_time + step * kStepSeconds;
        bool finite = true;
        for (std::size_t m = 0; m < sm.metrics.size(); ++m) {
            sm.metrics[m] = acc.first[m] / static_cast<double>(acc.second);
            finite = finite && std::isfinite(sm.metrics[m]);
        }
        if (finite) out.push_back(sm);
    }
    return out;
}

std::vector<double> window_features(std::span<const StepMeans> history, std::span<const double> static_features) {
    std::vector<double> row;
    row.reserve(history.size() * kWindowMetrics.size() + static_features.size());
    for (const auto& step : history) row.insert(row.end(), step.metrics.begin(), step.metrics.end());
    row.insert(row.end(), static_features.begin(), static_features.end());
    return row;
}

std::vector<std::string> window_feature_names(const FeaturePipeline& pipeline, int window) {
    std::vector<std::string> names;
    for (int k = window - 1; k >= 0; --k) {
        const std::string suffix = k == 0 ? "@t" : "@t-" + std::to_string(k);
        for (const char* m : kWindowMetrics) names.push_back(std::string(m) + suffix);
    }
    for (const auto& f : pipeline.feature_names()) names.push_back(f);
    return names;
}

std::vector<WindowInstance> build_windows(const JobTelemetry& job, const FeaturePipeline& pipeline,
                                          const PowerBandScheme& scheme, int window) {
    if (window < 1) throw InvalidInput("window length must be >= 1");
    const auto steps = aligned_steps(job);
    const auto w = static_cast<std::size_t>(window);
    std::vector<WindowInstance> out;
    if (steps.size() < w + 1) return out;
    const auto static_features = pipeline.transform(job.record);
    // run_start: index of the first step of the current run of consecutive bins
    std::size_t run_start = 0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (i > 0 && steps[i].step != steps[i - 1].step + 1) run_start = i;
        // steps[i] is the label step t+1; it needs w consecutive predecessors
        if (i - run_start < w) continue;
        const std::span<const StepMeans> history(steps.data() + i - w, w);
        WindowInstance inst;
        inst.job_id = job.record.job_id;
        inst.prediction_time = steps[i].time;
        inst.features = window_features(history, static_features);
        for (const auto& h : history) inst.window_power.push_back(h.metrics[kPowerMetric]);
        inst.next_power = steps[i].metrics[kPowerMetric];
        inst.label = scheme.band_of(inst.next_power);
        out.push_back(std::move(inst));
    }
    return out;
}

}  // namespace gpupower
