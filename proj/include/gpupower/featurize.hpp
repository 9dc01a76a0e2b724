#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gpupower/domain.hpp"
#include "gpupower/json_io.hpp"
#include "gpupower/stats.hpp"

namespace gpupower {

struct SplitResult {
    std::vector<JobTelemetry> train;
    std::vector<JobTelemetry> test;
};

/// Orders jobs by (start_time, job_id) and cuts after ceil(fraction * n),
/// clamped so both sides keep at least one job.
SplitResult chrono_split(std::vector<JobTelemetry> jobs, double train_fraction);

/// Per-feature category codes in first-seen order; unseen values encode to -1.
class OrdinalEncoder {
public:
    static constexpr int kUnseen = -1;

    OrdinalEncoder() = default;

    /// rows[i][f] is the value of feature f in training row i.
    static OrdinalEncoder fit(std::vector<std::string> feature_names,
                              const std::vector<std::vector<std::string>>& rows);

    std::size_t num_features() const { return names_.size(); }
    const std::vector<std::string>& feature_names() const { return names_; }
    std::size_t category_count(std::size_t feature) const { return categories_.at(feature).size(); }

    int encode(std::size_t feature, std::string_view value) const;
    /// Throws InvalidInput for codes that were never assigned.
    const std::string& decode(std::size_t feature, int code) const;

    Json to_json() const;
    static OrdinalEncoder from_json(const Json& j);

    bool operator==(const OrdinalEncoder& o) const { return names_ == o.names_ && categories_ == o.categories_; }

private:
    std::vector<std::string> names_;
    std::vector<std::vector<std::string>> categories_;
    std::vector<std::unordered_map<std::string, int>> index_;
};

/// Zero-mean, unit-variance scaling with training statistics. Constant
/// training columns keep scale 1 and center on their value, so they map to 0.
class StandardScaler {
public:
    StandardScaler() = default;

    static StandardScaler fit(const Matrix& train);

    Matrix transform(const Matrix& m) const;
    void transform_row(std::span<double> row) const;

    const std::vector<double>& means() const { return means_; }
    const std::vector<double>& scales() const { return scales_; }

    Json to_json() const;
    static StandardScaler from_json(const Json& j);

    bool operator==(const StandardScaler&) const = default;

private:
    std::vector<double> means_;
    std::vector<double> scales_;
};

/// Submission features used by stage 1 and as static window features.
struct FeatureConfig {
    std::vector<std::string> categorical = {"user", "job_name", "account", "category"};
    std::vector<std::string> numeric = {"req_nodes", "time_limit"};

    std::vector<std::string> names() const;
    void validate() const;

    bool operator==(const FeatureConfig&) const = default;
};

std::string categorical_value(const SlurmJobRecord& r, std::string_view feature);
double numeric_value(const SlurmJobRecord& r, std::string_view feature);

/// Encoder plus scaler fitted on training records.
class FeaturePipeline {
public:
    FeaturePipeline() = default;

    static FeaturePipeline fit(const std::vector<SlurmJobRecord>& train, FeatureConfig config = {});

    const FeatureConfig& config() const { return config_; }
    const OrdinalEncoder& encoder() const { return encoder_; }
    const StandardScaler& scaler() const { return scaler_; }
    std::vector<std::string> feature_names() const { return config_.names(); }
    std::size_t num_features() const { return config_.categorical.size() + config_.numeric.size(); }

    /// Encoded but unscaled feature row.
    std::vector<double> encode(const SlurmJobRecord& r) const;
    /// Encoded and scaled feature row.
    std::vector<double> transform(const SlurmJobRecord& r) const;

    Json to_json() const;
    static FeaturePipeline from_json(const Json& j);

    bool operator==(const FeaturePipeline&) const = default;

private:
    FeatureConfig config_;
    OrdinalEncoder encoder_;
    StandardScaler scaler_;
};

struct Stage1Matrix {
    Matrix features;
    std::array<std::vector<double>, 3> targets;  // indexed like kTargetNames
    std::vector<std::string> job_ids;
};

/// Throws InvalidInput if any job lacks targets.
Stage1Matrix build_stage1_matrix(const std::vector<JobTelemetry>& jobs, const FeaturePipeline& pipeline);

/// Quartile boundaries of the training power values (linear interpolation).
PowerBandScheme fit_band_scheme(std::span<const double> train_power);
/// Validated user-supplied thresholds.
PowerBandScheme explicit_band_scheme(std::span<const double> thresholds);

inline constexpr std::array<const char*, 8> kWindowMetrics = {
    "gpu_utilization", "mem_utilization", "sm_active",     "sm_occupancy",
    "dram_active",     "fp64_active",     "tensor_active", "power_usage"};
inline constexpr std::size_t kPowerMetric = 7;
inline constexpr Timestamp kStepSeconds = 10;
inline constexpr int kDefaultWindow = 3;

/// Job-level mean of every window metric over all GPUs in one 10 s step.
struct StepMeans {
    std::int64_t step = 0;  // bin index counted from the job start
    Timestamp time = 0;     // start_time + step * 10
    std::array<double, 8> metrics{};
};

/// Buckets samples into 10 s bins anchored at the job start; steps with a
/// non-finite metric are dropped.
std::vector<StepMeans> aligned_steps(const JobTelemetry& job);

/// Window feature row: metrics of each history step in order, then the static features.
std::vector<double> window_features(std::span<const StepMeans> history, std::span<const double> static_features);
std::vector<std::string> window_feature_names(const FeaturePipeline& pipeline, int window);

struct WindowInstance {
    std::string job_id;
    Timestamp prediction_time = 0;  // time of the predicted step t+1
    std::vector<double> features;
    std::vector<double> window_power;  // job mean power at t-window+1 .. t
    double next_power = 0.0;
    int label = 0;  // band of next_power
};

/// One instance per run of window+1 consecutive steps; never spans a gap.
std::vector<WindowInstance> build_windows(const JobTelemetry& job, const FeaturePipeline& pipeline,
                                          const PowerBandScheme& scheme, int window = kDefaultWindow);

}  // namespace gpupower
