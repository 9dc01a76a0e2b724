#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gpupower/featurize.hpp"
#include "gpupower/gbdt.hpp"

namespace gpupower {

/// Pre-submission regressors for the three aggregate targets, sharing one
/// fitted feature pipeline.
struct Stage1Predictor {
    FeaturePipeline pipeline;
    std::array<GbdtModel, 3> models;  // indexed like kTargetNames

    AggregateTargets predict(const SlurmJobRecord& record) const;
    std::array<FeatureImportance, 3> importances(ImportanceKind kind = ImportanceKind::gain) const;

    Json to_json() const;
    static Stage1Predictor from_json(const Json& j);
    std::string serialize() const;
    static Stage1Predictor deserialize(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static Stage1Predictor load(const std::filesystem::path& path);
};

/// Requires every job to carry targets.
Stage1Predictor train_stage1(const std::vector<JobTelemetry>& train, const FeatureConfig& features,
                             const GbdtParams& params);

/// Utilization estimates clamped to [0,100], power to [0,inf).
AggregateTargets predict_stage1(const Stage1Predictor& predictor, const SlurmJobRecord& record);

/// Runtime next-step power band classifier over telemetry windows.
struct Stage2Predictor {
    FeaturePipeline pipeline;
    PowerBandScheme scheme;
    int window = kDefaultWindow;
    GbdtModel model;

    ClassPrediction predict(std::span<const double> window_features) const;
    ClassPrediction predict(const WindowInstance& w) const { return predict(w.features); }

    Json to_json() const;
    static Stage2Predictor from_json(const Json& j);
    std::string serialize() const;
    static Stage2Predictor deserialize(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static Stage2Predictor load(const std::filesystem::path& path);
};

/// Needs at least two distinct bands among the window labels.
Stage2Predictor train_stage2(const std::vector<WindowInstance>& train_windows, const FeaturePipeline& pipeline,
                             const PowerBandScheme& scheme, int window, const GbdtParams& params);

/// Fits the pipeline and band scheme on the training jobs, then windows and trains.
/// Without explicit thresholds the scheme is the quartiles of the jobs' avg_power.
Stage2Predictor train_stage2_from_jobs(const std::vector<JobTelemetry>& train, const FeatureConfig& features,
                                       const std::optional<std::array<double, 3>>& explicit_bands, int window,
                                       const GbdtParams& params);

ClassPrediction predict_stage2(const Stage2Predictor& predictor, const WindowInstance& w);

std::vector<WindowInstance> build_all_windows(const std::vector<JobTelemetry>& jobs, const Stage2Predictor& predictor);

/// Band of the largest / mean power over the window.
int baseline_max(std::span<const double> window_power, const PowerBandScheme& scheme);
int baseline_mean(std::span<const double> window_power, const PowerBandScheme& scheme);

/// Per-user k-nearest-neighbour regressor over submission features. Users
/// with fewer than min_jobs training jobs (and unseen users) get no model.
class UopcBaseline {
public:
    static constexpr int kDefaultK = 5;
    static constexpr int kDefaultMinJobs = 10;

    static UopcBaseline train(const std::vector<JobTelemetry>& train, const FeatureConfig& features, int k = kDefaultK,
                              int min_jobs = kDefaultMinJobs);

    /// nullopt marks an excluded user.
    std::optional<AggregateTargets> predict(const SlurmJobRecord& record) const;

    bool covers(const std::string& user) const { return users_.contains(user); }
    const std::set<std::string>& excluded_users() const { return excluded_; }
    std::size_t covered_user_count() const { return users_.size(); }
    int k() const { return k_; }
    int min_jobs() const { return min_jobs_; }

private:
    struct UserModel {
        Matrix features;
        std::vector<AggregateTargets> targets;
    };

    int k_ = kDefaultK;
    int min_jobs_ = kDefaultMinJobs;
    FeaturePipeline pipeline_;
    std::map<std::string, UserModel> users_;
    std::set<std::string> excluded_;
};

std::optional<AggregateTargets> predict_uopc(const UopcBaseline& baseline, const SlurmJobRecord& record);

}  // namespace gpupower
