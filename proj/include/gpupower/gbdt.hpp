#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gpupower/domain.hpp"
#include "gpupower/featurize.hpp"
#include "gpupower/json_io.hpp"
#include "gpupower/stats.hpp"

namespace gpupower {

inline constexpr int kModelSchemaVersion = 1;

enum class Task { regression, multiclass };

struct GbdtParams {
    int rounds = 100;
    double learning_rate = 0.1;
    int max_leaves = 31;
    int min_samples_leaf = 20;
    int bins = 255;
    double l2 = 1.0;
    double min_child_hessian = 1e-3;
    /// 0 disables early stopping. Otherwise the last validation_fraction of
    /// rows is held out and training stops after this many rounds without
    /// improvement on it.
    int early_stopping_rounds = 0;
    double validation_fraction = 0.2;

    void validate() const;
    Json to_json() const;
    static GbdtParams from_json(const Json& j);

    bool operator==(const GbdtParams&) const = default;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;  // x <= threshold goes left
    bool default_left = true;  // direction for missing (NaN) values
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf output before learning-rate shrinkage
    double gain = 0.0;   // loss reduction of this split
    int count = 0;       // training rows reaching the node

    bool is_leaf() const { return feature < 0; }
    bool operator==(const TreeNode&) const = default;
};

/// Binary regression tree stored as a flat node array; node 0 is the root.
class Tree {
public:
    Tree() = default;
    explicit Tree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

    const std::vector<TreeNode>& nodes() const { return nodes_; }
    std::vector<TreeNode>& mutable_nodes() { return nodes_; }
    int leaf_index(std::span<const double> x) const;
    double predict(std::span<const double> x) const { return nodes_[static_cast<std::size_t>(leaf_index(x))].value; }
    std::size_t leaf_count() const;

    Json to_json() const;  // nested nodes
    static Tree from_json(const Json& j);

    bool operator==(const Tree&) const = default;

private:
    std::vector<TreeNode> nodes_;
};

struct ClassPrediction {
    int band = 0;
    std::vector<double> probabilities;
};

enum class ImportanceKind { gain, split };

struct FeatureImportance {
    std::vector<double> weights;  // sums to 1 when defined
    bool defined = false;         // false for models without any split
};

/// Trained boosted ensemble. For multiclass models trees are stored round
/// by round, one tree per class within each round.
class GbdtModel {
public:
    Task task = Task::regression;
    int num_class = 1;
    int num_features = 0;
    GbdtParams params;
    std::vector<std::string> feature_names;
    std::vector<double> base_scores;
    std::vector<std::vector<double>> bin_edges;
    std::vector<Tree> trees;
    std::vector<double> gain_importance;
    std::vector<double> split_importance;
    std::vector<double> train_loss;  // entry 0 is the loss of the base score, then one per round
    bool degenerate = false;         // constant target or single class: no trees were grown
    std::optional<FeaturePipeline> pipeline;
    std::optional<PowerBandScheme> band_scheme;

    int rounds() const;

    /// Per-class raw scores (a single entry for regression).
    std::vector<double> raw_scores(std::span<const double> x) const;
    double predict(std::span<const double> x) const;
    ClassPrediction predict_class(std::span<const double> x) const;
    std::vector<double> predict_batch(const Matrix& X) const;
    std::vector<ClassPrediction> predict_class_batch(const Matrix& X) const;

    Json to_json() const;
    static GbdtModel from_json(const Json& j);
    std::string serialize() const;
    static GbdtModel deserialize(const std::string& text);

    bool operator==(const GbdtModel&) const = default;

private:
    void check_width(std::span<const double> x) const;
};

/// Squared-error boosting. Constant y yields a flagged constant model.
GbdtModel fit_regression(const Matrix& X, std::span<const double> y, const GbdtParams& params);

/// Softmax boosting over labels 0..num_class-1. A single observed class
/// yields a flagged constant-probability model.
GbdtModel fit_multiclass(const Matrix& X, std::span<const int> labels, const GbdtParams& params,
                         int num_class = kNumBands);

FeatureImportance feature_importance(const GbdtModel& model, ImportanceKind kind);

/// Per-feature upper bin edges: distinct midpoints when the feature has at
/// most max_bins distinct values, equal-frequency cuts otherwise.
std::vector<double> compute_bin_edges(std::span<const double> column, int max_bins);

double softmax_log_loss(const std::vector<std::vector<double>>& scores, std::span<const int> labels);

struct GridTrial {
    GbdtParams params;
    double validation_loss = 0.0;
};

struct GridSearchResult {
    GbdtParams best;
    double best_loss = 0.0;
    std::vector<GridTrial> trials;
};

/// Cartesian product of the listed values over a base parameter set.
std::vector<GbdtParams> expand_grid(const GbdtParams& base, const std::vector<int>& rounds,
                                    const std::vector<double>& learning_rates, const std::vector<int>& max_leaves,
                                    const std::vector<int>& min_samples_leaf);

/// Chronological hold-out search: fits on the leading rows and scores on
/// the trailing validation_fraction (MSE or log-loss). Ties keep the earlier candidate.
GridSearchResult grid_search(const Matrix& X, std::span<const double> y, Task task,
                             const std::vector<GbdtParams>& candidates, double validation_fraction = 0.2);

}  // namespace gpupower
