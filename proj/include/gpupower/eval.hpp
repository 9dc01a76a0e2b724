#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gpupower/domain.hpp"
#include "gpupower/json_io.hpp"

namespace gpupower {

double mae(std::span<const double> y, std::span<const double> y_hat);

/// Mean of min(y_hat/y, y/y_hat). A pair of zeros scores 1, a single zero
/// scores 0. Negative values are rejected.
double sym_accuracy(std::span<const double> y, std::span<const double> y_hat);

/// Coefficient of determination; nullopt when y is constant.
std::optional<double> r2(std::span<const double> y, std::span<const double> y_hat);

struct RegressionReport {
    double mae = 0.0;
    double sym_accuracy = 0.0;
    std::optional<double> r2;
    std::size_t n = 0;
};

RegressionReport regression_report(std::span<const double> y, std::span<const double> y_hat);

struct ClassificationReport {
    int num_classes = kNumBands;
    std::size_t n = 0;
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<std::optional<double>> f1;  // nullopt: class neither present nor predicted, left out of the mean
    std::vector<std::vector<std::size_t>> counts;  // [true][predicted]
    std::vector<std::vector<double>> confusion;    // counts normalized by row support
};

ClassificationReport classification_metrics(std::span<const int> truth, std::span<const int> predicted,
                                            int num_classes = kNumBands);

inline constexpr std::array<double, 7> kReportPercentiles = {5, 10, 25, 50, 75, 90, 95};

struct HistogramBin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
    double density = 0.0;     // count / (n * width)
    double cumulative = 0.0;  // fraction of values <= hi
};

struct MetricDistribution {
    std::string metric;
    std::size_t n = 0;
    std::array<double, kReportPercentiles.size()> percentiles{};
    std::vector<HistogramBin> histogram;
};

struct DistributionReport {
    std::vector<MetricDistribution> metrics;  // one per aggregate target
};

MetricDistribution describe_distribution(std::string metric, std::span<const double> values, int histogram_bins = 50);

/// Percentiles and density tables of the three aggregate targets over jobs with telemetry.
DistributionReport distribution_report(const std::vector<JobTelemetry>& jobs, int histogram_bins = 50);

Json to_json(const RegressionReport& r);
Json to_json(const ClassificationReport& r);
Json to_json(const DistributionReport& r);

/// distribution.json, percentiles.csv and one histogram_<metric>.csv per target.
void write_distribution_report(const DistributionReport& report, const std::filesystem::path& dir);
void write_confusion_csv(const std::filesystem::path& path, const ClassificationReport& report);
void write_importance_csv(const std::filesystem::path& path, const std::vector<std::string>& feature_names,
                          const std::vector<std::string>& column_names,
                          const std::vector<std::vector<double>>& columns);

}  // namespace gpupower
