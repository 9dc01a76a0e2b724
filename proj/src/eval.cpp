#include "gpupower/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gpupower/csv.hpp"
#include "gpupower/stats.hpp"

namespace gpupower {

namespace {

void check_pair(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size()) throw InvalidInput("metric inputs differ in length");
    if (y.empty()) throw InvalidInput("metric inputs are empty");
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

}  // namespace

double mae(std::span<const double> y, std::span<const double> y_hat) {
    check_pair(y, y_hat);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - y_hat[i]);
    return s / static_cast<double>(y.size());
}

double sym_accuracy(std::span<const double> y, std::span<const double> y_hat) {
    check_pair(y, y_hat);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double a = y[i];
        const double b = y_hat[i];
        if (a < 0.0 || b < 0.0) throw InvalidInput("symmetric accuracy needs nonnegative values");
        if (a == 0.0 && b == 0.0) {
            s += 1.0;
        } else if (a == 0.0 || b == 0.0) {
            s += 0.0;
        } else {
            s += std::min(a, b) / std::max(a, b);
        }
    }
    return s / static_cast<double>(y.size());
}

std::optional<double> r2(std::span<const double> y, std::span<const double> y_hat) {
    check_pair(y, y_hat);
    double y_bar = 0.0;
    for (double v : y) y_bar += v;
    y_bar /= static_cast<double>(y.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_res += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
        ss_tot += (y[i] - y_bar) * (y[i] - y_bar);
    }
    if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; }) || ss_tot == 0.0) return std::nullopt;
    return 1.0 - ss_res / ss_tot;
}

RegressionReport regression_report(std::span<const double> y, std::span<const double> y_hat) {
    return {mae(y, y_hat), sym_accuracy(y, y_hat), r2(y, y_hat), y.size()};
}

ClassificationReport classification_metrics(std::span<const int> truth, std::span<const int> predicted,
                                            int num_classes) {
    if (truth.size() != predicted.size()) throw InvalidInput("label sequences differ in length");
    if (truth.empty()) throw InvalidInput("label sequences are empty");
    if (num_classes < 1) throw InvalidInput("num_classes must be >= 1");
    const auto C = static_cast<std::size_t>(num_classes);
    ClassificationReport r;
    r.num_classes = num_classes;
    r.n = truth.size();
    r.counts.assign(C, std::vector<std::size_t>(C, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 || predicted[i] >= num_classes) {
            throw InvalidInput("label out of range");
        }
        ++r.counts[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
        if (truth[i] == predicted[i]) ++correct;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);

    r.confusion.assign(C, std::vector<double>(C, 0.0));
    r.f1.assign(C, std::nullopt);
    double f1_sum = 0.0;
    std::size_t scored = 0;
    for (std::size_t c = 0; c < C; ++c) {
        std::size_t support = 0, predicted_c = 0;
        for (std::size_t k = 0; k < C; ++k) {
            support += r.counts[c][k];
            predicted_c += r.counts[k][c];
        }
        for (std::size_t k = 0; k < C && support > 0; ++k) {
            r.confusion[c][k] = static_cast<double>(r.counts[c][k]) / static_cast<double>(support);
        }
        const std::size_t tp = r.counts[c][c];
        const std::size_t fp = predicted_c - tp;
        const std::size_t fn = support - tp;
        if (tp + fp + fn == 0) continue;
        const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
        r.f1[c] = f1;
        f1_sum += f1;
        ++scored;
    }
    r.macro_f1 = scored ? f1_sum / static_cast<double>(scored) : 0.0;
    return r;
}

MetricDistribution describe_distribution(std::string metric, std::span<const double> values, int histogram_bins) {
    if (values.empty()) throw InvalidInput("distribution of an empty sequence");
    if (histogram_bins < 1) throw InvalidInput("histogram_bins must be >= 1");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    MetricDistribution d;
    d.metric = std::move(metric);
    d.n = sorted.size();
    for (std::size_t i = 0; i < kReportPercentiles.size(); ++i) {
        d.percentiles[i] = percentile_sorted(sorted, kReportPercentiles[i]);
    }
    const double lo = sorted.front();
    const double hi = sorted.back();
    const std::size_t bins = lo == hi ? 1 : static_cast<std::size_t>(histogram_bins);
    const double width = lo == hi ? 1.0 : (hi - lo) / static_cast<double>(bins);
    d.histogram.resize(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        d.histogram[b].lo = lo + width * static_cast<double>(b);
        d.histogram[b].hi = b + 1 == bins ? (lo == hi ? lo + width : hi) : lo + width * static_cast<double>(b + 1);
    }
    for (double v : sorted) {
        auto b = lo == hi ? 0 : static_cast<std::size_t>((v - lo) / width);
        b = std::min(b, bins - 1);
        ++d.histogram[b].count;
    }
    std::size_t running = 0;
    const auto n = static_cast<double>(d.n);
    for (auto& bin : d.histogram) {
        running += bin.count;
        bin.density = static_cast<double>(bin.count) / (n * width);
        bin.cumulative = static_cast<double>(running) / n;
    }
    return d;
}

DistributionReport distribution_report(const std::vector<JobTelemetry>& jobs, int histogram_bins) {
    std::array<std::vector<double>, 3> values;
    for (const auto& j : jobs) {
        if (!j.targets) continue;
        for (std::size_t t = 0; t < 3; ++t) values[t].push_back(target_value(*j.targets, t));
    }
    if (values[0].empty()) throw InvalidInput("distribution report needs at least one job with telemetry");
    DistributionReport r;
    for (std::size_t t = 0; t < 3; ++t) r.metrics.push_back(describe_distribution(kTargetNames[t], values[t], histogram_bins));
    return r;
}

Json to_json(const RegressionReport& r) {
    Json j{{"mae", r.mae}, {"sym_accuracy", r.sym_accuracy}, {"n", r.n}};
    j["r2"] = r.r2 ? Json(*r.r2) : Json("undefined");
    return j;
}

Json to_json(const ClassificationReport& r) {
    Json f1 = Json::array();
    for (const auto& v : r.f1) f1.push_back(v ? Json(*v) : Json("skipped"));
    return Json{{"n", r.n},
                {"accuracy", r.accuracy},
                {"macro_f1", r.macro_f1},
                {"macro_f1_convention", "absent-but-predicted class scores 0; absent-and-unpredicted class skipped"},
                {"f1_per_band", f1},
                {"counts", r.counts},
                {"confusion_row_normalized", r.confusion}};
}

Json to_json(const DistributionReport& r) {
    Json metrics = Json::array();
    for (const auto& m : r.metrics) {
        Json p = Json::object();
        for (std::size_t i = 0; i < kReportPercentiles.size(); ++i) {
            p["p" + std::to_string(static_cast<int>(kReportPercentiles[i]))] = m.percentiles[i];
        }
        metrics.push_back(Json{{"metric", m.metric}, {"n", m.n}, {"percentiles", p}});
    }
    return Json{{"percentile_method", "linear interpolation between order statistics"}, {"metrics", metrics}};
}

void write_distribution_report(const DistributionReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        auto out = open_out(dir / "distribution.json");
        out << to_json(report).dump(2) << '\n';
    }
    {
        auto out = open_out(dir / "percentiles.csv");
        csv::Writer w(out);
        std::vector<std::string> header = {"metric", "n"};
        for (double p : kReportPercentiles) header.push_back("p" + std::to_string(static_cast<int>(p)));
        w.row(header);
        for (const auto& m : report.metrics) {
            std::vector<std::string> row = {m.metric, std::to_string(m.n)};
            for (double v : m.percentiles) row.push_back(csv::format_double(v));
            w.row(row);
        }
    }
    for (const auto& m : report.metrics) {
        auto out = open_out(dir / ("histogram_" + m.metric + ".csv"));
        csv::Writer w(out);
        w.row({"bin_lo", "bin_hi", "count", "density", "cumulative"});
        for (const auto& b : m.histogram) {
            w.row({csv::format_double(b.lo), csv::format_double(b.hi), std::to_string(b.count),
                   csv::format_double(b.density), csv::format_double(b.cumulative)});
        }
    }
}

void write_confusion_csv(const std::filesystem::path& path, const ClassificationReport& report) {
    auto out = open_out(path);
    csv::Writer w(out);
    std::vector<std::string> header = {"true_band"};
    for (int c = 0; c < report.num_classes; ++c) header.push_back("pred_" + std::to_string(c));
    header.push_back("support");
    w.row(header);
    for (std::size_t c = 0; c < report.confusion.size(); ++c) {
        std::vector<std::string> row = {std::to_string(c)};
        std::size_t support = 0;
        for (std::size_t k = 0; k < report.confusion[c].size(); ++k) {
            row.push_back(csv::format_double(report.confusion[c][k]));
            support += report.counts[c][k];
        }
        row.push_back(std::to_string(support));
        w.row(row);
    }
}

void write_importance_csv(const std::filesystem::path& path, const std::vector<std::string>& feature_names,
                          const std::vector<std::string>& column_names,
                          const std::vector<std::vector<double>>& columns) {
    if (column_names.size() != columns.size()) throw InvalidInput("importance column names and data differ");
    auto out = open_out(path);
    csv::Writer w(out);
    std::vector<std::string> header = {"feature"};
    header.insert(header.end(), column_names.begin(), column_names.end());
    w.row(header);
    for (std::size_t f = 0; f < feature_names.size(); ++f) {
        std::vector<std::string> row = {feature_names[f]};
        for (const auto& c : columns) row.push_back(csv::format_double(c.at(f)));
        w.row(row);
    }
}

}  // namespace gpupower
