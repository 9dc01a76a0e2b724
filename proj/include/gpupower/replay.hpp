#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gpupower/predict.hpp"

namespace gpupower {

struct ReplayPrediction {
    std::int64_t step = 0;        // last observed step t
    Timestamp target_time = 0;    // time of step t+1
    int band = 0;
    std::vector<double> probabilities;
};

/// A cap change. The first directive of a replay has reason "initial".
struct CapDirective {
    Timestamp timestamp = 0;
    std::int64_t step = 0;
    int band = 0;
    double cap_watts = 0.0;
    std::string reason;
};

struct ReplayResult {
    std::string job_id;
    std::size_t steps = 0;  // aligned telemetry steps streamed
    std::vector<ReplayPrediction> predictions;
    std::vector<CapDirective> directives;

    std::size_t cap_changes() const { return directives.empty() ? 0 : directives.size() - 1; }
    std::string summary() const;
};

/// Cap for a band: its upper boundary, or top_cap_watts for the highest band.
double band_cap(const PowerBandScheme& scheme, int band, double top_cap_watts = 400.0);

/// Streams the job's steps in order. Once `window` consecutive steps are
/// available it predicts the band of the next step, and emits a directive
/// only when that band differs from the last one issued. A telemetry gap
/// restarts the history but keeps the current cap.
ReplayResult replay_job(const JobTelemetry& job, const Stage2Predictor& predictor, double top_cap_watts = 400.0);

/// Columns: timestamp, step, band, cap_watts, reason.
void write_directive_log(const std::filesystem::path& path, const ReplayResult& result);

}  // namespace gpupower
