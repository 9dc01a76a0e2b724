#include "gpupower/replay.hpp"

#include <algorithm>
#include <fstream>

#include "gpupower/csv.hpp"

namespace gpupower {

std::string ReplayResult::summary() const {
    return "job " + job_id + ": " + std::to_string(cap_changes()) + " cap changes over " + std::to_string(steps) +
           " steps (" + std::to_string(predictions.size()) + " predictions, " + std::to_string(directives.size()) +
           " directives)";
}

double band_cap(const PowerBandScheme& scheme, int band, double top_cap_watts) {
    if (band < 0 || band >= kNumBands) throw InvalidInput("band out of range");
    if (band == kNumBands - 1) return std::max(top_cap_watts, scheme.boundaries().back());
    return scheme.boundaries()[static_cast<std::size_t>(band)];
}

ReplayResult replay_job(const JobTelemetry& job, const Stage2Predictor& predictor, double top_cap_watts) {
    const auto steps = aligned_steps(job);
    const auto w = static_cast<std::size_t>(predictor.window);
    if (steps.size() < w + 1) {
        throw InvalidInput("job " + job.record.job_id + " has " + std::to_string(steps.size()) +
                           " telemetry steps; replay needs at least " + std::to_string(w + 1));
    }
    const auto static_features = predictor.pipeline.transform(job.record);
    ReplayResult r;
    r.job_id = job.record.job_id;
    r.steps = steps.size();
    std::size_t run_start = 0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (i > 0 && steps[i].step != steps[i - 1].step + 1) run_start = i;
        if (i + 1 - run_start < w) continue;
        const std::span<const StepMeans> history(steps.data() + i + 1 - w, w);
        const auto pred = predictor.predict(window_features(history, static_features));
        const Timestamp target = steps[i].time + kStepSeconds;
        r.predictions.push_back({steps[i].step, target, pred.band, pred.probabilities});
        if (r.directives.empty() || r.directives.back().band != pred.band) {
            r.directives.push_back({target, steps[i].step + 1, pred.band, band_cap(predictor.scheme, pred.band, top_cap_watts),
                                    r.directives.empty() ? "initial" : "band change"});
        }
    }
    return r;
}

void write_directive_log(const std::filesystem::path& path, const ReplayResult& result) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    csv::Writer w(out);
    w.row({"timestamp", "step", "band", "cap_watts", "reason"});
    for (const auto& d : result.directives) {
        w.row({std::to_string(d.timestamp), std::to_string(d.step), std::to_string(d.band),
               csv::format_double(d.cap_watts), d.reason});
    }
}

}  // namespace gpupower
