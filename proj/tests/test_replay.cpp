#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "fixtures.hpp"
#include "gpupower/replay.hpp"

using namespace gpupower;

namespace {

const std::array<double, 3> kBands = {100, 150, 220};

std::vector<double> two_regimes(double a, double b, int n_a, int n_b) {
    std::vector<double> p(static_cast<std::size_t>(n_a), a);
    p.insert(p.end(), static_cast<std::size_t>(n_b), b);
    return p;
}

Stage2Predictor trained() {
    std::vector<JobTelemetry> jobs;
    for (int i = 0; i < 6; ++i) {
        jobs.push_back(fixtures::job(std::to_string(i), 10000 * i, two_regimes(120, 240, 20 + 3 * i, 30)));
        jobs.push_back(fixtures::job(std::to_string(10 + i), 10000 * i + 5000, two_regimes(180, 90, 25, 25 + i)));
    }
    GbdtParams p;
    p.rounds = 30;
    p.min_samples_leaf = 2;
    return train_stage2_from_jobs(jobs, FeatureConfig{}, kBands, 3, p);
}

}  // namespace

TEST(BandCap, UpperBoundaryOrTopCap) {
    const PowerBandScheme s(kBands);
    EXPECT_EQ(band_cap(s, 0), 100);
    EXPECT_EQ(band_cap(s, 2), 220);
    EXPECT_EQ(band_cap(s, 3), 400);
    EXPECT_EQ(band_cap(s, 3, 150), 220);
    EXPECT_THROW(band_cap(s, 4), InvalidInput);
}

TEST(Replay, ConstantBandIssuesOneDirective) {
    const auto pred = trained();
    const auto job = fixtures::job("c", 0, std::vector<double>(40, 240));
    const auto r = replay_job(job, pred);
    ASSERT_EQ(r.directives.size(), 1u);
    EXPECT_EQ(r.cap_changes(), 0u);
    EXPECT_EQ(r.directives[0].reason, "initial");
    EXPECT_EQ(r.directives[0].band, 3);
    EXPECT_EQ(r.directives[0].cap_watts, 400);
    EXPECT_EQ(r.predictions.size(), 38u);
    EXPECT_NE(r.summary().find("0 cap changes over 40 steps"), std::string::npos);
}

TEST(Replay, TwoRegimesGiveFewChanges) {
    const auto pred = trained();
    const auto job = fixtures::job("t", 0, two_regimes(120, 240, 30, 30));
    const auto r = replay_job(job, pred);
    EXPECT_GE(r.cap_changes(), 1u);
    EXPECT_LE(r.cap_changes(), 3u);
    EXPECT_EQ(r.directives.front().band, 1);
    EXPECT_EQ(r.directives.back().band, 3);
    for (std::size_t i = 1; i < r.directives.size(); ++i) {
        EXPECT_GT(r.directives[i].timestamp, r.directives[i - 1].timestamp);
        EXPECT_NE(r.directives[i].band, r.directives[i - 1].band);
        EXPECT_EQ(r.directives[i].reason, "band change");
    }
}

TEST(Replay, MatchesBatchPredictions) {
    const auto pred = trained();
    auto job = fixtures::job("g", 0, two_regimes(130, 200, 25, 25));
    // drop step 20 to force a gap
    std::erase_if(job.samples, [](const DcgmSample& s) { return s.timestamp == 200; });
    const auto r = replay_job(job, pred);
    std::map<Timestamp, ReplayPrediction> by_time;
    for (const auto& p : r.predictions) by_time[p.target_time] = p;
    const auto windows = build_windows(job, pred.pipeline, pred.scheme, pred.window);
    ASSERT_FALSE(windows.empty());
    for (const auto& w : windows) {
        const auto it = by_time.find(w.prediction_time);
        ASSERT_NE(it, by_time.end());
        EXPECT_EQ(it->second.probabilities, pred.predict(w).probabilities);
    }
    // no prediction may use history across the gap
    for (const auto& p : r.predictions) {
        EXPECT_FALSE(p.step >= 20 && p.step < 23) << p.step;
    }
    for (std::size_t i = 1; i < r.predictions.size(); ++i) {
        EXPECT_GT(r.predictions[i].target_time, r.predictions[i - 1].target_time);
    }
}

TEST(Replay, ColdStartWaitsForWindow) {
    const auto pred = trained();
    const auto job = fixtures::job("s", 0, std::vector<double>(5, 120));
    const auto r = replay_job(job, pred);
    ASSERT_EQ(r.predictions.size(), 3u);
    EXPECT_EQ(r.predictions[0].step, 2);
    EXPECT_EQ(r.predictions[0].target_time, 30);
    EXPECT_EQ(r.directives[0].step, 3);
    EXPECT_THROW(replay_job(fixtures::job("x", 0, {120, 120, 120}), pred), InvalidInput);
}

TEST(Replay, DirectiveLog) {
    const auto pred = trained();
    const auto r = replay_job(fixtures::job("t", 0, two_regimes(120, 240, 30, 30)), pred);
    const auto path = std::filesystem::temp_directory_path() / "gpupower_directives.csv";
    write_directive_log(path, r);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "timestamp,step,band,cap_watts,reason");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, r.directives.size());
    std::filesystem::remove(path);
}
