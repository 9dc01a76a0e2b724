#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "gpupower/featurize.hpp"
#include "gpupower/stats.hpp"
#include "oracles.hpp"

using namespace gpupower;

namespace {

std::vector<JobTelemetry> jobs_with_starts(const std::vector<Timestamp>& starts) {
    std::vector<JobTelemetry> out;
    for (std::size_t i = 0; i < starts.size(); ++i) out.push_back(fixtures::job("j" + std::to_string(i), starts[i], {100}));
    return out;
}

/// Random job with T aligned steps and occasional gaps; returns T and the
/// brute-force window count over its consecutive runs.
std::pair<JobTelemetry, std::size_t> random_gappy_job(Rng& rng, const std::string& id) {
    JobTelemetry j;
    j.record = fixtures::record(id, 1000, 0, {"nid001", "nid002"});
    std::int64_t step = 0;
    std::size_t run = 0, windows = 0;
    const int total = static_cast<int>(rng.uniform_int(0, 40));
    for (int k = 0; k < total; ++k) {
        if (k > 0 && rng.bernoulli(0.1)) {
            step += rng.uniform_int(2, 4);  // gap of at least one missing step
            windows += run > 3 ? run - 3 : 0;
            run = 0;
        } else if (k > 0) {
            ++step;
        }
        ++run;
        for (const char* node : {"nid001", "nid002"}) {
            for (int g = 0; g < 2; ++g) {
                j.samples.push_back(fixtures::sample(id, node, g, 1000 + 10 * step, rng.uniform(50, 300)));
            }
        }
    }
    windows += run > 3 ? run - 3 : 0;
    j.record.end_time = 1000 + 10 * (step + 1);
    if (!j.samples.empty()) j.targets = aggregate_targets(j.samples);
    return {j, windows};
}

}  // namespace

TEST(ChronoSplit, EightyTwenty) {
    const auto s = chrono_split(jobs_with_starts({9, 1, 8, 2, 7, 3, 6, 4, 5, 10}), 0.8);
    EXPECT_EQ(s.train.size(), 8u);
    EXPECT_EQ(s.test.size(), 2u);
    EXPECT_EQ(s.test[0].record.start_time, 9);
}

TEST(ChronoSplit, TiesBrokenByJobId) {
    auto jobs = jobs_with_starts({5, 5, 1});
    jobs[0].record.job_id = "b";
    jobs[1].record.job_id = "a";
    const auto s = chrono_split(jobs, 0.5);
    ASSERT_EQ(s.train.size(), 2u);
    EXPECT_EQ(s.train[1].record.job_id, "a");
    EXPECT_EQ(s.test[0].record.job_id, "b");
}

TEST(ChronoSplit, Errors) {
    EXPECT_THROW(chrono_split(jobs_with_starts({1}), 0.8), InvalidInput);
    EXPECT_THROW(chrono_split(jobs_with_starts({1, 2}), 1.0), InvalidInput);
    EXPECT_THROW(chrono_split(jobs_with_starts({1, 2}), 0.0), InvalidInput);
}

TEST(ChronoSplit, MatchesSortThenCutOracle) {
    Rng rng(3);
    std::vector<Timestamp> starts;
    for (int i = 0; i < 1000; ++i) starts.push_back(rng.uniform_int(0, 300));
    auto jobs = jobs_with_starts(starts);
    for (double frac : {0.8, 0.5, 0.123}) {
        const auto s = chrono_split(jobs, frac);
        std::vector<std::pair<Timestamp, std::string>> keys;
        for (const auto& j : jobs) keys.emplace_back(j.record.start_time, j.record.job_id);
        std::sort(keys.begin(), keys.end());
        const auto cut = static_cast<std::size_t>(std::ceil(frac * 1000 - 1e-9));
        ASSERT_EQ(s.train.size(), cut);
        for (std::size_t i = 0; i < cut; ++i) EXPECT_EQ(s.train[i].record.job_id, keys[i].second);
        for (std::size_t i = cut; i < keys.size(); ++i) EXPECT_EQ(s.test[i - cut].record.job_id, keys[i].second);
        Timestamp max_train = 0, min_test = std::numeric_limits<Timestamp>::max();
        for (const auto& j : s.train) max_train = std::max(max_train, j.record.start_time);
        for (const auto& j : s.test) min_test = std::min(min_test, j.record.start_time);
        EXPECT_LE(max_train, min_test);
    }
}

TEST(OrdinalEncoder, FirstSeenOrderAndUnseen) {
    const auto e = OrdinalEncoder::fit({"user"}, {{"a"}, {"b"}, {"a"}});
    EXPECT_EQ(e.encode(0, "a"), 0);
    EXPECT_EQ(e.encode(0, "b"), 1);
    EXPECT_EQ(e.encode(0, "c"), OrdinalEncoder::kUnseen);
    EXPECT_EQ(e.decode(0, 1), "b");
    EXPECT_THROW(e.decode(0, 2), InvalidInput);
    EXPECT_THROW(OrdinalEncoder::fit({}, {{}}), InvalidInput);
}

TEST(OrdinalEncoder, BijectiveOnFitSet) {
    Rng rng(9);
    std::vector<std::vector<std::string>> rows;
    for (int i = 0; i < 500; ++i) {
        rows.push_back({"s" + std::to_string(rng.uniform_int(0, 200)), "t" + std::to_string(rng.uniform_int(0, 20))});
    }
    const auto e = OrdinalEncoder::fit({"a", "b"}, rows);
    for (std::size_t f = 0; f < 2; ++f) {
        std::set<std::string> values;
        for (const auto& r : rows) values.insert(r[f]);
        std::set<int> codes;
        for (const auto& v : values) {
            const int c = e.encode(f, v);
            EXPECT_GE(c, 0);
            EXPECT_LT(c, static_cast<int>(values.size()));
            EXPECT_EQ(e.decode(f, c), v);
            codes.insert(c);
        }
        EXPECT_EQ(codes.size(), values.size());
        EXPECT_EQ(e.encode(f, "never-seen"), -1);
    }
    EXPECT_EQ(OrdinalEncoder::from_json(e.to_json()), e);
}

TEST(StandardScaler, ConstantAndTwoPointColumns) {
    Matrix m;
    for (double v : {0.0, 2.0}) m.append_row(std::vector<double>{1.0, v});
    m.append_row(std::vector<double>{1.0, 1.0});
    const auto constant = StandardScaler::fit(m).transform(m);
    for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(constant(r, 0), 0.0);
    Matrix two;
    two.append_row(std::vector<double>{1.0, 0.0});
    two.append_row(std::vector<double>{1.0, 2.0});
    const auto s = StandardScaler::fit(two);
    EXPECT_EQ(s.means()[1], 1.0);
    EXPECT_EQ(s.scales()[1], 1.0);
    const auto t = s.transform(two);
    EXPECT_EQ(t(0, 0), 0.0);
    EXPECT_EQ(t(1, 0), 0.0);
    EXPECT_EQ(t(0, 1), -1.0);
    EXPECT_EQ(t(1, 1), 1.0);
}

TEST(StandardScaler, RandomMatrixStandardized) {
    Rng rng(12);
    Matrix m(300, 100);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rng.normal(static_cast<double>(c), 1.0 + static_cast<double>(c));
    }
    const auto t = StandardScaler::fit(m).transform(m);
    for (std::size_t c = 0; c < m.cols(); ++c) {
        long double s = 0, ss = 0;
        for (std::size_t r = 0; r < t.rows(); ++r) s += t(r, c);
        const long double mu = s / t.rows();
        for (std::size_t r = 0; r < t.rows(); ++r) ss += (t(r, c) - mu) * (t(r, c) - mu);
        EXPECT_NEAR(static_cast<double>(mu), 0.0, 1e-9);
        EXPECT_NEAR(std::sqrt(static_cast<double>(ss / t.rows())), 1.0, 1e-9);
    }
}

TEST(StandardScaler, AffineEquivariance) {
    Rng rng(13);
    Matrix m(50, 3);
    for (std::size_t r = 0; r < 50; ++r) {
        for (std::size_t c = 0; c < 3; ++c) m(r, c) = rng.uniform(-5, 5);
    }
    Matrix shifted = m;
    for (std::size_t r = 0; r < 50; ++r) {
        for (std::size_t c = 0; c < 3; ++c) shifted(r, c) = 3.5 * m(r, c) + 7;
    }
    const auto a = StandardScaler::fit(m).transform(m);
    const auto b = StandardScaler::fit(shifted).transform(shifted);
    for (std::size_t r = 0; r < 50; ++r) {
        for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(a(r, c), b(r, c), 1e-9);
    }
}

TEST(FeaturePipeline, SixDefaultFeaturesAndUnseenPath) {
    std::vector<SlurmJobRecord> train;
    for (int i = 0; i < 4; ++i) {
        auto r = fixtures::record(std::to_string(i), i, 10);
        r.user = i % 2 ? "alice" : "bob";
        r.time_limit = 3600 * (i + 1);
        train.push_back(r);
    }
    const auto p = FeaturePipeline::fit(train);
    EXPECT_EQ(p.feature_names(), (std::vector<std::string>{"user", "job_name", "account", "category", "req_nodes", "time_limit"}));
    auto unseen = train[0];
    unseen.user = "mallory";
    const auto raw = p.encode(unseen);
    EXPECT_EQ(raw[0], -1.0);
    for (double v : p.transform(unseen)) EXPECT_TRUE(std::isfinite(v));
    EXPECT_EQ(FeaturePipeline::from_json(p.to_json()), p);
    EXPECT_THROW(FeaturePipeline::fit(train, FeatureConfig{{"bogus"}, {}}), InvalidInput);
}

TEST(BandScheme, ExplicitEqualBands) {
    const std::vector<double> t = {125, 150, 175};
    const auto s = explicit_band_scheme(t);
    std::array<int, 4> counts{};
    for (int w = 100; w < 200; ++w) ++counts[static_cast<std::size_t>(s.band_of(w))];
    EXPECT_EQ(counts, (std::array<int, 4>{25, 25, 25, 25}));
    const std::vector<double> bad = {150, 125, 175};
    EXPECT_THROW(explicit_band_scheme(bad), InvalidInput);
}

TEST(BandScheme, QuantileMatchesOracle) {
    const std::vector<double> v = {10, 20, 30, 40};
    const auto s = fit_band_scheme(v);
    EXPECT_DOUBLE_EQ(s.boundaries()[0], oracle::percentile(v, 25));
    EXPECT_DOUBLE_EQ(s.boundaries()[1], oracle::percentile(v, 50));
    EXPECT_DOUBLE_EQ(s.boundaries()[2], oracle::percentile(v, 75));
    EXPECT_EQ(s.boundaries()[0], 17.5);
    const std::vector<double> few = {1, 1, 2, 3};
    EXPECT_THROW(fit_band_scheme(few), InvalidInput);
}

TEST(BandScheme, QuantileBandsAreAllPopulated) {
    Rng rng(31);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> v(static_cast<std::size_t>(rng.uniform_int(8, 200)));
        for (auto& x : v) x = rng.uniform(50, 300);
        const auto s = fit_band_scheme(v);
        std::array<int, 4> counts{};
        for (double x : v) ++counts[static_cast<std::size_t>(s.band_of(x))];
        for (int c : counts) EXPECT_GT(c, 0);
    }
}

TEST(BandScheme, ReproducesQuotedPowerPercentiles) {
    // 21 values: p10 sits exactly on the 3rd order statistic, p95 on the 20th.
    std::vector<double> v;
    for (int i = 0; i < 21; ++i) v.push_back(100.0 + 6.0 * i);
    v[2] = 107.01;
    v[19] = 220.24;
    v[20] = 230.0;
    EXPECT_NEAR(percentile(v, 10), 107.01, 1e-9);
    EXPECT_NEAR(percentile(v, 95), 220.24, 1e-9);
    const auto s = fit_band_scheme(v);
    EXPECT_NEAR(s.boundaries()[0], oracle::percentile(v, 25), 1e-12);
}

TEST(Windows, MinimumLengthAndTenMinuteRun) {
    const auto p = FeaturePipeline::fit({fixtures::record("x", 0, 10)});
    const PowerBandScheme scheme({100, 150, 220});
    EXPECT_EQ(build_windows(fixtures::job("a", 0, {1, 2, 3, 4}), p, scheme).size(), 1u);
    EXPECT_TRUE(build_windows(fixtures::job("a", 0, {1, 2, 3}), p, scheme).empty());
    EXPECT_EQ(build_windows(fixtures::job("a", 0, std::vector<double>(63, 120.0)), p, scheme).size(), 60u);
    EXPECT_THROW(build_windows(fixtures::job("a", 0, {1, 2, 3, 4}), p, scheme, 0), InvalidInput);
}

TEST(Windows, StepMeanPoolsGpus) {
    JobTelemetry j;
    j.record = fixtures::record("a", 0, 40);
    for (int k = 0; k < 4; ++k) {
        j.samples.push_back(fixtures::sample("a", "nid001", 0, 10 * k, 100));
        j.samples.push_back(fixtures::sample("a", "nid001", 1, 10 * k, 200));
    }
    const auto steps = aligned_steps(j);
    ASSERT_EQ(steps.size(), 4u);
    EXPECT_EQ(steps[0].metrics[kPowerMetric], 150.0);
    EXPECT_EQ(steps[0].metrics[1], 25.0);
    const auto p = FeaturePipeline::fit({j.record});
    const auto w = build_windows(j, p, PowerBandScheme({100, 150, 220}));
    ASSERT_EQ(w.size(), 1u);
    EXPECT_EQ(w[0].features.size(), 3 * 8 + p.num_features());
    EXPECT_EQ(w[0].features[kPowerMetric], 150.0);
    EXPECT_EQ(w[0].label, 2);  // 150 W sits on a boundary and belongs to the upper band
    EXPECT_EQ(w[0].prediction_time, 30);
    EXPECT_EQ(w[0].window_power, (std::vector<double>{150, 150, 150}));
}

TEST(Windows, LayoutIsOldestStepFirst) {
    const auto j = fixtures::job("a", 0, {10, 20, 30, 40, 50});
    const auto p = FeaturePipeline::fit({j.record});
    const auto w = build_windows(j, p, PowerBandScheme({15, 35, 45}));
    ASSERT_EQ(w.size(), 2u);
    EXPECT_EQ(w[1].features[kPowerMetric], 20);
    EXPECT_EQ(w[1].features[8 + kPowerMetric], 30);
    EXPECT_EQ(w[1].features[16 + kPowerMetric], 40);
    EXPECT_EQ(w[1].next_power, 50);
    EXPECT_EQ(w[1].label, 3);
    EXPECT_EQ(window_feature_names(p, 3).size(), w[1].features.size());
}

TEST(Windows, MissingMetricStepDroppedAndNotSpanned) {
    auto j = fixtures::job("a", 0, {100, 100, 100, 100, 100, 100, 100, 100});
    j.samples[3].power_usage = std::nan("");
    const auto p = FeaturePipeline::fit({j.record});
    EXPECT_EQ(aligned_steps(j).size(), 7u);
    // runs of 3 and 4 steps around the dropped one
    EXPECT_EQ(build_windows(j, p, PowerBandScheme({1, 2, 3})).size(), 1u);
}

TEST(Windows, CountEqualsSumOverRunsOnRandomJobs) {
    Rng rng(41);
    const auto p = FeaturePipeline::fit({fixtures::record("x", 0, 10)});
    const PowerBandScheme scheme({100, 150, 220});
    std::size_t total = 0, expected = 0;
    for (int i = 0; i < 50; ++i) {
        const auto [job, want] = random_gappy_job(rng, "j" + std::to_string(i));
        const auto w = build_windows(job, p, scheme);
        EXPECT_EQ(w.size(), want);
        for (const auto& inst : w) {
            EXPECT_EQ(inst.label, scheme.band_of(inst.next_power));
        }
        total += w.size();
        expected += want;
    }
    EXPECT_EQ(total, expected);
}
