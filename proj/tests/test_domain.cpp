#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "fixtures.hpp"
#include "gpupower/domain.hpp"
#include "gpupower/stats.hpp"

using namespace gpupower;

TEST(MemUtilization, KnownValues) {
    EXPECT_DOUBLE_EQ(mem_utilization(0, 40000), 0.0);
    EXPECT_DOUBLE_EQ(mem_utilization(20000, 20000), 50.0);
    EXPECT_DOUBLE_EQ(mem_utilization(4096, 36864), 10.0);
}

TEST(MemUtilization, DegenerateInputs) {
    EXPECT_THROW(mem_utilization(0, 0), InvalidInput);
    EXPECT_THROW(mem_utilization(-1, 10), InvalidInput);
}

TEST(MemUtilization, ScaleInvariant) {
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        const double used = rng.uniform(0, 81920);
        const double free = rng.uniform(1, 81920);
        const double c = rng.uniform(1e-3, 1e3);
        EXPECT_NEAR(mem_utilization(used * c, free * c), mem_utilization(used, free), 1e-9);
    }
}

TEST(AggregateTargets, SingleSample) {
    const std::vector<DcgmSample> s = {fixtures::sample("1", "n", 0, 0, 150, 80, 10000, 30000)};
    const auto t = aggregate_targets(s);
    EXPECT_EQ(t.max_gpu_utilization, 80);
    EXPECT_EQ(t.max_mem_utilization, 25);
    EXPECT_EQ(t.avg_power, 150);
}

TEST(AggregateTargets, MeanOfPair) {
    const std::vector<DcgmSample> s = {fixtures::sample("1", "n", 0, 0, 100), fixtures::sample("1", "n", 1, 0, 200)};
    EXPECT_EQ(aggregate_targets(s).avg_power, 150);
}

TEST(AggregateTargets, EmptyThrows) { EXPECT_THROW(aggregate_targets({}), InvalidInput); }

TEST(AggregateTargets, MatchesBruteForceAndIsPermutationInvariant) {
    Rng rng(11);
    std::mt19937_64 shuffle_engine(3);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<DcgmSample> s;
        for (int i = 0; i < 6; ++i) {
            s.push_back(fixtures::sample("1", "n", i % 4, i, rng.uniform(0, 400), rng.uniform(0, 100),
                                         rng.uniform(0, 40000), rng.uniform(1, 40000)));
        }
        double mg = -1, mm = -1;
        long double sum = 0;
        for (const auto& x : s) {
            if (x.gpu_utilization > mg) mg = x.gpu_utilization;
            const double m = 100.0 * x.fb_used / (x.fb_used + x.fb_free);
            if (m > mm) mm = m;
            sum += x.power_usage;
        }
        const auto t = aggregate_targets(s);
        EXPECT_EQ(t.max_gpu_utilization, mg);
        EXPECT_EQ(t.max_mem_utilization, mm);
        EXPECT_NEAR(t.avg_power, static_cast<double>(sum / 6), 1e-12);
        std::shuffle(s.begin(), s.end(), shuffle_engine);
        EXPECT_EQ(aggregate_targets(s), t);
    }
}

TEST(PowerBandScheme, HalfOpenBands) {
    const PowerBandScheme s({100, 150, 220});
    EXPECT_EQ(s.band_of(100), 1);
    EXPECT_EQ(s.band_of(0), 0);
    EXPECT_EQ(s.band_of(151), 2);
    EXPECT_EQ(s.band_of(99.999), 0);
    EXPECT_EQ(s.band_of(220), 3);
    EXPECT_EQ(band_of(1e9, s), 3);
}

TEST(PowerBandScheme, RejectsBadBoundaries) {
    EXPECT_THROW(PowerBandScheme({100, 100, 200}), InvalidInput);
    EXPECT_THROW(PowerBandScheme({200, 150, 220}), InvalidInput);
    EXPECT_THROW(PowerBandScheme({-1, 150, 220}), InvalidInput);
    EXPECT_THROW(PowerBandScheme({1, 2, std::numeric_limits<double>::infinity()}), InvalidInput);
}

TEST(PowerBandScheme, PartitionsNonnegativeAxis) {
    const std::array<double, 3> b = {100, 150, 220};
    const PowerBandScheme s(b);
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double w = rng.uniform(0, 400);
        int matches = 0, which = -1;
        const double lo[4] = {0, b[0], b[1], b[2]};
        const double hi[4] = {b[0], b[1], b[2], std::numeric_limits<double>::infinity()};
        for (int k = 0; k < 4; ++k) {
            if (lo[k] <= w && w < hi[k]) {
                ++matches;
                which = k;
            }
        }
        EXPECT_EQ(matches, 1);
        EXPECT_EQ(s.band_of(w), which);
    }
}

TEST(Validate, RecordInvariants) {
    auto r = fixtures::record("1", 100, 50);
    EXPECT_NO_THROW(validate(r));
    auto bad = r;
    bad.end_time = 10;
    EXPECT_THROW(validate(bad), DataError);
    bad = r;
    bad.time_limit = 0;
    EXPECT_THROW(validate(bad), DataError);
    bad = r;
    bad.req_nodes = 2;
    EXPECT_THROW(validate(bad), DataError);
    bad = r;
    bad.node_list.clear();
    bad.req_nodes = 0;
    EXPECT_THROW(validate(bad), DataError);
}

TEST(Validate, SampleRanges) {
    auto s = fixtures::sample("1", "n", 0, 0, 100);
    EXPECT_NO_THROW(validate(s));
    auto bad = s;
    bad.sm_active = 1.3;
    EXPECT_THROW(validate(bad), DataError);
    bad = s;
    bad.gpu_utilization = 101;
    EXPECT_THROW(validate(bad), DataError);
    bad = s;
    bad.fb_used = bad.fb_free = 0;
    EXPECT_THROW(validate(bad), DataError);
    bad = s;
    bad.power_usage = -1;
    EXPECT_THROW(validate(bad), DataError);
}
