#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "gpupower/ingest.hpp"
#include "gpupower/stats.hpp"
#include "oracles.hpp"

using namespace gpupower;

namespace {

const std::string kSlurmRow1 = "1001,alice,relax,m01,chem,64,1,4,256000,3600,1000,1100,nid001,vasp_std";
const std::string kSlurmRow2 = "1002,bob,scf,m02,phys,128,2,8,512000,7200,2000,2300,nid[002-003],vasp_gam";
const std::string kSlurmRow3 = "1003,carol,md,m01,chem,64,1,4,256000,1800,3000,3050,nid004,lmp";

std::string dcgm_row(const std::string& job, const std::string& node, int gpu, long ts, const std::string& sm = "0.5",
                     const std::string& power = "150") {
    return job + "," + node + "," + std::to_string(gpu) + "," + std::to_string(ts) + ",80,10000,30000," + sm +
           ",0.25,0.125,0.25,0,"+ power;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("gpupower_ingest_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST(NodeList, BracketRange) {
    EXPECT_EQ(expand_node_list("nid[001-004]"), (std::vector<std::string>{"nid001", "nid002", "nid003", "nid004"}));
}

TEST(NodeList, RangeMatchesEnumerationOracle) {
    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
        const auto lo = rng.uniform_int(0, 500);
        const auto hi = lo + rng.uniform_int(0, 20);
        const int width = static_cast<int>(rng.uniform_int(1, 5));
        const auto padded = [&](long v) {
            std::string s = std::to_string(v);
            while (static_cast<int>(s.size()) < width) s = "0" + s;
            return s;
        };
        std::vector<std::string> want;
        for (long v = lo; v <= hi; ++v) want.push_back("gpu" + padded(v));
        EXPECT_EQ(expand_node_list("gpu[" + padded(lo) + "-" + padded(hi) + "]"), want);
    }
}

TEST(NodeList, ListsAndMixedRanges) {
    EXPECT_EQ(expand_node_list("a;b"), (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(expand_node_list("gpu[01,03-04]"), (std::vector<std::string>{"gpu01", "gpu03", "gpu04"}));
    EXPECT_EQ(expand_node_list("x[1-2],y"), (std::vector<std::string>{"x1", "x2", "y"}));
    EXPECT_THROW(expand_node_list("nid[4-1]"), DataError);
    EXPECT_THROW(expand_node_list("nid[001"), DataError);
    EXPECT_THROW(expand_node_list("a;a"), DataError);
}

TEST(ParseSlurm, ThreeValidRows) {
    std::istringstream in(std::string(kSlurmHeader) + "\n" + kSlurmRow1 + "\n" + kSlurmRow2 + "\n" + kSlurmRow3 + "\n");
    const auto r = parse_slurm(in);
    ASSERT_EQ(r.records.size(), 3u);
    EXPECT_TRUE(r.rejects.empty());
    EXPECT_EQ(r.records[1].node_list, (std::vector<std::string>{"nid002", "nid003"}));
    EXPECT_EQ(r.records[0].job_id, "1001");
    EXPECT_EQ(r.records[2].executable, "lmp");
}

TEST(ParseSlurm, UnlimitedTimeLimitRejectedWithField) {
    std::istringstream in(std::string(kSlurmHeader) + "\n" + kSlurmRow1 + "\n" +
                          "1009,al,x,m,c,64,1,4,256000,unlimited,1,2,nid1,vasp\n");
    const auto r = parse_slurm(in);
    EXPECT_EQ(r.records.size(), 1u);
    ASSERT_EQ(r.rejects.size(), 1u);
    EXPECT_EQ(r.rejects[0].line, 3u);
    EXPECT_EQ(r.rejects[0].field, "time_limit_s");
    EXPECT_NE(r.rejects[0].reason.find("unlimited"), std::string::npos);
}

TEST(ParseSlurm, NodeCountMismatchRejected) {
    std::istringstream in(std::string(kSlurmHeader) + "\n1,a,b,c,d,1,2,4,1,10,0,5,nid1,e\n");
    const auto r = parse_slurm(in);
    ASSERT_EQ(r.rejects.size(), 1u);
    EXPECT_EQ(r.rejects[0].field, "node_list");
}

TEST(ParseSlurm, ColumnOrderIsFree) {
    std::istringstream in(
        "executable,job_id,user,job_name,account,category,req_cpus,req_nodes,req_gpus,req_mem_mb,time_limit_s,"
        "start_time,end_time,node_list\nvasp,7,u,n,a,c,1,1,1,1,10,0,5,nid1\n");
    const auto r = parse_slurm(in);
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].executable, "vasp");
    EXPECT_EQ(r.records[0].job_id, "7");
}

TEST(ParseSlurm, MissingColumnOrFile) {
    std::istringstream in("job_id,user\n1,a\n");
    EXPECT_THROW(parse_slurm(in), DataError);
    EXPECT_THROW(parse_slurm(std::filesystem::path("/nonexistent/slurm.csv")), DataError);
}

TEST(ParseDcgm, TenRows) {
    std::string text = std::string(kDcgmHeader) + "\n";
    for (int i = 0; i < 10; ++i) text += dcgm_row("1001", "nid001", 0, 1000 + 10 * i) + "\n";
    std::istringstream in(text);
    const auto r = parse_dcgm(in);
    EXPECT_EQ(r.samples.size(), 10u);
    EXPECT_EQ(r.reject_count, 0u);
    EXPECT_EQ(r.samples[3].timestamp, 1030);
}

TEST(ParseDcgm, RatioOutOfRangeRejected) {
    std::istringstream in(std::string(kDcgmHeader) + "\n" + dcgm_row("1", "n", 0, 0) + "\n" +
                          dcgm_row("1", "n", 0, 10, "1.3") + "\n");
    const auto r = parse_dcgm(in);
    EXPECT_EQ(r.samples.size(), 1u);
    ASSERT_EQ(r.rejects.size(), 1u);
    EXPECT_EQ(r.rejects[0].line, 3u);
    EXPECT_EQ(r.rejects[0].field, "sm_active");
}

TEST(ParseDcgm, KeepsBoundedDiagnosticsButCountsAll) {
    std::string text = std::string(kDcgmHeader) + "\n";
    const std::size_t bad = DcgmReader::kMaxKeptRejects + 50;
    for (std::size_t i = 0; i < bad; ++i) text += "garbage\n";
    std::istringstream in(text);
    const auto r = parse_dcgm(in);
    EXPECT_EQ(r.reject_count, bad);
    EXPECT_EQ(r.rejects.size(), DcgmReader::kMaxKeptRejects);
}

TEST(FilterIrregular, RegularStreamKept) {
    std::vector<DcgmSample> s;
    for (long t : {0L, 10L, 20L}) s.push_back(fixtures::sample("1", "n", 0, t, 100));
    EXPECT_EQ(filter_irregular(s, {}).size(), 3u);
}

TEST(FilterIrregular, SubIntervalPointDropped) {
    std::vector<DcgmSample> s;
    for (long t : {0L, 3L, 10L, 20L}) s.push_back(fixtures::sample("1", "n", 0, t, 100));
    const auto kept = filter_irregular(s, {});
    ASSERT_EQ(kept.size(), 3u);
    EXPECT_EQ(kept[0].timestamp, 0);
    EXPECT_EQ(kept[1].timestamp, 10);
    EXPECT_EQ(kept[2].timestamp, 20);
}

TEST(FilterIrregular, RegularJobYieldsExecTimeOverTen) {
    const long t_exec = 600;
    std::vector<DcgmSample> s;
    for (long t = 0; t < t_exec; t += 10) s.push_back(fixtures::sample("1", "n", 0, t, 100));
    EXPECT_EQ(filter_irregular(s, {}).size(), static_cast<std::size_t>(t_exec / 10));
}

TEST(FilterIrregular, UnsortedInputNamesKey) {
    std::vector<DcgmSample> s = {fixtures::sample("7", "nidX", 2, 20, 100), fixtures::sample("7", "nidX", 2, 10, 100)};
    try {
        filter_irregular(s, {});
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("nidX"), std::string::npos);
        EXPECT_NE(msg.find("10"), std::string::npos);
        EXPECT_NE(msg.find("20"), std::string::npos);
    }
}

TEST(FilterIrregular, MatchesGreedyOracleOnRandomStreams) {
    Rng rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        IngestConfig cfg;
        cfg.min_interval_s = static_cast<double>(rng.uniform_int(2, 15));
        cfg.interval_tolerance_s = rng.uniform(0, cfg.min_interval_s * 0.9);
        const int keys = static_cast<int>(rng.uniform_int(1, 3));
        std::vector<DcgmSample> stream;
        std::vector<std::vector<std::int64_t>> per_key(static_cast<std::size_t>(keys));
        for (int k = 0; k < keys; ++k) {
            std::int64_t t = rng.uniform_int(0, 100);
            const int n = static_cast<int>(rng.uniform_int(0, 40));
            for (int i = 0; i < n; ++i) {
                t += rng.uniform_int(0, 14);
                per_key[static_cast<std::size_t>(k)].push_back(t);
                stream.push_back(fixtures::sample("j", "n", k, t, 1));
            }
        }
        const auto kept = filter_irregular(stream, cfg);
        std::vector<std::vector<std::int64_t>> got(static_cast<std::size_t>(keys));
        for (const auto& s : kept) got[static_cast<std::size_t>(s.gpu_index)].push_back(s.timestamp);
        for (int k = 0; k < keys; ++k) {
            const auto& ts = per_key[static_cast<std::size_t>(k)];
            std::vector<std::int64_t> want;
            for (auto i : oracle::greedy_filter(ts, cfg.min_interval_s, cfg.interval_tolerance_s)) want.push_back(ts[i]);
            ASSERT_EQ(got[static_cast<std::size_t>(k)], want) << "trial " << trial << " key " << k;
            for (std::size_t i = 1; i < want.size(); ++i) {
                EXPECT_GE(static_cast<double>(want[i] - want[i - 1]), cfg.min_interval_s - cfg.interval_tolerance_s);
            }
        }
    }
}

TEST(Join, OneRecordFourSamples) {
    const auto r = fixtures::record("1", 100, 100);
    std::vector<DcgmSample> s;
    for (int g = 0; g < 4; ++g) s.push_back(fixtures::sample("1", "nid001", g, 110, 100 + g));
    const auto j = join({r}, s, {});
    ASSERT_EQ(j.jobs.size(), 1u);
    EXPECT_EQ(j.jobs[0].samples.size(), 4u);
    EXPECT_EQ(j.orphan_samples, 0u);
    ASSERT_TRUE(j.jobs[0].targets);
    EXPECT_EQ(j.jobs[0].targets->avg_power, 101.5);
}

TEST(Join, LateSampleIsOrphanAndEmptyJobFlagged) {
    const auto r1 = fixtures::record("1", 100, 100);
    const auto r2 = fixtures::record("2", 100, 100);
    const std::vector<DcgmSample> s = {fixtures::sample("1", "nid001", 0, 201, 1), fixtures::sample("1", "nid001", 0, 200, 1),
                                       fixtures::sample("1", "nid999", 0, 150, 1), fixtures::sample("9", "nid001", 0, 150, 1)};
    const auto j = join({r1, r2}, s, {});
    EXPECT_EQ(j.orphan_samples, 3u);
    EXPECT_EQ(j.jobs[0].samples.size(), 1u);
    EXPECT_EQ(j.empty_jobs, std::vector<std::string>{"2"});
    EXPECT_FALSE(j.jobs[1].targets);
}

TEST(Join, DuplicateJobIdThrows) {
    const auto r = fixtures::record("1", 0, 10);
    EXPECT_THROW(join({r, r}, {}, {}), DataError);
}

TEST(Join, ApplicationFilter) {
    auto a = fixtures::record("1", 0, 100);
    auto b = fixtures::record("2", 0, 100);
    b.executable = "lmp";
    const std::vector<DcgmSample> s = {fixtures::sample("1", "nid001", 0, 10, 1), fixtures::sample("2", "nid001", 0, 10, 1)};
    IngestConfig cfg;
    cfg.application_filter = "vasp*";
    const auto j = join({a, b}, s, cfg);
    ASSERT_EQ(j.jobs.size(), 1u);
    EXPECT_EQ(j.jobs[0].record.job_id, "1");
    EXPECT_EQ(j.filtered_jobs, 1u);
    EXPECT_EQ(j.filtered_samples, 1u);
}

TEST(Join, CountsMatchNestedLoopOracle) {
    Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<SlurmJobRecord> records;
        std::vector<oracle::JoinRecord> orecs;
        const int n_jobs = static_cast<int>(rng.uniform_int(1, 6));
        for (int i = 0; i < n_jobs; ++i) {
            const auto start = rng.uniform_int(0, 500);
            std::vector<std::string> nodes;
            const auto first = rng.uniform_int(0, 6);
            const auto count = rng.uniform_int(1, 3);
            for (auto n = first; n < first + count; ++n) nodes.push_back("n" + std::to_string(n));
            auto r = fixtures::record(std::to_string(i), start, rng.uniform_int(0, 300), nodes);
            orecs.push_back({r.job_id, r.node_list, r.start_time, r.end_time});
            records.push_back(r);
        }
        std::vector<DcgmSample> samples;
        std::vector<oracle::JoinSample> osamples;
        const int n_samples = static_cast<int>(rng.uniform_int(0, 200));
        for (int i = 0; i < n_samples; ++i) {
            const auto s = fixtures::sample(std::to_string(rng.uniform_int(0, n_jobs)), "n" + std::to_string(rng.uniform_int(0, 9)),
                                            0, rng.uniform_int(0, 900), 1);
            samples.push_back(s);
            osamples.push_back({s.job_id, s.node, s.timestamp});
        }
        const auto [counts, orphans] = oracle::nested_join(orecs, osamples);
        const auto j = join(records, samples, {});
        ASSERT_EQ(j.orphan_samples, orphans);
        for (std::size_t r = 0; r < records.size(); ++r) EXPECT_EQ(j.jobs[r].samples.size(), counts[r]);
        EXPECT_EQ(j.total_samples() + j.orphan_samples, samples.size());

        std::vector<SlurmJobRecord> again_records;
        std::vector<DcgmSample> again_samples;
        for (const auto& job : j.jobs) {
            again_records.push_back(job.record);
            again_samples.insert(again_samples.end(), job.samples.begin(), job.samples.end());
        }
        EXPECT_EQ(join(again_records, again_samples, {}).jobs, j.jobs);
    }
}

TEST(GlobMatch, Patterns) {
    EXPECT_TRUE(glob_match("vasp*", "vasp_std"));
    EXPECT_TRUE(glob_match("vasp*", "vasp"));
    EXPECT_FALSE(glob_match("vasp*", "lmp"));
    EXPECT_TRUE(glob_match("?mp", "lmp"));
    EXPECT_TRUE(glob_match("*_std", "vasp_std"));
}

TEST(IngestFiles, ThreeJobFixtureAndJsonlRoundTrip) {
    const auto dir = temp_dir("three");
    {
        std::ofstream s(dir / "slurm.csv");
        s << kSlurmHeader << "\n" << kSlurmRow1 << "\n" << kSlurmRow2 << "\n" << kSlurmRow3 << "\n";
        std::ofstream d(dir / "dcgm.csv");
        d << kDcgmHeader << "\n";
        // written out of order on purpose, plus one sub-interval point
        d << dcgm_row("1001", "nid001", 0, 1010) << "\n" << dcgm_row("1001", "nid001", 0, 1000) << "\n";
        d << dcgm_row("1001", "nid001", 0, 1004) << "\n";
        d << dcgm_row("1002", "nid002", 1, 2000) << "\n" << dcgm_row("1002", "nid003", 0, 2000, "0.5", "250") << "\n";
        d << dcgm_row("1003", "nid004", 0, 3000) << "\n" << dcgm_row("1003", "nid004", 0, 9999) << "\n";
    }
    IngestConfig cfg;
    cfg.slurm_path = dir / "slurm.csv";
    cfg.dcgm_path = dir / "dcgm.csv";
    const auto sum = ingest_files(cfg);
    EXPECT_EQ(sum.joined.jobs.size(), 3u);
    EXPECT_EQ(sum.irregular_dropped, 1u);
    EXPECT_EQ(sum.joined.orphan_samples, 1u);
    EXPECT_EQ(sum.joined.jobs[0].samples.size(), 2u);
    EXPECT_EQ(sum.joined.jobs[0].samples[0].timestamp, 1000);
    EXPECT_EQ(sum.joined.jobs[1].targets->avg_power, 200);

    write_jobs(dir / "jobs.jsonl", sum.joined.jobs);
    EXPECT_EQ(read_jobs(dir / "jobs.jsonl"), sum.joined.jobs);
    std::filesystem::remove_all(dir);
}

TEST(IngestConfig, Validation) {
    IngestConfig c;
    EXPECT_NO_THROW(c.validate());
    c.interval_tolerance_s = 10;
    EXPECT_THROW(c.validate(), InvalidInput);
    c.interval_tolerance_s = 0.5;
    c.min_interval_s = 0;
    EXPECT_THROW(c.validate(), InvalidInput);
}
