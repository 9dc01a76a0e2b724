#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "gpupower/domain.hpp"

namespace gpupower {

struct IngestConfig {
    double min_interval_s = 10.0;
    double interval_tolerance_s = 0.5;
    std::optional<std::string> application_filter;  // glob on executable, e.g. "vasp*"
    std::filesystem::path slurm_path;
    std::filesystem::path dcgm_path;

    void validate() const;
};

inline constexpr const char* kSlurmHeader =
    "job_id,user,job_name,account,category,req_cpus,req_nodes,req_gpus,req_mem_mb,time_limit_s,"
    "start_time,end_time,node_list,executable";
inline constexpr const char* kDcgmHeader =
    "job_id,node,gpu_index,timestamp,gpu_utilization,fb_used,fb_free,sm_active,sm_occupancy,"
    "dram_active,fp64_active,tensor_active,power_usage";

/// A data row that failed to parse or validate.
struct RowReject {
    std::size_t line = 0;  // 1-based, header is line 1
    std::string field;     // offending column, empty when the row shape is wrong
    std::string reason;
};

struct SlurmParseResult {
    std::vector<SlurmJobRecord> records;
    std::vector<RowReject> rejects;
};

/// Expands "nid[001-004]", "a;b" and "gpu[01,03-04]" into node names.
std::vector<std::string> expand_node_list(std::string_view text);

/// Parses a scheduler accounting file. Missing file or missing mandatory
/// columns throw DataError; bad rows are rejected and reported.
SlurmParseResult parse_slurm(const std::filesystem::path& path);
SlurmParseResult parse_slurm(std::istream& in);

/// Streams telemetry samples one row at a time; memory use does not grow
/// with file size apart from a bounded list of kept reject diagnostics.
class DcgmReader {
public:
    static constexpr std::size_t kMaxKeptRejects = 1000;

    explicit DcgmReader(const std::filesystem::path& path);
    explicit DcgmReader(std::istream& in);

    /// Next valid sample in file order, or nullopt at end of input.
    std::optional<DcgmSample> next();

    std::size_t rows_read() const { return rows_read_; }
    std::size_t reject_count() const { return reject_count_; }
    const std::vector<RowReject>& rejects() const { return rejects_; }

private:
    void read_header();

    std::unique_ptr<std::ifstream> owned_;
    std::istream* in_;
    std::size_t line_ = 0;
    std::vector<std::size_t> column_;  // column index per header field
    std::size_t rows_read_ = 0;
    std::size_t reject_count_ = 0;
    std::vector<RowReject> rejects_;
    std::string buffer_;
};

struct DcgmParseResult {
    std::vector<DcgmSample> samples;
    std::vector<RowReject> rejects;
    std::size_t reject_count = 0;
};

DcgmParseResult parse_dcgm(const std::filesystem::path& path);
DcgmParseResult parse_dcgm(std::istream& in);

/// Greedy keep-first filter for sub-interval telemetry points. Feed samples
/// one by one; within each (job_id, node, gpu_index) key they must arrive in
/// non-decreasing timestamp order.
class IrregularFilter {
public:
    explicit IrregularFilter(const IngestConfig& cfg);

    /// True when the sample is kept. Throws DataError on out-of-order input.
    bool accept(const DcgmSample& sample);

private:
    using Key = std::tuple<std::string, std::string, int>;
    struct KeyState {
        Timestamp last_kept;
        Timestamp last_seen;
    };
    double min_gap_;
    std::map<Key, KeyState> state_;
};

std::vector<DcgmSample> filter_irregular(const std::vector<DcgmSample>& samples, const IngestConfig& cfg);

struct JoinResult {
    std::vector<JobTelemetry> jobs;       // record order
    std::size_t orphan_samples = 0;       // matched no record
    std::size_t filtered_samples = 0;     // belonged to jobs removed by the application filter
    std::size_t filtered_jobs = 0;
    std::vector<std::string> empty_jobs;  // records with no samples

    std::size_t total_samples() const;
};

/// Attaches samples to records by job id, node membership and time range.
JoinResult join(const std::vector<SlurmJobRecord>& records, const std::vector<DcgmSample>& samples,
                const IngestConfig& cfg);

/// Shell-style glob match supporting '*' and '?'.
bool glob_match(std::string_view pattern, std::string_view text);

struct IngestSummary {
    JoinResult joined;
    std::vector<RowReject> slurm_rejects;
    std::vector<RowReject> dcgm_rejects;
    std::size_t dcgm_reject_count = 0;
    std::size_t parsed_samples = 0;
    std::size_t irregular_dropped = 0;
};

/// parse, sort per key, filter and join in one call.
IngestSummary ingest_files(const IngestConfig& cfg);

/// Line-delimited JSON, one JobTelemetry per line.
void write_jobs(const std::filesystem::path& path, const std::vector<JobTelemetry>& jobs);
void write_jobs(std::ostream& out, const std::vector<JobTelemetry>& jobs);
std::vector<JobTelemetry> read_jobs(const std::filesystem::path& path);
std::vector<JobTelemetry> read_jobs(std::istream& in);

}  // namespace gpupower
