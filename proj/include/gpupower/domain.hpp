#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gpupower {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (files, traces, sample streams).
class DataError : public Error {
public:
    using Error::Error;
};

/// A precondition on arguments or parameters was violated.
class InvalidInput : public Error {
public:
    using Error::Error;
};

using Timestamp = std::int64_t;  // epoch seconds

struct SlurmJobRecord {
    std::string job_id;
    std::string user;
    std::string job_name;
    std::string account;
    std::string category;
    std::int64_t req_cpus = 0;
    std::int64_t req_nodes = 1;
    std::int64_t req_gpus = 0;
    double req_mem = 0.0;  // MiB
    std::int64_t time_limit = 0;  // seconds
    Timestamp start_time = 0;
    Timestamp end_time = 0;
    std::vector<std::string> node_list;
    std::string executable;

    bool operator==(const SlurmJobRecord&) const = default;
};

/// Throws DataError naming the first violated record invariant.
void validate(const SlurmJobRecord& record);

struct DcgmSample {
    std::string job_id;
    std::string node;
    int gpu_index = 0;
    Timestamp timestamp = 0;
    double gpu_utilization = 0.0;  // percent
    double fb_used = 0.0;          // MB
    double fb_free = 0.0;          // MB
    double sm_active = 0.0;
    double sm_occupancy = 0.0;
    double dram_active = 0.0;
    double fp64_active = 0.0;
    double tensor_active = 0.0;
    double power_usage = 0.0;  // W

    bool operator==(const DcgmSample&) const = default;
};

/// Throws DataError naming the first field out of range.
void validate(const DcgmSample& sample);

struct AggregateTargets {
    double max_gpu_utilization = 0.0;
    double max_mem_utilization = 0.0;
    double avg_power = 0.0;

    bool operator==(const AggregateTargets&) const = default;
};

inline constexpr std::array<const char*, 3> kTargetNames = {
    "max_gpu_utilization", "max_mem_utilization", "avg_power"};

double target_value(const AggregateTargets& t, std::size_t index);

struct JobTelemetry {
    SlurmJobRecord record;
    std::vector<DcgmSample> samples;  // time ordered
    std::optional<AggregateTargets> targets;  // absent when samples is empty

    bool operator==(const JobTelemetry&) const = default;
};

inline constexpr int kNumBands = 4;

/// Four power bands split by three strictly increasing watt thresholds.
/// Bands are lower-inclusive, upper-exclusive: band i covers
/// [boundaries[i-1], boundaries[i]) with the outer bounds 0 and +inf.
class PowerBandScheme {
public:
    explicit PowerBandScheme(std::array<double, 3> boundaries);

    const std::array<double, 3>& boundaries() const { return boundaries_; }
    int band_of(double watts) const;

    bool operator==(const PowerBandScheme&) const = default;

private:
    std::array<double, 3> boundaries_;
};

/// Used share of the frame buffer, in percent.
double mem_utilization(double fb_used, double fb_free);

/// Max GPU utilization, max memory utilization, and mean power over all samples.
AggregateTargets aggregate_targets(std::span<const DcgmSample> samples);

inline int band_of(double watts, const PowerBandScheme& scheme) { return scheme.band_of(watts); }

}  // namespace gpupower
