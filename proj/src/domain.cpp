#include "gpupower/domain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gpupower {

namespace {

void require_ratio(double v, const char* field) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw DataError(std::string(field) + " out of range [0,1]: " + std::to_string(v));
    }
}

void require_nonnegative(double v, const char* field) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
        throw DataError(std::string(field) + " must be a finite value >= 0: " + std::to_string(v));
    }
}

}  // namespace

void validate(const SlurmJobRecord& r) {
    if (r.job_id.empty()) throw DataError("job_id is empty");
    if (r.end_time < r.start_time) throw DataError("end_time precedes start_time");
    if (r.time_limit <= 0) throw DataError("time_limit must be positive");
    if (r.req_nodes < 1) throw DataError("req_nodes must be >= 1");
    if (r.node_list.empty()) throw DataError("node_list is empty");
    if (static_cast<std::int64_t>(r.node_list.size()) != r.req_nodes) {
        throw DataError("node_list has " + std::to_string(r.node_list.size()) +
                        " nodes but req_nodes is " + std::to_string(r.req_nodes));
    }
}

void validate(const DcgmSample& s) {
    if (s.job_id.empty()) throw DataError("job_id is empty");
    if (s.node.empty()) throw DataError("node is empty");
    if (s.gpu_index < 0) throw DataError("gpu_index must be >= 0");
    if (!(s.gpu_utilization >= 0.0 && s.gpu_utilization <= 100.0)) {
        throw DataError("gpu_utilization out of range [0,100]: " + std::to_string(s.gpu_utilization));
    }
    require_nonnegative(s.fb_used, "fb_used");
    require_nonnegative(s.fb_free, "fb_free");
    if (s.fb_used + s.fb_free <= 0.0) throw DataError("fb_used + fb_free must be > 0");
    require_ratio(s.sm_active, "sm_active");
    require_ratio(s.sm_occupancy, "sm_occupancy");
    require_ratio(s.dram_active, "dram_active");
    require_ratio(s.fp64_active, "fp64_active");
    require_ratio(s.tensor_active, "tensor_active");
    require_nonnegative(s.power_usage, "power_usage");
}

double target_value(const AggregateTargets& t, std::size_t index) {
    switch (index) {
        case 0: return t.max_gpu_utilization;
        case 1: return t.max_mem_utilization;
        case 2: return t.avg_power;
        default: throw InvalidInput("target index out of range");
    }
}

PowerBandScheme::PowerBandScheme(std::array<double, 3> boundaries) : boundaries_(boundaries) {
    for (double b : boundaries_) {
        if (!std::isfinite(b) || b < 0.0) throw InvalidInput("band boundaries must be finite and >= 0");
    }
    if (!(boundaries_[0] < boundaries_[1] && boundaries_[1] < boundaries_[2])) {
        throw InvalidInput("band boundaries must be strictly increasing");
    }
}

int PowerBandScheme::band_of(double watts) const {
    // upper_bound gives the count of boundaries <= watts, i.e. lower-inclusive bands.
    return static_cast<int>(std::upper_bound(boundaries_.begin(), boundaries_.end(), watts) -
                            boundaries_.begin());
}

double mem_utilization(double fb_used, double fb_free) {
    if (fb_used < 0.0 || fb_free < 0.0) throw InvalidInput("frame buffer values must be >= 0");
    const double total = fb_used + fb_free;
    if (total <= 0.0) throw InvalidInput("mem_utilization undefined: fb_used + fb_free == 0");
    return 100.0 * fb_used / total;
}

AggregateTargets aggregate_targets(std::span<const DcgmSample> samples) {
    if (samples.empty()) throw InvalidInput("aggregate_targets needs at least one sample");
    AggregateTargets out;
    out.max_gpu_utilization = -std::numeric_limits<double>::infinity();
    out.max_mem_utilization = -std::numeric_limits<double>::infinity();
    std::vector<double> power;
    power.reserve(samples.size());
    for (const auto& s : samples) {
        out.max_gpu_utilization = std::max(out.max_gpu_utilization, s.gpu_utilization);
        out.max_mem_utilization = std::max(out.max_mem_utilization, mem_utilization(s.fb_used, s.fb_free));
        power.push_back(s.power_usage);
    }
    // Summing in sorted order makes the mean independent of sample order, bit for bit.
    std::sort(power.begin(), power.end());
    double power_sum = 0.0;
    for (double p : power) power_sum += p;
    out.avg_power = power_sum / static_cast<double>(samples.size());
    return out;
}

}  // namespace gpupower
