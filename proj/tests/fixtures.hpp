#pragma once

#include <string>
#include <vector>

#include "gpupower/domain.hpp"

namespace fixtures {

inline gpupower::SlurmJobRecord record(const std::string& id, gpupower::Timestamp start, std::int64_t seconds,
                                       std::vector<std::string> nodes = {"nid001"}) {
    gpupower::SlurmJobRecord r;
    r.job_id = id;
    r.user = "alice";
    r.job_name = "relax";
    r.account = "m0001";
    r.category = "materials";
    r.req_nodes = static_cast<std::int64_t>(nodes.size());
    r.req_cpus = 64 * r.req_nodes;
    r.req_gpus = 4 * r.req_nodes;
    r.req_mem = 256000.0 * static_cast<double>(r.req_nodes);
    r.time_limit = 3600;
    r.start_time = start;
    r.end_time = start + seconds;
    r.node_list = std::move(nodes);
    r.executable = "vasp_std";
    return r;
}

inline gpupower::DcgmSample sample(const std::string& job, const std::string& node, int gpu, gpupower::Timestamp ts,
                                   double power, double gpu_util = 50.0, double fb_used = 10000.0,
                                   double fb_free = 30000.0) {
    gpupower::DcgmSample s;
    s.job_id = job;
    s.node = node;
    s.gpu_index = gpu;
    s.timestamp = ts;
    s.gpu_utilization = gpu_util;
    s.fb_used = fb_used;
    s.fb_free = fb_free;
    s.sm_active = 0.5;
    s.sm_occupancy = 0.25;
    s.dram_active = 0.125;
    s.fp64_active = 0.25;
    s.tensor_active = 0.0;
    s.power_usage = power;
    return s;
}

/// One node, `gpus` GPUs, sample k at start + 10k drawing power from the list.
inline gpupower::JobTelemetry job(const std::string& id, gpupower::Timestamp start,
                                  const std::vector<double>& step_power, int gpus = 1) {
    gpupower::JobTelemetry j;
    j.record = record(id, start, 10 * static_cast<std::int64_t>(step_power.size()));
    for (std::size_t k = 0; k < step_power.size(); ++k) {
        for (int g = 0; g < gpus; ++g) {
            j.samples.push_back(sample(id, "nid001", g, start + 10 * static_cast<std::int64_t>(k), step_power[k]));
        }
    }
    if (!j.samples.empty()) j.targets = gpupower::aggregate_targets(j.samples);
    return j;
}

}  // namespace fixtures
