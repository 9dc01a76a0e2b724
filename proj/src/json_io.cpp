#include "gpupower/json_io.hpp"

namespace gpupower {

void to_json(Json& j, const SlurmJobRecord& r) {
    j = Json{{"job_id", r.job_id},
             {"user", r.user},
             {"job_name", r.job_name},
             {"account", r.account},
             {"category", r.category},
             {"req_cpus", r.req_cpus},
             {"req_nodes", r.req_nodes},
             {"req_gpus", r.req_gpus},
             {"req_mem", r.req_mem},
             {"time_limit", r.time_limit},
             {"start_time", r.start_time},
             {"end_time", r.end_time},
             {"node_list", r.node_list},
             {"executable", r.executable}};
}

void from_json(const Json& j, SlurmJobRecord& r) {
    j.at("job_id").get_to(r.job_id);
    j.at("user").get_to(r.user);
    j.at("job_name").get_to(r.job_name);
    j.at("account").get_to(r.account);
    j.at("category").get_to(r.category);
    j.at("req_cpus").get_to(r.req_cpus);
    j.at("req_nodes").get_to(r.req_nodes);
    j.at("req_gpus").get_to(r.req_gpus);
    j.at("req_mem").get_to(r.req_mem);
    j.at("time_limit").get_to(r.time_limit);
    j.at("start_time").get_to(r.start_time);
    j.at("end_time").get_to(r.end_time);
    j.at("node_list").get_to(r.node_list);
    j.at("executable").get_to(r.executable);
}

void to_json(Json& j, const DcgmSample& s) {
    j = Json{{"job_id", s.job_id},
             {"node", s.node},
             {"gpu_index", s.gpu_index},
             {"timestamp", s.timestamp},
             {"gpu_utilization", s.gpu_utilization},
             {"fb_used", s.fb_used},
             {"fb_free", s.fb_free},
             {"sm_active", s.sm_active},
             {"sm_occupancy", s.sm_occupancy},
             {"dram_active", s.dram_active},
             {"fp64_active", s.fp64_active},
             {"tensor_active", s.tensor_active},
             {"power_usage", s.power_usage}};
}

void from_json(const Json& j, DcgmSample& s) {
    j.at("job_id").get_to(s.job_id);
    j.at("node").get_to(s.node);
    j.at("gpu_index").get_to(s.gpu_index);
    j.at("timestamp").get_to(s.timestamp);
    j.at("gpu_utilization").get_to(s.gpu_utilization);
    j.at("fb_used").get_to(s.fb_used);
    j.at("fb_free").get_to(s.fb_free);
    j.at("sm_active").get_to(s.sm_active);
    j.at("sm_occupancy").get_to(s.sm_occupancy);
    j.at("dram_active").get_to(s.dram_active);
    j.at("fp64_active").get_to(s.fp64_active);
    j.at("tensor_active").get_to(s.tensor_active);
    j.at("power_usage").get_to(s.power_usage);
}

void to_json(Json& j, const AggregateTargets& t) {
    j = Json{{"max_gpu_utilization", t.max_gpu_utilization},
             {"max_mem_utilization", t.max_mem_utilization},
             {"avg_power", t.avg_power}};
}

void from_json(const Json& j, AggregateTargets& t) {
    j.at("max_gpu_utilization").get_to(t.max_gpu_utilization);
    j.at("max_mem_utilization").get_to(t.max_mem_utilization);
    j.at("avg_power").get_to(t.avg_power);
}

void to_json(Json& j, const JobTelemetry& job) {
    j = Json{{"record", job.record}, {"samples", job.samples}};
    j["targets"] = job.targets ? Json(*job.targets) : Json(nullptr);
}

void from_json(const Json& j, JobTelemetry& job) {
    j.at("record").get_to(job.record);
    j.at("samples").get_to(job.samples);
    const auto& t = j.at("targets");
    if (t.is_null()) {
        job.targets.reset();
    } else {
        job.targets = t.get<AggregateTargets>();
    }
}

void to_json(Json& j, const PowerBandScheme& scheme) {
    j = Json{{"boundaries", scheme.boundaries()}};
}

PowerBandScheme scheme_from_json(const Json& j) {
    return PowerBandScheme(j.at("boundaries").get<std::array<double, 3>>());
}

}  // namespace gpupower
