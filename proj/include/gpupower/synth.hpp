#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gpupower/domain.hpp"
#include "gpupower/json_io.hpp"

namespace gpupower {

/// Generator settings. Power follows a regime-switching model: each job has
/// a latent mean level, split into piecewise-constant regimes with centred
/// offsets, observed per GPU with Gaussian noise. Activity counters track
/// the regime level activity_lead_steps ahead of power.
struct SynthConfig {
    std::uint64_t seed = 42;
    int n_users = 40;
    int n_jobs = 300;
    double user_zipf_exponent = 1.1;  // long-tailed jobs-per-user
    int names_per_user = 4;
    int n_accounts = 8;
    int n_categories = 5;
    int gpus_per_node = 4;
    std::vector<int> node_choices = {1, 2, 4};
    std::vector<std::int64_t> time_limits = {1800, 3600, 7200, 14400, 28800, 43200, 86400};
    int min_steps = 60;  // 10 s steps per job
    int max_steps = 90;
    int min_dwell_s = 40;
    int max_dwell_s = 80;
    double power_low = 90.0;  // range of the latent job mean power, W
    double power_high = 250.0;
    double regime_spread = 45.0;  // regime offsets drawn from [-spread, spread]
    double noise_sd = 15.0;       // per-GPU power observation noise, W
    int activity_lead_steps = 1;
    double irregular_rate = 0.0;  // chance of an extra sub-interval point after each sample
    std::map<std::string, double> signal;  // feature -> weight; empty means latent power is pure noise
    double signal_noise = 5.0;             // +/- bound on the deviation from the planted link, W
    std::array<double, 3> band_boundaries = {130.0, 165.0, 200.0};  // declared scheme for ground truth
    std::int64_t start_epoch = 1740787200;  // 2025-03-01T00:00:00Z
    int mean_interarrival_s = 600;
    std::string executable = "vasp_std";

    void validate() const;
    Json to_json() const;
    static SynthConfig from_json(const Json& j);  // missing keys keep defaults
};

inline const std::vector<std::string> kSignalFeatures = {"time_limit", "job_name", "user",
                                                         "req_nodes",  "account",  "category"};

/// Returns cfg with avg_power planted as a monotone function of the given
/// features (equal weights) plus bounded noise.
SynthConfig plant_signal(SynthConfig cfg, const std::vector<std::string>& features);

struct TruthTargets {
    std::string job_id;
    AggregateTargets targets;
};

struct TruthBand {
    std::string job_id;
    std::int64_t step = 0;
    Timestamp timestamp = 0;
    double mean_power = 0.0;
    int band = 0;
};

struct SynthTrace {
    std::vector<SlurmJobRecord> records;
    std::vector<DcgmSample> samples;  // file order, includes injected irregular points
    std::vector<TruthTargets> truth;
    std::vector<TruthBand> bands;
    std::size_t regular_samples = 0;
    std::size_t irregular_samples = 0;
};

SynthTrace generate_trace(const SynthConfig& cfg);

struct SynthFiles {
    std::filesystem::path slurm;
    std::filesystem::path dcgm;
    std::filesystem::path truth;
    std::filesystem::path truth_bands;
};

/// Writes slurm.csv, dcgm.csv, ground_truth.csv and ground_truth_bands.csv.
SynthFiles write_trace(const SynthTrace& trace, const SynthConfig& cfg, const std::filesystem::path& dir);
SynthFiles generate(const SynthConfig& cfg, const std::filesystem::path& dir);

/// Renders a node list compactly, e.g. {nid0003,nid0004} -> "nid[0003-0004]".
std::string format_node_list(const std::vector<std::string>& nodes);

void write_slurm_csv(std::ostream& out, const std::vector<SlurmJobRecord>& records);
void write_dcgm_csv(std::ostream& out, const std::vector<DcgmSample>& samples);

}  // namespace gpupower
