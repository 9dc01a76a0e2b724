#include "gpupower/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "gpupower/csv.hpp"
#include "gpupower/ingest.hpp"
#include "gpupower/stats.hpp"

namespace gpupower {

namespace {

constexpr double kFramebufferMb = 40960.0;

// Generated values sit on dyadic grids so sums are exact in any order and
// ingest reproduces the ground truth bit for bit.
double quantize(double v, double step) { return std::round(v / step) * step; }

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

std::string pad(std::int64_t v, int width) {
    std::string s = std::to_string(v);
    if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
    return s;
}

struct UserProfile {
    std::string name;
    std::string account;
    double latent = 0.0;
    std::size_t preferred_nodes = 0;
    std::vector<std::string> job_names;
    std::vector<double> name_latent;
};

}  // namespace

void SynthConfig::validate() const {
    if (n_users < 1 || n_jobs < 1) throw InvalidInput("synth counts must be >= 1");
    if (names_per_user < 1 || n_accounts < 1 || n_categories < 1 || gpus_per_node < 1) {
        throw InvalidInput("synth profile counts must be >= 1");
    }
    if (node_choices.empty() || time_limits.empty()) throw InvalidInput("node_choices and time_limits must be non-empty");
    for (int n : node_choices) {
        if (n < 1) throw InvalidInput("node_choices entries must be >= 1");
    }
    if (min_steps < 1 || max_steps < min_steps) throw InvalidInput("need 1 <= min_steps <= max_steps");
    for (auto t : time_limits) {
        if (t < static_cast<std::int64_t>(max_steps) * 10) throw InvalidInput("time limits must cover max_steps");
    }
    if (min_dwell_s < 40 || max_dwell_s < min_dwell_s || min_dwell_s % 10 != 0 || max_dwell_s % 10 != 0) {
        throw InvalidInput("dwell times must be multiples of 10 s, >= 40 s, min <= max");
    }
    if (!(power_low > 0.0 && power_high > power_low)) throw InvalidInput("need 0 < power_low < power_high");
    if (!(regime_spread >= 0.0) || !(noise_sd >= 0.0) || !(signal_noise >= 0.0)) {
        throw InvalidInput("spreads and noise must be >= 0");
    }
    if (activity_lead_steps < 0) throw InvalidInput("activity_lead_steps must be >= 0");
    if (!(irregular_rate >= 0.0 && irregular_rate <= 1.0)) throw InvalidInput("irregular_rate must be in [0,1]");
    if (mean_interarrival_s < 0) throw InvalidInput("mean_interarrival_s must be >= 0");
    for (const auto& [f, w] : signal) {
        if (std::find(kSignalFeatures.begin(), kSignalFeatures.end(), f) == kSignalFeatures.end()) {
            throw InvalidInput("unknown signal feature '" + f + "'");
        }
        if (!(w > 0.0)) throw InvalidInput("signal weights must be > 0");
    }
    PowerBandScheme check(band_boundaries);
    (void)check;
}

Json SynthConfig::to_json() const {
    return Json{{"seed", seed},
                {"n_users", n_users},
                {"n_jobs", n_jobs},
                {"user_zipf_exponent", user_zipf_exponent},
                {"names_per_user", names_per_user},
                {"n_accounts", n_accounts},
                {"n_categories", n_categories},
                {"gpus_per_node", gpus_per_node},
                {"node_choices", node_choices},
                {"time_limits", time_limits},
                {"min_steps", min_steps},
                {"max_steps", max_steps},
                {"min_dwell_s", min_dwell_s},
                {"max_dwell_s", max_dwell_s},
                {"power_low", power_low},
                {"power_high", power_high},
                {"regime_spread", regime_spread},
                {"noise_sd", noise_sd},
                {"activity_lead_steps", activity_lead_steps},
                {"irregular_rate", irregular_rate},
                {"signal", signal},
                {"signal_noise", signal_noise},
                {"band_boundaries", band_boundaries},
                {"start_epoch", start_epoch},
                {"mean_interarrival_s", mean_interarrival_s},
                {"executable", executable}};
}

SynthConfig SynthConfig::from_json(const Json& j) {
    SynthConfig c;
    try {
        c.seed = j.value("seed", c.seed);
        c.n_users = j.value("n_users", c.n_users);
        c.n_jobs = j.value("n_jobs", c.n_jobs);
        c.user_zipf_exponent = j.value("user_zipf_exponent", c.user_zipf_exponent);
        c.names_per_user = j.value("names_per_user", c.names_per_user);
        c.n_accounts = j.value("n_accounts", c.n_accounts);
        c.n_categories = j.value("n_categories", c.n_categories);
        c.gpus_per_node = j.value("gpus_per_node", c.gpus_per_node);
        c.node_choices = j.value("node_choices", c.node_choices);
        c.time_limits = j.value("time_limits", c.time_limits);
        c.min_steps = j.value("min_steps", c.min_steps);
        c.max_steps = j.value("max_steps", c.max_steps);
        c.min_dwell_s = j.value("min_dwell_s", c.min_dwell_s);
        c.max_dwell_s = j.value("max_dwell_s", c.max_dwell_s);
        c.power_low = j.value("power_low", c.power_low);
        c.power_high = j.value("power_high", c.power_high);
        c.regime_spread = j.value("regime_spread", c.regime_spread);
        c.noise_sd = j.value("noise_sd", c.noise_sd);
        c.activity_lead_steps = j.value("activity_lead_steps", c.activity_lead_steps);
        c.irregular_rate = j.value("irregular_rate", c.irregular_rate);
        c.signal = j.value("signal", c.signal);
        c.signal_noise = j.value("signal_noise", c.signal_noise);
        c.band_boundaries = j.value("band_boundaries", c.band_boundaries);
        c.start_epoch = j.value("start_epoch", c.start_epoch);
        c.mean_interarrival_s = j.value("mean_interarrival_s", c.mean_interarrival_s);
        c.executable = j.value("executable", c.executable);
    } catch (const Json::exception& e) {
        throw InvalidInput(std::string("malformed synth config: ") + e.what());
    }
    c.validate();
    return c;
}

SynthConfig plant_signal(SynthConfig cfg, const std::vector<std::string>& features) {
    if (features.empty()) throw InvalidInput("signal plan is empty");
    cfg.signal.clear();
    for (const auto& f : features) {
        if (std::find(kSignalFeatures.begin(), kSignalFeatures.end(), f) == kSignalFeatures.end()) {
            throw InvalidInput("unknown signal feature '" + f + "'");
        }
        cfg.signal[f] = 1.0;
    }
    cfg.validate();
    return cfg;
}

std::string format_node_list(const std::vector<std::string>& nodes) {
    // Only the generator's own "prefix + fixed-width digits" names are compressed.
    if (nodes.size() <= 1) return nodes.empty() ? "" : nodes[0];
    const auto split = [](const std::string& n) {
        std::size_t p = n.size();
        while (p > 0 && std::isdigit(static_cast<unsigned char>(n[p - 1]))) --p;
        return std::pair{n.substr(0, p), n.substr(p)};
    };
    const auto [prefix, first] = split(nodes[0]);
    bool contiguous = !first.empty();
    std::int64_t expect = contiguous ? std::stoll(first) : 0;
    for (const auto& n : nodes) {
        const auto [p, d] = split(n);
        if (p != prefix || d.size() != first.size() || d.empty() || std::stoll(d) != expect) {
            contiguous = false;
            break;
        }
        ++expect;
    }
    if (contiguous) return prefix + "[" + first + "-" + split(nodes.back()).second + "]";
    std::string out;
    for (const auto& n : nodes) out += (out.empty() ? "" : ";") + n;
    return out;
}

SynthTrace generate_trace(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    SynthTrace trace;
    const PowerBandScheme scheme(cfg.band_boundaries);

    std::vector<double> account_latent(static_cast<std::size_t>(cfg.n_accounts));
    for (auto& a : account_latent) a = rng.uniform();
    std::vector<double> category_latent(static_cast<std::size_t>(cfg.n_categories));
    for (auto& c : category_latent) c = rng.uniform();
    std::vector<std::size_t> account_category(static_cast<std::size_t>(cfg.n_accounts));
    for (auto& c : account_category) c = static_cast<std::size_t>(rng.uniform_int(0, cfg.n_categories - 1));

    static const std::array<const char*, 8> kTasks = {"relax", "scf", "md", "band", "phonon", "neb", "dos", "opt"};
    std::vector<UserProfile> users(static_cast<std::size_t>(cfg.n_users));
    std::vector<double> user_weight(users.size());
    for (std::size_t u = 0; u < users.size(); ++u) {
        auto& p = users[u];
        p.name = "user" + pad(static_cast<std::int64_t>(u), 3);
        p.account = "m" + pad(rng.uniform_int(0, cfg.n_accounts - 1), 4);
        p.latent = rng.uniform();
        p.preferred_nodes = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cfg.node_choices.size()) - 1));
        for (int k = 0; k < cfg.names_per_user; ++k) {
            p.job_names.push_back(std::string(kTasks[static_cast<std::size_t>(rng.uniform_int(0, 7))]) + "_" +
                                  p.name.substr(4) + "_" + std::to_string(k));
            p.name_latent.push_back(rng.uniform());
        }
        user_weight[u] = 1.0 / std::pow(static_cast<double>(u + 1), cfg.user_zipf_exponent);
    }

    Timestamp clock = cfg.start_epoch;
    std::int64_t next_node = 1;
    for (int j = 0; j < cfg.n_jobs; ++j) {
        const auto& user = users[rng.weighted_index(user_weight)];
        const auto name_idx = static_cast<std::size_t>(rng.uniform_int(0, cfg.names_per_user - 1));
        const std::size_t account_idx = static_cast<std::size_t>(std::stoll(user.account.substr(1)));
        const std::size_t category_idx = account_category[account_idx];
        const std::size_t node_idx = rng.bernoulli(0.7)
                                         ? user.preferred_nodes
                                         : static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cfg.node_choices.size()) - 1));
        const int nodes = cfg.node_choices[node_idx];
        const auto tl_idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cfg.time_limits.size()) - 1));
        const int steps = static_cast<int>(rng.uniform_int(cfg.min_steps, cfg.max_steps));

        SlurmJobRecord r;
        r.job_id = std::to_string(1000000 + j);
        r.user = user.name;
        r.job_name = user.job_names[name_idx];
        r.account = user.account;
        r.category = "cat" + pad(static_cast<std::int64_t>(category_idx), 2);
        r.req_nodes = nodes;
        r.req_cpus = 64LL * nodes;
        r.req_gpus = static_cast<std::int64_t>(cfg.gpus_per_node) * nodes;
        r.req_mem = 256000.0 * nodes;
        r.time_limit = cfg.time_limits[tl_idx];
        clock += cfg.mean_interarrival_s == 0 ? 0 : rng.uniform_int(0, 2LL * cfg.mean_interarrival_s);
        r.start_time = clock;
        r.end_time = clock + 10LL * steps;
        for (int n = 0; n < nodes; ++n) r.node_list.push_back("nid" + pad(next_node + n, 4));
        next_node = 1 + (next_node + nodes) % 1500;
        if (next_node + nodes > 1500) next_node = 1;
        r.executable = cfg.executable;

        // Latent position in [0,1] that drives all three targets.
        double s = 0.0;
        if (cfg.signal.empty()) {
            s = rng.uniform();
        } else {
            double wsum = 0.0;
            for (const auto& [f, w] : cfg.signal) {
                double v = 0.0;
                if (f == "time_limit") v = cfg.time_limits.size() > 1 ? static_cast<double>(tl_idx) / static_cast<double>(cfg.time_limits.size() - 1) : 0.5;
                if (f == "job_name") v = user.name_latent[name_idx];
                if (f == "user") v = user.latent;
                if (f == "req_nodes") v = cfg.node_choices.size() > 1 ? static_cast<double>(node_idx) / static_cast<double>(cfg.node_choices.size() - 1) : 0.5;
                if (f == "account") v = account_latent[account_idx];
                if (f == "category") v = category_latent[category_idx];
                s += w * v;
                wsum += w;
            }
            s /= wsum;
        }
        const double job_power = cfg.power_low + (cfg.power_high - cfg.power_low) * s +
                                 (cfg.signal.empty() ? 0.0 : rng.uniform(-cfg.signal_noise, cfg.signal_noise));
        const double mem_share = 0.05 + 0.40 * s;

        // Piecewise-constant regimes with offsets centred over the job's duration.
        std::vector<double> level(static_cast<std::size_t>(steps));
        {
            std::vector<std::pair<int, double>> regimes;  // (length in steps, offset)
            int covered = 0;
            while (covered < steps) {
                const int dwell = static_cast<int>(rng.uniform_int(cfg.min_dwell_s / 10, cfg.max_dwell_s / 10));
                const int len = std::min(dwell, steps - covered);
                regimes.emplace_back(len, rng.uniform(-cfg.regime_spread, cfg.regime_spread));
                covered += len;
            }
            double weighted = 0.0;
            for (const auto& [len, off] : regimes) weighted += len * off;
            const double shift = weighted / steps;
            std::size_t t = 0;
            for (const auto& [len, off] : regimes) {
                for (int k = 0; k < len; ++k) level[t++] = std::max(20.0, job_power + off - shift);
            }
        }

        std::vector<DcgmSample> job_samples;
        std::vector<double> step_power_sum(static_cast<std::size_t>(steps), 0.0);
        for (int t = 0; t < steps; ++t) {
            const auto lead_t = static_cast<std::size_t>(std::min(t + cfg.activity_lead_steps, steps - 1));
            const double activity = clamp01((level[lead_t] - 40.0) / 260.0);
            for (int n = 0; n < nodes; ++n) {
                for (int g = 0; g < cfg.gpus_per_node; ++g) {
                    DcgmSample smp;
                    smp.job_id = r.job_id;
                    smp.node = r.node_list[static_cast<std::size_t>(n)];
                    smp.gpu_index = g;
                    smp.timestamp = r.start_time + 10LL * t;
                    smp.gpu_utilization = quantize(std::clamp(55.0 + 45.0 * activity + rng.normal(0.0, 2.0), 0.0, 100.0), 0.125);
                    const double used = std::clamp(mem_share + 0.04 * activity + rng.normal(0.0, 0.005), 0.001, 0.99);
                    smp.fb_used = std::round(used * kFramebufferMb);
                    smp.fb_free = kFramebufferMb - smp.fb_used;
                    smp.sm_active = quantize(clamp01(0.15 + 0.75 * activity + rng.normal(0.0, 0.02)), 1.0 / 1024);
                    smp.sm_occupancy = quantize(clamp01(0.10 + 0.45 * activity + rng.normal(0.0, 0.02)), 1.0 / 1024);
                    smp.dram_active = quantize(clamp01(0.05 + 0.55 * activity + rng.normal(0.0, 0.02)), 1.0 / 1024);
                    smp.fp64_active = quantize(clamp01(0.05 + 0.60 * activity + rng.normal(0.0, 0.02)), 1.0 / 1024);
                    smp.tensor_active = quantize(clamp01(0.02 + 0.30 * activity + rng.normal(0.0, 0.02)), 1.0 / 1024);
                    smp.power_usage = quantize(std::max(0.0, level[static_cast<std::size_t>(t)] + rng.normal(0.0, cfg.noise_sd)), 0.125);
                    step_power_sum[static_cast<std::size_t>(t)] += smp.power_usage;
                    job_samples.push_back(smp);
                    trace.samples.push_back(smp);
                    ++trace.regular_samples;
                    if (cfg.irregular_rate > 0.0 && rng.bernoulli(cfg.irregular_rate)) {
                        DcgmSample extra = smp;
                        extra.timestamp += rng.uniform_int(1, 9);
                        extra.power_usage = quantize(std::max(0.0, smp.power_usage + rng.normal(0.0, 30.0)), 0.125);
                        trace.samples.push_back(extra);
                        ++trace.irregular_samples;
                    }
                }
            }
        }
        trace.truth.push_back({r.job_id, aggregate_targets(job_samples)});
        const double per_step = static_cast<double>(nodes * cfg.gpus_per_node);
        for (int t = 0; t < steps; ++t) {
            const double mp = step_power_sum[static_cast<std::size_t>(t)] / per_step;
            trace.bands.push_back({r.job_id, t, r.start_time + 10LL * t, mp, scheme.band_of(mp)});
        }
        trace.records.push_back(std::move(r));
    }
    return trace;
}

void write_slurm_csv(std::ostream& out, const std::vector<SlurmJobRecord>& records) {
    out << kSlurmHeader << '\n';
    csv::Writer w(out);
    for (const auto& r : records) {
        w.row({r.job_id, r.user, r.job_name, r.account, r.category, std::to_string(r.req_cpus),
               std::to_string(r.req_nodes), std::to_string(r.req_gpus), csv::format_double(r.req_mem),
               std::to_string(r.time_limit), std::to_string(r.start_time), std::to_string(r.end_time),
               format_node_list(r.node_list), r.executable});
    }
}

void write_dcgm_csv(std::ostream& out, const std::vector<DcgmSample>& samples) {
    out << kDcgmHeader << '\n';
    csv::Writer w(out);
    for (const auto& s : samples) {
        w.row({s.job_id, s.node, std::to_string(s.gpu_index), std::to_string(s.timestamp),
               csv::format_double(s.gpu_utilization), csv::format_double(s.fb_used), csv::format_double(s.fb_free),
               csv::format_double(s.sm_active), csv::format_double(s.sm_occupancy), csv::format_double(s.dram_active),
               csv::format_double(s.fp64_active), csv::format_double(s.tensor_active),
               csv::format_double(s.power_usage)});
    }
}

SynthFiles write_trace(const SynthTrace& trace, const SynthConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    SynthFiles files{dir / "slurm.csv", dir / "dcgm.csv", dir / "ground_truth.csv", dir / "ground_truth_bands.csv"};
    const auto open = [](const std::filesystem::path& p) {
        std::ofstream out(p);
        if (!out) throw DataError("cannot write " + p.string());
        return out;
    };
    {
        auto out = open(files.slurm);
        write_slurm_csv(out, trace.records);
    }
    {
        auto out = open(files.dcgm);
        write_dcgm_csv(out, trace.samples);
    }
    const std::string header = std::string("# rng=") + Rng::kAlgorithm + " seed=" + std::to_string(cfg.seed) +
                               " bands=" + csv::format_double(cfg.band_boundaries[0]) + ";" +
                               csv::format_double(cfg.band_boundaries[1]) + ";" +
                               csv::format_double(cfg.band_boundaries[2]) + "\n";
    {
        auto out = open(files.truth);
        out << header << "job_id,max_gpu_utilization,max_mem_utilization,avg_power\n";
        csv::Writer w(out);
        for (const auto& t : trace.truth) {
            w.row({t.job_id, csv::format_double(t.targets.max_gpu_utilization),
                   csv::format_double(t.targets.max_mem_utilization), csv::format_double(t.targets.avg_power)});
        }
    }
    {
        auto out = open(files.truth_bands);
        out << header << "job_id,timestep,timestamp,mean_power,band\n";
        csv::Writer w(out);
        for (const auto& b : trace.bands) {
            w.row({b.job_id, std::to_string(b.step), std::to_string(b.timestamp), csv::format_double(b.mean_power),
                   std::to_string(b.band)});
        }
    }
    return files;
}

SynthFiles generate(const SynthConfig& cfg, const std::filesystem::path& dir) {
    return write_trace(generate_trace(cfg), cfg, dir);
}

}  // namespace gpupower
