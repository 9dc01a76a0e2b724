#include "gpupower/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "gpupower/csv.hpp"
#include "gpupower/json_io.hpp"

namespace gpupower {

namespace {

std::vector<std::string> header_fields(const char* header) { return csv::split_line(header); }

/// Maps each expected column name to its index in the file's header row.
std::vector<std::size_t> resolve_columns(const std::vector<std::string>& expected,
                                         const std::vector<std::string>& actual, const char* file_kind) {
    std::vector<std::size_t> index;
    index.reserve(expected.size());
    for (const auto& name : expected) {
        const auto it = std::find(actual.begin(), actual.end(), name);
        if (it == actual.end()) {
            throw DataError(std::string(file_kind) + " file is missing mandatory column '" + name + "'");
        }
        index.push_back(static_cast<std::size_t>(it - actual.begin()));
    }
    return index;
}

struct RowError {
    std::string field;
    std::string reason;
};

std::int64_t int_field(const std::vector<std::string>& row, std::size_t col, const char* name) {
    const auto v = csv::parse_int(row[col]);
    if (!v) throw RowError{name, "not an integer: '" + row[col] + "'"};
    return *v;
}

double double_field(const std::vector<std::string>& row, std::size_t col, const char* name) {
    const auto v = csv::parse_double(row[col]);
    if (!v) throw RowError{name, "not a number: '" + row[col] + "'"};
    return *v;
}

std::string string_field(const std::vector<std::string>& row, std::size_t col, const char* name,
                         bool required) {
    if (required && row[col].empty()) throw RowError{name, "empty"};
    return row[col];
}

std::string expand_token_error(std::string_view token) {
    return "malformed node list entry '" + std::string(token) + "'";
}

void expand_one(std::string_view token, std::vector<std::string>& out) {
    const auto open = token.find('[');
    if (open == std::string_view::npos) {
        if (token.find(']') != std::string_view::npos) throw DataError(expand_token_error(token));
        out.emplace_back(token);
        return;
    }
    const auto close = token.find(']', open);
    if (close == std::string_view::npos || token.find('[', open + 1) != std::string_view::npos ||
        token.find(']', close + 1) != std::string_view::npos) {
        throw DataError(expand_token_error(token));
    }
    const std::string_view prefix = token.substr(0, open);
    const std::string_view suffix = token.substr(close + 1);
    std::string_view body = token.substr(open + 1, close - open - 1);
    if (body.empty()) throw DataError(expand_token_error(token));
    while (true) {
        const auto comma = body.find(',');
        const std::string_view part = body.substr(0, comma);
        const auto dash = part.find('-');
        const std::string_view lo_text = part.substr(0, dash);
        const std::string_view hi_text = dash == std::string_view::npos ? lo_text : part.substr(dash + 1);
        const auto lo = csv::parse_int(lo_text);
        const auto hi = csv::parse_int(hi_text);
        if (lo_text.empty() || !lo || !hi || *lo < 0 || *hi < *lo ||
            lo_text.find_first_not_of("0123456789") != std::string_view::npos ||
            hi_text.find_first_not_of("0123456789") != std::string_view::npos) {
            throw DataError(expand_token_error(token));
        }
        const std::size_t width = lo_text.size();
        for (std::int64_t v = *lo; v <= *hi; ++v) {
            std::string digits = std::to_string(v);
            if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
            out.push_back(std::string(prefix) + digits + std::string(suffix));
        }
        if (comma == std::string_view::npos) break;
        body.remove_prefix(comma + 1);
    }
}

}  // namespace

void IngestConfig::validate() const {
    if (!(min_interval_s > 0.0)) throw InvalidInput("min_interval_s must be > 0");
    if (!(interval_tolerance_s >= 0.0 && interval_tolerance_s < min_interval_s)) {
        throw InvalidInput("interval_tolerance_s must be in [0, min_interval_s)");
    }
}

std::vector<std::string> expand_node_list(std::string_view text) {
    std::vector<std::string> out;
    // Split on ';' or ',' outside brackets.
    int depth = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= text.size(); ++i) {
        const char c = i < text.size() ? text[i] : ';';
        if (c == '[') ++depth;
        if (c == ']') --depth;
        if (depth < 0) throw DataError("unbalanced ']' in node list '" + std::string(text) + "'");
        if (depth == 0 && (c == ';' || c == ',')) {
            std::string_view token = text.substr(start, i - start);
            while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
            while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
            if (!token.empty()) expand_one(token, out);
            start = i + 1;
        }
    }
    if (depth != 0) throw DataError("unbalanced '[' in node list '" + std::string(text) + "'");
    std::set<std::string> seen;
    for (const auto& n : out) {
        if (!seen.insert(n).second) throw DataError("node list names '" + n + "' twice");
    }
    return out;
}

SlurmParseResult parse_slurm(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open scheduler file: " + path.string());
    return parse_slurm(in);
}

SlurmParseResult parse_slurm(std::istream& in) {
    csv::LineReader reader(in);
    std::string line;
    if (!reader.next(line)) throw DataError("scheduler file is empty (no header row)");
    const auto expected = header_fields(kSlurmHeader);
    const auto actual = csv::split_line(line);
    const auto col = resolve_columns(expected, actual, "scheduler");

    SlurmParseResult result;
    while (reader.next(line)) {
        if (line.empty()) continue;
        const auto row = csv::split_line(line);
        if (row.size() != actual.size()) {
            result.rejects.push_back({reader.line_number(), "",
                                      "expected " + std::to_string(actual.size()) + " fields, got " +
                                          std::to_string(row.size())});
            continue;
        }
        try {
            SlurmJobRecord r;
            r.job_id = string_field(row, col[0], "job_id", true);
            r.user = string_field(row, col[1], "user", true);
            r.job_name = string_field(row, col[2], "job_name", false);
            r.account = string_field(row, col[3], "account", false);
            r.category = string_field(row, col[4], "category", false);
            r.req_cpus = int_field(row, col[5], "req_cpus");
            r.req_nodes = int_field(row, col[6], "req_nodes");
            r.req_gpus = int_field(row, col[7], "req_gpus");
            r.req_mem = double_field(row, col[8], "req_mem_mb");
            r.time_limit = int_field(row, col[9], "time_limit_s");
            r.start_time = int_field(row, col[10], "start_time");
            r.end_time = int_field(row, col[11], "end_time");
            try {
                r.node_list = expand_node_list(row[col[12]]);
            } catch (const DataError& e) {
                throw RowError{"node_list", e.what()};
            }
            r.executable = string_field(row, col[13], "executable", false);
            if (r.time_limit <= 0) throw RowError{"time_limit_s", "must be positive"};
            if (r.req_nodes < 1) throw RowError{"req_nodes", "must be >= 1"};
            if (r.end_time < r.start_time) throw RowError{"end_time", "precedes start_time"};
            if (r.req_cpus < 0) throw RowError{"req_cpus", "must be >= 0"};
            if (r.req_gpus < 0) throw RowError{"req_gpus", "must be >= 0"};
            if (r.req_mem < 0.0) throw RowError{"req_mem_mb", "must be >= 0"};
            try {
                validate(r);
            } catch (const DataError& e) {
                throw RowError{"node_list", e.what()};
            }
            result.records.push_back(std::move(r));
        } catch (const RowError& e) {
            result.rejects.push_back({reader.line_number(), e.field, e.reason});
        }
    }
    return result;
}

DcgmReader::DcgmReader(const std::filesystem::path& path)
    : owned_(std::make_unique<std::ifstream>(path)), in_(owned_.get()) {
    if (!*owned_) throw DataError("cannot open telemetry file: " + path.string());
    read_header();
}

DcgmReader::DcgmReader(std::istream& in) : in_(&in) { read_header(); }

void DcgmReader::read_header() {
    if (!std::getline(*in_, buffer_)) throw DataError("telemetry file is empty (no header row)");
    line_ = 1;
    if (!buffer_.empty() && buffer_.back() == '\r') buffer_.pop_back();
    const auto actual = csv::split_line(buffer_);
    column_ = resolve_columns(header_fields(kDcgmHeader), actual, "telemetry");
    column_.push_back(actual.size());  // expected row width
}

std::optional<DcgmSample> DcgmReader::next() {
    const std::size_t width = column_.back();
    while (std::getline(*in_, buffer_)) {
        ++line_;
        if (!buffer_.empty() && buffer_.back() == '\r') buffer_.pop_back();
        if (buffer_.empty()) continue;
        ++rows_read_;
        const auto row = csv::split_line(buffer_);
        auto reject = [&](std::string field, std::string reason) {
            ++reject_count_;
            if (rejects_.size() < kMaxKeptRejects) rejects_.push_back({line_, std::move(field), std::move(reason)});
        };
        if (row.size() != width) {
            reject("", "expected " + std::to_string(width) + " fields, got " + std::to_string(row.size()));
            continue;
        }
        try {
            DcgmSample s;
            s.job_id = string_field(row, column_[0], "job_id", true);
            s.node = string_field(row, column_[1], "node", true);
            s.gpu_index = static_cast<int>(int_field(row, column_[2], "gpu_index"));
            s.timestamp = int_field(row, column_[3], "timestamp");
            s.gpu_utilization = double_field(row, column_[4], "gpu_utilization");
            s.fb_used = double_field(row, column_[5], "fb_used");
            s.fb_free = double_field(row, column_[6], "fb_free");
            s.sm_active = double_field(row, column_[7], "sm_active");
            s.sm_occupancy = double_field(row, column_[8], "sm_occupancy");
            s.dram_active = double_field(row, column_[9], "dram_active");
            s.fp64_active = double_field(row, column_[10], "fp64_active");
            s.tensor_active = double_field(row, column_[11], "tensor_active");
            s.power_usage = double_field(row, column_[12], "power_usage");
            const auto ratio = [](double v, const char* name) {
                if (!(v >= 0.0 && v <= 1.0)) throw RowError{name, "ratio out of range [0,1]"};
            };
            if (s.gpu_index < 0) throw RowError{"gpu_index", "must be >= 0"};
            if (!(s.gpu_utilization >= 0.0 && s.gpu_utilization <= 100.0)) {
                throw RowError{"gpu_utilization", "percent out of range [0,100]"};
            }
            if (s.fb_used < 0.0) throw RowError{"fb_used", "must be >= 0"};
            if (s.fb_free < 0.0) throw RowError{"fb_free", "must be >= 0"};
            if (s.fb_used + s.fb_free <= 0.0) throw RowError{"fb_free", "fb_used + fb_free must be > 0"};
            ratio(s.sm_active, "sm_active");
            ratio(s.sm_occupancy, "sm_occupancy");
            ratio(s.dram_active, "dram_active");
            ratio(s.fp64_active, "fp64_active");
            ratio(s.tensor_active, "tensor_active");
            if (s.power_usage < 0.0) throw RowError{"power_usage", "must be >= 0"};
            return s;
        } catch (const RowError& e) {
            reject(e.field, e.reason);
        }
    }
    return std::nullopt;
}

DcgmParseResult parse_dcgm(const std::filesystem::path& path) {
    DcgmReader reader(path);
    DcgmParseResult out;
    while (auto s = reader.next()) out.samples.push_back(std::move(*s));
    out.rejects = reader.rejects();
    out.reject_count = reader.reject_count();
    return out;
}

DcgmParseResult parse_dcgm(std::istream& in) {
    DcgmReader reader(in);
    DcgmParseResult out;
    while (auto s = reader.next()) out.samples.push_back(std::move(*s));
    out.rejects = reader.rejects();
    out.reject_count = reader.reject_count();
    return out;
}

IrregularFilter::IrregularFilter(const IngestConfig& cfg) {
    cfg.validate();
    min_gap_ = cfg.min_interval_s - cfg.interval_tolerance_s;
}

bool IrregularFilter::accept(const DcgmSample& s) {
    Key key{s.job_id, s.node, s.gpu_index};
    auto it = state_.find(key);
    if (it == state_.end()) {
        state_.emplace(std::move(key), KeyState{s.timestamp, s.timestamp});
        return true;
    }
    KeyState& st = it->second;
    if (s.timestamp < st.last_seen) {
        throw DataError("telemetry not time-ordered for job " + s.job_id + " node " + s.node + " gpu " +
                        std::to_string(s.gpu_index) + ": timestamp " + std::to_string(s.timestamp) +
                        " after " + std::to_string(st.last_seen));
    }
    st.last_seen = s.timestamp;
    if (static_cast<double>(s.timestamp - st.last_kept) >= min_gap_) {
        st.last_kept = s.timestamp;
        return true;
    }
    return false;
}

std::vector<DcgmSample> filter_irregular(const std::vector<DcgmSample>& samples, const IngestConfig& cfg) {
    IrregularFilter filter(cfg);
    std::vector<DcgmSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        if (filter.accept(s)) out.push_back(s);
    }
    return out;
}

bool glob_match(std::string_view pattern, std::string_view text) {
    std::size_t p = 0, t = 0;
    std::size_t star = std::string_view::npos, mark = 0;
    while (t < text.size()) {
        if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
            ++p;
            ++t;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = t;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            t = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

std::size_t JoinResult::total_samples() const {
    std::size_t n = 0;
    for (const auto& j : jobs) n += j.samples.size();
    return n;
}

JoinResult join(const std::vector<SlurmJobRecord>& records, const std::vector<DcgmSample>& samples,
                const IngestConfig& cfg) {
    std::unordered_map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!by_id.emplace(records[i].job_id, i).second) {
            throw DataError("duplicate job_id among scheduler records: " + records[i].job_id);
        }
    }
    std::vector<std::unordered_set<std::string>> nodes(records.size());
    std::vector<bool> selected(records.size(), true);
    for (std::size_t i = 0; i < records.size(); ++i) {
        nodes[i].insert(records[i].node_list.begin(), records[i].node_list.end());
        if (cfg.application_filter) selected[i] = glob_match(*cfg.application_filter, records[i].executable);
    }

    JoinResult result;
    std::vector<std::vector<DcgmSample>> attached(records.size());
    for (const auto& s : samples) {
        const auto it = by_id.find(s.job_id);
        if (it == by_id.end()) {
            ++result.orphan_samples;
            continue;
        }
        const std::size_t i = it->second;
        const auto& r = records[i];
        if (!nodes[i].contains(s.node) || s.timestamp < r.start_time || s.timestamp > r.end_time) {
            ++result.orphan_samples;
            continue;
        }
        if (!selected[i]) {
            ++result.filtered_samples;
            continue;
        }
        attached[i].push_back(s);
    }

    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!selected[i]) {
            ++result.filtered_jobs;
            continue;
        }
        JobTelemetry job;
        job.record = records[i];
        job.samples = std::move(attached[i]);
        std::stable_sort(job.samples.begin(), job.samples.end(), [](const DcgmSample& a, const DcgmSample& b) {
            return std::tie(a.timestamp, a.node, a.gpu_index) < std::tie(b.timestamp, b.node, b.gpu_index);
        });
        if (job.samples.empty()) {
            result.empty_jobs.push_back(job.record.job_id);
        } else {
            job.targets = aggregate_targets(job.samples);
        }
        result.jobs.push_back(std::move(job));
    }
    return result;
}

IngestSummary ingest_files(const IngestConfig& cfg) {
    cfg.validate();
    IngestSummary summary;
    auto slurm = parse_slurm(cfg.slurm_path);
    summary.slurm_rejects = std::move(slurm.rejects);
    auto dcgm = parse_dcgm(cfg.dcgm_path);
    summary.dcgm_rejects = std::move(dcgm.rejects);
    summary.dcgm_reject_count = dcgm.reject_count;
    summary.parsed_samples = dcgm.samples.size();

    // Files may interleave keys arbitrarily; order each key by time before filtering.
    std::stable_sort(dcgm.samples.begin(), dcgm.samples.end(), [](const DcgmSample& a, const DcgmSample& b) {
        return std::tie(a.job_id, a.node, a.gpu_index, a.timestamp) <
               std::tie(b.job_id, b.node, b.gpu_index, b.timestamp);
    });
    auto kept = filter_irregular(dcgm.samples, cfg);
    summary.irregular_dropped = dcgm.samples.size() - kept.size();
    summary.joined = join(slurm.records, kept, cfg);
    return summary;
}

void write_jobs(std::ostream& out, const std::vector<JobTelemetry>& jobs) {
    for (const auto& job : jobs) out << Json(job).dump() << '\n';
}

void write_jobs(const std::filesystem::path& path, const std::vector<JobTelemetry>& jobs) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    write_jobs(out, jobs);
}

std::vector<JobTelemetry> read_jobs(std::istream& in) {
    std::vector<JobTelemetry> jobs;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            jobs.push_back(Json::parse(line).get<JobTelemetry>());
        } catch (const Json::exception& e) {
            throw DataError("malformed job record on line " + std::to_string(n) + ": " + e.what());
        }
    }
    return jobs;
}

std::vector<JobTelemetry> read_jobs(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open job file: " + path.string());
    return read_jobs(in);
}

}  // namespace gpupower
