#include "syscade/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "syscade/errors.hpp"

namespace syscade {

namespace {

std::map<Pid, Label> label_map(const std::vector<ProcessLabel>& labels) {
    std::map<Pid, Label> by_pid;
    for (const auto& pl : labels) {
        if (!by_pid.emplace(pl.pid, pl.label).second) {
            throw DataError("duplicate label for pid " + std::to_string(pl.pid));
        }
    }
    return by_pid;
}

// First Kill verdict per pid (Kill is terminal, so also the only one).
std::map<Pid, VirtualMs> kill_times(const std::vector<Verdict>& verdicts) {
    std::map<Pid, VirtualMs> kills;
    for (const auto& v : verdicts) {
        if (v.action == Action::Kill) kills.try_emplace(v.pid, v.decided_at);
    }
    return kills;
}

std::string format_p(double p) {
    std::ostringstream ss;
    ss.precision(17);
    ss << p;
    return ss.str();
}

} // namespace

ExperimentReport compute_metrics(const std::vector<Verdict>& verdicts,
                                 const std::vector<ProcessLabel>& labels, VirtualMs duration,
                                 const std::map<Pid, VirtualMs>& start_times) {
    if (duration <= 0) throw ConfigError("duration must be positive");
    const auto by_pid = label_map(labels);
    for (const auto& v : verdicts) {
        if (!by_pid.count(v.pid)) {
            throw DataError("verdict for unlabeled pid " + std::to_string(v.pid));
        }
    }
    const auto kills = kill_times(verdicts);

    ExperimentReport r;
    for (const auto& [pid, label] : by_pid) {
        auto kit = kills.find(pid);
        const bool killed_in_time = kit != kills.end() && kit->second <= duration;
        if (label == Label::Malicious) {
            if (killed_in_time) {
                ++r.tp;
                auto sit = start_times.find(pid);
                const VirtualMs start = sit == start_times.end() ? 0 : sit->second;
                r.detection_times[pid] = kit->second - start;
            } else {
                ++r.fn;
            }
        } else {
            // Killing a benign process is a false positive no matter when it
            // happened; the horizon only bounds detection credit.
            kit != kills.end() ? ++r.fp : ++r.tn;
        }
    }

    const double total = static_cast<double>(r.tp + r.fp + r.tn + r.fn);
    r.accuracy = total > 0.0 ? (r.tp + r.tn) / total : 0.0;
    if (r.tp + r.fp > 0) {
        r.precision = static_cast<double>(r.tp) / (r.tp + r.fp);
    } else {
        r.precision_degenerate = true;
    }
    if (r.tp + r.fn > 0) {
        r.recall = static_cast<double>(r.tp) / (r.tp + r.fn);
    } else {
        r.recall_degenerate = true;
    }
    if (r.precision + r.recall > 0.0) {
        r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    } else {
        r.f1_degenerate = true;
    }
    if (r.fp + r.tn > 0) {
        r.fp_rate = static_cast<double>(r.fp) / (r.fp + r.tn);
    } else {
        r.fp_rate_degenerate = true;
    }

    r.move_percentage = move_percentage(verdicts);
    if (!r.detection_times.empty()) {
        double sum = 0.0;
        for (const auto& [pid, t] : r.detection_times) {
            (void)pid;
            sum += static_cast<double>(t);
        }
        r.mean_detection_time = sum / static_cast<double>(r.detection_times.size());
    }
    return r;
}

std::map<Pid, VirtualMs> process_start_times(const TraceLog& log) {
    std::map<Pid, VirtualMs> starts;
    for (const auto& ev : log.events) starts.try_emplace(ev.pid, ev.timestamp);
    return starts;
}

void write_verdicts_file(const std::vector<Verdict>& verdicts, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open verdict file for writing: " + path);
    for (const auto& v : verdicts) {
        out << v.decided_at << '\t' << v.pid << '\t' << to_string(v.source) << '\t'
            << format_p(v.p) << '\t' << to_string(v.action) << '\n';
    }
}

std::vector<Verdict> read_verdicts_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open verdict file: " + path);
    std::vector<Verdict> out;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string time_s, pid_s, source_s, p_s, action_s;
        if (!std::getline(ss, time_s, '\t') || !std::getline(ss, pid_s, '\t') ||
            !std::getline(ss, source_s, '\t') || !std::getline(ss, p_s, '\t') ||
            !std::getline(ss, action_s)) {
            throw ParseError("verdict line " + std::to_string(line_no) + ": expected 5 fields");
        }
        Verdict v;
        auto parse_ll = [&](const std::string& s, const char* what) {
            long long value = 0;
            auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
            if (ec != std::errc() || ptr != s.data() + s.size()) {
                throw ParseError("verdict line " + std::to_string(line_no) + ": bad " +
                                 std::string(what));
            }
            return value;
        };
        v.decided_at = parse_ll(time_s, "time");
        v.pid = static_cast<Pid>(parse_ll(pid_s, "pid"));
        v.source = source_from_string(source_s);
        try {
            size_t used = 0;
            v.p = std::stod(p_s, &used);
            if (used != p_s.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ParseError("verdict line " + std::to_string(line_no) + ": bad probability");
        }
        v.action = action_from_string(action_s);
        out.push_back(v);
    }
    return out;
}

std::string report_to_json(const ExperimentReport& r) {
    nlohmann::json j;
    j["confusion"] = {{"tp", r.tp}, {"fp", r.fp}, {"tn", r.tn}, {"fn", r.fn}};
    j["accuracy"] = r.accuracy;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["f1"] = r.f1;
    j["fp_rate"] = r.fp_rate;
    j["degenerate"] = {{"precision", r.precision_degenerate},
                       {"recall", r.recall_degenerate},
                       {"f1", r.f1_degenerate},
                       {"fp_rate", r.fp_rate_degenerate}};
    j["move_percentage"] = r.move_percentage;
    nlohmann::json dt = nlohmann::json::object();
    for (const auto& [pid, t] : r.detection_times) dt[std::to_string(pid)] = t;
    j["detection_times_ms"] = std::move(dt);
    j["mean_detection_time_ms"] = r.mean_detection_time;
    j["windows_processed"] = r.windows_processed;
    j["unfilled_window_count"] = r.unfilled_window_count;
    j["escalated_windows"] = r.escalated_windows;
    j["total_fast_cost_ms"] = r.total_fast_cost;
    j["total_slow_cost_ms"] = r.total_slow_cost;
    return j.dump(2);
}

std::string per_process_csv(const std::vector<Verdict>& verdicts,
                            const std::vector<ProcessLabel>& labels, VirtualMs duration,
                            const std::map<Pid, VirtualMs>& start_times) {
    const auto by_pid = label_map(labels);
    const auto kills = kill_times(verdicts);
    std::set<Pid> escalated;
    for (const auto& v : verdicts) {
        if (v.action == Action::Escalate) escalated.insert(v.pid);
    }
    std::ostringstream out;
    out << "pid,label,escalated,killed,kill_time_ms,detection_ms\n";
    for (const auto& [pid, label] : by_pid) {
        auto kit = kills.find(pid);
        const bool killed_in_time = kit != kills.end() && kit->second <= duration;
        out << pid << ',' << (label == Label::Malicious ? 'M' : 'B') << ','
            << (escalated.count(pid) ? 1 : 0) << ',' << (killed_in_time ? 1 : 0) << ',';
        if (kit != kills.end()) out << kit->second;
        out << ',';
        if (killed_in_time) {
            auto sit = start_times.find(pid);
            const VirtualMs start = sit == start_times.end() ? 0 : sit->second;
            out << (kit->second - start);
        }
        out << '\n';
    }
    return out.str();
}

} // namespace syscade
