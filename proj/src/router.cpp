#include "syscade/router.hpp"

#include <set>

#include "syscade/errors.hpp"

namespace syscade {

std::string to_string(Source s) {
    return s == Source::FastPath ? "fast" : "slow";
}

std::string to_string(Action a) {
    switch (a) {
        case Action::ContinueMonitoring: return "monitor";
        case Action::Escalate: return "escalate";
        case Action::Kill: return "kill";
        case Action::ClearBenign: return "clear";
    }
    return "monitor";
}

Source source_from_string(const std::string& s) {
    if (s == "fast") return Source::FastPath;
    if (s == "slow") return Source::SlowPath;
    throw ParseError("unknown verdict source: " + s);
}

Action action_from_string(const std::string& s) {
    if (s == "monitor") return Action::ContinueMonitoring;
    if (s == "escalate") return Action::Escalate;
    if (s == "kill") return Action::Kill;
    if (s == "clear") return Action::ClearBenign;
    throw ParseError("unknown verdict action: " + s);
}

void validate_interval(const BorderlineInterval& interval) {
    if (!(0.0 <= interval.lower && interval.lower <= interval.upper && interval.upper <= 1.0)) {
        throw ConfigError("borderline interval must satisfy 0 <= lower <= upper <= 1");
    }
}

Action route_fast(double p, const BorderlineInterval& interval) {
    if (p < interval.lower) return Action::ContinueMonitoring;
    if (p > interval.upper) return Action::Kill;
    return Action::Escalate;
}

double move_percentage(const std::vector<Verdict>& verdicts) {
    std::set<Pid> seen;
    std::set<Pid> escalated;
    for (const auto& v : verdicts) {
        seen.insert(v.pid);
        if (v.action == Action::Escalate) escalated.insert(v.pid);
    }
    if (seen.empty()) return 0.0;
    return static_cast<double>(escalated.size()) / static_cast<double>(seen.size());
}

Router::Router(BorderlineInterval interval, int max_roundtrips)
    : interval_(interval), max_roundtrips_(max_roundtrips) {
    validate_interval(interval_);
    // Zero roundtrips would force terminal decisions from a slow-path
    // probability that was never computed.
    if (max_roundtrips_ < 1) throw ConfigError("max_roundtrips must be positive");
}

Router::FastDecision Router::on_fast(Pid pid, double p) {
    auto& st = pids_[pid];
    const Action a = route_fast(p, interval_);
    if (a == Action::Escalate) {
        if (st.roundtrips >= max_roundtrips_ && st.has_slow_p) {
            // Loop guard: stop the ping-pong and let the last deep verdict
            // stand as the terminal decision.
            st.borderline = false;
            const Action forced =
                st.last_slow_p >= 0.5 ? Action::Kill : Action::ClearBenign;
            return {forced, Source::SlowPath, st.last_slow_p, st.generation};
        }
        if (!st.borderline) {
            st.borderline = true;
            ++st.generation;
        }
        return {Action::Escalate, Source::FastPath, p, st.generation};
    }
    // Any non-escalate fast verdict supersedes a pending escalation: the
    // pid's latest fast decision is no longer Escalate, so it leaves the
    // borderline set and an in-flight slow result becomes stale.
    st.borderline = false;
    return {a, Source::FastPath, p, st.generation};
}

Action Router::on_slow(Pid pid, int generation, double p) {
    auto it = pids_.find(pid);
    if (it == pids_.end() || !it->second.borderline || it->second.generation != generation) {
        throw StateError("slow-path result for a pid that is not under analysis");
    }
    auto& st = it->second;
    st.borderline = false;
    st.last_slow_p = p;
    st.has_slow_p = true;
    ++st.roundtrips;
    return p >= 0.5 ? Action::Kill : Action::ContinueMonitoring;
}

bool Router::is_borderline(Pid pid) const {
    auto it = pids_.find(pid);
    return it != pids_.end() && it->second.borderline;
}

bool Router::is_current(Pid pid, int generation) const {
    auto it = pids_.find(pid);
    return it != pids_.end() && it->second.borderline && it->second.generation == generation;
}

std::vector<Pid> Router::borderline_pids() const {
    std::vector<Pid> out;
    for (const auto& [pid, st] : pids_) {
        if (st.borderline) out.push_back(pid);
    }
    return out;
}

void Router::retire(Pid pid) {
    auto it = pids_.find(pid);
    if (it != pids_.end()) it->second.borderline = false;
}

} // namespace syscade
