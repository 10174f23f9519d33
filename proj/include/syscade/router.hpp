#pragma once

#include <map>
#include <string>
#include <vector>

#include "syscade/trace.hpp"

namespace syscade {

enum class Source { FastPath, SlowPath };
enum class Action { ContinueMonitoring, Escalate, Kill, ClearBenign };

std::string to_string(Source s);
std::string to_string(Action a);
Source source_from_string(const std::string& s);
Action action_from_string(const std::string& s);

// Probability range treated as inconclusive. Both endpoints are inside the
// borderline region: the outer regions are strict inequalities.
struct BorderlineInterval {
    double lower = 0.3;
    double upper = 0.7;
};

// Throws ConfigError unless 0 <= lower <= upper <= 1.
void validate_interval(const BorderlineInterval& interval);

// Triage decision on a fast-path probability: below the interval keep
// monitoring, above it kill, inside it escalate. Exactly one action fires
// for every p.
Action route_fast(double p, const BorderlineInterval& interval);

struct Verdict {
    Pid pid = 0;
    Source source = Source::FastPath;
    double p = 0.0;
    Action action = Action::ContinueMonitoring;
    VirtualMs decided_at = 0;
};

// Fraction of distinct processes in the log that were ever escalated.
double move_percentage(const std::vector<Verdict>& verdicts);

// Per-process escalation state machine. A pid is borderline exactly while
// its latest fast-path action was Escalate and no slow-path verdict has
// resolved it since. Escalations carry a generation number so a slow result
// computed for a stale escalation can be recognized and dropped.
//
// Loop guard: after max_roundtrips slow-path resolutions, a further
// would-be escalation is converted into a terminal decision taken from the
// most recent slow-path probability (>= 0.5 kills, otherwise the process is
// cleared for good). Those forced verdicts report the slow path as their
// source since its probability decides them.
class Router {
public:
    struct FastDecision {
        Action action;
        Source source;     // SlowPath only for loop-guard forced decisions
        double p;          // the probability the action was derived from
        int generation;    // meaningful when action == Escalate
    };

    Router(BorderlineInterval interval, int max_roundtrips = 3);

    // Applies a fast-path probability for a live pid.
    FastDecision on_fast(Pid pid, double p);

    // Applies a slow-path result for the given escalation generation.
    // Returns Kill or ContinueMonitoring; either way the pid leaves the
    // borderline set. Throws StateError if the pid is not currently
    // borderline with that generation (stale results must be dropped by the
    // caller via is_current()).
    Action on_slow(Pid pid, int generation, double p);

    bool is_borderline(Pid pid) const;
    bool is_current(Pid pid, int generation) const;
    // Pids currently under slow-path analysis, ascending.
    std::vector<Pid> borderline_pids() const;
    // Drops all state for a pid (killed or cleared).
    void retire(Pid pid);

    const BorderlineInterval& interval() const { return interval_; }

private:
    struct PidState {
        bool borderline = false;
        int generation = 0;   // bumped on each entry into the borderline set
        int roundtrips = 0;   // completed slow-path resolutions
        double last_slow_p = 0.0;
        bool has_slow_p = false;
    };

    BorderlineInterval interval_;
    int max_roundtrips_;
    std::map<Pid, PidState> pids_;
};

} // namespace syscade
