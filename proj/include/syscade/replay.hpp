#pragma once

#include <map>
#include <string>
#include <vector>

#include "syscade/deep/model.hpp"
#include "syscade/delay.hpp"
#include "syscade/forest.hpp"
#include "syscade/metrics.hpp"
#include "syscade/router.hpp"
#include "syscade/trace.hpp"
#include "syscade/window.hpp"

namespace syscade {

// Offline analyzes the fully collected trace; OnTheFly consumes events on
// the virtual clock and classifies windows the moment they fill, with
// per-window analysis latencies, kill truncation, and (optionally) the
// delay mechanism.
enum class Mode { Offline, OnTheFly };

// FastOnly and SlowOnly run a single classifier with a 0.5 kill threshold;
// Hybrid triages with the fast path and escalates borderline windows.
enum class Pipeline { FastOnly, SlowOnly, Hybrid };

struct ReplayConfig {
    Mode mode = Mode::Offline;
    Pipeline pipeline = Pipeline::Hybrid;
    VirtualMs duration = 300000;       // event-intake horizon (virtual ms)
    // Observe-only logs every verdict but never kills, delays, or engages
    // the loop guard — actions become pure functions of each window's
    // probabilities, which is what makes offline and on-the-fly runs
    // comparable record for record.
    bool observe_only = false;
    BorderlineInterval interval;
    int max_roundtrips = 3;
    VirtualMs fast_cost = 1;           // per-window analysis latency
    VirtualMs slow_cost = 100;
    bool delay_enabled = false;        // effective only in live hybrid runs
    DelayPolicy delay;
};

// Canonical per-window record: everything about a window's classification
// except when it was decided. Offline and observe-only live runs of the same
// models and trace must produce identical sequences of these.
struct WindowOutcome {
    Pid pid = 0;
    int window_index = 0;
    bool has_fast = false;
    double fast_p = 0.0;
    Action fast_action = Action::ContinueMonitoring;
    bool has_slow = false;
    double slow_p = 0.0;
    Action slow_action = Action::ContinueMonitoring;
};

std::string canonical_outcome_lines(const std::vector<WindowOutcome>& outcomes);

struct ReplayResult {
    std::vector<Verdict> verdicts;         // decision order
    std::vector<WindowOutcome> outcomes;   // window order
    long windows_processed = 0;            // windows that received a verdict
    long unfilled_processes = 0;           // processes that never filled a window
    long escalated_windows = 0;            // Escalate verdicts issued
    long fast_classifications = 0;         // analyses actually performed
    long slow_classifications = 0;
    VirtualMs total_fast_cost = 0;
    VirtualMs total_slow_cost = 0;
    std::map<Pid, VirtualMs> kill_times;
    BorderlineTimeline borderline_timeline; // live runs only
    VirtualMs final_clock = 0;
};

// Runs one experiment. The models' embedded window geometry and vocabulary
// must agree when both are present; the pipeline's required models must be
// non-null. Deterministic in (log, models, cfg).
ReplayResult replay(const TraceLog& log, const FastModel* fast,
                    const deep::SlowModel* slow, const ReplayConfig& cfg);

// Merges engine counters into a metrics report.
ExperimentReport make_report(const ReplayResult& result,
                             const std::vector<ProcessLabel>& labels, const TraceLog& log,
                             const ReplayConfig& cfg);

} // namespace syscade
