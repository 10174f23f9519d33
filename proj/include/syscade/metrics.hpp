#pragma once

#include <map>
#include <string>
#include <vector>

#include "syscade/router.hpp"
#include "syscade/trace.hpp"

namespace syscade {

// Process-level outcome summary of one run. Rates with an empty denominator
// are reported as 0 with the matching degenerate flag raised.
struct ExperimentReport {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double fp_rate = 0.0;
    bool precision_degenerate = false;
    bool recall_degenerate = false;
    bool f1_degenerate = false;
    bool fp_rate_degenerate = false;

    double move_percentage = 0.0;
    // Virtual ms from process start to the Kill verdict, for each malicious
    // process killed within the configured duration.
    std::map<Pid, VirtualMs> detection_times;
    double mean_detection_time = 0.0;

    long windows_processed = 0;
    long unfilled_window_count = 0;
    long escalated_windows = 0;
    VirtualMs total_fast_cost = 0;
    VirtualMs total_slow_cost = 0;
};

// Per-process confusion at the configured horizon: a malicious process
// counts as TP iff a Kill verdict lands at or before `duration`; a benign
// process counts as FP iff killed at all. Labels define the monitored
// universe; a verdict for an unlabeled pid throws DataError. Process start
// times (first event timestamps) refine detection times; pids absent from
// the map start at virtual time 0.
ExperimentReport compute_metrics(const std::vector<Verdict>& verdicts,
                                 const std::vector<ProcessLabel>& labels, VirtualMs duration,
                                 const std::map<Pid, VirtualMs>& start_times = {});

std::map<Pid, VirtualMs> process_start_times(const TraceLog& log);

// Verdict log: one record per line, "time<TAB>pid<TAB>source<TAB>p<TAB>action".
// Probabilities are printed with 17 significant digits so rereading is exact.
void write_verdicts_file(const std::vector<Verdict>& verdicts, const std::string& path);
std::vector<Verdict> read_verdicts_file(const std::string& path);

std::string report_to_json(const ExperimentReport& r);

// One row per labeled process: pid, label, outcome, kill time, detection
// time, whether it was ever escalated.
std::string per_process_csv(const std::vector<Verdict>& verdicts,
                            const std::vector<ProcessLabel>& labels, VirtualMs duration,
                            const std::map<Pid, VirtualMs>& start_times = {});

} // namespace syscade
