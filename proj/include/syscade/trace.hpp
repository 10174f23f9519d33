#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace syscade {

using Pid = std::int32_t;
using SyscallId = std::int32_t;
using VirtualMs = std::int64_t;

struct SyscallEvent {
    VirtualMs timestamp = 0; // virtual milliseconds, non-negative
    Pid pid = 0;             // positive process identifier
    SyscallId syscall = 0;   // in [0, alphabet_size)

    friend bool operator==(const SyscallEvent&, const SyscallEvent&) = default;
};

// Events sorted by timestamp (ties keep insertion order).
struct TraceLog {
    int alphabet_size = 155;
    std::vector<SyscallEvent> events;

    friend bool operator==(const TraceLog&, const TraceLog&) = default;
};

enum class Label : std::uint8_t { Benign, Malicious };

struct ProcessLabel {
    Pid pid = 0;
    Label label = Label::Benign;

    friend bool operator==(const ProcessLabel&, const ProcessLabel&) = default;
};

// Synthetic trace source. Each process emits a first-order Markov syscall
// stream; the per-class transition matrix is a separability-weighted blend of
// a shared base matrix and a class-specific matrix, so at separability 0 both
// classes are statistically identical and at 1 their preferred transitions
// are disjoint. Benign processes emit faster than malicious ones by default.
struct GeneratorConfig {
    int alphabet_size = 155;
    int n_benign = 8;
    int n_malicious = 8;
    double events_per_process_mean = 2000.0;
    double benign_rate_per_ms = 1.0;    // events per virtual ms
    double malicious_rate_per_ms = 0.5;
    std::uint64_t behavior_seed = 1;
    double separability = 0.5;          // in [0, 1]
    // Probability that an event repeats the previous syscall instead of
    // following the transition matrix. Produces run-length-compressible
    // gram streams.
    double repeat_burst = 0.25;
};

struct GeneratedTrace {
    TraceLog log;
    std::vector<ProcessLabel> labels;
};

// Deterministic in the full config including behavior_seed.
// Throws ConfigError on invalid configs (alphabet_size < 2 with processes
// present, non-positive rates or means, separability outside [0, 1]).
GeneratedTrace generate_trace(const GeneratorConfig& config);

// Trace file format: one event per line, "timestamp_ms<TAB>pid<TAB>syscall_id".
// Throws ParseError (with line number) on malformed lines and DataError on
// timestamp regressions.
TraceLog read_trace(std::istream& in, int alphabet_size = 155);
TraceLog read_trace_string(const std::string& text, int alphabet_size = 155);
TraceLog read_trace_file(const std::string& path, int alphabet_size = 155);

void write_trace(const TraceLog& log, std::ostream& out);
std::string write_trace_string(const TraceLog& log);
void write_trace_file(const TraceLog& log, const std::string& path);

// Label file format: one process per line, "pid<TAB>{M|B}".
std::vector<ProcessLabel> read_labels(std::istream& in);
std::vector<ProcessLabel> read_labels_file(const std::string& path);
void write_labels(const std::vector<ProcessLabel>& labels, std::ostream& out);
void write_labels_file(const std::vector<ProcessLabel>& labels, const std::string& path);

} // namespace syscade
