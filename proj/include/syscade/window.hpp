#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "syscade/trace.hpp"

namespace syscade {

// A contiguous run of `n` syscall ids from one process.
using NGram = std::vector<SyscallId>;

// Overlapping n-grams of one process's syscall sequence, stride 1.
// A sequence of length L yields max(0, L - n + 1) grams.
std::vector<NGram> encode_ngrams(const std::vector<SyscallId>& events, int n);

// Run-length encoding of a gram stream: `grams[i]` repeated `densities[i]`
// times reproduces the input exactly. Runs are maximal, so adjacent entries
// of `grams` always differ.
struct CompressedStream {
    std::vector<NGram> grams;
    std::vector<int> densities;
};

CompressedStream compress_grams(const std::vector<NGram>& raw);
std::vector<NGram> decompress_grams(const CompressedStream& c);

// Maps distinct grams to dense indices 1..size()-1. Index 0 is reserved for
// units never seen at build time. Build order is first completion in log
// order, so the mapping is reproducible from the training trace alone.
class Vocabulary {
public:
    static constexpr int kUnknown = 0;

    explicit Vocabulary(int gram_order) : gram_order_(gram_order) {}

    static Vocabulary build(const TraceLog& log, int gram_order);

    // Registers a unit (no-op if present); returns its index.
    int add(const NGram& unit);
    // Returns the unit's index, or kUnknown.
    int lookup(const NGram& unit) const;

    int gram_order() const { return gram_order_; }
    // Total index count including the reserved unknown slot.
    int size() const { return static_cast<int>(units_.size()) + 1; }
    const std::vector<NGram>& units() const { return units_; }

    bool operator==(const Vocabulary& other) const {
        return gram_order_ == other.gram_order_ && units_ == other.units_;
    }

private:
    int gram_order_;
    std::vector<NGram> units_;            // units_[i] has index i + 1
    std::map<NGram, int> index_;
};

struct WindowConfig {
    int window_size = 100;     // grams per window
    int stride = 50;           // grams between window starts
    int gram_order = 2;
    bool exclude_self = false; // drop the window's own process from sys_freq
    bool raw_sys_counts = false;   // keep sys_freq as counts instead of normalizing

    friend bool operator==(const WindowConfig&, const WindowConfig&) = default;
};

// One fixed-size window of a process's gram stream, ready for the
// classifiers: RLE-compressed gram indices plus the system-wide gram
// frequency snapshot taken when the window filled.
struct CompressedWindow {
    Pid pid = 0;
    std::vector<int> ngram_seq;    // vocabulary indices, maximal runs
    std::vector<int> density_seq;  // run lengths, aligned with ngram_seq
    std::vector<double> sys_freq;  // vocabulary-sized; sums to 1 when non-empty
    int window_index = 0;          // per-process, 0-based
    VirtualMs start_time = 0;      // completion time of the window's first gram
    VirtualMs end_time = 0;        // completion time of the window's last gram
    std::optional<Label> label;
};

// One completed gram: when it finished, its vocabulary index, whose it is.
struct GramArrival {
    VirtualMs time;
    int index;
    Pid pid;
};

// Incremental window assembly: feed events in log order, collect windows as
// they fill. Window k of a process covers its gram positions
// [k*stride, k*stride + window_size). sys_freq counts every gram in the
// whole system whose completion time is >= the window's start_time and that
// had arrived by the time the window filled, so replaying a merged log
// event-by-event reproduces the bulk output exactly.
class WindowBuilder {
public:
    WindowBuilder(WindowConfig cfg, const Vocabulary& vocab);

    void push(const SyscallEvent& event);

    // Windows completed since the last call, in completion order.
    std::vector<CompressedWindow> take_emitted();

    // Processes seen so far that have not yet produced a window.
    int unfilled_process_count() const;

    const WindowConfig& config() const { return cfg_; }

private:
    struct PidState {
        std::vector<SyscallId> tail;       // last gram_order-1 syscalls
        std::vector<NGram> pending_grams;  // grams not yet past a window boundary
        std::vector<VirtualMs> times;      // completion times, aligned with pending_grams
        int windows_emitted = 0;
        long grams_seen = 0;
    };

    WindowConfig cfg_;
    const Vocabulary* vocab_;
    std::unordered_map<Pid, PidState> pids_;
    std::vector<GramArrival> gram_history_;    // every completion, log order
    std::vector<CompressedWindow> emitted_;
};

struct EmitResult {
    std::vector<CompressedWindow> windows;
    int unfilled_process_count = 0;
};

// Bulk route over a complete log: same windows, same order, same bytes as
// pushing the log through a WindowBuilder. Processes are independent, so the
// per-process work runs in parallel.
EmitResult emit_windows(const TraceLog& log, const WindowConfig& cfg, const Vocabulary& vocab);

// Copies process labels onto windows; windows of unlabeled pids are left
// unlabeled.
void attach_labels(std::vector<CompressedWindow>& windows,
                   const std::vector<ProcessLabel>& labels);

// One JSON object per window, one per line.
std::string window_to_json(const CompressedWindow& w);
CompressedWindow window_from_json(const std::string& line);
void write_windows_jsonl(const std::vector<CompressedWindow>& windows, const std::string& path);
std::vector<CompressedWindow> read_windows_jsonl(const std::string& path);

std::string vocabulary_to_json(const Vocabulary& vocab);
Vocabulary vocabulary_from_json(const std::string& text);

// Model files embed the window geometry they were trained with so replay can
// refuse mismatched configurations.
std::string window_config_to_json(const WindowConfig& cfg);
WindowConfig window_config_from_json(const std::string& text);

} // namespace syscade
