#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "syscade/rng.hpp"
#include "syscade/trace.hpp"

namespace syscade {

// Behavior family a targeted syscall is meant to rate-limit.
enum class SyscallCategory { File, Memory, ProcessCreation, Network };

struct TargetedSyscall {
    SyscallId id = 0;
    SyscallCategory category = SyscallCategory::File;
};

// Probabilistic rate limiting for processes under slow-path analysis: each
// targeted syscall of such a process sleeps for sleep_time with probability
// threshold, pushing the process's later events back in virtual time.
struct DelayPolicy {
    std::vector<TargetedSyscall> targeted;
    double threshold = 0.10;     // delay probability per eligible event
    VirtualMs sleep_time = 50;
    std::uint64_t rng_seed = 99;
};

// 18 ids spread evenly over the alphabet, cycling through the four
// categories. Throws ConfigError if the alphabet cannot hold 18 distinct ids.
std::vector<TargetedSyscall> default_targeted_syscalls(int alphabet_size);

// Throws ConfigError on an invalid policy (threshold outside [0,1], negative
// sleep, duplicate targets, or a target outside the alphabet).
void validate_policy(const DelayPolicy& policy, int alphabet_size);

bool is_targeted(const DelayPolicy& policy, SyscallId id);

// Draws once iff the event is eligible (borderline pid and targeted
// syscall) and returns sleep_time with probability threshold, else 0.
VirtualMs maybe_delay(const SyscallEvent& event, bool pid_is_borderline,
                      const DelayPolicy& policy, Rng& rng);

// Half-open [begin, end) spans during which a pid was under analysis.
using BorderlineTimeline = std::map<Pid, std::vector<std::pair<VirtualMs, VirtualMs>>>;

// Offline counterpart of the live mechanism: walks each pid's events with a
// cumulative shift, testing borderline membership at the event's adjusted
// time (matching when a live run would see it), delaying eligible events by
// sleep_time, and re-sorting the merged log by adjusted timestamp with ties
// broken by pid then original position. Per-pid draws use independent seed
// streams, so the result is deterministic and per-pid work is independent.
// A null policy (threshold 0, zero sleep, or no targets) returns the input
// unchanged.
TraceLog apply_delays(const TraceLog& log, const BorderlineTimeline& timeline,
                      const DelayPolicy& policy);

} // namespace syscade
