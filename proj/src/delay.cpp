#include "syscade/delay.hpp"

#include <algorithm>
#include <set>

#include "syscade/errors.hpp"

namespace syscade {

std::vector<TargetedSyscall> default_targeted_syscalls(int alphabet_size) {
    constexpr int kCount = 18;
    if (alphabet_size < kCount) {
        throw ConfigError("alphabet too small for the default 18 targeted syscalls");
    }
    const SyscallCategory cats[] = {SyscallCategory::File, SyscallCategory::Memory,
                                    SyscallCategory::ProcessCreation,
                                    SyscallCategory::Network};
    std::vector<TargetedSyscall> out;
    out.reserve(kCount);
    for (int i = 0; i < kCount; ++i) {
        TargetedSyscall t;
        t.id = static_cast<SyscallId>((static_cast<long>(i) * alphabet_size) / kCount);
        t.category = cats[i % 4];
        out.push_back(t);
    }
    return out;
}

void validate_policy(const DelayPolicy& policy, int alphabet_size) {
    if (policy.threshold < 0.0 || policy.threshold > 1.0) {
        throw ConfigError("delay threshold must be in [0, 1]");
    }
    if (policy.sleep_time < 0) throw ConfigError("sleep time must be non-negative");
    std::set<SyscallId> seen;
    for (const auto& t : policy.targeted) {
        if (t.id < 0 || t.id >= alphabet_size) {
            throw ConfigError("targeted syscall outside the alphabet");
        }
        if (!seen.insert(t.id).second) throw ConfigError("duplicate targeted syscall");
    }
}

bool is_targeted(const DelayPolicy& policy, SyscallId id) {
    for (const auto& t : policy.targeted) {
        if (t.id == id) return true;
    }
    return false;
}

VirtualMs maybe_delay(const SyscallEvent& event, bool pid_is_borderline,
                      const DelayPolicy& policy, Rng& rng) {
    if (!pid_is_borderline || !is_targeted(policy, event.syscall)) return 0;
    return rng.uniform() < policy.threshold ? policy.sleep_time : 0;
}

namespace {

bool in_timeline(const std::vector<std::pair<VirtualMs, VirtualMs>>& spans, VirtualMs t) {
    for (const auto& [begin, end] : spans) {
        if (t >= begin && t < end) return true;
    }
    return false;
}

bool null_policy(const DelayPolicy& policy) {
    return policy.threshold == 0.0 || policy.sleep_time == 0 || policy.targeted.empty();
}

} // namespace

TraceLog apply_delays(const TraceLog& log, const BorderlineTimeline& timeline,
                      const DelayPolicy& policy) {
    validate_policy(policy, log.alphabet_size);
    if (null_policy(policy)) return log;

    struct Adjusted {
        VirtualMs time;
        Pid pid;
        size_t orig;
    };
    std::vector<Adjusted> adjusted;
    adjusted.reserve(log.events.size());

    std::map<Pid, VirtualMs> shift;
    std::map<Pid, Rng> streams;
    static const std::vector<std::pair<VirtualMs, VirtualMs>> kNoSpans;

    for (size_t i = 0; i < log.events.size(); ++i) {
        const auto& ev = log.events[i];
        auto [it, inserted] =
            streams.try_emplace(ev.pid, Rng(derive_seed(policy.rng_seed, ev.pid)));
        (void)inserted;
        VirtualMs t = ev.timestamp + shift[ev.pid];
        auto span_it = timeline.find(ev.pid);
        const auto& spans = span_it == timeline.end() ? kNoSpans : span_it->second;
        const VirtualMs d = maybe_delay(ev, in_timeline(spans, t), policy, it->second);
        if (d > 0) {
            t += d;
            shift[ev.pid] += d;
        }
        adjusted.push_back({t, ev.pid, i});
    }

    std::sort(adjusted.begin(), adjusted.end(), [](const Adjusted& a, const Adjusted& b) {
        if (a.time != b.time) return a.time < b.time;
        if (a.pid != b.pid) return a.pid < b.pid;
        return a.orig < b.orig;
    });

    TraceLog out;
    out.alphabet_size = log.alphabet_size;
    out.events.reserve(log.events.size());
    for (const auto& a : adjusted) {
        SyscallEvent ev = log.events[a.orig];
        ev.timestamp = a.time;
        out.events.push_back(ev);
    }
    return out;
}

} // namespace syscade
