#include "syscade/replay.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <queue>
#include <sstream>
#include <tuple>
#include <utility>

#include "syscade/dataset.hpp"
#include "syscade/errors.hpp"
#include "syscade/rng.hpp"

namespace syscade {
namespace {

constexpr VirtualMs kNever = std::numeric_limits<VirtualMs>::max();

enum class ProcState { Live, Killed, Cleared };

struct Scorers {
    const FastModel* fast = nullptr;
    const deep::SlowModel* slow = nullptr;

    double score_fast(const CompressedWindow& w) const {
        return fast->forest.predict(frequency_features(w, fast->vocab.size()));
    }
    double score_slow(const CompressedWindow& w) const { return deep::deep_predict(slow->net, w); }
};

// Collects per-window records keyed by (pid, window index) in first-touch
// order, which both engines arrange to be window completion order.
struct OutcomeBook {
    std::vector<WindowOutcome> outcomes;
    std::map<std::pair<Pid, int>, std::size_t> index;

    WindowOutcome& at(Pid pid, int window_index) {
        auto [it, inserted] = index.try_emplace({pid, window_index}, outcomes.size());
        if (inserted) {
            WindowOutcome rec;
            rec.pid = pid;
            rec.window_index = window_index;
            outcomes.push_back(rec);
        }
        return outcomes[it->second];
    }
};

void validate_setup(const TraceLog& log, const FastModel* fast, const deep::SlowModel* slow,
                    const ReplayConfig& cfg, const WindowConfig*& wcfg, const Vocabulary*& vocab) {
    if (cfg.duration <= 0) throw ConfigError("replay: duration must be positive");
    if (cfg.max_roundtrips < 1) throw ConfigError("replay: max_roundtrips must be at least 1");
    if (cfg.fast_cost < 0 || cfg.slow_cost < 0)
        throw ConfigError("replay: analysis costs must be non-negative");
    validate_interval(cfg.interval);

    const bool need_fast = cfg.pipeline != Pipeline::SlowOnly;
    const bool need_slow = cfg.pipeline != Pipeline::FastOnly;
    if (need_fast && fast == nullptr) throw ConfigError("replay: pipeline requires a fast model");
    if (need_slow && slow == nullptr) throw ConfigError("replay: pipeline requires a slow model");
    if (need_fast && need_slow) {
        if (!(fast->window_cfg == slow->window_cfg))
            throw ConfigError("replay: models disagree on window geometry");
        if (!(fast->vocab == slow->vocab))
            throw ConfigError("replay: models disagree on vocabulary");
    }
    wcfg = need_fast ? &fast->window_cfg : &slow->window_cfg;
    vocab = need_fast ? &fast->vocab : &slow->vocab;

    if (cfg.delay_enabled) {
        if (cfg.mode != Mode::OnTheFly)
            throw ConfigError("replay: delays require on-the-fly mode");
        if (cfg.pipeline != Pipeline::Hybrid)
            throw ConfigError("replay: delays require the hybrid pipeline");
        if (cfg.observe_only)
            throw ConfigError("replay: delays are incompatible with observe-only scoring");
        validate_policy(cfg.delay, log.alphabet_size);
    }

    for (std::size_t i = 1; i < log.events.size(); ++i)
        if (log.events[i].timestamp < log.events[i - 1].timestamp)
            throw DataError("replay: trace events must be sorted by timestamp");
}

ReplayResult run_offline(const TraceLog& log, const Scorers& sc, const ReplayConfig& cfg,
                         const WindowConfig& wcfg, const Vocabulary& vocab) {
    TraceLog horizon = log; // event intake stops at the configured duration
    std::erase_if(horizon.events,
                  [&](const SyscallEvent& e) { return e.timestamp > cfg.duration; });
    EmitResult er = emit_windows(horizon, wcfg, vocab);

    ReplayResult res;
    res.unfilled_processes = er.unfilled_process_count;
    res.final_clock = cfg.duration;

    Router router(cfg.interval, cfg.max_roundtrips);
    std::map<Pid, ProcState> state;
    OutcomeBook book;

    auto kill = [&](Pid pid, VirtualMs at) {
        state[pid] = ProcState::Killed;
        res.kill_times.emplace(pid, at);
    };

    for (const CompressedWindow& w : er.windows) {
        ProcState& st = state.try_emplace(w.pid, ProcState::Live).first->second;
        if (!cfg.observe_only && st != ProcState::Live) continue;
        const VirtualMs at = w.end_time;

        switch (cfg.pipeline) {
        case Pipeline::FastOnly: {
            const double p = sc.score_fast(w);
            ++res.fast_classifications;
            const Action a = p >= 0.5 ? Action::Kill : Action::ContinueMonitoring;
            WindowOutcome& rec = book.at(w.pid, w.window_index);
            rec.has_fast = true;
            rec.fast_p = p;
            rec.fast_action = a;
            res.verdicts.push_back({w.pid, Source::FastPath, p, a, at});
            if (!cfg.observe_only && a == Action::Kill) kill(w.pid, at);
            break;
        }
        case Pipeline::SlowOnly: {
            const double p = sc.score_slow(w);
            ++res.slow_classifications;
            const Action a = p >= 0.5 ? Action::Kill : Action::ContinueMonitoring;
            WindowOutcome& rec = book.at(w.pid, w.window_index);
            rec.has_slow = true;
            rec.slow_p = p;
            rec.slow_action = a;
            res.verdicts.push_back({w.pid, Source::SlowPath, p, a, at});
            if (!cfg.observe_only && a == Action::Kill) kill(w.pid, at);
            break;
        }
        case Pipeline::Hybrid: {
            const double p = sc.score_fast(w);
            ++res.fast_classifications;
            WindowOutcome& rec = book.at(w.pid, w.window_index);
            if (cfg.observe_only) {
                const Action a = route_fast(p, cfg.interval);
                rec.has_fast = true;
                rec.fast_p = p;
                rec.fast_action = a;
                res.verdicts.push_back({w.pid, Source::FastPath, p, a, at});
                if (a == Action::Escalate) {
                    ++res.escalated_windows;
                    const double sp = sc.score_slow(w);
                    ++res.slow_classifications;
                    const Action sa = sp >= 0.5 ? Action::Kill : Action::ContinueMonitoring;
                    rec.has_slow = true;
                    rec.slow_p = sp;
                    rec.slow_action = sa;
                    res.verdicts.push_back({w.pid, Source::SlowPath, sp, sa, at});
                }
            } else {
                const Router::FastDecision dec = router.on_fast(w.pid, p);
                rec.has_fast = true;
                rec.fast_p = dec.p;
                rec.fast_action = dec.action;
                res.verdicts.push_back({w.pid, dec.source, dec.p, dec.action, at});
                if (dec.action == Action::Escalate) {
                    ++res.escalated_windows;
                    const double sp = sc.score_slow(w);
                    ++res.slow_classifications;
                    const Action sa = router.on_slow(w.pid, dec.generation, sp);
                    rec.has_slow = true;
                    rec.slow_p = sp;
                    rec.slow_action = sa;
                    res.verdicts.push_back({w.pid, Source::SlowPath, sp, sa, at});
                    if (sa == Action::Kill) {
                        kill(w.pid, at);
                        router.retire(w.pid);
                    }
                } else if (dec.action == Action::Kill) {
                    kill(w.pid, at);
                    router.retire(w.pid);
                } else if (dec.action == Action::ClearBenign) {
                    state[w.pid] = ProcState::Cleared;
                    router.retire(w.pid);
                }
            }
            break;
        }
        }
    }

    res.outcomes = std::move(book.outcomes);
    return res;
}

ReplayResult run_online(const TraceLog& log, const Scorers& sc, const ReplayConfig& cfg,
                        const WindowConfig& wcfg, const Vocabulary& vocab) {
    ReplayResult res;

    // Per-process input streams, each event keeping its original log
    // position so simultaneous arrivals replay in recorded order.
    struct Ev {
        SyscallEvent e;
        std::size_t orig;
    };
    std::map<Pid, std::vector<Ev>> stream;
    for (std::size_t i = 0; i < log.events.size(); ++i)
        stream[log.events[i].pid].push_back({log.events[i], i});

    struct Candidate {
        VirtualMs time = 0;    // adjusted arrival time
        std::size_t orig = 0;  // original log position, tie-breaker
        Pid pid = 0;
        bool delay_checked = false;
    };
    auto later = [](const Candidate& a, const Candidate& b) {
        return std::tie(a.time, a.orig) > std::tie(b.time, b.orig);
    };
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(later)> arrivals(later);

    std::map<Pid, std::size_t> cursor;
    std::map<Pid, VirtualMs> shift;
    std::map<Pid, ProcState> state;
    for (const auto& [pid, evs] : stream) {
        cursor[pid] = 0;
        shift[pid] = 0;
        state[pid] = ProcState::Live;
        arrivals.push({evs.front().e.timestamp, evs.front().orig, pid, false});
    }

    const bool delays_on = cfg.delay_enabled;
    std::map<Pid, Rng> delay_rng;

    WindowBuilder builder(wcfg, vocab);
    Router router(cfg.interval, cfg.max_roundtrips);
    OutcomeBook book;

    struct Job {
        bool slow = false;
        CompressedWindow w;
        int generation = 0;
    };
    std::deque<Job> queue; // single analysis server, FIFO
    bool busy = false;
    Job current;
    VirtualMs busy_until = 0;
    VirtualMs clock = 0;

    std::map<Pid, VirtualMs> entered_at; // open borderline spans
    auto note_borderline = [&](Pid pid, bool was, VirtualMs now) {
        const bool is = router.is_borderline(pid);
        if (!was && is) {
            entered_at[pid] = now;
        } else if (was && !is) {
            auto it = entered_at.find(pid);
            res.borderline_timeline[pid].push_back({it->second, now});
            entered_at.erase(it);
        }
    };

    auto kill = [&](Pid pid, VirtualMs at) {
        state[pid] = ProcState::Killed;
        res.kill_times.emplace(pid, at);
        cursor[pid] = stream[pid].size(); // no further events from this pid
    };

    auto start_next = [&](VirtualMs now) {
        while (!queue.empty()) {
            Job j = std::move(queue.front());
            queue.pop_front();
            if (!cfg.observe_only) {
                if (state[j.w.pid] != ProcState::Live) continue;
                if (j.slow && cfg.pipeline == Pipeline::Hybrid &&
                    !router.is_current(j.w.pid, j.generation))
                    continue; // escalation superseded before analysis began
            }
            busy = true;
            busy_until = now + (j.slow ? cfg.slow_cost : cfg.fast_cost);
            current = std::move(j);
            return;
        }
        busy = false;
    };

    auto enqueue = [&](Job j, VirtualMs now) {
        queue.push_back(std::move(j));
        if (!busy) start_next(now);
    };

    auto complete = [&]() {
        clock = busy_until;
        Job j = std::move(current);
        if (j.slow) {
            const double p = sc.score_slow(j.w);
            ++res.slow_classifications;
            if (cfg.pipeline == Pipeline::SlowOnly) {
                const Action a = p >= 0.5 ? Action::Kill : Action::ContinueMonitoring;
                if (cfg.observe_only || state[j.w.pid] == ProcState::Live) {
                    WindowOutcome& rec = book.at(j.w.pid, j.w.window_index);
                    rec.has_slow = true;
                    rec.slow_p = p;
                    rec.slow_action = a;
                    res.verdicts.push_back({j.w.pid, Source::SlowPath, p, a, clock});
                    if (!cfg.observe_only && a == Action::Kill) kill(j.w.pid, clock);
                }
            } else if (cfg.observe_only) {
                const Action a = p >= 0.5 ? Action::Kill : Action::ContinueMonitoring;
                WindowOutcome& rec = book.at(j.w.pid, j.w.window_index);
                rec.has_slow = true;
                rec.slow_p = p;
                rec.slow_action = a;
                res.verdicts.push_back({j.w.pid, Source::SlowPath, p, a, clock});
            } else if (state[j.w.pid] == ProcState::Live &&
                       router.is_current(j.w.pid, j.generation)) {
                const bool was = router.is_borderline(j.w.pid);
                const Action a = router.on_slow(j.w.pid, j.generation, p);
                WindowOutcome& rec = book.at(j.w.pid, j.w.window_index);
                rec.has_slow = true;
                rec.slow_p = p;
                rec.slow_action = a;
                res.verdicts.push_back({j.w.pid, Source::SlowPath, p, a, clock});
                note_borderline(j.w.pid, was, clock);
                if (a == Action::Kill) {
                    kill(j.w.pid, clock);
                    router.retire(j.w.pid);
                }
            }
            // else: result arrived for a superseded escalation or a dead
            // process — computed, paid for, discarded.
        } else {
            const double p = sc.score_fast(j.w);
            ++res.fast_classifications;
            const Pid pid = j.w.pid;
            const bool alive = cfg.observe_only || state[pid] == ProcState::Live;
            if (cfg.pipeline == Pipeline::FastOnly) {
                if (alive) {
                    const Action a = p >= 0.5 ? Action::Kill : Action::ContinueMonitoring;
                    WindowOutcome& rec = book.at(pid, j.w.window_index);
                    rec.has_fast = true;
                    rec.fast_p = p;
                    rec.fast_action = a;
                    res.verdicts.push_back({pid, Source::FastPath, p, a, clock});
                    if (!cfg.observe_only && a == Action::Kill) kill(pid, clock);
                }
            } else if (cfg.observe_only) {
                const Action a = route_fast(p, cfg.interval);
                WindowOutcome& rec = book.at(pid, j.w.window_index);
                rec.has_fast = true;
                rec.fast_p = p;
                rec.fast_action = a;
                res.verdicts.push_back({pid, Source::FastPath, p, a, clock});
                if (a == Action::Escalate) {
                    ++res.escalated_windows;
                    enqueue({true, std::move(j.w), 0}, clock);
                }
            } else if (alive) {
                const bool was = router.is_borderline(pid);
                const Router::FastDecision dec = router.on_fast(pid, p);
                WindowOutcome& rec = book.at(pid, j.w.window_index);
                rec.has_fast = true;
                rec.fast_p = dec.p;
                rec.fast_action = dec.action;
                res.verdicts.push_back({pid, dec.source, dec.p, dec.action, clock});
                note_borderline(pid, was, clock);
                if (dec.action == Action::Escalate) {
                    ++res.escalated_windows;
                    enqueue({true, std::move(j.w), dec.generation}, clock);
                } else if (dec.action == Action::Kill) {
                    kill(pid, clock);
                    router.retire(pid);
                } else if (dec.action == Action::ClearBenign) {
                    state[pid] = ProcState::Cleared;
                    router.retire(pid);
                }
            }
        }
        start_next(clock);
    };

    auto arrive = [&]() {
        const Candidate c = arrivals.top();
        arrivals.pop();
        const Pid pid = c.pid;
        const auto& evs = stream[pid];
        std::size_t& idx = cursor[pid];
        if (state[pid] == ProcState::Killed || idx >= evs.size()) return;
        clock = c.time;

        const SyscallEvent& ev = evs[idx].e;
        if (delays_on && !c.delay_checked) {
            auto [it, fresh] = delay_rng.try_emplace(
                pid, Rng(derive_seed(cfg.delay.rng_seed, static_cast<std::uint64_t>(pid))));
            const VirtualMs d = maybe_delay(ev, router.is_borderline(pid), cfg.delay, it->second);
            if (d > 0) {
                shift[pid] += d;
                arrivals.push({c.time + d, c.orig, pid, true});
                return;
            }
        }
        if (c.time > cfg.duration) { // intake horizon passed for this stream
            idx = evs.size();
            return;
        }

        builder.push({c.time, pid, ev.syscall});
        ++idx;
        if (idx < evs.size())
            arrivals.push({evs[idx].e.timestamp + shift[pid], evs[idx].orig, pid, false});

        for (CompressedWindow& w : builder.take_emitted()) {
            if (!cfg.observe_only && state[w.pid] != ProcState::Live) continue;
            enqueue({cfg.pipeline == Pipeline::SlowOnly, std::move(w), 0}, clock);
        }
    };

    while (true) {
        const VirtualMs next_done = busy ? busy_until : kNever;
        const VirtualMs next_arr = arrivals.empty() ? kNever : arrivals.top().time;
        if (next_done == kNever && next_arr == kNever) break;
        if (next_done <= next_arr)
            complete(); // completions outrank simultaneous arrivals
        else
            arrive();
    }

    for (const auto& [pid, t0] : entered_at) // still under analysis at shutdown
        res.borderline_timeline[pid].push_back({t0, kNever});

    res.final_clock = clock;
    res.unfilled_processes = builder.unfilled_process_count();
    res.outcomes = std::move(book.outcomes);
    return res;
}

} // namespace

std::string canonical_outcome_lines(const std::vector<WindowOutcome>& outcomes) {
    std::ostringstream out;
    out.precision(17);
    for (const WindowOutcome& o : outcomes) {
        out << o.pid << '\t' << o.window_index << '\t';
        if (o.has_fast)
            out << "F=" << o.fast_p << ':' << to_string(o.fast_action);
        else
            out << '-';
        out << '\t';
        if (o.has_slow)
            out << "S=" << o.slow_p << ':' << to_string(o.slow_action);
        else
            out << '-';
        out << '\n';
    }
    return out.str();
}

ReplayResult replay(const TraceLog& log, const FastModel* fast, const deep::SlowModel* slow,
                    const ReplayConfig& cfg) {
    const WindowConfig* wcfg = nullptr;
    const Vocabulary* vocab = nullptr;
    validate_setup(log, fast, slow, cfg, wcfg, vocab);
    const Scorers sc{fast, slow};

    ReplayResult res = cfg.mode == Mode::Offline ? run_offline(log, sc, cfg, *wcfg, *vocab)
                                                 : run_online(log, sc, cfg, *wcfg, *vocab);
    res.windows_processed = static_cast<long>(res.outcomes.size());
    res.total_fast_cost = res.fast_classifications * cfg.fast_cost;
    res.total_slow_cost = res.slow_classifications * cfg.slow_cost;
    return res;
}

ExperimentReport make_report(const ReplayResult& result, const std::vector<ProcessLabel>& labels,
                             const TraceLog& log, const ReplayConfig& cfg) {
    ExperimentReport rep =
        compute_metrics(result.verdicts, labels, cfg.duration, process_start_times(log));
    rep.windows_processed = result.windows_processed;
    rep.unfilled_window_count = result.unfilled_processes;
    rep.escalated_windows = result.escalated_windows;
    rep.total_fast_cost = result.total_fast_cost;
    rep.total_slow_cost = result.total_slow_cost;
    return rep;
}

} // namespace syscade
