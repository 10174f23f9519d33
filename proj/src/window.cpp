#include "syscade/window.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "syscade/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace syscade {

std::vector<NGram> encode_ngrams(const std::vector<SyscallId>& events, int n) {
    if (n < 1) throw ConfigError("gram order must be >= 1");
    std::vector<NGram> out;
    if (static_cast<int>(events.size()) < n) return out;
    out.reserve(events.size() - n + 1);
    for (size_t i = 0; i + n <= events.size(); ++i) {
        out.emplace_back(events.begin() + i, events.begin() + i + n);
    }
    return out;
}

CompressedStream compress_grams(const std::vector<NGram>& raw) {
    CompressedStream c;
    for (const auto& g : raw) {
        if (!c.grams.empty() && c.grams.back() == g) {
            ++c.densities.back();
        } else {
            c.grams.push_back(g);
            c.densities.push_back(1);
        }
    }
    return c;
}

std::vector<NGram> decompress_grams(const CompressedStream& c) {
    std::vector<NGram> out;
    for (size_t i = 0; i < c.grams.size(); ++i) {
        for (int k = 0; k < c.densities[i]; ++k) out.push_back(c.grams[i]);
    }
    return out;
}

Vocabulary Vocabulary::build(const TraceLog& log, int gram_order) {
    Vocabulary v(gram_order);
    std::unordered_map<Pid, std::vector<SyscallId>> tails;
    for (const auto& ev : log.events) {
        auto& tail = tails[ev.pid];
        tail.push_back(ev.syscall);
        if (static_cast<int>(tail.size()) == gram_order) {
            v.add(tail);
            tail.erase(tail.begin());
        }
    }
    return v;
}

int Vocabulary::add(const NGram& unit) {
    auto it = index_.find(unit);
    if (it != index_.end()) return it->second;
    units_.push_back(unit);
    int idx = static_cast<int>(units_.size()); // index 0 stays reserved
    index_.emplace(unit, idx);
    return idx;
}

int Vocabulary::lookup(const NGram& unit) const {
    auto it = index_.find(unit);
    return it == index_.end() ? kUnknown : it->second;
}

namespace {

void check_window_config(const WindowConfig& cfg) {
    if (cfg.stride < 1) throw ConfigError("window stride must be >= 1");
    if (cfg.window_size < cfg.stride) throw ConfigError("window size must be >= stride");
    if (cfg.gram_order < 1) throw ConfigError("gram order must be >= 1");
}

// Counts arrivals with time >= start among history[0..last_pos], into a
// vocabulary-sized vector. History times are non-decreasing, so the
// qualifying range is contiguous.
std::vector<double> system_frequency(const std::vector<GramArrival>& history, size_t last_pos,
                                     VirtualMs start, Pid self, const WindowConfig& cfg,
                                     int vocab_size) {
    std::vector<double> freq(vocab_size, 0.0);
    auto lo = std::lower_bound(history.begin(), history.begin() + last_pos + 1, start,
                               [](const GramArrival& g, VirtualMs t) { return g.time < t; });
    double total = 0.0;
    for (auto it = lo; it != history.begin() + last_pos + 1; ++it) {
        if (cfg.exclude_self && it->pid == self) continue;
        freq[it->index] += 1.0;
        total += 1.0;
    }
    if (!cfg.raw_sys_counts && total > 0.0) {
        for (auto& f : freq) f /= total;
    }
    return freq;
}

// Shared window assembly for the streaming and bulk routes. The RLE runs
// over gram identities (not vocabulary indices) so distinct unknown units
// never merge.
CompressedWindow make_window(Pid pid, int window_index,
                             const std::vector<NGram>& grams_w,
                             const std::vector<VirtualMs>& times_w,
                             const std::vector<GramArrival>& history, size_t complete_pos,
                             const WindowConfig& cfg, const Vocabulary& vocab) {
    CompressedWindow w;
    w.pid = pid;
    w.window_index = window_index;
    w.start_time = times_w.front();
    w.end_time = times_w.back();
    CompressedStream rle = compress_grams(grams_w);
    w.ngram_seq.reserve(rle.grams.size());
    for (const auto& g : rle.grams) w.ngram_seq.push_back(vocab.lookup(g));
    w.density_seq = std::move(rle.densities);
    w.sys_freq = system_frequency(history, complete_pos, w.start_time, pid, cfg, vocab.size());
    return w;
}

} // namespace

WindowBuilder::WindowBuilder(WindowConfig cfg, const Vocabulary& vocab)
    : cfg_(cfg), vocab_(&vocab) {
    check_window_config(cfg_);
}

void WindowBuilder::push(const SyscallEvent& event) {
    auto& st = pids_[event.pid];
    st.tail.push_back(event.syscall);
    if (static_cast<int>(st.tail.size()) < cfg_.gram_order) return;

    NGram gram = st.tail;
    st.tail.erase(st.tail.begin());
    gram_history_.push_back({event.timestamp, vocab_->lookup(gram), event.pid});
    st.pending_grams.push_back(std::move(gram));
    st.times.push_back(event.timestamp);
    ++st.grams_seen;

    if (static_cast<int>(st.pending_grams.size()) == cfg_.window_size) {
        std::vector<NGram> grams_w(st.pending_grams.begin(), st.pending_grams.end());
        std::vector<VirtualMs> times_w(st.times.begin(), st.times.end());
        emitted_.push_back(make_window(event.pid, st.windows_emitted, grams_w, times_w,
                                       gram_history_, gram_history_.size() - 1, cfg_, *vocab_));
        ++st.windows_emitted;
        st.pending_grams.erase(st.pending_grams.begin(), st.pending_grams.begin() + cfg_.stride);
        st.times.erase(st.times.begin(), st.times.begin() + cfg_.stride);
    }
}

std::vector<CompressedWindow> WindowBuilder::take_emitted() {
    std::vector<CompressedWindow> out;
    out.swap(emitted_);
    return out;
}

int WindowBuilder::unfilled_process_count() const {
    int count = 0;
    for (const auto& [pid, st] : pids_) {
        (void)pid;
        if (st.windows_emitted == 0) ++count;
    }
    return count;
}

EmitResult emit_windows(const TraceLog& log, const WindowConfig& cfg, const Vocabulary& vocab) {
    check_window_config(cfg);

    // Demultiplex and record every gram completion in log order.
    struct PidGrams {
        Pid pid = 0;
        std::vector<NGram> grams;
        std::vector<VirtualMs> times;
        std::vector<size_t> history_pos;
    };
    std::vector<PidGrams> per_pid;
    std::unordered_map<Pid, size_t> slot;
    std::unordered_map<Pid, std::vector<SyscallId>> tails;
    std::vector<GramArrival> history;

    for (const auto& ev : log.events) {
        auto [it, inserted] = slot.try_emplace(ev.pid, per_pid.size());
        if (inserted) per_pid.push_back(PidGrams{ev.pid, {}, {}, {}});
        auto& pg = per_pid[it->second];
        auto& tail = tails[ev.pid];
        tail.push_back(ev.syscall);
        if (static_cast<int>(tail.size()) < cfg.gram_order) continue;
        NGram gram = tail;
        tail.erase(tail.begin());
        history.push_back({ev.timestamp, vocab.lookup(gram), ev.pid});
        pg.grams.push_back(std::move(gram));
        pg.times.push_back(ev.timestamp);
        pg.history_pos.push_back(history.size() - 1);
    }

    EmitResult result;
    std::vector<std::vector<CompressedWindow>> buckets(per_pid.size());
    std::vector<std::vector<size_t>> orders(per_pid.size());

    const int n_pids = static_cast<int>(per_pid.size());
#pragma omp parallel for schedule(dynamic)
    for (int p = 0; p < n_pids; ++p) {
        const auto& pg = per_pid[p];
        const long total = static_cast<long>(pg.grams.size());
        for (long start = 0; start + cfg.window_size <= total; start += cfg.stride) {
            const long end = start + cfg.window_size; // exclusive
            std::vector<NGram> grams_w(pg.grams.begin() + start, pg.grams.begin() + end);
            std::vector<VirtualMs> times_w(pg.times.begin() + start, pg.times.begin() + end);
            const size_t complete_pos = pg.history_pos[end - 1];
            buckets[p].push_back(make_window(pg.pid,
                                             static_cast<int>(start / cfg.stride),
                                             grams_w, times_w, history, complete_pos, cfg,
                                             vocab));
            orders[p].push_back(complete_pos);
        }
    }

    // Merge in completion order. Each event completes at most one gram, so
    // completion history positions are unique across all windows.
    std::vector<std::pair<size_t, std::pair<int, int>>> merge;
    for (int p = 0; p < n_pids; ++p) {
        if (buckets[p].empty()) ++result.unfilled_process_count;
        for (size_t k = 0; k < buckets[p].size(); ++k) {
            merge.push_back({orders[p][k], {p, static_cast<int>(k)}});
        }
    }
    std::sort(merge.begin(), merge.end());
    result.windows.reserve(merge.size());
    for (const auto& [pos, loc] : merge) {
        (void)pos;
        result.windows.push_back(std::move(buckets[loc.first][loc.second]));
    }
    return result;
}

void attach_labels(std::vector<CompressedWindow>& windows,
                   const std::vector<ProcessLabel>& labels) {
    std::unordered_map<Pid, Label> by_pid;
    for (const auto& pl : labels) by_pid[pl.pid] = pl.label;
    for (auto& w : windows) {
        auto it = by_pid.find(w.pid);
        if (it != by_pid.end()) w.label = it->second;
    }
}

std::string window_to_json(const CompressedWindow& w) {
    nlohmann::json j;
    j["pid"] = w.pid;
    j["ngram_seq"] = w.ngram_seq;
    j["density_seq"] = w.density_seq;
    j["sys_freq"] = w.sys_freq;
    j["window_index"] = w.window_index;
    j["start_time"] = w.start_time;
    j["end_time"] = w.end_time;
    if (w.label) j["label"] = (*w.label == Label::Malicious) ? "M" : "B";
    return j.dump();
}

CompressedWindow window_from_json(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError("window record: invalid JSON");
    CompressedWindow w;
    try {
        w.pid = j.at("pid").get<Pid>();
        w.ngram_seq = j.at("ngram_seq").get<std::vector<int>>();
        w.density_seq = j.at("density_seq").get<std::vector<int>>();
        w.sys_freq = j.at("sys_freq").get<std::vector<double>>();
        w.window_index = j.at("window_index").get<int>();
        w.start_time = j.at("start_time").get<VirtualMs>();
        w.end_time = j.at("end_time").get<VirtualMs>();
        if (j.contains("label")) {
            w.label = j.at("label").get<std::string>() == "M" ? Label::Malicious : Label::Benign;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("window record: ") + e.what());
    }
    if (w.ngram_seq.size() != w.density_seq.size()) {
        throw ParseError("window record: ngram_seq and density_seq lengths differ");
    }
    return w;
}

void write_windows_jsonl(const std::vector<CompressedWindow>& windows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open window file for writing: " + path);
    for (const auto& w : windows) out << window_to_json(w) << '\n';
}

std::vector<CompressedWindow> read_windows_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open window file: " + path);
    std::vector<CompressedWindow> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(window_from_json(line));
    }
    return out;
}

std::string vocabulary_to_json(const Vocabulary& vocab) {
    nlohmann::json j;
    j["n"] = vocab.gram_order();
    j["units"] = vocab.units();
    return j.dump();
}

Vocabulary vocabulary_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ParseError("vocabulary: invalid JSON");
    Vocabulary v(j.at("n").get<int>());
    for (const auto& u : j.at("units")) v.add(u.get<NGram>());
    return v;
}

std::string window_config_to_json(const WindowConfig& cfg) {
    nlohmann::json j;
    j["window_size"] = cfg.window_size;
    j["stride"] = cfg.stride;
    j["gram_order"] = cfg.gram_order;
    j["exclude_self"] = cfg.exclude_self;
    j["raw_sys_counts"] = cfg.raw_sys_counts;
    return j.dump();
}

WindowConfig window_config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ParseError("window config: invalid JSON");
    WindowConfig cfg;
    cfg.window_size = j.at("window_size").get<int>();
    cfg.stride = j.at("stride").get<int>();
    cfg.gram_order = j.at("gram_order").get<int>();
    cfg.exclude_self = j.at("exclude_self").get<bool>();
    cfg.raw_sys_counts = j.at("raw_sys_counts").get<bool>();
    return cfg;
}

} // namespace syscade
