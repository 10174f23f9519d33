#include "syscade/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "syscade/errors.hpp"
#include "syscade/rng.hpp"

namespace syscade {

namespace {

// One row of a transition matrix: a heavy preferred set over a uniform floor.
struct MarkovRow {
    std::vector<SyscallId> preferred;
    double preferred_mass = 0.9; // split evenly over the preferred set
};

// Samples the blend (1-s)*base + s*cls without materializing the mixed row.
SyscallId sample_blend(const MarkovRow& base, const MarkovRow& cls, double s,
                       int alphabet, Rng& rng) {
    const MarkovRow& row = (rng.uniform() < s) ? cls : base;
    if (rng.uniform() < row.preferred_mass) {
        return row.preferred[rng.uniform_int(row.preferred.size())];
    }
    return static_cast<SyscallId>(rng.uniform_int(alphabet));
}

// Draws k distinct ids, excluding anything in `taken`.
std::vector<SyscallId> draw_distinct(int k, int alphabet, const std::vector<SyscallId>& taken,
                                     Rng& rng) {
    std::vector<SyscallId> out;
    out.reserve(k);
    while (static_cast<int>(out.size()) < k) {
        auto c = static_cast<SyscallId>(rng.uniform_int(alphabet));
        bool used = std::find(taken.begin(), taken.end(), c) != taken.end() ||
                    std::find(out.begin(), out.end(), c) != out.end();
        if (!used) out.push_back(c);
    }
    return out;
}

void validate(const GeneratorConfig& c) {
    if (c.alphabet_size < 2) throw ConfigError("generator: alphabet_size must be >= 2");
    if (c.n_benign < 0 || c.n_malicious < 0)
        throw ConfigError("generator: process counts must be non-negative");
    if (c.events_per_process_mean <= 0.0)
        throw ConfigError("generator: events_per_process_mean must be positive");
    if (c.benign_rate_per_ms <= 0.0 || c.malicious_rate_per_ms <= 0.0)
        throw ConfigError("generator: event rates must be positive");
    if (c.separability < 0.0 || c.separability > 1.0)
        throw ConfigError("generator: separability must be in [0, 1]");
    if (c.repeat_burst < 0.0 || c.repeat_burst >= 1.0)
        throw ConfigError("generator: repeat_burst must be in [0, 1)");
}

} // namespace

GeneratedTrace generate_trace(const GeneratorConfig& config) {
    validate(config);

    const int alphabet = config.alphabet_size;
    GeneratedTrace out;
    out.log.alphabet_size = alphabet;

    const int n_total = config.n_benign + config.n_malicious;
    if (n_total == 0) return out;

    // Behavior matrices. Class-specific preferred sets are drawn disjointly
    // per state, so separability 1 gives disjoint high-probability supports
    // while the shared base keeps separability 0 classes indistinguishable.
    Rng matrix_rng(derive_seed(config.behavior_seed, 0));
    std::vector<MarkovRow> base(alphabet), benign_cls(alphabet), malicious_cls(alphabet);
    for (int i = 0; i < alphabet; ++i) {
        const int k_base = std::min(4, alphabet);
        const int k_cls = std::min(3, alphabet / 2);
        base[i].preferred = draw_distinct(k_base, alphabet, {}, matrix_rng);
        benign_cls[i].preferred = draw_distinct(std::max(1, k_cls), alphabet, {}, matrix_rng);
        malicious_cls[i].preferred =
            draw_distinct(std::max(1, k_cls), alphabet, benign_cls[i].preferred, matrix_rng);
    }

    std::vector<SyscallEvent> all;
    for (int p = 0; p < n_total; ++p) {
        const Pid pid = p + 1;
        const bool malicious = p >= config.n_benign;
        out.labels.push_back({pid, malicious ? Label::Malicious : Label::Benign});

        Rng rng(derive_seed(config.behavior_seed, static_cast<std::uint64_t>(pid)));
        const double rate = malicious ? config.malicious_rate_per_ms : config.benign_rate_per_ms;
        const auto n_events = rng.poisson(config.events_per_process_mean);
        const auto& cls = malicious ? malicious_cls : benign_cls;

        double clock = 0.0;
        auto state = static_cast<SyscallId>(rng.uniform_int(alphabet));
        for (std::uint64_t e = 0; e < n_events; ++e) {
            clock += rng.exponential(rate);
            if (e > 0) {
                if (rng.uniform() < config.repeat_burst) {
                    // burst: repeat the previous syscall
                } else {
                    state = sample_blend(base[state], cls[state], config.separability,
                                         alphabet, rng);
                }
            }
            all.push_back({static_cast<VirtualMs>(std::floor(clock)), pid, state});
        }
    }

    std::stable_sort(all.begin(), all.end(),
                     [](const SyscallEvent& a, const SyscallEvent& b) {
                         return a.timestamp < b.timestamp;
                     });
    out.log.events = std::move(all);
    return out;
}

namespace {

// Parses one strictly formatted decimal field; advances `pos` past it.
template <typename T>
T parse_field(const std::string& line, size_t& pos, size_t line_no, const char* name) {
    T value{};
    auto [ptr, ec] = std::from_chars(line.data() + pos, line.data() + line.size(), value);
    if (ec != std::errc()) {
        throw ParseError("trace line " + std::to_string(line_no) + ": bad " + name);
    }
    pos = static_cast<size_t>(ptr - line.data());
    return value;
}

void expect_tab(const std::string& line, size_t& pos, size_t line_no) {
    if (pos >= line.size() || line[pos] != '\t') {
        throw ParseError("trace line " + std::to_string(line_no) + ": expected tab separator");
    }
    ++pos;
}

} // namespace

TraceLog read_trace(std::istream& in, int alphabet_size) {
    TraceLog log;
    log.alphabet_size = alphabet_size;
    std::string line;
    size_t line_no = 0;
    VirtualMs last_ts = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        size_t pos = 0;
        SyscallEvent ev;
        ev.timestamp = parse_field<VirtualMs>(line, pos, line_no, "timestamp");
        expect_tab(line, pos, line_no);
        ev.pid = parse_field<Pid>(line, pos, line_no, "pid");
        expect_tab(line, pos, line_no);
        ev.syscall = parse_field<SyscallId>(line, pos, line_no, "syscall id");
        if (pos != line.size()) {
            throw ParseError("trace line " + std::to_string(line_no) + ": trailing characters");
        }
        if (ev.timestamp < 0) {
            throw ParseError("trace line " + std::to_string(line_no) + ": negative timestamp");
        }
        if (ev.pid <= 0) {
            throw ParseError("trace line " + std::to_string(line_no) + ": pid must be positive");
        }
        if (ev.syscall < 0 || ev.syscall >= alphabet_size) {
            throw DataError("trace line " + std::to_string(line_no) + ": syscall id " +
                            std::to_string(ev.syscall) + " outside alphabet [0, " +
                            std::to_string(alphabet_size) + ")");
        }
        if (!log.events.empty() && ev.timestamp < last_ts) {
            throw DataError("trace line " + std::to_string(line_no) +
                            ": timestamp regression (" + std::to_string(ev.timestamp) + " < " +
                            std::to_string(last_ts) + ")");
        }
        last_ts = ev.timestamp;
        log.events.push_back(ev);
    }
    return log;
}

TraceLog read_trace_string(const std::string& text, int alphabet_size) {
    std::istringstream in(text);
    return read_trace(in, alphabet_size);
}

TraceLog read_trace_file(const std::string& path, int alphabet_size) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open trace file: " + path);
    return read_trace(in, alphabet_size);
}

void write_trace(const TraceLog& log, std::ostream& out) {
    for (const auto& ev : log.events) {
        out << ev.timestamp << '\t' << ev.pid << '\t' << ev.syscall << '\n';
    }
}

std::string write_trace_string(const TraceLog& log) {
    std::ostringstream out;
    write_trace(log, out);
    return out.str();
}

void write_trace_file(const TraceLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open trace file for writing: " + path);
    write_trace(log, out);
}

std::vector<ProcessLabel> read_labels(std::istream& in) {
    std::vector<ProcessLabel> labels;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        size_t pos = 0;
        ProcessLabel pl;
        pl.pid = parse_field<Pid>(line, pos, line_no, "pid");
        expect_tab(line, pos, line_no);
        if (pos + 1 != line.size() || (line[pos] != 'M' && line[pos] != 'B')) {
            throw ParseError("label line " + std::to_string(line_no) + ": expected M or B");
        }
        pl.label = line[pos] == 'M' ? Label::Malicious : Label::Benign;
        for (const auto& existing : labels) {
            if (existing.pid == pl.pid) {
                throw DataError("label line " + std::to_string(line_no) + ": duplicate pid " +
                                std::to_string(pl.pid));
            }
        }
        labels.push_back(pl);
    }
    return labels;
}

std::vector<ProcessLabel> read_labels_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open label file: " + path);
    return read_labels(in);
}

void write_labels(const std::vector<ProcessLabel>& labels, std::ostream& out) {
    for (const auto& pl : labels) {
        out << pl.pid << '\t' << (pl.label == Label::Malicious ? 'M' : 'B') << '\n';
    }
}

void write_labels_file(const std::vector<ProcessLabel>& labels, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open label file for writing: " + path);
    write_labels(labels, out);
}

} // namespace syscade
