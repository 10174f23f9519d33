#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <sstream>

#include "helpers.hpp"
#include "syscade/errors.hpp"

using namespace syscade;

TEST_CASE("trace parsing transcribes tab-separated events") {
    const TraceLog log = read_trace_string("0\t12\t5\n3\t12\t7", 155);
    REQUIRE(log.events.size() == 2);
    CHECK(log.events[0] == SyscallEvent{0, 12, 5});
    CHECK(log.events[1] == SyscallEvent{3, 12, 7});
}

TEST_CASE("empty input parses to an empty log") {
    CHECK(read_trace_string("", 155).events.empty());
}

TEST_CASE("timestamp regression is rejected") {
    CHECK_THROWS_AS(read_trace_string("5\t1\t2\n3\t1\t2", 155), DataError);
}

TEST_CASE("malformed lines report a parse error") {
    CHECK_THROWS_AS(read_trace_string("0\t1", 155), ParseError);
    CHECK_THROWS_AS(read_trace_string("zero\t1\t2", 155), ParseError);
}

TEST_CASE("single event serializes to one tab-separated line") {
    TraceLog log;
    log.events.push_back({0, 1, 0});
    CHECK(write_trace_string(log) == "0\t1\t0\n");
}

TEST_CASE("empty log serializes to empty text") {
    CHECK(write_trace_string(TraceLog{}).empty());
}

TEST_CASE("trace IO round-trips generated logs exactly") {
    for (std::uint64_t seed = 1; seed <= 25; ++seed) {
        GeneratorConfig g = testutil::small_gen(seed, 0.5, 2 + static_cast<int>(seed % 3),
                                                150.0 + 40.0 * static_cast<double>(seed % 5));
        const TraceLog log = generate_trace(g).log;
        const TraceLog back = read_trace_string(write_trace_string(log), g.alphabet_size);
        CHECK(back == log);
    }
}

TEST_CASE("label IO round-trips") {
    const GeneratedTrace gt = generate_trace(testutil::small_gen(7, 0.5));
    std::ostringstream out;
    write_labels(gt.labels, out);
    std::istringstream in(out.str());
    CHECK(read_labels(in) == gt.labels);
}

TEST_CASE("generation is a pure function of the config") {
    const GeneratorConfig g = testutil::small_gen(11, 0.4);
    const GeneratedTrace a = generate_trace(g);
    const GeneratedTrace b = generate_trace(g);
    CHECK(a.log == b.log);
    CHECK(a.labels == b.labels);
    CHECK(write_trace_string(a.log) == write_trace_string(b.log)); // byte identity
}

TEST_CASE("zero processes produce an empty trace and label list") {
    GeneratorConfig g;
    g.n_benign = 0;
    g.n_malicious = 0;
    const GeneratedTrace gt = generate_trace(g);
    CHECK(gt.log.events.empty());
    CHECK(gt.labels.empty());
}

TEST_CASE("invalid generator configs are rejected") {
    GeneratorConfig g = testutil::small_gen(1, 0.5);
    SUBCASE("tiny alphabet") { g.alphabet_size = 1; }
    SUBCASE("non-positive event mean") { g.events_per_process_mean = 0.0; }
    SUBCASE("non-positive benign rate") { g.benign_rate_per_ms = 0.0; }
    SUBCASE("non-positive malicious rate") { g.malicious_rate_per_ms = -1.0; }
    SUBCASE("separability below range") { g.separability = -0.1; }
    SUBCASE("separability above range") { g.separability = 1.5; }
    CHECK_THROWS_AS(generate_trace(g), ConfigError);
}

TEST_CASE("generated events are time-sorted and every pid is labeled once") {
    const GeneratedTrace gt = generate_trace(testutil::small_gen(3, 0.6, 5));
    for (std::size_t i = 1; i < gt.log.events.size(); ++i)
        REQUIRE(gt.log.events[i].timestamp >= gt.log.events[i - 1].timestamp);

    std::map<Pid, int> label_count;
    for (const auto& pl : gt.labels) ++label_count[pl.pid];
    std::map<Pid, bool> seen;
    for (const auto& ev : gt.log.events) seen[ev.pid] = true;
    for (const auto& [pid, present] : seen) {
        (void)present;
        CHECK(label_count[pid] == 1);
    }
    for (const auto& ev : gt.log.events) {
        CHECK(ev.timestamp >= 0);
        CHECK(ev.pid > 0);
        CHECK(ev.syscall >= 0);
        CHECK(ev.syscall < gt.log.alphabet_size);
    }
}

TEST_CASE("benign processes emit faster than malicious ones") {
    const GeneratedTrace gt = generate_trace(testutil::small_gen(9, 0.5, 6, 800.0));
    std::map<Pid, std::pair<VirtualMs, long>> span; // (last timestamp, count)
    for (const auto& ev : gt.log.events) {
        auto& s = span[ev.pid];
        s.first = ev.timestamp;
        ++s.second;
    }
    double benign_gap = 0.0, malicious_gap = 0.0;
    int nb = 0, nm = 0;
    for (const auto& pl : gt.labels) {
        const auto& s = span[pl.pid];
        REQUIRE(s.second > 1);
        const double gap = static_cast<double>(s.first) / static_cast<double>(s.second - 1);
        if (pl.label == Label::Benign) {
            benign_gap += gap;
            ++nb;
        } else {
            malicious_gap += gap;
            ++nm;
        }
    }
    CHECK(benign_gap / nb < malicious_gap / nm);
}
