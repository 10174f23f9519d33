#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <numeric>

#include "helpers.hpp"
#include "syscade/errors.hpp"
#include "syscade/rng.hpp"

using namespace syscade;

namespace {

// Independent recomputation of one pid's raw gram stream from a log.
std::vector<NGram> raw_grams_of(const TraceLog& log, Pid pid, int n) {
    std::vector<SyscallId> seq;
    for (const auto& ev : log.events)
        if (ev.pid == pid) seq.push_back(ev.syscall);
    return encode_ngrams(seq, n);
}

std::vector<int> expand_window(const CompressedWindow& w) {
    std::vector<int> out;
    for (std::size_t i = 0; i < w.ngram_seq.size(); ++i)
        for (int k = 0; k < w.density_seq[i]; ++k) out.push_back(w.ngram_seq[i]);
    return out;
}

} // namespace

TEST_CASE("ngram encoding is the overlapping stride-1 definition") {
    CHECK(encode_ngrams({1, 2, 3}, 2) == std::vector<NGram>{{1, 2}, {2, 3}});
    CHECK(encode_ngrams({1}, 2).empty());
    CHECK(encode_ngrams({}, 2).empty());

    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        const int len = 2 + rng.uniform_int(60);
        std::vector<SyscallId> seq;
        for (int i = 0; i < len; ++i) seq.push_back(rng.uniform_int(6));
        CHECK(encode_ngrams(seq, 2).size() == static_cast<std::size_t>(len - 1));
    }
}

TEST_CASE("run-length compression produces maximal runs and round-trips") {
    const NGram aa{0, 0};
    const CompressedStream c = compress_grams({aa, aa, aa});
    CHECK(c.grams == std::vector<NGram>{aa});
    CHECK(c.densities == std::vector<int>{3});

    const CompressedStream empty = compress_grams({});
    CHECK(empty.grams.empty());
    CHECK(empty.densities.empty());

    Rng rng(17);
    for (int rep = 0; rep < 1000; ++rep) {
        std::vector<NGram> stream;
        const int len = static_cast<int>(rng.uniform_int(40));
        for (int i = 0; i < len; ++i)
            stream.push_back({static_cast<SyscallId>(rng.uniform_int(3)), static_cast<SyscallId>(rng.uniform_int(3))});
        const CompressedStream rle = compress_grams(stream);
        CHECK(decompress_grams(rle) == stream);
        for (std::size_t i = 1; i < rle.grams.size(); ++i) // maximality
            CHECK(rle.grams[i] != rle.grams[i - 1]);
        for (int d : rle.densities) CHECK(d > 0);
    }
}

TEST_CASE("vocabulary indexes units from 1 in first-seen order, 0 reserved") {
    TraceLog log;
    log.alphabet_size = 4;
    log.events = {{0, 1, 0}, {1, 1, 1}, {2, 1, 0}, {3, 1, 1}};
    // grams in order: (0,1), (1,0), (0,1) again
    const Vocabulary v = Vocabulary::build(log, 2);
    CHECK(v.size() == 3); // unknown + 2 distinct units
    CHECK(v.lookup({0, 1}) == 1);
    CHECK(v.lookup({1, 0}) == 2);
    CHECK(v.lookup({3, 3}) == Vocabulary::kUnknown);
    CHECK(Vocabulary::build(log, 2) == v); // rebuild is identical
}

TEST_CASE("a process emits its first window at exactly W grams") {
    const WindowConfig wc = testutil::small_windows(4, 2);
    TraceLog log;
    log.alphabet_size = 8;
    for (int i = 0; i < 5; ++i) // 5 events -> 4 grams -> exactly one window
        log.events.push_back({i, 1, i % 8});
    const Vocabulary v = Vocabulary::build(log, 2);
    const EmitResult er = emit_windows(log, wc, v);
    REQUIRE(er.windows.size() == 1);
    CHECK(er.windows[0].pid == 1);
    CHECK(er.windows[0].window_index == 0);
    CHECK(er.unfilled_process_count == 0);
    CHECK(std::accumulate(er.windows[0].density_seq.begin(), er.windows[0].density_seq.end(), 0) ==
          wc.window_size);
}

TEST_CASE("W + S grams give two windows overlapping by W - S") {
    const WindowConfig wc = testutil::small_windows(4, 2);
    TraceLog log;
    log.alphabet_size = 8;
    for (int i = 0; i < 7; ++i) // 6 grams = W + S
        log.events.push_back({i, 1, i % 8});
    const Vocabulary v = Vocabulary::build(log, 2);
    const EmitResult er = emit_windows(log, wc, v);
    REQUIRE(er.windows.size() == 2);

    const std::vector<int> first = expand_window(er.windows[0]);
    const std::vector<int> second = expand_window(er.windows[1]);
    const int overlap = wc.window_size - wc.stride;
    for (int i = 0; i < overlap; ++i) CHECK(first[wc.stride + i] == second[i]);
}

TEST_CASE("windows are lossless over the raw gram stream and start S grams apart") {
    const WindowConfig wc = testutil::small_windows(12, 5);
    const GeneratedTrace gt = generate_trace(testutil::small_gen(21, 0.5, 3, 300.0, 8));
    const Vocabulary v = Vocabulary::build(gt.log, wc.gram_order);
    const EmitResult er = emit_windows(gt.log, wc, v);
    REQUIRE(!er.windows.empty());

    std::map<Pid, std::vector<NGram>> raw;
    for (const auto& w : er.windows)
        if (!raw.count(w.pid)) raw[w.pid] = raw_grams_of(gt.log, w.pid, wc.gram_order);

    for (const auto& w : er.windows) {
        const std::vector<NGram>& grams = raw[w.pid];
        const std::size_t begin = static_cast<std::size_t>(w.window_index) * wc.stride;
        REQUIRE(begin + wc.window_size <= grams.size());
        std::vector<int> expected;
        for (std::size_t i = begin; i < begin + wc.window_size; ++i)
            expected.push_back(v.lookup(grams[i]));
        CHECK(expand_window(w) == expected);
        CHECK(std::accumulate(w.density_seq.begin(), w.density_seq.end(), 0) == wc.window_size);
        CHECK(w.ngram_seq.size() == w.density_seq.size());
    }
}

TEST_CASE("system frequency vectors are normalized and causal") {
    const WindowConfig wc = testutil::small_windows(10, 5);
    const GeneratedTrace gt = generate_trace(testutil::small_gen(33, 0.5, 4, 250.0, 10));
    const Vocabulary v = Vocabulary::build(gt.log, wc.gram_order);
    const EmitResult er = emit_windows(gt.log, wc, v);
    REQUIRE(!er.windows.empty());
    for (const auto& w : er.windows) {
        REQUIRE(w.sys_freq.size() == static_cast<std::size_t>(v.size()));
        double sum = 0.0;
        for (double x : w.sys_freq) {
            CHECK(x >= 0.0);
            sum += x;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("system frequency counts exactly the grams completed in the window span") {
    // pid 1: events at t=0,1,5 -> grams complete at t=1 and t=5; its
    // 2-gram window spans [1, 5]. pid 2: events at t=2,3 -> one gram at
    // t=3, inside the span and already arrived when the window fills.
    WindowConfig wc = testutil::small_windows(2, 2);
    TraceLog log;
    log.alphabet_size = 6;
    log.events = {{0, 1, 0}, {1, 1, 1}, {2, 2, 4}, {3, 2, 5}, {5, 1, 2}};
    const Vocabulary v = Vocabulary::build(log, 2);
    const int i01 = v.lookup({0, 1}), i12 = v.lookup({1, 2}), i45 = v.lookup({4, 5});

    SUBCASE("self included by default") {
        const EmitResult er = emit_windows(log, wc, v);
        REQUIRE(er.windows.size() == 1);
        const CompressedWindow& w = er.windows[0];
        CHECK(w.pid == 1);
        CHECK(w.start_time == 1);
        CHECK(w.end_time == 5);
        CHECK(w.sys_freq[i01] == doctest::Approx(1.0 / 3.0));
        CHECK(w.sys_freq[i12] == doctest::Approx(1.0 / 3.0));
        CHECK(w.sys_freq[i45] == doctest::Approx(1.0 / 3.0));
        CHECK(w.sys_freq[Vocabulary::kUnknown] == 0.0);
    }
    SUBCASE("exclude_self leaves only other processes' grams") {
        wc.exclude_self = true;
        const EmitResult er = emit_windows(log, wc, v);
        REQUIRE(er.windows.size() == 1);
        const CompressedWindow& w = er.windows[0];
        CHECK(w.sys_freq[i01] == 0.0);
        CHECK(w.sys_freq[i12] == 0.0);
        CHECK(w.sys_freq[i45] == doctest::Approx(1.0));
    }
    SUBCASE("raw count mode keeps integers") {
        wc.raw_sys_counts = true;
        const EmitResult er = emit_windows(log, wc, v);
        REQUIRE(er.windows.size() == 1);
        const CompressedWindow& w = er.windows[0];
        CHECK(w.sys_freq[i01] == 1.0);
        CHECK(w.sys_freq[i12] == 1.0);
        CHECK(w.sys_freq[i45] == 1.0);
    }
}

TEST_CASE("grams completed after a window fills are not visible to it") {
    // pid 2's gram completes at t=6, after pid 1's window filled at t=5:
    // inside [start,end] by time it is not, and it must not appear.
    const WindowConfig wc = testutil::small_windows(2, 2);
    TraceLog log;
    log.alphabet_size = 6;
    log.events = {{0, 1, 0}, {1, 1, 1}, {2, 2, 4}, {5, 1, 2}, {6, 2, 5}};
    const Vocabulary v = Vocabulary::build(log, 2);
    const EmitResult er = emit_windows(log, wc, v);
    REQUIRE(er.windows.size() == 1);
    CHECK(er.windows[0].sys_freq[v.lookup({4, 5})] == 0.0);
}

TEST_CASE("incremental delivery reproduces the bulk output byte for byte") {
    const WindowConfig wc = testutil::small_windows(8, 3);
    const GeneratedTrace gt = generate_trace(testutil::small_gen(44, 0.6, 4, 220.0, 9));
    const Vocabulary v = Vocabulary::build(gt.log, wc.gram_order);

    const EmitResult bulk = emit_windows(gt.log, wc, v);
    WindowBuilder builder(wc, v);
    std::vector<CompressedWindow> streamed;
    for (const auto& ev : gt.log.events) {
        builder.push(ev);
        for (auto& w : builder.take_emitted()) streamed.push_back(std::move(w));
    }
    REQUIRE(streamed.size() == bulk.windows.size());
    for (std::size_t i = 0; i < streamed.size(); ++i)
        CHECK(window_to_json(streamed[i]) == window_to_json(bulk.windows[i]));
    CHECK(builder.unfilled_process_count() == bulk.unfilled_process_count);
}

TEST_CASE("processes that never fill a window are counted") {
    const WindowConfig wc = testutil::small_windows(10, 5);
    TraceLog log;
    log.alphabet_size = 4;
    for (int i = 0; i < 20; ++i) log.events.push_back({i, 1, i % 4});
    log.events.push_back({21, 2, 0}); // pid 2: single event, no gram, no window
    const Vocabulary v = Vocabulary::build(log, 2);
    const EmitResult er = emit_windows(log, wc, v);
    CHECK(er.unfilled_process_count == 1);
}

TEST_CASE("unknown grams map to the reserved index at deployment") {
    const WindowConfig wc = testutil::small_windows(4, 4);
    TraceLog train;
    train.alphabet_size = 10;
    for (int i = 0; i < 6; ++i) train.events.push_back({i, 1, i % 3});
    const Vocabulary v = Vocabulary::build(train, 2);

    TraceLog eval;
    eval.alphabet_size = 10;
    for (int i = 0; i < 5; ++i) eval.events.push_back({i, 1, 5 + (i % 2)}); // unseen pairs
    const EmitResult er = emit_windows(eval, wc, v);
    REQUIRE(er.windows.size() == 1);
    for (int idx : er.windows[0].ngram_seq) CHECK(idx == Vocabulary::kUnknown);
}

TEST_CASE("distinct unknown grams never merge into one run") {
    const WindowConfig wc = testutil::small_windows(4, 4);
    const Vocabulary v(2); // empty vocabulary: everything is unknown
    TraceLog log;
    log.alphabet_size = 10;
    log.events = {{0, 1, 1}, {1, 1, 2}, {2, 1, 3}, {3, 1, 4}, {4, 1, 5}};
    const EmitResult er = emit_windows(log, wc, v);
    REQUIRE(er.windows.size() == 1);
    // four distinct raw grams, all mapping to index 0, must stay 4 units
    CHECK(er.windows[0].ngram_seq == std::vector<int>{0, 0, 0, 0});
    CHECK(er.windows[0].density_seq == std::vector<int>{1, 1, 1, 1});
}

TEST_CASE("window JSON round-trips every field") {
    const WindowConfig wc = testutil::small_windows(6, 3);
    testutil::Corpus c = testutil::make_corpus(testutil::small_gen(55, 0.5, 3, 150.0, 8), wc);
    REQUIRE(!c.windows.empty());
    for (const auto& w : c.windows) {
        const CompressedWindow back = window_from_json(window_to_json(w));
        CHECK(back.pid == w.pid);
        CHECK(back.ngram_seq == w.ngram_seq);
        CHECK(back.density_seq == w.density_seq);
        CHECK(back.sys_freq == w.sys_freq);
        CHECK(back.window_index == w.window_index);
        CHECK(back.start_time == w.start_time);
        CHECK(back.end_time == w.end_time);
        CHECK(back.label == w.label);
    }
    CHECK_THROWS_AS(window_from_json("{\"pid\": 1}"), ParseError);
}

TEST_CASE("windows file IO round-trips") {
    const WindowConfig wc = testutil::small_windows(6, 3);
    testutil::Corpus c = testutil::make_corpus(testutil::small_gen(56, 0.5, 3, 150.0, 8), wc);
    write_windows_jsonl(c.windows, "window_io_test.jsonl");
    const std::vector<CompressedWindow> back = read_windows_jsonl("window_io_test.jsonl");
    REQUIRE(back.size() == c.windows.size());
    for (std::size_t i = 0; i < back.size(); ++i)
        CHECK(window_to_json(back[i]) == window_to_json(c.windows[i]));
}

TEST_CASE("vocabulary and window-config JSON round-trip") {
    const GeneratedTrace gt = generate_trace(testutil::small_gen(57, 0.5, 3, 150.0, 8));
    const Vocabulary v = Vocabulary::build(gt.log, 2);
    CHECK(vocabulary_from_json(vocabulary_to_json(v)) == v);

    WindowConfig wc = testutil::small_windows(7, 3);
    wc.exclude_self = true;
    wc.raw_sys_counts = true;
    CHECK(window_config_from_json(window_config_to_json(wc)) == wc);
}

TEST_CASE("labels attach to windows by pid") {
    const WindowConfig wc = testutil::small_windows(6, 3);
    const GeneratedTrace gt = generate_trace(testutil::small_gen(58, 0.5, 3, 200.0, 8));
    const Vocabulary v = Vocabulary::build(gt.log, 2);
    EmitResult er = emit_windows(gt.log, wc, v);
    attach_labels(er.windows, gt.labels);
    std::map<Pid, Label> by_pid;
    for (const auto& pl : gt.labels) by_pid[pl.pid] = pl.label;
    for (const auto& w : er.windows) {
        REQUIRE(w.label.has_value());
        CHECK(*w.label == by_pid[w.pid]);
    }
}

TEST_CASE("repeat bursts make compression ratios above one observable") {
    GeneratorConfig g = testutil::small_gen(59, 0.5, 3, 400.0, 6);
    g.repeat_burst = 0.8;
    const WindowConfig wc = testutil::small_windows(30, 30);
    testutil::Corpus c = testutil::make_corpus(g, wc);
    REQUIRE(!c.windows.empty());
    double raw = 0.0, stored = 0.0;
    for (const auto& w : c.windows) {
        raw += wc.window_size;
        stored += static_cast<double>(w.ngram_seq.size());
    }
    CHECK(raw / stored > 1.0);
}
