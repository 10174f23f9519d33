#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "syscade/cli.hpp"
#include "syscade/config_file.hpp"
#include "syscade/errors.hpp"
#include "syscade/metrics.hpp"
#include "syscade/rng.hpp"

using namespace syscade;

namespace {

Verdict v(Pid pid, Action a, VirtualMs at = 0, Source s = Source::FastPath, double p = 0.5) {
    Verdict verdict;
    verdict.pid = pid;
    verdict.source = s;
    verdict.p = p;
    verdict.action = a;
    verdict.decided_at = at;
    return verdict;
}

ProcessLabel lab(Pid pid, Label l) { return {pid, l}; }

} // namespace

TEST_CASE("a perfect two-process run scores perfectly") {
    const std::vector<ProcessLabel> labels = {lab(1, Label::Malicious), lab(2, Label::Benign)};
    const std::vector<Verdict> verdicts = {
        v(1, Action::Escalate, 40), v(1, Action::Kill, 50, Source::SlowPath, 0.9),
        v(2, Action::ContinueMonitoring, 60),
    };
    const ExperimentReport r = compute_metrics(verdicts, labels, 300000);
    CHECK(r.tp == 1);
    CHECK(r.fp == 0);
    CHECK(r.tn == 1);
    CHECK(r.fn == 0);
    CHECK(r.accuracy == 1.0);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.f1 == 1.0);
    CHECK(r.fp_rate == 0.0);
    CHECK_FALSE(r.precision_degenerate);
    CHECK(r.move_percentage == doctest::Approx(0.5));
    REQUIRE(r.detection_times.count(1) == 1);
    CHECK(r.detection_times.at(1) == 50);
    CHECK(r.mean_detection_time == doctest::Approx(50.0));
}

TEST_CASE("a mixed confusion works out to the hand-computed rates") {
    // 4 malicious (3 killed in time, 1 missed), 10 benign (1 killed).
    std::vector<ProcessLabel> labels;
    std::vector<Verdict> verdicts;
    for (Pid p = 1; p <= 4; ++p) labels.push_back(lab(p, Label::Malicious));
    for (Pid p = 5; p <= 14; ++p) labels.push_back(lab(p, Label::Benign));
    for (Pid p = 1; p <= 3; ++p) verdicts.push_back(v(p, Action::Kill, 100 + p));
    verdicts.push_back(v(4, Action::ContinueMonitoring, 80));
    verdicts.push_back(v(5, Action::Kill, 90));
    for (Pid p = 6; p <= 14; ++p) verdicts.push_back(v(p, Action::ContinueMonitoring, 50));

    const ExperimentReport r = compute_metrics(verdicts, labels, 300000);
    CHECK(r.tp == 3);
    CHECK(r.fp == 1);
    CHECK(r.tn == 9);
    CHECK(r.fn == 1);
    CHECK(r.accuracy == doctest::Approx(12.0 / 14.0));
    CHECK(r.precision == doctest::Approx(0.75));
    CHECK(r.recall == doctest::Approx(0.75));
    CHECK(r.f1 == doctest::Approx(0.75));
    CHECK(r.fp_rate == doctest::Approx(0.1));
    CHECK(r.mean_detection_time == doctest::Approx((101 + 102 + 103) / 3.0));
}

TEST_CASE("kills after the horizon do not count as detections") {
    const std::vector<ProcessLabel> labels = {lab(1, Label::Malicious), lab(2, Label::Benign)};
    const std::vector<Verdict> verdicts = {v(1, Action::Kill, 400)};
    const ExperimentReport r = compute_metrics(verdicts, labels, 300);
    CHECK(r.tp == 0);
    CHECK(r.fn == 1);
    CHECK(r.detection_times.empty());
    CHECK(r.mean_detection_time == 0.0);

    // At the horizon exactly still counts.
    const ExperimentReport r2 = compute_metrics({v(1, Action::Kill, 300)}, labels, 300);
    CHECK(r2.tp == 1);

    // A benign process killed late is still a false positive: the horizon
    // bounds detection credit, not blame.
    const ExperimentReport r3 = compute_metrics({v(2, Action::Kill, 400)}, labels, 300);
    CHECK(r3.fp == 1);
    CHECK(r3.tn == 0);
}

TEST_CASE("start times shift detection latencies to per-process clocks") {
    const std::vector<ProcessLabel> labels = {lab(1, Label::Malicious)};
    const std::vector<Verdict> verdicts = {v(1, Action::Kill, 120)};
    std::map<Pid, VirtualMs> starts;
    starts[1] = 100;
    const ExperimentReport r = compute_metrics(verdicts, labels, 300000, starts);
    CHECK(r.detection_times.at(1) == 20);

    TraceLog log;
    log.events = {{7, 2, 0}, {9, 1, 1}, {11, 1, 0}};
    const std::map<Pid, VirtualMs> from_log = process_start_times(log);
    CHECK(from_log.at(2) == 7);
    CHECK(from_log.at(1) == 9);
}

TEST_CASE("an all-benign quiet run is accurate but has degenerate rates") {
    const std::vector<ProcessLabel> labels = {lab(1, Label::Benign), lab(2, Label::Benign)};
    const ExperimentReport r = compute_metrics({}, labels, 300000);
    CHECK(r.tn == 2);
    CHECK(r.accuracy == 1.0);
    CHECK(r.precision == 0.0);
    CHECK(r.recall == 0.0);
    CHECK(r.precision_degenerate);
    CHECK(r.recall_degenerate);
    CHECK(r.f1_degenerate);
    CHECK_FALSE(r.fp_rate_degenerate);

    const ExperimentReport r2 = compute_metrics({}, {lab(1, Label::Malicious)}, 300000);
    CHECK(r2.fp_rate_degenerate);
    CHECK_FALSE(r2.recall_degenerate);
}

TEST_CASE("metric identities hold on randomized confusions") {
    Rng rng(21);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<ProcessLabel> labels;
        std::vector<Verdict> verdicts;
        long tp = 0, fp = 0, tn = 0, fn = 0;
        const int n = 2 + static_cast<int>(rng.uniform_int(20));
        for (Pid p = 1; p <= n; ++p) {
            const bool mal = rng.uniform() < 0.5;
            const bool killed = rng.uniform() < 0.5;
            labels.push_back(lab(p, mal ? Label::Malicious : Label::Benign));
            if (killed) verdicts.push_back(v(p, Action::Kill, 10 + p));
            (mal ? (killed ? tp : fn) : (killed ? fp : tn)) += 1;
        }
        const ExperimentReport r = compute_metrics(verdicts, labels, 300000);
        CHECK(r.tp == tp);
        CHECK(r.fp == fp);
        CHECK(r.tn == tn);
        CHECK(r.fn == fn);
        CHECK(r.tp + r.fp + r.tn + r.fn == n);
        CHECK(r.accuracy ==
              doctest::Approx(static_cast<double>(tp + tn) / static_cast<double>(n)));
        if (tp + fp > 0)
            CHECK(r.precision == doctest::Approx(static_cast<double>(tp) /
                                                 static_cast<double>(tp + fp)));
        if (tp + fn > 0)
            CHECK(r.recall ==
                  doctest::Approx(static_cast<double>(tp) / static_cast<double>(tp + fn)));
        if (!r.f1_degenerate && r.precision + r.recall > 0.0)
            CHECK(r.f1 == doctest::Approx(2.0 * r.precision * r.recall /
                                          (r.precision + r.recall)));
        if (fp + tn > 0)
            CHECK(r.fp_rate ==
                  doctest::Approx(static_cast<double>(fp) / static_cast<double>(fp + tn)));
    }
}

TEST_CASE("later verdicts override earlier ones only by severity of outcome") {
    // A process killed at any point stays killed in the confusion, no matter
    // what other verdicts surround the kill.
    const std::vector<ProcessLabel> labels = {lab(1, Label::Benign)};
    const std::vector<Verdict> verdicts = {
        v(1, Action::ContinueMonitoring, 10),
        v(1, Action::Kill, 20),
        v(1, Action::ContinueMonitoring, 30),
    };
    const ExperimentReport r = compute_metrics(verdicts, labels, 300000);
    CHECK(r.fp == 1);
    CHECK(r.tn == 0);
}

TEST_CASE("verdicts for unlabeled processes are refused") {
    CHECK_THROWS_AS(compute_metrics({v(3, Action::Kill, 1)}, {lab(1, Label::Benign)}, 300000),
                    DataError);
}

TEST_CASE("the verdict log round-trips exactly") {
    std::vector<Verdict> verdicts = {
        v(1, Action::Escalate, 40, Source::FastPath, 1.0 / 3.0),
        v(1, Action::Kill, 52, Source::SlowPath, 0.123456789012345678),
        v(2, Action::ClearBenign, 77, Source::SlowPath, 0.4),
        v(3, Action::ContinueMonitoring, 90, Source::FastPath, 0.0),
    };
    write_verdicts_file(verdicts, "verdicts_io_test.tsv");
    const std::vector<Verdict> back = read_verdicts_file("verdicts_io_test.tsv");
    REQUIRE(back.size() == verdicts.size());
    for (size_t i = 0; i < verdicts.size(); ++i) {
        CHECK(back[i].pid == verdicts[i].pid);
        CHECK(back[i].source == verdicts[i].source);
        CHECK(back[i].p == verdicts[i].p); // bit-exact through the text file
        CHECK(back[i].action == verdicts[i].action);
        CHECK(back[i].decided_at == verdicts[i].decided_at);
    }
    std::remove("verdicts_io_test.tsv");
}

TEST_CASE("the report serializes every headline number") {
    const std::vector<ProcessLabel> labels = {lab(1, Label::Malicious), lab(2, Label::Benign)};
    const std::vector<Verdict> verdicts = {v(1, Action::Escalate, 40),
                                           v(1, Action::Kill, 50, Source::SlowPath, 0.9)};
    ExperimentReport r = compute_metrics(verdicts, labels, 300000);
    r.windows_processed = 12;
    r.total_slow_cost = 100;
    const std::string json = report_to_json(r);
    for (const char* needle :
         {"\"tp\": 1", "\"tn\": 1", "\"accuracy\": 1.0", "\"f1\": 1.0",
          "\"move_percentage\": 1.0", "\"windows_processed\": 12", "\"total_slow_cost_ms\": 100",
          "\"mean_detection_time_ms\": 50.0", "\"detection_times_ms\""}) {
        INFO("missing: " << needle);
        CHECK(json.find(needle) != std::string::npos);
    }
    CHECK(report_to_json(r) == json); // stable output
}

TEST_CASE("the per-process table lists each labeled process once") {
    const std::vector<ProcessLabel> labels = {lab(1, Label::Malicious), lab(2, Label::Benign),
                                              lab(3, Label::Malicious)};
    const std::vector<Verdict> verdicts = {
        v(1, Action::Escalate, 40), v(1, Action::Kill, 50, Source::SlowPath, 0.9),
        v(2, Action::ContinueMonitoring, 60),
    };
    std::map<Pid, VirtualMs> starts;
    starts[1] = 10;
    const std::string csv = per_process_csv(verdicts, labels, 300000, starts);

    std::vector<std::string> lines;
    std::string cur;
    for (char c : csv) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    REQUIRE(lines.size() == 4); // header + one row per process
    CHECK(lines[0] == "pid,label,escalated,killed,kill_time_ms,detection_ms");
    CHECK(lines[1] == "1,M,1,1,50,40"); // detection measured from its start at 10
    CHECK(lines[2] == "2,B,0,0,,");
    CHECK(lines[3] == "3,M,0,0,,");
}

TEST_CASE("key = value text parses with comments, blanks and trimming") {
    const KeyValueConfig c = KeyValueConfig::parse_string(
        "# experiment\n"
        "\n"
        "  window.size =  40 \n"
        "forest.trees=25\n"
        "replay.observe_only = true\n"
        "paths.trace = runs/trace.tsv\n"
        "delay.threshold = 0.25\n");
    CHECK(c.has("window.size"));
    CHECK_FALSE(c.has("window.stride"));
    CHECK(c.get_int("window.size", 0) == 40);
    CHECK(c.get_int("forest.trees", 0) == 25);
    CHECK(c.get_bool("replay.observe_only", false));
    CHECK(c.get_double("delay.threshold", 0.0) == doctest::Approx(0.25));
    CHECK(c.get_string("paths.trace", "") == "runs/trace.tsv");
    CHECK(c.get_int("window.stride", 17) == 17); // fallback
    CHECK(c.require_string("paths.trace") == "runs/trace.tsv");
    CHECK_THROWS_AS(c.require_string("paths.labels"), ConfigError);
}

TEST_CASE("malformed configuration text is rejected with the offending detail") {
    CHECK_THROWS_AS(KeyValueConfig::parse_string("novalue\n"), ConfigError);
    CHECK_THROWS_AS(KeyValueConfig::parse_string("a = 1\na = 2\n"), ConfigError);
    const KeyValueConfig c = KeyValueConfig::parse_string("x = abc\nb = maybe\n");
    CHECK_THROWS_AS(c.get_int("x", 0), ConfigError);
    CHECK_THROWS_AS(c.get_double("x", 0.0), ConfigError);
    CHECK_THROWS_AS(c.get_bool("b", false), ConfigError);
}

TEST_CASE("unknown keys are named rather than ignored") {
    const KeyValueConfig c = KeyValueConfig::parse_string("window.size = 40\nwindw.stride = 2\n");
    try {
        c.check_known_keys({"window.size", "window.stride"});
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("windw.stride") != std::string::npos);
    }
}

TEST_CASE("experiment settings map onto every subsystem") {
    const ExperimentConfig ec = experiment_from_config(KeyValueConfig::parse_string(
        "generator.alphabet_size = 31\n"
        "generator.n_benign = 3\n"
        "generator.n_malicious = 5\n"
        "generator.separability = 0.8\n"
        "generator.behavior_seed = 123\n"
        "window.size = 64\n"
        "window.stride = 32\n"
        "window.gram_order = 3\n"
        "forest.trees = 21\n"
        "forest.max_depth = 9\n"
        "deep.embed_dim = 12\n"
        "deep.kernel_sizes = 3,5\n"
        "deep.atrous_dilations = 2,4,8\n"
        "deep.epochs = 7\n"
        "deep.learning_rate = 0.125\n"
        "replay.mode = on-the-fly\n"
        "replay.pipeline = hybrid\n"
        "replay.duration_ms = 12345\n"
        "replay.observe_only = true\n"
        "replay.interval_lower = 0.25\n"
        "replay.interval_upper = 0.75\n"
        "replay.max_roundtrips = 5\n"
        "replay.slow_cost_ms = 80\n"
        "delay.enabled = true\n"
        "delay.threshold = 0.2\n"
        "delay.sleep_ms = 75\n"
        "delay.targets = 1,2,3,4,5,6,7,8,9,10,11,12,13,14,15,16,17,18\n"
        "paths.trace = t.tsv\n"
        "paths.report = r.json\n"));
    CHECK(ec.generator.alphabet_size == 31);
    CHECK(ec.generator.n_benign == 3);
    CHECK(ec.generator.n_malicious == 5);
    CHECK(ec.generator.separability == doctest::Approx(0.8));
    CHECK(ec.generator.behavior_seed == 123);
    CHECK(ec.window.window_size == 64);
    CHECK(ec.window.stride == 32);
    CHECK(ec.window.gram_order == 3);
    CHECK(ec.forest.n_trees == 21);
    CHECK(ec.forest.max_depth == 9);
    CHECK(ec.deep.embed_dim == 12);
    CHECK(ec.deep.kernel_sizes == std::vector<int>{3, 5});
    CHECK(ec.deep.atrous_dilations == std::vector<int>{2, 4, 8});
    CHECK(ec.deep_train.epochs == 7);
    CHECK(ec.deep_train.lr == doctest::Approx(0.125));
    CHECK(ec.replay.mode == Mode::OnTheFly);
    CHECK(ec.replay.pipeline == Pipeline::Hybrid);
    CHECK(ec.replay.duration == 12345);
    CHECK(ec.replay.observe_only);
    CHECK(ec.replay.interval.lower == doctest::Approx(0.25));
    CHECK(ec.replay.interval.upper == doctest::Approx(0.75));
    CHECK(ec.replay.max_roundtrips == 5);
    CHECK(ec.replay.slow_cost == 80);
    CHECK(ec.replay.delay_enabled);
    CHECK(ec.replay.delay.threshold == doctest::Approx(0.2));
    CHECK(ec.replay.delay.sleep_time == 75);
    CHECK(ec.delay_targets_given);
    CHECK(ec.replay.delay.targeted.size() == 18);
    CHECK(ec.replay.delay.targeted.front().id == 1);
    CHECK(ec.trace_path == "t.tsv");
    CHECK(ec.report_path == "r.json");
    CHECK(ec.labels_path == "labels.tsv"); // untouched default

    CHECK_THROWS_AS(experiment_from_config(
                        KeyValueConfig::parse_string("replay.mode = sideways\n")),
                    ConfigError);
    CHECK_THROWS_AS(experiment_from_config(
                        KeyValueConfig::parse_string("replay.pipeline = tepid\n")),
                    ConfigError);
    CHECK_THROWS_AS(experiment_from_config(KeyValueConfig::parse_string("wat = 1\n")),
                    ConfigError);
}
