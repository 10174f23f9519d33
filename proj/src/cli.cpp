#include "syscade/cli.hpp"

#include <exception>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "syscade/dataset.hpp"
#include "syscade/delay.hpp"
#include "syscade/errors.hpp"
#include "syscade/metrics.hpp"

namespace syscade {
namespace {

const std::set<std::string> kKnownKeys = {
    "generator.alphabet_size", "generator.n_benign", "generator.n_malicious",
    "generator.events_per_process_mean", "generator.benign_rate_per_ms",
    "generator.malicious_rate_per_ms", "generator.behavior_seed", "generator.separability",
    "generator.repeat_burst",

    "window.size", "window.stride", "window.gram_order", "window.exclude_self",
    "window.raw_sys_counts",

    "forest.trees", "forest.max_depth", "forest.min_leaf", "forest.seed",

    "deep.embed_dim", "deep.conv_channels", "deep.kernel_sizes", "deep.atrous_dilations",
    "deep.atrous_kernel", "deep.lstm_layers", "deep.lstm_hidden", "deep.fc_sizes",
    "deep.max_seq_len", "deep.seed", "deep.epochs", "deep.batch_size", "deep.learning_rate",
    "deep.momentum", "deep.train_seed",

    "replay.mode", "replay.pipeline", "replay.duration_ms", "replay.observe_only",
    "replay.interval_lower", "replay.interval_upper", "replay.max_roundtrips",
    "replay.fast_cost_ms", "replay.slow_cost_ms",

    "delay.enabled", "delay.threshold", "delay.sleep_ms", "delay.seed", "delay.targets",

    "paths.trace", "paths.labels", "paths.fast_model", "paths.slow_model", "paths.report",
    "paths.per_process_csv", "paths.verdicts",
};

std::vector<int> parse_int_list(const std::string& text, const std::string& key) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(item, &used);
            while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used])))
                ++used;
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': '" + item +
                              "' is not an integer list entry");
        }
    }
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

Mode mode_from_string(const std::string& s) {
    if (s == "offline") return Mode::Offline;
    if (s == "online" || s == "on-the-fly") return Mode::OnTheFly;
    throw ConfigError("replay.mode must be 'offline' or 'online', got '" + s + "'");
}

Pipeline pipeline_from_string(const std::string& s) {
    if (s == "fast-only") return Pipeline::FastOnly;
    if (s == "slow-only") return Pipeline::SlowOnly;
    if (s == "hybrid") return Pipeline::Hybrid;
    throw ConfigError("replay.pipeline must be 'fast-only', 'slow-only' or 'hybrid', got '" + s +
                      "'");
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw ConfigError("failed writing '" + path + "'");
}

struct BalancedSet {
    std::vector<const CompressedWindow*> windows;
    std::vector<int> labels;
};

// Windowed, labeled, class-balanced training material from a trace.
BalancedSet training_windows(const std::vector<CompressedWindow>& windows, int vocab_size,
                             std::uint64_t balance_seed, LabeledSet& set) {
    set = make_labeled_set(windows, vocab_size);
    if (set.labels.empty()) throw TrainError("no labeled windows to train on");
    BalancedSet bal;
    for (std::size_t idx : undersample_balanced(set.labels, balance_seed)) {
        bal.windows.push_back(set.windows[idx]);
        bal.labels.push_back(set.labels[idx]);
    }
    return bal;
}

int cmd_generate(const ExperimentConfig& ec) {
    const GeneratedTrace gt = generate_trace(ec.generator);
    write_trace_file(gt.log, ec.trace_path);
    write_labels_file(gt.labels, ec.labels_path);
    std::cout << "generated " << gt.log.events.size() << " events from " << gt.labels.size()
              << " processes -> " << ec.trace_path << ", " << ec.labels_path << "\n";
    return 0;
}

int cmd_train_fast(const ExperimentConfig& ec) {
    const TraceLog log = read_trace_file(ec.trace_path, ec.generator.alphabet_size);
    const std::vector<ProcessLabel> labels = read_labels_file(ec.labels_path);
    const Vocabulary vocab = Vocabulary::build(log, ec.window.gram_order);
    EmitResult er = emit_windows(log, ec.window, vocab);
    attach_labels(er.windows, labels);

    const LabeledSet set = make_labeled_set(er.windows, vocab.size());
    if (set.labels.empty()) throw TrainError("no labeled windows to train on");
    FastModel model;
    model.window_cfg = ec.window;
    model.vocab = vocab;
    model.forest = RandomForest::train(set.features, set.labels, ec.forest);
    save_fast_model(model, ec.fast_model_path);
    std::cout << "trained forest on " << set.labels.size() << " windows (vocab " << vocab.size()
              << ", " << ec.forest.n_trees << " trees) -> " << ec.fast_model_path << "\n";
    return 0;
}

int cmd_train_slow(const ExperimentConfig& ec) {
    const TraceLog log = read_trace_file(ec.trace_path, ec.generator.alphabet_size);
    const std::vector<ProcessLabel> labels = read_labels_file(ec.labels_path);
    const Vocabulary vocab = Vocabulary::build(log, ec.window.gram_order);
    EmitResult er = emit_windows(log, ec.window, vocab);
    attach_labels(er.windows, labels);

    LabeledSet set;
    const BalancedSet bal = training_windows(er.windows, vocab.size(), ec.deep_train.seed, set);

    deep::DeepConfig dc = ec.deep;
    dc.vocab_size = vocab.size();
    deep::SlowModel model;
    model.window_cfg = ec.window;
    model.vocab = vocab;
    model.net = deep::deep_init(dc);
    const std::vector<double> curve = deep::deep_train(model.net, bal.windows, bal.labels,
                                                       ec.deep_train);
    save_slow_model(model, ec.slow_model_path);
    std::cout << "trained sequence model on " << bal.labels.size() << " balanced windows, loss "
              << curve.front() << " -> " << curve.back() << " over " << curve.size()
              << " epochs -> " << ec.slow_model_path << "\n";
    return 0;
}

int cmd_replay(const ExperimentConfig& ec) {
    const TraceLog log = read_trace_file(ec.trace_path, ec.generator.alphabet_size);
    const std::vector<ProcessLabel> labels = read_labels_file(ec.labels_path);

    ReplayConfig rc = ec.replay;
    if (rc.delay_enabled && !ec.delay_targets_given)
        rc.delay.targeted = default_targeted_syscalls(log.alphabet_size);

    const bool need_fast = rc.pipeline != Pipeline::SlowOnly;
    const bool need_slow = rc.pipeline != Pipeline::FastOnly;
    FastModel fast;
    deep::SlowModel slow;
    if (need_fast) fast = load_fast_model(ec.fast_model_path);
    if (need_slow) slow = deep::load_slow_model(ec.slow_model_path);

    const ReplayResult result =
        replay(log, need_fast ? &fast : nullptr, need_slow ? &slow : nullptr, rc);
    const ExperimentReport report = make_report(result, labels, log, rc);

    write_text_file(ec.report_path, report_to_json(report));
    write_text_file(ec.csv_path, per_process_csv(result.verdicts, labels, rc.duration,
                                                 process_start_times(log)));
    write_verdicts_file(result.verdicts, ec.verdicts_path);
    std::cout << "replayed " << result.windows_processed << " windows: tp=" << report.tp
              << " fp=" << report.fp << " tn=" << report.tn << " fn=" << report.fn
              << " f1=" << report.f1 << " -> " << ec.report_path << "\n";
    return 0;
}

int cmd_report(const ExperimentConfig& ec) {
    const std::vector<Verdict> verdicts = read_verdicts_file(ec.verdicts_path);
    const std::vector<ProcessLabel> labels = read_labels_file(ec.labels_path);
    std::map<Pid, VirtualMs> starts;
    {
        std::ifstream probe(ec.trace_path);
        if (probe.good())
            starts = process_start_times(read_trace_file(ec.trace_path,
                                                         ec.generator.alphabet_size));
    }
    const ExperimentReport report =
        compute_metrics(verdicts, labels, ec.replay.duration, starts);
    write_text_file(ec.report_path, report_to_json(report));
    write_text_file(ec.csv_path,
                    per_process_csv(verdicts, labels, ec.replay.duration, starts));
    std::cout << "reported " << verdicts.size() << " verdicts: f1=" << report.f1 << " -> "
              << ec.report_path << "\n";
    return 0;
}

} // namespace

ExperimentConfig experiment_from_config(const KeyValueConfig& kv) {
    kv.check_known_keys(kKnownKeys);
    ExperimentConfig ec;

    GeneratorConfig& g = ec.generator;
    g.alphabet_size = static_cast<int>(kv.get_int("generator.alphabet_size", g.alphabet_size));
    g.n_benign = static_cast<int>(kv.get_int("generator.n_benign", g.n_benign));
    g.n_malicious = static_cast<int>(kv.get_int("generator.n_malicious", g.n_malicious));
    g.events_per_process_mean =
        kv.get_double("generator.events_per_process_mean", g.events_per_process_mean);
    g.benign_rate_per_ms = kv.get_double("generator.benign_rate_per_ms", g.benign_rate_per_ms);
    g.malicious_rate_per_ms =
        kv.get_double("generator.malicious_rate_per_ms", g.malicious_rate_per_ms);
    g.behavior_seed = kv.get_uint64("generator.behavior_seed", g.behavior_seed);
    g.separability = kv.get_double("generator.separability", g.separability);
    g.repeat_burst = kv.get_double("generator.repeat_burst", g.repeat_burst);

    WindowConfig& w = ec.window;
    w.window_size = static_cast<int>(kv.get_int("window.size", w.window_size));
    w.stride = static_cast<int>(kv.get_int("window.stride", w.stride));
    w.gram_order = static_cast<int>(kv.get_int("window.gram_order", w.gram_order));
    w.exclude_self = kv.get_bool("window.exclude_self", w.exclude_self);
    w.raw_sys_counts = kv.get_bool("window.raw_sys_counts", w.raw_sys_counts);

    ForestConfig& f = ec.forest;
    f.n_trees = static_cast<int>(kv.get_int("forest.trees", f.n_trees));
    f.max_depth = static_cast<int>(kv.get_int("forest.max_depth", f.max_depth));
    f.min_leaf = static_cast<int>(kv.get_int("forest.min_leaf", f.min_leaf));
    f.seed = kv.get_uint64("forest.seed", f.seed);

    deep::DeepConfig& d = ec.deep;
    d.embed_dim = static_cast<int>(kv.get_int("deep.embed_dim", d.embed_dim));
    d.conv_channels = static_cast<int>(kv.get_int("deep.conv_channels", d.conv_channels));
    if (kv.has("deep.kernel_sizes"))
        d.kernel_sizes = parse_int_list(kv.require_string("deep.kernel_sizes"),
                                        "deep.kernel_sizes");
    if (kv.has("deep.atrous_dilations"))
        d.atrous_dilations = parse_int_list(kv.require_string("deep.atrous_dilations"),
                                            "deep.atrous_dilations");
    d.atrous_kernel = static_cast<int>(kv.get_int("deep.atrous_kernel", d.atrous_kernel));
    d.lstm_layers = static_cast<int>(kv.get_int("deep.lstm_layers", d.lstm_layers));
    d.lstm_hidden = static_cast<int>(kv.get_int("deep.lstm_hidden", d.lstm_hidden));
    if (kv.has("deep.fc_sizes"))
        d.fc_sizes = parse_int_list(kv.require_string("deep.fc_sizes"), "deep.fc_sizes");
    d.max_seq_len = static_cast<int>(kv.get_int("deep.max_seq_len", d.max_seq_len));
    d.seed = kv.get_uint64("deep.seed", d.seed);

    deep::DeepTrainConfig& t = ec.deep_train;
    t.epochs = static_cast<int>(kv.get_int("deep.epochs", t.epochs));
    t.batch_size = static_cast<int>(kv.get_int("deep.batch_size", t.batch_size));
    t.lr = kv.get_double("deep.learning_rate", t.lr);
    t.momentum = kv.get_double("deep.momentum", t.momentum);
    t.seed = kv.get_uint64("deep.train_seed", t.seed);

    ReplayConfig& r = ec.replay;
    r.mode = mode_from_string(kv.get_string("replay.mode", "offline"));
    r.pipeline = pipeline_from_string(kv.get_string("replay.pipeline", "hybrid"));
    r.duration = kv.get_int("replay.duration_ms", r.duration);
    r.observe_only = kv.get_bool("replay.observe_only", r.observe_only);
    r.interval.lower = kv.get_double("replay.interval_lower", r.interval.lower);
    r.interval.upper = kv.get_double("replay.interval_upper", r.interval.upper);
    r.max_roundtrips = static_cast<int>(kv.get_int("replay.max_roundtrips", r.max_roundtrips));
    r.fast_cost = kv.get_int("replay.fast_cost_ms", r.fast_cost);
    r.slow_cost = kv.get_int("replay.slow_cost_ms", r.slow_cost);

    r.delay_enabled = kv.get_bool("delay.enabled", false);
    r.delay.threshold = kv.get_double("delay.threshold", r.delay.threshold);
    r.delay.sleep_time = kv.get_int("delay.sleep_ms", r.delay.sleep_time);
    r.delay.rng_seed = kv.get_uint64("delay.seed", r.delay.rng_seed);
    if (kv.has("delay.targets")) {
        ec.delay_targets_given = true;
        const std::vector<int> ids = parse_int_list(kv.require_string("delay.targets"),
                                                    "delay.targets");
        r.delay.targeted.clear();
        constexpr SyscallCategory cats[] = {SyscallCategory::File, SyscallCategory::Memory,
                                            SyscallCategory::ProcessCreation,
                                            SyscallCategory::Network};
        for (std::size_t i = 0; i < ids.size(); ++i)
            r.delay.targeted.push_back({ids[i], cats[i % 4]});
    }

    ec.trace_path = kv.get_string("paths.trace", ec.trace_path);
    ec.labels_path = kv.get_string("paths.labels", ec.labels_path);
    ec.fast_model_path = kv.get_string("paths.fast_model", ec.fast_model_path);
    ec.slow_model_path = kv.get_string("paths.slow_model", ec.slow_model_path);
    ec.report_path = kv.get_string("paths.report", ec.report_path);
    ec.csv_path = kv.get_string("paths.per_process_csv", ec.csv_path);
    ec.verdicts_path = kv.get_string("paths.verdicts", ec.verdicts_path);
    return ec;
}

ExperimentConfig experiment_from_file(const std::string& path) {
    return experiment_from_config(KeyValueConfig::parse_file(path));
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"two-stage system-call stream malware detection harness"};
    app.require_subcommand(1);

    struct SubArgs {
        std::string config;
        std::string trace, labels, fast_model, slow_model, report, csv, verdicts, mode;
    };

    auto add_common = [](CLI::App* cmd, SubArgs& a) {
        cmd->add_option("--config", a.config, "experiment key=value file")->required();
        cmd->add_option("--trace", a.trace, "override paths.trace");
        cmd->add_option("--labels", a.labels, "override paths.labels");
    };

    SubArgs gen_a, tf_a, ts_a, rp_a, re_a;
    CLI::App* gen = app.add_subcommand("generate", "synthesize a labeled trace");
    add_common(gen, gen_a);

    CLI::App* tf = app.add_subcommand("train-fast", "train the triage forest");
    add_common(tf, tf_a);
    tf->add_option("--out", tf_a.fast_model, "override paths.fast_model");

    CLI::App* ts = app.add_subcommand("train-slow", "train the deep sequence model");
    add_common(ts, ts_a);
    ts->add_option("--out", ts_a.slow_model, "override paths.slow_model");

    CLI::App* rp = app.add_subcommand("replay", "run a detection experiment over a trace");
    add_common(rp, rp_a);
    rp->add_option("--mode", rp_a.mode, "offline|online (overrides replay.mode)");
    rp->add_option("--fast-model", rp_a.fast_model, "override paths.fast_model");
    rp->add_option("--slow-model", rp_a.slow_model, "override paths.slow_model");
    rp->add_option("--report", rp_a.report, "override paths.report");
    rp->add_option("--csv", rp_a.csv, "override paths.per_process_csv");
    rp->add_option("--verdicts", rp_a.verdicts, "override paths.verdicts");

    CLI::App* re = app.add_subcommand("report", "recompute metrics from a verdict log");
    add_common(re, re_a);
    re->add_option("--verdicts", re_a.verdicts, "override paths.verdicts");
    re->add_option("--report", re_a.report, "override paths.report");
    re->add_option("--csv", re_a.csv, "override paths.per_process_csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        auto load = [](SubArgs& a) {
            ExperimentConfig ec = experiment_from_file(a.config);
            if (!a.trace.empty()) ec.trace_path = a.trace;
            if (!a.labels.empty()) ec.labels_path = a.labels;
            if (!a.fast_model.empty()) ec.fast_model_path = a.fast_model;
            if (!a.slow_model.empty()) ec.slow_model_path = a.slow_model;
            if (!a.report.empty()) ec.report_path = a.report;
            if (!a.csv.empty()) ec.csv_path = a.csv;
            if (!a.verdicts.empty()) ec.verdicts_path = a.verdicts;
            if (!a.mode.empty()) ec.replay.mode = mode_from_string(a.mode);
            return ec;
        };
        if (gen->parsed()) return cmd_generate(load(gen_a));
        if (tf->parsed()) return cmd_train_fast(load(tf_a));
        if (ts->parsed()) return cmd_train_slow(load(ts_a));
        if (rp->parsed()) return cmd_replay(load(rp_a));
        if (re->parsed()) return cmd_report(load(re_a));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace syscade
