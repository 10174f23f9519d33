#pragma once

// Shared fixtures for the test suites: small trace recipes, quick model
// trainers, and evaluation helpers. Everything here is deterministic.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "syscade/dataset.hpp"
#include "syscade/deep/model.hpp"
#include "syscade/forest.hpp"
#include "syscade/trace.hpp"
#include "syscade/window.hpp"

namespace testutil {

inline syscade::GeneratorConfig small_gen(std::uint64_t seed, double separability,
                                          int procs_per_class = 4, double events = 500.0,
                                          int alphabet = 20) {
    syscade::GeneratorConfig g;
    g.alphabet_size = alphabet;
    g.n_benign = procs_per_class;
    g.n_malicious = procs_per_class;
    g.events_per_process_mean = events;
    g.behavior_seed = seed;
    g.separability = separability;
    return g;
}

inline syscade::WindowConfig small_windows(int size = 40, int stride = 20) {
    syscade::WindowConfig w;
    w.window_size = size;
    w.stride = stride;
    return w;
}

struct Corpus {
    syscade::TraceLog log;
    std::vector<syscade::ProcessLabel> labels;
    syscade::Vocabulary vocab{2};
    std::vector<syscade::CompressedWindow> windows; // labeled
    int unfilled = 0;
};

// Generates a trace and turns it into labeled windows with a fresh
// vocabulary built from the same trace.
inline Corpus make_corpus(const syscade::GeneratorConfig& g, const syscade::WindowConfig& w) {
    Corpus c;
    syscade::GeneratedTrace gt = syscade::generate_trace(g);
    c.log = std::move(gt.log);
    c.labels = std::move(gt.labels);
    c.vocab = syscade::Vocabulary::build(c.log, w.gram_order);
    syscade::EmitResult er = syscade::emit_windows(c.log, w, c.vocab);
    c.windows = std::move(er.windows);
    c.unfilled = er.unfilled_process_count;
    syscade::attach_labels(c.windows, c.labels);
    return c;
}

// Disjoint train/eval process populations drawn from one generation, so both
// sides share the same class behavior but no individual process appears on
// both sides. This is the deployment situation for accuracy measurements:
// models score processes they have never seen.
struct Split {
    Corpus train;
    Corpus eval;
};

inline Split make_split(std::uint64_t seed, double separability, int train_per_class,
                        int eval_per_class, double events, const syscade::WindowConfig& w,
                        int alphabet = 20) {
    syscade::GeneratorConfig g =
        small_gen(seed, separability, train_per_class + eval_per_class, events, alphabet);
    syscade::GeneratedTrace gt = syscade::generate_trace(g);
    // pids 1..n_benign are benign, the rest malicious; the first
    // train_per_class of each class train, the remainder evaluate.
    const auto is_train_pid = [&](syscade::Pid pid) {
        const int within_class = pid <= g.n_benign ? pid : pid - g.n_benign;
        return within_class <= train_per_class;
    };
    Split s;
    s.train.log.alphabet_size = s.eval.log.alphabet_size = g.alphabet_size;
    for (const auto& ev : gt.log.events)
        (is_train_pid(ev.pid) ? s.train.log : s.eval.log).events.push_back(ev);
    for (const auto& pl : gt.labels)
        (is_train_pid(pl.pid) ? s.train.labels : s.eval.labels).push_back(pl);
    s.train.vocab = syscade::Vocabulary::build(s.train.log, w.gram_order);
    s.eval.vocab = s.train.vocab;
    for (Corpus* c : {&s.train, &s.eval}) {
        syscade::EmitResult er = syscade::emit_windows(c->log, w, s.train.vocab);
        c->windows = std::move(er.windows);
        c->unfilled = er.unfilled_process_count;
        syscade::attach_labels(c->windows, c->labels);
    }
    return s;
}

inline syscade::FastModel train_fast_on(const Corpus& c, const syscade::WindowConfig& w,
                                        syscade::ForestConfig fc = {}) {
    const syscade::LabeledSet set = syscade::make_labeled_set(c.windows, c.vocab.size());
    syscade::FastModel m;
    m.window_cfg = w;
    m.vocab = c.vocab;
    m.forest = syscade::RandomForest::train(set.features, set.labels, fc);
    return m;
}

inline syscade::deep::SlowModel train_slow_on(const Corpus& c, const syscade::WindowConfig& w,
                                              syscade::deep::DeepConfig dc,
                                              syscade::deep::DeepTrainConfig tc) {
    syscade::LabeledSet set = syscade::make_labeled_set(c.windows, c.vocab.size());
    std::vector<const syscade::CompressedWindow*> bw;
    std::vector<int> bl;
    for (std::size_t i : syscade::undersample_balanced(set.labels, tc.seed)) {
        bw.push_back(set.windows[i]);
        bl.push_back(set.labels[i]);
    }
    dc.vocab_size = c.vocab.size();
    syscade::deep::SlowModel m;
    m.window_cfg = w;
    m.vocab = c.vocab;
    m.net = syscade::deep::deep_init(dc);
    syscade::deep::deep_train(m.net, bw, bl, tc);
    return m;
}

// Fraction of labeled windows whose thresholded score matches the label.
template <class Scorer>
double window_accuracy(const std::vector<syscade::CompressedWindow>& ws, Scorer&& score) {
    long correct = 0, total = 0;
    for (const auto& w : ws) {
        if (!w.label) continue;
        ++total;
        const int truth = *w.label == syscade::Label::Malicious ? 1 : 0;
        const int pred = score(w) >= 0.5 ? 1 : 0;
        if (pred == truth) ++correct;
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

// Rank-based AUC (probability a malicious window outscores a benign one,
// ties counted half).
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    long pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    return pairs == 0 ? 0.5 : wins / static_cast<double>(pairs);
}

} // namespace testutil
