#include "syscade/dataset.hpp"

#include <algorithm>

#include "syscade/errors.hpp"
#include "syscade/rng.hpp"

namespace syscade {

std::vector<double> frequency_features(const CompressedWindow& w, int vocab_size) {
    std::vector<double> freq(vocab_size, 0.0);
    double total = 0.0;
    for (size_t i = 0; i < w.ngram_seq.size(); ++i) {
        const int idx = w.ngram_seq[i];
        if (idx < 0 || idx >= vocab_size) {
            throw DataError("window gram index outside vocabulary");
        }
        freq[idx] += w.density_seq[i];
        total += w.density_seq[i];
    }
    if (total > 0.0) {
        for (auto& f : freq) f /= total;
    }
    return freq;
}

std::vector<size_t> undersample_balanced(const std::vector<int>& labels, std::uint64_t seed) {
    std::vector<size_t> pos;
    std::vector<size_t> neg;
    for (size_t i = 0; i < labels.size(); ++i) {
        (labels[i] ? pos : neg).push_back(i);
    }
    if (pos.empty() || neg.empty()) {
        throw TrainError("training set must contain both classes");
    }
    auto& majority = pos.size() > neg.size() ? pos : neg;
    const size_t keep = std::min(pos.size(), neg.size());
    Rng rng(derive_seed(seed, 0xBA1A));
    // Partial Fisher-Yates: the first `keep` slots become a uniform
    // without-replacement sample.
    for (size_t i = 0; i < keep; ++i) {
        const size_t j = i + rng.uniform_int(majority.size() - i);
        std::swap(majority[i], majority[j]);
    }
    majority.resize(keep);
    std::vector<size_t> kept;
    kept.reserve(2 * keep);
    kept.insert(kept.end(), pos.begin(), pos.end());
    kept.insert(kept.end(), neg.begin(), neg.end());
    std::sort(kept.begin(), kept.end());
    return kept;
}

LabeledSet make_labeled_set(const std::vector<CompressedWindow>& windows, int vocab_size) {
    LabeledSet set;
    for (const auto& w : windows) {
        if (!w.label) continue;
        set.windows.push_back(&w);
        set.features.push_back(frequency_features(w, vocab_size));
        set.labels.push_back(*w.label == Label::Malicious ? 1 : 0);
    }
    return set;
}

} // namespace syscade
