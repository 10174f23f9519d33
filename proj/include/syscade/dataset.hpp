#pragma once

#include <cstdint>
#include <vector>

#include "syscade/window.hpp"

namespace syscade {

// Normalized count of each vocabulary index inside one window's own gram
// stream (densities expanded). Length vocab_size; non-negative; sums to 1.
std::vector<double> frequency_features(const CompressedWindow& w, int vocab_size);

// Balances a labeled set by trimming the majority class down to the minority
// count: a seeded without-replacement sample of the majority class is kept,
// the minority class is kept whole. Returns the kept positions in ascending
// order. Throws TrainError when only one class is present.
std::vector<size_t> undersample_balanced(const std::vector<int>& labels, std::uint64_t seed);

// Drops unlabeled windows and splits the rest into (features, labels) for
// the classifiers. Labels are 0 = benign, 1 = malicious.
struct LabeledSet {
    std::vector<const CompressedWindow*> windows;
    std::vector<std::vector<double>> features;
    std::vector<int> labels;
};
LabeledSet make_labeled_set(const std::vector<CompressedWindow>& windows, int vocab_size);

} // namespace syscade
