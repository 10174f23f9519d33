#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "syscade/window.hpp"

namespace syscade {

struct ForestConfig {
    int n_trees = 50;
    int max_depth = 12;
    int min_leaf = 2;       // smallest sample count allowed in a child
    std::uint64_t seed = 7;
};

// Axis-aligned split node. feature < 0 marks a leaf; interior nodes route
// x[feature] <= threshold to `left`, otherwise to `right`.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double malware_fraction = 0.0; // leaf payload, in [0, 1]

    bool is_leaf() const { return feature < 0; }
};

// Random forest over frequency features: bagged Gini trees with sqrt(F)
// candidate features per split, leaves storing malware fractions, prediction
// by averaging leaf fractions. Training balances classes first by
// under-sampling the majority class; bootstraps are stratified per class so
// every tree keeps that balance.
class RandomForest {
public:
    RandomForest() = default;

    // Deterministic in (X, y, cfg). X rows are feature vectors of equal
    // length; y entries are 0 (benign) or 1 (malicious). Throws TrainError
    // when only one class is present, ShapeError on ragged rows.
    static RandomForest train(const std::vector<std::vector<double>>& X,
                              const std::vector<int>& y, const ForestConfig& cfg);

    // Builds one tree from an explicit multiset of row indices. The result
    // depends only on the multiset of (X[row], y[row]) pairs and the seed,
    // never on row order — which makes training-order invariance directly
    // testable.
    static std::vector<TreeNode> train_tree(const std::vector<std::vector<double>>& X,
                                            const std::vector<int>& y,
                                            const std::vector<int>& rows,
                                            const ForestConfig& cfg,
                                            std::uint64_t feature_seed);

    // Mean of per-tree leaf malware fractions, in [0, 1]. Throws ShapeError
    // on a dimension mismatch, StateError if untrained.
    double predict(const std::vector<double>& x) const;

    int feature_count() const { return n_features_; }
    const std::vector<std::vector<TreeNode>>& trees() const { return trees_; }
    ForestConfig config() const { return cfg_; }

    // Used by serialization and tests that assemble forests by hand.
    static RandomForest from_parts(ForestConfig cfg, int n_features,
                                   std::vector<std::vector<TreeNode>> trees);

private:
    ForestConfig cfg_;
    int n_features_ = 0;
    std::vector<std::vector<TreeNode>> trees_;
};

// The fast path's complete deployable artifact: the forest plus the exact
// window geometry and vocabulary it was trained with.
struct FastModel {
    WindowConfig window_cfg;
    Vocabulary vocab{2};
    RandomForest forest;
};

std::string fast_model_to_json(const FastModel& m);
FastModel fast_model_from_json(const std::string& text);
void save_fast_model(const FastModel& m, const std::string& path);
FastModel load_fast_model(const std::string& path);

} // namespace syscade
