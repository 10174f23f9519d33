#include "syscade/forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "syscade/dataset.hpp"
#include "syscade/errors.hpp"
#include "syscade/rng.hpp"

namespace syscade {

namespace {

void check_forest_config(const ForestConfig& cfg) {
    if (cfg.n_trees < 1) throw ConfigError("forest needs at least one tree");
    if (cfg.max_depth < 0) throw ConfigError("max_depth must be non-negative");
    if (cfg.min_leaf < 1) throw ConfigError("min_leaf must be positive");
}

double gini(long n0, long n1) {
    const double n = static_cast<double>(n0 + n1);
    if (n == 0.0) return 0.0;
    const double p0 = n0 / n;
    const double p1 = n1 / n;
    return 1.0 - p0 * p0 - p1 * p1;
}

struct BestSplit {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

// Split search over the node's row multiset. Only integer class counts at
// distinct-value boundaries enter the arithmetic, so the outcome is
// independent of row order. Features are visited in a seeded permutation;
// the search stops once mtry usable features (ones admitting a
// min_leaf-respecting threshold) have been examined and a positive gain
// exists.
BestSplit find_split(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                     const std::vector<int>& rows, int min_leaf, int mtry, Rng& rng) {
    const int n_features = static_cast<int>(X[0].size());
    std::vector<int> order(n_features);
    for (int f = 0; f < n_features; ++f) order[f] = f;
    for (int i = 0; i < n_features - 1; ++i) {
        const int j = i + static_cast<int>(rng.uniform_int(n_features - i));
        std::swap(order[i], order[j]);
    }

    const long n = static_cast<long>(rows.size());
    long total1 = 0;
    for (int r : rows) total1 += y[r];
    const long total0 = n - total1;
    const double parent = gini(total0, total1);

    BestSplit best;
    std::vector<std::pair<double, int>> vals(rows.size());
    int usable = 0;
    for (int f : order) {
        for (size_t i = 0; i < rows.size(); ++i) {
            vals[i] = {X[rows[i]][f], y[rows[i]]};
        }
        std::sort(vals.begin(), vals.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        bool feature_usable = false;
        long left0 = 0, left1 = 0;
        for (long i = 0; i + 1 < n; ++i) {
            (vals[i].second ? left1 : left0) += 1;
            if (vals[i + 1].first <= vals[i].first) continue;
            const long nl = i + 1, nr = n - nl;
            if (nl < min_leaf || nr < min_leaf) continue;
            feature_usable = true;
            const double child = (nl * gini(left0, left1) +
                                  nr * gini(total0 - left0, total1 - left1)) / n;
            const double gain = parent - child;
            if (gain > best.gain) {
                best = {f, 0.5 * (vals[i].first + vals[i + 1].first), gain};
            }
        }
        if (feature_usable) ++usable;
        if (usable >= mtry && best.gain > 0.0) break;
    }
    return best;
}

void grow(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
          std::vector<int> rows, int depth, const ForestConfig& cfg, int mtry, Rng& rng,
          std::vector<TreeNode>& nodes, int slot) {
    long n1 = 0;
    for (int r : rows) n1 += y[r];
    const long n = static_cast<long>(rows.size());
    nodes[slot].malware_fraction = static_cast<double>(n1) / static_cast<double>(n);

    const bool pure = (n1 == 0 || n1 == n);
    if (pure || depth >= cfg.max_depth || n < 2L * cfg.min_leaf) return;

    const BestSplit best = find_split(X, y, rows, cfg.min_leaf, mtry, rng);
    if (best.feature < 0 || best.gain <= 0.0) return;

    std::vector<int> left_rows, right_rows;
    for (int r : rows) {
        (X[r][best.feature] <= best.threshold ? left_rows : right_rows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    nodes[slot].feature = best.feature;
    nodes[slot].threshold = best.threshold;
    nodes[slot].left = static_cast<int>(nodes.size());
    nodes.emplace_back();
    nodes[slot].right = static_cast<int>(nodes.size());
    nodes.emplace_back();
    grow(X, y, std::move(left_rows), depth + 1, cfg, mtry, rng, nodes, nodes[slot].left);
    grow(X, y, std::move(right_rows), depth + 1, cfg, mtry, rng, nodes, nodes[slot].right);
}

} // namespace

std::vector<TreeNode> RandomForest::train_tree(const std::vector<std::vector<double>>& X,
                                               const std::vector<int>& y,
                                               const std::vector<int>& rows,
                                               const ForestConfig& cfg,
                                               std::uint64_t feature_seed) {
    check_forest_config(cfg);
    if (rows.empty()) throw TrainError("cannot grow a tree from zero rows");
    const int mtry = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(X[0].size()))));
    Rng rng(feature_seed);
    std::vector<TreeNode> nodes(1);
    grow(X, y, rows, 0, cfg, mtry, rng, nodes, 0);
    return nodes;
}

RandomForest RandomForest::train(const std::vector<std::vector<double>>& X,
                                 const std::vector<int>& y, const ForestConfig& cfg) {
    check_forest_config(cfg);
    if (X.empty() || X.size() != y.size()) {
        throw TrainError("feature matrix and label vector sizes must match and be non-empty");
    }
    const size_t width = X[0].size();
    for (const auto& row : X) {
        if (row.size() != width) throw ShapeError("ragged feature matrix");
    }
    for (int label : y) {
        if (label != 0 && label != 1) throw TrainError("labels must be 0 or 1");
    }

    // Bootstraps are drawn per class so each tree keeps the 1:1 balance the
    // under-sampling established.
    const std::vector<size_t> kept = undersample_balanced(y, cfg.seed);
    std::vector<size_t> kept0, kept1;
    for (size_t k : kept) (y[k] == 1 ? kept1 : kept0).push_back(k);

    RandomForest model;
    model.cfg_ = cfg;
    model.n_features_ = static_cast<int>(width);
    model.trees_.reserve(cfg.n_trees);
    for (int t = 0; t < cfg.n_trees; ++t) {
        Rng boot(derive_seed(cfg.seed, 0x7000 + static_cast<std::uint64_t>(t)));
        std::vector<int> rows;
        rows.reserve(kept.size());
        for (size_t i = 0; i < kept0.size(); ++i) {
            rows.push_back(static_cast<int>(kept0[boot.uniform_int(kept0.size())]));
        }
        for (size_t i = 0; i < kept1.size(); ++i) {
            rows.push_back(static_cast<int>(kept1[boot.uniform_int(kept1.size())]));
        }
        model.trees_.push_back(
            train_tree(X, y, rows, cfg, derive_seed(cfg.seed, 0xF000 + static_cast<std::uint64_t>(t))));
    }
    return model;
}

double RandomForest::predict(const std::vector<double>& x) const {
    if (trees_.empty()) throw StateError("forest has not been trained");
    if (static_cast<int>(x.size()) != n_features_) {
        throw ShapeError("feature vector length does not match training width");
    }
    double sum = 0.0;
    for (const auto& tree : trees_) {
        int node = 0;
        while (!tree[node].is_leaf()) {
            node = x[tree[node].feature] <= tree[node].threshold ? tree[node].left
                                                                 : tree[node].right;
        }
        sum += tree[node].malware_fraction;
    }
    return sum / static_cast<double>(trees_.size());
}

RandomForest RandomForest::from_parts(ForestConfig cfg, int n_features,
                                      std::vector<std::vector<TreeNode>> trees) {
    RandomForest model;
    model.cfg_ = cfg;
    model.n_features_ = n_features;
    model.trees_ = std::move(trees);
    return model;
}

std::string fast_model_to_json(const FastModel& m) {
    nlohmann::json j;
    j["format"] = "fast-model";
    j["version"] = 1;
    j["window"] = nlohmann::json::parse(window_config_to_json(m.window_cfg));
    j["vocab"] = nlohmann::json::parse(vocabulary_to_json(m.vocab));
    nlohmann::json jf;
    const ForestConfig cfg = m.forest.config();
    jf["n_trees"] = cfg.n_trees;
    jf["max_depth"] = cfg.max_depth;
    jf["min_leaf"] = cfg.min_leaf;
    jf["seed"] = cfg.seed;
    jf["n_features"] = m.forest.feature_count();
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& tree : m.forest.trees()) {
        nlohmann::json jt = nlohmann::json::array();
        for (const auto& node : tree) {
            jt.push_back({node.feature, node.threshold, node.left, node.right,
                          node.malware_fraction});
        }
        trees.push_back(std::move(jt));
    }
    jf["trees"] = std::move(trees);
    j["forest"] = std::move(jf);
    return j.dump();
}

FastModel fast_model_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ParseError("fast model: invalid JSON");
    try {
        if (j.at("format").get<std::string>() != "fast-model") {
            throw ParseError("fast model: unexpected format tag");
        }
        FastModel m;
        m.window_cfg = window_config_from_json(j.at("window").dump());
        m.vocab = vocabulary_from_json(j.at("vocab").dump());
        const auto& jf = j.at("forest");
        ForestConfig cfg;
        cfg.n_trees = jf.at("n_trees").get<int>();
        cfg.max_depth = jf.at("max_depth").get<int>();
        cfg.min_leaf = jf.at("min_leaf").get<int>();
        cfg.seed = jf.at("seed").get<std::uint64_t>();
        std::vector<std::vector<TreeNode>> trees;
        for (const auto& jt : jf.at("trees")) {
            std::vector<TreeNode> tree;
            for (const auto& jn : jt) {
                TreeNode node;
                node.feature = jn.at(0).get<int>();
                node.threshold = jn.at(1).get<double>();
                node.left = jn.at(2).get<int>();
                node.right = jn.at(3).get<int>();
                node.malware_fraction = jn.at(4).get<double>();
                tree.push_back(node);
            }
            trees.push_back(std::move(tree));
        }
        m.forest = RandomForest::from_parts(cfg, jf.at("n_features").get<int>(),
                                            std::move(trees));
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("fast model: ") + e.what());
    }
}

void save_fast_model(const FastModel& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open model file for writing: " + path);
    out << fast_model_to_json(m) << '\n';
}

FastModel load_fast_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open model file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return fast_model_from_json(ss.str());
}

} // namespace syscade
