#include "cpl/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "cpl/errors.hpp"

namespace cpl {

double RegressionTree::predict(std::span<const double> x) const {
    std::size_t node = 0;
    while (!nodes[node].is_leaf()) {
        const auto& n = nodes[node];
        node = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right);
    }
    return nodes[node].value;
}

int RegressionTree::depth() const {
    std::vector<int> level(nodes.size(), 0);
    int deepest = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        deepest = std::max(deepest, level[i]);
        if (!nodes[i].is_leaf()) {
            level[static_cast<std::size_t>(nodes[i].left)] = level[i] + 1;
            level[static_cast<std::size_t>(nodes[i].right)] = level[i] + 1;
        }
    }
    return deepest;
}

std::vector<std::string> gbt_feature_names(bool with_frac) {
    const Schema& schema = Schema::instance();
    std::vector<std::string> names;
    for (std::size_t idx : schema.slot_fields()) {
        const auto& f = schema.fields()[idx];
        if (f.kind == FieldKind::numerical) names.push_back(f.name);
    }
    if (with_frac) names.push_back("frac");
    for (std::size_t idx : schema.slot_fields()) {
        const auto& f = schema.fields()[idx];
        if (f.kind != FieldKind::categorical) continue;
        for (const auto& v : f.vocabulary) names.push_back(f.name + "=" + v);
    }
    for (int b = 0; b < Schema::kExtraBuckets; ++b) names.push_back("extras[" + std::to_string(b) + "]");
    return names;
}

std::vector<double> gbt_features(const FeatureVector& fv, bool with_frac) {
    const Schema& schema = Schema::instance();
    const auto slots = schema.slot_fields();
    if (fv.slots.size() != slots.size()) throw ShapeError("gbt: feature vector does not match the schema");
    if (fv.frac.has_value() != with_frac) throw ShapeError("gbt: 'frac' presence does not match the forest");
    std::vector<double> row;
    for (std::size_t s = 0; s < slots.size(); ++s) {
        if (schema.fields()[slots[s]].kind == FieldKind::numerical) row.push_back(fv.slots[s].present ? fv.slots[s].value : kMissing);
    }
    if (with_frac) row.push_back(*fv.frac);
    for (std::size_t s = 0; s < slots.size(); ++s) {
        const auto& f = schema.fields()[slots[s]];
        if (f.kind != FieldKind::categorical) continue;
        for (std::size_t v = 0; v < f.vocabulary.size(); ++v) {
            row.push_back(fv.slots[s].present && fv.slots[s].category == static_cast<int>(v) ? 1.0 : 0.0);
        }
    }
    const std::size_t extras_start = row.size();
    row.resize(row.size() + Schema::kExtraBuckets, 0.0);
    for (const auto& e : fv.extras) row[extras_start + static_cast<std::size_t>(e.bucket)] += e.value;
    return row;
}

namespace {

struct NodeStats {
    std::size_t count = 0;
    double sum = 0.0;
    double sum_sq = 0.0;
};

struct SplitCandidate {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
};

double split_point(double lo, double hi) {
    const double mid = lo + 0.5 * (hi - lo);
    return lo < mid ? mid : hi;
}

// Grows one tree level by level. `sorted` holds row indices ordered by
// each feature's value.
RegressionTree grow_tree(const std::vector<std::vector<double>>& rows, const std::vector<double>& target,
                         const std::vector<std::vector<std::size_t>>& sorted, const std::vector<char>& usable,
                         const GbtParams& params) {
    const std::size_t n = rows.size();
    const std::size_t features = sorted.size();
    RegressionTree tree;
    tree.nodes.push_back({});
    std::vector<int> node_of(n, 0);
    std::vector<int> frontier{0};

    for (int depth = 0; !frontier.empty(); ++depth) {
        // Per-node totals and leaf values.
        std::vector<NodeStats> stats(tree.nodes.size());
        for (std::size_t r = 0; r < n; ++r) {
            auto& s = stats[static_cast<std::size_t>(node_of[r])];
            ++s.count;
            s.sum += target[r];
            s.sum_sq += target[r] * target[r];
        }
        for (int id : frontier) {
            const auto& s = stats[static_cast<std::size_t>(id)];
            tree.nodes[static_cast<std::size_t>(id)].value = s.count ? s.sum / static_cast<double>(s.count) : 0.0;
        }
        if (depth >= params.max_depth) break;

        std::vector<char> active(tree.nodes.size(), 0);
        for (int id : frontier) {
            if (stats[static_cast<std::size_t>(id)].count >= 2 * params.min_leaf) active[static_cast<std::size_t>(id)] = 1;
        }
        std::vector<SplitCandidate> best(tree.nodes.size());
        std::vector<std::size_t> left_count(tree.nodes.size());
        std::vector<double> left_sum(tree.nodes.size()), last(tree.nodes.size());
        std::vector<char> seen(tree.nodes.size());

        for (std::size_t f = 0; f < features; ++f) {
            if (!usable[f]) continue;
            std::fill(left_count.begin(), left_count.end(), 0);
            std::fill(left_sum.begin(), left_sum.end(), 0.0);
            std::fill(seen.begin(), seen.end(), 0);
            for (std::size_t r : sorted[f]) {
                const auto node = static_cast<std::size_t>(node_of[r]);
                if (!active[node]) continue;
                const double x = rows[r][f];
                if (seen[node] && x > last[node]) {
                    const auto& s = stats[node];
                    const std::size_t nl = left_count[node], nr = s.count - nl;
                    if (nl >= params.min_leaf && nr >= params.min_leaf) {
                        const double sl = left_sum[node], sr = s.sum - sl;
                        const double gain = sl * sl / static_cast<double>(nl) + sr * sr / static_cast<double>(nr) -
                                            s.sum * s.sum / static_cast<double>(s.count);
                        if (gain > best[node].gain) best[node] = {gain, static_cast<int>(f), split_point(last[node], x)};
                    }
                }
                ++left_count[node];
                left_sum[node] += target[r];
                last[node] = x;
                seen[node] = 1;
            }
        }

        std::vector<int> next;
        for (int id : frontier) {
            const auto node = static_cast<std::size_t>(id);
            const auto& s = stats[node];
            const double sse = s.sum_sq - s.sum * s.sum / std::max<double>(1.0, static_cast<double>(s.count));
            if (!active[node] || best[node].feature < 0 || !(best[node].gain > 1e-12 * std::max(sse, 1e-300))) continue;
            auto& nd = tree.nodes[node];
            nd.feature = best[node].feature;
            nd.threshold = best[node].threshold;
            nd.left = static_cast<int>(tree.nodes.size());
            nd.right = nd.left + 1;
            next.push_back(nd.left);
            next.push_back(nd.right);
            const double parent_value = nd.value;
            tree.nodes.push_back({-1, 0.0, -1, -1, parent_value});
            tree.nodes.push_back({-1, 0.0, -1, -1, parent_value});
        }
        for (std::size_t r = 0; r < n; ++r) {
            const auto& nd = tree.nodes[static_cast<std::size_t>(node_of[r])];
            if (!nd.is_leaf()) node_of[r] = rows[r][static_cast<std::size_t>(nd.feature)] < nd.threshold ? nd.left : nd.right;
        }
        frontier = std::move(next);
    }
    return tree;
}

}  // namespace

BoostedForest fit_gbt(const std::vector<std::vector<double>>& rows, std::span<const double> targets, const GbtParams& params) {
    if (rows.empty()) throw ArgumentError("fit_gbt: empty dataset");
    if (rows.size() != targets.size()) throw ArgumentError("fit_gbt: row and target counts differ");
    if (params.rounds < 0 || params.max_depth < 0 || !(params.learning_rate > 0.0 && params.learning_rate <= 1.0)) {
        throw ArgumentError("fit_gbt: invalid parameters");
    }
    if (rows.size() < 2 * std::max<std::size_t>(params.min_leaf, 1)) {
        throw ArgumentError("fit_gbt: need at least 2 * min_leaf examples");
    }
    const std::size_t n = rows.size();
    const std::size_t features = rows.front().size();
    for (const auto& r : rows) {
        if (r.size() != features) throw ShapeError("fit_gbt: ragged design rows");
    }

    std::vector<std::vector<std::size_t>> sorted(features, std::vector<std::size_t>(n));
    std::vector<char> usable(features, 0);
    for (std::size_t f = 0; f < features; ++f) {
        auto& idx = sorted[f];
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return rows[a][f] < rows[b][f]; });
        usable[f] = rows[idx.front()][f] < rows[idx.back()][f];
    }

    BoostedForest forest;
    forest.learning_rate = params.learning_rate;
    forest.feature_count = features;
    forest.base_score = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(n);

    std::vector<double> prediction(n, forest.base_score), residual(n);
    auto mse = [&] {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += (targets[i] - prediction[i]) * (targets[i] - prediction[i]);
        return total / static_cast<double>(n);
    };
    forest.train_mse.push_back(mse());
    for (int round = 0; round < params.rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) residual[i] = targets[i] - prediction[i];
        RegressionTree tree = grow_tree(rows, residual, sorted, usable, params);
        for (std::size_t i = 0; i < n; ++i) prediction[i] += params.learning_rate * tree.predict(rows[i]);
        forest.trees.push_back(std::move(tree));
        forest.train_mse.push_back(mse());
    }
    return forest;
}

BoostedForest fit_gbt(std::span<const TrainExample> examples, const GbtParams& params) {
    if (examples.empty()) throw ArgumentError("fit_gbt: empty dataset");
    const bool with_frac = examples.front().features.frac.has_value();
    std::vector<std::vector<double>> rows;
    std::vector<double> targets;
    for (const auto& e : examples) {
        rows.push_back(gbt_features(e.features, with_frac));
        targets.push_back(e.target);
    }
    return fit_gbt(rows, targets, params);
}

double predict_gbt(const BoostedForest& forest, std::span<const double> features) {
    if (features.size() != forest.feature_count) {
        throw ShapeError("predict_gbt: expected " + std::to_string(forest.feature_count) + " features, got " +
                         std::to_string(features.size()));
    }
    double total = 0.0;
    for (const auto& tree : forest.trees) total += tree.predict(features);
    return forest.base_score + forest.learning_rate * total;
}

double predict_gbt(const BoostedForest& forest, const FeatureVector& fv) {
    const bool with_frac = forest.feature_count == gbt_feature_names(true).size();
    return predict_gbt(forest, gbt_features(fv, with_frac));
}

namespace {

std::string exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string dump_forest(const BoostedForest& forest) {
    std::ostringstream out;
    out << "cpl-forest 1\n";
    out << "features " << forest.feature_count << "\n";
    out << "base_score " << exact(forest.base_score) << "\n";
    out << "learning_rate " << exact(forest.learning_rate) << "\n";
    out << "trees " << forest.trees.size() << "\n";
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
        const auto& tree = forest.trees[t];
        out << "tree " << t << " nodes " << tree.nodes.size() << "\n";
        for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
            const auto& nd = tree.nodes[i];
            if (nd.is_leaf()) {
                out << "  " << i << " leaf " << exact(nd.value) << "\n";
            } else {
                out << "  " << i << " split " << nd.feature << ' ' << exact(nd.threshold) << ' ' << nd.left << ' '
                    << nd.right << "\n";
            }
        }
    }
    return out.str();
}

BoostedForest parse_forest(const std::string& text) {
    std::istringstream in(text);
    auto expect = [&](const char* word) {
        std::string got;
        if (!(in >> got) || got != word) throw FormatError(std::string("forest: expected '") + word + "'");
    };
    BoostedForest forest;
    expect("cpl-forest");
    int version = 0;
    in >> version;
    if (version != 1) throw FormatError("forest: unsupported version");
    std::string v;
    expect("features");
    in >> forest.feature_count;
    expect("base_score");
    in >> v;
    forest.base_score = std::strtod(v.c_str(), nullptr);
    expect("learning_rate");
    in >> v;
    forest.learning_rate = std::strtod(v.c_str(), nullptr);
    expect("trees");
    std::size_t n_trees = 0;
    in >> n_trees;
    for (std::size_t t = 0; t < n_trees; ++t) {
        expect("tree");
        std::size_t index = 0, n_nodes = 0;
        in >> index;
        expect("nodes");
        in >> n_nodes;
        RegressionTree tree;
        tree.nodes.resize(n_nodes);
        for (std::size_t i = 0; i < n_nodes; ++i) {
            std::size_t id = 0;
            std::string kind;
            in >> id >> kind;
            if (id >= n_nodes) throw FormatError("forest: node id out of range");
            auto& nd = tree.nodes[id];
            if (kind == "leaf") {
                in >> v;
                nd.value = std::strtod(v.c_str(), nullptr);
            } else if (kind == "split") {
                in >> nd.feature >> v >> nd.left >> nd.right;
                nd.threshold = std::strtod(v.c_str(), nullptr);
                if (nd.feature < 0 || static_cast<std::size_t>(nd.feature) >= forest.feature_count ||
                    nd.left < 0 || nd.right < 0 || static_cast<std::size_t>(std::max(nd.left, nd.right)) >= n_nodes) {
                    throw FormatError("forest: malformed split node");
                }
            } else {
                throw FormatError("forest: unknown node kind '" + kind + "'");
            }
        }
        if (!in) throw FormatError("forest: truncated tree");
        forest.trees.push_back(std::move(tree));
    }
    return forest;
}

}  // namespace cpl
