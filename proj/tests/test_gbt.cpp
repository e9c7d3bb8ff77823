#include <doctest.h>

#include <cmath>
#include <limits>

#include "cpl/errors.hpp"
#include "cpl/gbt.hpp"
#include "cpl/rng.hpp"
#include "support.hpp"

using namespace cpl;

namespace {

double sse(const std::vector<double>& y) {
    if (y.empty()) return 0.0;
    double m = 0.0;
    for (double v : y) m += v;
    m /= static_cast<double>(y.size());
    double s = 0.0;
    for (double v : y) s += (v - m) * (v - m);
    return s;
}

// Lowest SSE over every (feature, threshold) split with at least
// `min_leaf` rows on each side.
double best_split_sse(const std::vector<std::vector<double>>& rows, const std::vector<double>& y, std::size_t min_leaf) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < rows.front().size(); ++f) {
        for (const auto& candidate : rows) {
            const double t = candidate[f];
            std::vector<double> left, right;
            for (std::size_t i = 0; i < rows.size(); ++i) (rows[i][f] < t ? left : right).push_back(y[i]);
            if (left.size() < min_leaf || right.size() < min_leaf) continue;
            best = std::min(best, sse(left) + sse(right));
        }
    }
    return best;
}

}  // namespace

TEST_CASE("zero rounds predict the base score") {
    const std::vector<std::vector<double>> rows{{0.0}, {1.0}, {2.0}, {3.0}};
    const std::vector<double> y{1.0, 2.0, 3.0, 6.0};
    GbtParams p;
    p.rounds = 0;
    p.min_leaf = 1;
    const BoostedForest f = fit_gbt(rows, y, p);
    CHECK(f.trees.empty());
    CHECK(f.base_score == doctest::Approx(3.0));
    for (double x : {-5.0, 0.5, 100.0}) CHECK(predict_gbt(f, std::vector<double>{x}) == f.base_score);

    BoostedForest empty;
    empty.base_score = 0.25;
    empty.feature_count = 2;
    CHECK(predict_gbt(empty, std::vector<double>{1.0, 2.0}) == 0.25);
}

TEST_CASE("one threshold separates the data exactly") {
    std::vector<std::vector<double>> rows;
    std::vector<double> y;
    for (int i = 0; i < 10; ++i) {
        rows.push_back({static_cast<double>(i)});
        y.push_back(i < 4 ? 1.0 : 3.0);
    }
    const GbtParams p{1, 1, 1.0, 1};
    const BoostedForest f = fit_gbt(rows, y, p);
    REQUIRE(f.trees.size() == 1);
    const TreeNode& root = f.trees[0].nodes[0];
    CHECK(root.feature == 0);
    CHECK(root.threshold > 3.0);
    CHECK(root.threshold <= 4.0);
    for (std::size_t i = 0; i < rows.size(); ++i) CHECK(predict_gbt(f, rows[i]) == doctest::Approx(y[i]).epsilon(1e-14));
    CHECK(f.train_mse.back() < 1e-28);
}

TEST_CASE("chosen split minimizes SSE over all thresholds") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::vector<double>> rows;
        std::vector<double> y;
        for (int i = 0; i < 30; ++i) {
            rows.push_back({std::floor(rng.uniform() * 12.0), rng.uniform(), std::floor(rng.uniform() * 3.0)});
            y.push_back(std::sin(3.0 * rows.back()[1]) + 0.2 * rows.back()[0] + 0.3 * rng.normal());
        }
        const std::size_t min_leaf = 1 + static_cast<std::size_t>(trial % 4);
        const BoostedForest f = fit_gbt(rows, y, GbtParams{1, 1, 1.0, min_leaf});
        const TreeNode& root = f.trees[0].nodes[0];
        REQUIRE(!root.is_leaf());
        std::vector<double> left, right;
        for (std::size_t i = 0; i < rows.size(); ++i)
            (rows[i][static_cast<std::size_t>(root.feature)] < root.threshold ? left : right).push_back(y[i]);
        CHECK(left.size() >= min_leaf);
        CHECK(right.size() >= min_leaf);
        CHECK(sse(left) + sse(right) == doctest::Approx(best_split_sse(rows, y, min_leaf)).epsilon(1e-10));
    }
}

TEST_CASE("split ties go to the lowest feature") {
    std::vector<std::vector<double>> rows;
    std::vector<double> y;
    for (int i = 0; i < 12; ++i) {
        rows.push_back({static_cast<double>(i % 5), static_cast<double>(i), static_cast<double>(i)});
        y.push_back(i < 6 ? 0.0 : 1.0);
    }
    const BoostedForest f = fit_gbt(rows, y, GbtParams{1, 1, 1.0, 1});
    CHECK(f.trees[0].nodes[0].feature == 1);
}

TEST_CASE("training error never increases and depth is bounded") {
    Rng rng(8);
    std::vector<std::vector<double>> rows;
    std::vector<double> y;
    for (int i = 0; i < 200; ++i) {
        const double a = rng.uniform(), b = rng.uniform();
        rows.push_back({a, b, rng.uniform()});
        y.push_back(a * b + std::cos(4.0 * a) + 0.05 * rng.normal());
    }
    for (int depth : {1, 2, 3, 5}) {
        const GbtParams p{40, depth, 0.3, 5};
        const BoostedForest f = fit_gbt(rows, y, p);
        REQUIRE(f.train_mse.size() == 41);
        for (std::size_t r = 1; r < f.train_mse.size(); ++r) CHECK(f.train_mse[r] <= f.train_mse[r - 1] + 1e-15);
        for (const auto& t : f.trees) {
            CHECK(t.depth() <= depth);
            // Every leaf holds at least min_leaf rows.
            std::vector<std::size_t> count(t.nodes.size(), 0);
            for (const auto& row : rows) {
                std::size_t node = 0;
                while (!t.nodes[node].is_leaf()) {
                    const auto& nd = t.nodes[node];
                    node = static_cast<std::size_t>(row[static_cast<std::size_t>(nd.feature)] < nd.threshold ? nd.left : nd.right);
                }
                ++count[node];
            }
            for (std::size_t k = 0; k < t.nodes.size(); ++k)
                if (t.nodes[k].is_leaf()) CHECK(count[k] >= 5);
        }
        CHECK(f.train_mse.back() < f.train_mse.front());
    }
}

TEST_CASE("hand-built stump walks to the right leaf") {
    BoostedForest f;
    f.feature_count = 2;
    f.learning_rate = 1.0;
    RegressionTree t;
    t.nodes = {{1, 0.5, 1, 2, 0.0}, {-1, 0.0, -1, -1, -0.1}, {-1, 0.0, -1, -1, 0.1}};
    f.trees.push_back(t);
    CHECK(predict_gbt(f, std::vector<double>{9.0, 0.2}) == -0.1);
    CHECK(predict_gbt(f, std::vector<double>{-9.0, 0.5}) == 0.1);
    CHECK(predict_gbt(f, std::vector<double>{0.0, 0.7}) == 0.1);
    CHECK_THROWS_AS(predict_gbt(f, std::vector<double>{0.0}), ShapeError);
}

TEST_CASE("forest text round trip and determinism") {
    Rng rng(12);
    std::vector<std::vector<double>> rows;
    std::vector<double> y;
    for (int i = 0; i < 80; ++i) {
        rows.push_back({rng.uniform(), rng.uniform()});
        y.push_back(rows.back()[0] - 2.0 * rows.back()[1] * rows.back()[1]);
    }
    const GbtParams p{25, 3, 0.2, 3};
    const BoostedForest a = fit_gbt(rows, y, p);
    const BoostedForest b = fit_gbt(rows, y, p);
    const std::string text = dump_forest(a);
    CHECK(dump_forest(b) == text);
    const BoostedForest c = parse_forest(text);
    CHECK(dump_forest(c) == text);
    for (const auto& r : rows) CHECK(predict_gbt(c, r) == predict_gbt(a, r));
    CHECK_THROWS(parse_forest("garbage"));
}

TEST_CASE("argument checks") {
    const std::vector<std::vector<double>> none;
    CHECK_THROWS_AS(fit_gbt(none, std::vector<double>{}), ArgumentError);
    const std::vector<std::vector<double>> few{{1.0}, {2.0}, {3.0}};
    CHECK_THROWS_AS(fit_gbt(few, std::vector<double>{1, 2, 3}, GbtParams{1, 1, 1.0, 2}), ArgumentError);
    CHECK_THROWS_AS(fit_gbt(std::span<const TrainExample>{}), ArgumentError);
}

TEST_CASE("design rows from feature vectors") {
    const FeatureVector fv = canonicalize(testing::sample_config());
    const auto row = gbt_features(fv, false);
    CHECK(row.size() == gbt_feature_names(false).size());
    CHECK(gbt_features(canonicalize(testing::sample_config(), 0.5), true).size() == gbt_feature_names(true).size());
    const auto names = gbt_feature_names(false);
    const auto at = [&](const std::string& n) {
        return row[static_cast<std::size_t>(std::find(names.begin(), names.end(), n) - names.begin())];
    };
    CHECK(at("muon_adam_lr") == kMissing);
    CHECK(at("optimizer=adamw") == 1.0);
    CHECK(at("optimizer=lion") == 0.0);
    CHECK_THROWS_AS(gbt_features(fv, true), ShapeError);

    std::vector<TrainExample> ex;
    for (int i = 0; i < 12; ++i) {
        auto c = testing::sample_config();
        c.peak_lr = 1e-4 * (i + 1);
        ex.push_back({canonicalize(c), i < 6 ? -0.05 : 0.05});
    }
    const BoostedForest f = fit_gbt(ex, GbtParams{1, 1, 1.0, 2});
    CHECK(predict_gbt(f, ex[0].features) == doctest::Approx(-0.05));
    CHECK(predict_gbt(f, ex[11].features) == doctest::Approx(0.05));
}
