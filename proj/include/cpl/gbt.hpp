#pragma once

#include <span>
#include <string>
#include <vector>

#include "cpl/config.hpp"
#include "cpl/regressor.hpp"

namespace cpl {

struct GbtParams {
    int rounds = 1000;
    int max_depth = 4;
    double learning_rate = 0.1;
    std::size_t min_leaf = 5;
};

// Internal nodes send x[feature] < threshold left; leaves have feature -1.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;

    bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    double predict(std::span<const double> x) const;
    int depth() const;
};

struct BoostedForest {
    std::vector<RegressionTree> trees;
    double learning_rate = 0.1;
    double base_score = 0.0;
    std::size_t feature_count = 0;
    std::vector<double> train_mse;  // after 0, 1, ..., rounds trees
};

// Flat design row: numerical slots (absent -> kMissing), the fraction when
// requested, one indicator per categorical vocabulary entry, and one
// summed-value column per extras bucket.
inline constexpr double kMissing = -1e30;
std::vector<double> gbt_features(const FeatureVector& fv, bool with_frac);
std::vector<std::string> gbt_feature_names(bool with_frac);

// Squared-error boosting with exact greedy, depth-limited trees.
BoostedForest fit_gbt(const std::vector<std::vector<double>>& rows, std::span<const double> targets,
                      const GbtParams& params = {});
BoostedForest fit_gbt(std::span<const TrainExample> examples, const GbtParams& params = {});

double predict_gbt(const BoostedForest& forest, std::span<const double> features);
double predict_gbt(const BoostedForest& forest, const FeatureVector& fv);

std::string dump_forest(const BoostedForest& forest);
BoostedForest parse_forest(const std::string& text);

}  // namespace cpl
