#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpl/gbt.hpp"
#include "cpl/ingest.hpp"
#include "cpl/lawfit.hpp"
#include "cpl/regressor.hpp"
#include "cpl/select.hpp"

namespace cpl::cli {

struct AxisSpec {
    std::string field;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
    AxisScale scale = AxisScale::log;
};

// Everything a pipeline run depends on. Parsed from a JSON file; command
// line flags override file values; the resolved form is written next to
// every output.
struct PipelineConfig {
    std::string input;
    std::string output;
    std::string schema_version;

    FilterParams filter;
    double smoothing = kDefaultSmoothing;
    SplitParams split;

    bool per_optimizer = false;
    double huber_delta = 1e-3;

    std::string method = "ncpl";  // ncpl | gbt
    std::string target = "final_loss";  // final_loss | curve_point
    std::uint64_t train_seed = 0;
    ModelShape shape;
    TrainPlan plan = TrainPlan::desk_defaults();
    GbtParams gbt;
    std::size_t curve_points = 30;

    std::optional<double> sweep_N;
    std::optional<double> sweep_D;
    std::vector<AxisSpec> sweep_axes;  // empty: peak_lr and batch_size around the base config
    double near_frac = 0.01;
    std::size_t contour_resolution = 50;
    double contour_sigma = 1.0;

    std::optional<double> target_id_mae;  // reported against, never enforced
    std::optional<double> target_id_rho;
};

PipelineConfig pipeline_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PipelineConfig& config);

// "lo,hi,count" -> axis values
AxisSpec parse_axis(const std::string& field, const std::string& text, AxisScale scale);

}  // namespace cpl::cli
