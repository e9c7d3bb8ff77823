#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpl/config.hpp"
#include "cpl/predictor.hpp"

namespace cpl {

enum class AxisScale { linear, log };

struct SweepAxis {
    std::string field;
    std::vector<double> values;
    AxisScale scale = AxisScale::log;
};

struct SweepGrid {
    RunConfig base_config;
    std::vector<SweepAxis> axes;

    std::size_t size() const;
    // Throws SweepError for empty or duplicate axes.
    void validate() const;
    // Configuration at a mixed-radix grid index (first axis slowest).
    RunConfig config_at(std::size_t index) const;

    static std::vector<double> log_spaced(double lo, double hi, std::size_t count);
    static std::vector<double> linear_spaced(double lo, double hi, std::size_t count);
};

// Applies a batch size while holding the token budget: total_steps (and a
// step-count warmup) scale inversely with the batch.
void apply_batch_size(RunConfig& config, double batch_size);
// Moves a configuration to (N, D) holding tokens per step fixed.
RunConfig at_scale(RunConfig config, double N, double D);

struct SurfacePoint {
    RunConfig config;
    double loss = 0.0;
    std::size_t grid_index = 0;
};

struct SkippedPoint {
    std::size_t grid_index = 0;
    std::string reason;
};

struct SweepResult {
    std::vector<SurfacePoint> surface;  // ascending loss, ties by grid index
    std::vector<SkippedPoint> skipped;
};

SweepResult sweep(const BatchPredictor& predictor, const SweepGrid& grid);

enum class RefineStatus { refined, too_few_points, not_positive_definite, rejected_by_predictor, no_lr_batch_axes };
const char* to_string(RefineStatus status);

struct RefinedOptimum {
    double lr = 0.0;
    double batch = 0.0;
    RefineStatus status = RefineStatus::too_few_points;
    std::size_t points_used = 0;
};

// Least-squares quadratic in (log lr, log batch) over samples within
// near_frac of the minimum loss; its vertex if positive definite,
// otherwise the best sample.
RefinedOptimum refine_optimum(std::span<const SurfaceSample> surface, double near_frac = 0.01);

struct FieldConstraint {
    std::string field;
    std::string value;
};

struct Recommendation {
    RunConfig best_grid_config;
    double best_grid_loss = 0.0;
    RefinedOptimum refined;
    RunConfig recommended_config;
    double recommended_loss = 0.0;
    double relative_loss = 0.0;  // (recommended - grid minimum) / grid minimum, predicted
    std::vector<SurfacePoint> predicted_surface;
    std::vector<SkippedPoint> skipped;
};

Recommendation recommend(const BatchPredictor& predictor, double N, double D, SweepGrid grid,
                         std::span<const FieldConstraint> constraints = {}, double near_frac = 0.01);

// Samples on the (peak_lr, batch_size) slice through the best surface
// point: every other axis held at its best value.
std::vector<SurfaceSample> lr_batch_slice(std::span<const SurfacePoint> surface, const SweepGrid& grid);

std::string format_surface(std::span<const SurfacePoint> surface);
std::string format_recommendation(const Recommendation& rec);

}  // namespace cpl
