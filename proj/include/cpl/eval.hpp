#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpl/ingest.hpp"
#include "cpl/predictor.hpp"

namespace cpl {

struct Metrics {
    double mae = 0.0;
    double rmse = 0.0;
    std::optional<double> spearman_rho;  // empty when a rank vector is constant
    std::size_t n = 0;
};

// 1-based ranks; tied values share the average of their positions.
std::vector<double> average_ranks(std::span<const double> values);
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);
Metrics compute_metrics(std::span<const double> pred, std::span<const double> truth);

Metrics evaluate_split(const BatchPredictor& predictor, std::span<const RunRecord> split);

struct ReportRow {
    std::string dataset;
    std::string split;
    std::string method;
    Metrics metrics;
};

// Tab-separated table, one row per (dataset, split, method).
std::string format_report(std::span<const ReportRow> rows);

struct ContourOptions {
    std::size_t resolution = 50;
    double smoothing_sigma = 1.0;  // in grid cells; 0 disables the blur
};

// Thin-plate spline in (log lr, log batch) with an affine tail.
class ThinPlateSpline {
public:
    ThinPlateSpline(std::span<const double> x, std::span<const double> y, std::span<const double> z);
    double operator()(double x, double y) const;

private:
    std::vector<double> x_, y_, w_;
    double a0_ = 0.0, ax_ = 0.0, ay_ = 0.0;
};

struct ContourGrid {
    std::vector<double> log_lr;     // x axis, ascending
    std::vector<double> log_batch;  // y axis, ascending
    std::vector<double> z;          // row-major: z[iy * log_lr.size() + ix]

    double at(std::size_t ix, std::size_t iy) const { return z[iy * log_lr.size() + ix]; }
};

ContourGrid interpolate_surface(std::span<const SurfaceSample> samples, std::size_t resolution);
ContourGrid gaussian_blur(const ContourGrid& grid, double sigma);
ContourGrid export_contour_data(std::span<const SurfaceSample> samples, const ContourOptions& options = {});

// "log_lr\tlog_batch\tloss" rows.
std::string format_contour(const ContourGrid& grid);

}  // namespace cpl
