#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cpl/config.hpp"

namespace cpl {

struct CurvePoint {
    std::int64_t step = 0;
    double loss = 0.0;

    bool operator==(const CurvePoint&) const = default;
};

// One pretraining run. When a curve is present it holds the smoothed
// training loss and final_loss equals its last value.
struct RunRecord {
    RunConfig config;
    std::vector<CurvePoint> curve;
    double final_loss = 0.0;
    bool finished = true;
    std::string run_id;

    bool operator==(const RunRecord&) const = default;
};

inline constexpr double kDefaultSmoothing = 0.99;

// Exponential moving average seeded with the first value.
std::vector<double> smooth_curve(std::span<const double> values, double coeff = kDefaultSmoothing);
std::vector<CurvePoint> smooth_curve(std::span<const CurvePoint> curve, double coeff = kDefaultSmoothing);

struct MalformedLine {
    std::size_t line = 0;
    std::string message;
};

struct ParseResult {
    std::vector<RunRecord> runs;
    std::vector<MalformedLine> malformed;
};

// Line-delimited JSON runs. Raw curves are smoothed (unless the record
// sets "curve_smoothed": true) and final_loss is taken from the smoothed
// tail. Throws IoError / FormatError (more than half the lines malformed).
ParseResult parse_runs(const std::filesystem::path& path, double smoothing = kDefaultSmoothing);
ParseResult parse_runs_text(const std::string& text, double smoothing = kDefaultSmoothing);

enum class RejectRule { unfinished, diverged_threshold, diverged_gap, unstable_slope };
const char* to_string(RejectRule rule);

struct FilterParams {
    double divergence_threshold = 4.0;
    double gap_threshold = 0.3;
    double slope_threshold = 0.001;
    double window_fraction = 0.05;
};

struct Rejection {
    RunRecord run;
    RejectRule rule;
    std::string detail;
};

struct FilterResult {
    std::vector<RunRecord> kept;
    std::vector<Rejection> rejected;

    std::map<RejectRule, std::size_t> counts() const;
};

// (N, D) key after rounding N to 0.1M and D to 0.1B.
struct SizeKey {
    std::int64_t n_tenths = 0;
    std::int64_t d_tenths = 0;
    auto operator<=>(const SizeKey&) const = default;
};
SizeKey size_key(const RunConfig& config);

// Largest average slope (delta loss / delta step) over windows of
// ceil(window_fraction * points) consecutive points; 0 for short curves.
double max_window_slope(std::span<const CurvePoint> curve, double window_fraction);

FilterResult filter_runs(std::span<const RunRecord> runs, const FilterParams& params = {});

struct SplitParams {
    double ood_threshold_N = 430.0;
    double ratio = 0.8;
    std::uint64_t seed = 0;
};

struct DatasetSplits {
    std::vector<RunRecord> train;
    std::vector<RunRecord> id_val;
    std::vector<RunRecord> ood_val;
    double ood_threshold_N = 430.0;
    std::uint64_t seed = 0;
};

DatasetSplits split_dataset(std::span<const RunRecord> runs, const SplitParams& params = {});

// Three manifest files (train.txt, id_val.txt, ood_val.txt) of run ids,
// each with a '#'-prefixed provenance header.
void write_split_manifests(const std::filesystem::path& dir, const DatasetSplits& splits,
                           const SplitParams& params, const std::map<RejectRule, std::size_t>& rejections);
// Rebuilds splits from manifests by run id; unknown ids raise FormatError.
DatasetSplits read_split_manifests(const std::filesystem::path& dir, std::span<const RunRecord> runs);

}  // namespace cpl
