#pragma once

#include <array>
#include <compare>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpl/config.hpp"
#include "cpl/ingest.hpp"

namespace cpl {

// Which runs a fit covers: one source, optionally one optimizer.
struct Scope {
    std::string source;
    std::optional<std::string> optimizer;

    auto operator<=>(const Scope&) const = default;
    bool contains(const RunConfig& config) const;
    std::string label() const;
};

// loss(N, D) = E + A / N^alpha + B / D^beta, N in millions, D in billions.
struct ChinchillaFit {
    double E = 0.0;
    double A = 0.0;
    double B = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    Scope scope;
    double objective = 0.0;
    std::size_t points = 0;
};

// eta(N, D) = c N^alpha_lr D^beta_lr and batch(D) = d D^gamma_bs.
struct PowerLawFit {
    double c = 0.0;
    double alpha_lr = 0.0;
    double beta_lr = 0.0;
    double d = 0.0;
    double gamma_bs = 0.0;
    Scope scope;

    double optimal_lr(double N, double D) const;
    double optimal_batch(double D) const;
};

struct FrontierPoint {
    double N = 0.0;
    double D = 0.0;
    double best_loss = 0.0;
    RunConfig best_config;
    std::string run_id;
};

// Lowest-final-loss run per (N, D) within scope, ties broken by run_id.
std::vector<FrontierPoint> select_best_per_group(std::span<const RunRecord> runs, const Scope& scope);

struct ChinchillaFitOptions {
    double huber_delta = 1e-3;
    std::vector<double> exponent_grid{0.1, 0.3, 0.5, 0.7, 0.9};
    int coefficient_grid = 5;        // grid points per log-coefficient
    std::size_t descents = 256;      // descend from the best k grid starts; 0 = all
    int max_evaluations = 4000;
    double tolerance = 1e-14;
};

// Parameter vector (log E, log A, log B, alpha, beta).
using ChinchillaParams = std::array<double, 5>;

double chinchilla_log_prediction(const ChinchillaParams& p, double N, double D);
double chinchilla_objective(const ChinchillaParams& p, std::span<const FrontierPoint> points, double delta);
std::vector<ChinchillaParams> chinchilla_grid(std::span<const FrontierPoint> points, const ChinchillaFitOptions& opts);

// Throws FitError for fewer than 5 points, a single distinct N or D, or a
// non-finite objective at every start.
ChinchillaFit fit_chinchilla(std::span<const FrontierPoint> points, const ChinchillaFitOptions& opts = {});

double predict_chinchilla(const ChinchillaFit& fit, double N, double D);
double residual_target(double loss, const ChinchillaFit& fit, double N, double D);

PowerLawFit fit_power_law(std::span<const FrontierPoint> frontier);

struct NelderMeadOptions {
    int max_evaluations = 4000;
    double tolerance = 1e-14;
    std::vector<double> initial_step;
};

struct NelderMeadResult {
    std::vector<double> x;
    double value = 0.0;
    int evaluations = 0;
};

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double> x0,
                             const NelderMeadOptions& opts);

// Baselines keyed by scope; lookup prefers (source, optimizer) then source.
class BaselineSet {
public:
    void add(const ChinchillaFit& fit) { fits_[fit.scope] = fit; }
    const ChinchillaFit& lookup(const RunConfig& config) const;
    double predict(const RunConfig& config) const;
    bool empty() const { return fits_.empty(); }
    const std::map<Scope, ChinchillaFit>& fits() const { return fits_; }

private:
    std::map<Scope, ChinchillaFit> fits_;
};

// Fits one baseline per source (or per source and optimizer) on `runs`.
BaselineSet fit_baselines(std::span<const RunRecord> runs, bool per_optimizer,
                          const ChinchillaFitOptions& opts = {});

std::string format_fit(const ChinchillaFit& fit);
ChinchillaFit parse_chinchilla_fit(const std::string& text);
std::string format_fit(const PowerLawFit& fit);

}  // namespace cpl
