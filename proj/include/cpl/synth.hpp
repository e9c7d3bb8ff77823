#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cpl/config.hpp"
#include "cpl/ingest.hpp"

namespace cpl {

struct OptimizerEffect {
    double loss_offset = 0.0;
    double wd_center = 0.1;
    double wd_curvature = 0.3;
};

struct OracleParams {
    double E = 1.7, A = 6.0, B = 1.2, alpha = 0.35, beta = 0.3;
    // lr* = c N^alpha_lr D^beta_lr, bs* = d D^gamma
    double lr_c = 0.006, lr_alpha = -0.4, lr_beta = 0.1;
    double bs_d = 100.0, bs_gamma = 0.5;
    // Penalty dxᵀ H dx, dx = (log lr − log lr*, log bs − log bs*).
    std::array<double, 3> curvature = {0.08, 0.02, 0.04};  // H00, H01, H11
    std::map<std::string, OptimizerEffect> optimizers = {
        {"adamw", {0.0, 0.1, 0.3}},
        {"lion", {0.01, 0.6, 0.3}},
    };
    double noise_sigma = 0.005;
    double curve_amplitude = 2.0;  // L(0+) − L_final
    double curve_exponent = 2.0;

    // Throws ArgumentError unless the curvature is positive definite and sigma >= 0.
    void validate() const;
};

nlohmann::json to_json(const OracleParams& p);
OracleParams oracle_from_json(const nlohmann::json& j);

double oracle_chinchilla(const OracleParams& p, double N, double D);
double oracle_optimal_lr(const OracleParams& p, double N, double D);
double oracle_optimal_batch(const OracleParams& p, double D);
double oracle_loss(const OracleParams& p, const RunConfig& config);
// Loss at a fraction of training along the synthetic curve ending at final_loss.
double oracle_curve(const OracleParams& p, double final_loss, double frac);

struct SweepDesign {
    std::vector<std::pair<double, double>> cells;  // (N, D)
    std::vector<std::string> optimizers = {"adamw", "lion"};
    std::vector<double> lr_multipliers;
    std::vector<double> batch_multipliers;
    std::vector<double> weight_decays;
    std::size_t samples_per_cell = 50;  // per optimizer; 0 = full product
    std::size_t curve_points = 100;
    std::string source = "synthetic";

    // ~3000 runs: six ID sizes up to 430M, OOD sizes 520M and 1073M.
    static SweepDesign standard();
};

// Layer count, width and heads for a model of N million parameters.
struct Architecture {
    int num_layers = 0;
    int hidden_dim = 0;
    int num_heads = 0;
};
Architecture architecture_for(double N);

// A valid configuration at (N, D) with the given knobs; total_steps holds
// D tokens at a 2048-token sequence length.
RunConfig synthetic_config(const std::string& source, const std::string& optimizer, double N, double D, double lr,
                           double batch_size, double weight_decay);

std::vector<RunRecord> generate_synthetic_runs(const OracleParams& params, const SweepDesign& design, std::uint64_t seed);

}  // namespace cpl
