#include "cpl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "cpl/errors.hpp"
#include "cpl/rng.hpp"

namespace cpl {

void OracleParams::validate() const {
    const auto [h00, h01, h11] = curvature;
    if (!(h00 > 0.0) || !(h00 * h11 - h01 * h01 > 0.0)) throw ArgumentError("oracle curvature must be positive definite");
    if (!(noise_sigma >= 0.0)) throw ArgumentError("oracle noise_sigma must be non-negative");
    if (optimizers.empty()) throw ArgumentError("oracle needs at least one optimizer");
}

nlohmann::json to_json(const OracleParams& p) {
    nlohmann::json j;
    j["chinchilla"] = {{"E", p.E}, {"A", p.A}, {"B", p.B}, {"alpha", p.alpha}, {"beta", p.beta}};
    j["lr_law"] = {{"c", p.lr_c}, {"alpha", p.lr_alpha}, {"beta", p.lr_beta}};
    j["bs_law"] = {{"d", p.bs_d}, {"gamma", p.bs_gamma}};
    j["curvature"] = {{p.curvature[0], p.curvature[1]}, {p.curvature[1], p.curvature[2]}};
    for (const auto& [name, e] : p.optimizers) {
        j["optimizer_effects"][name] = {{"loss_offset", e.loss_offset}, {"wd_center", e.wd_center}, {"wd_curvature", e.wd_curvature}};
    }
    j["noise_sigma"] = p.noise_sigma;
    j["curve_shape"] = {{"amplitude", p.curve_amplitude}, {"exponent", p.curve_exponent}};
    return j;
}

OracleParams oracle_from_json(const nlohmann::json& j) {
    OracleParams p;
    try {
        const auto& c = j.at("chinchilla");
        p.E = c.at("E");
        p.A = c.at("A");
        p.B = c.at("B");
        p.alpha = c.at("alpha");
        p.beta = c.at("beta");
        p.lr_c = j.at("lr_law").at("c");
        p.lr_alpha = j.at("lr_law").at("alpha");
        p.lr_beta = j.at("lr_law").at("beta");
        p.bs_d = j.at("bs_law").at("d");
        p.bs_gamma = j.at("bs_law").at("gamma");
        const auto& h = j.at("curvature");
        if (h.at(0).at(1) != h.at(1).at(0)) throw ArgumentError("oracle curvature must be symmetric");
        p.curvature = {h.at(0).at(0), h.at(0).at(1), h.at(1).at(1)};
        p.optimizers.clear();
        for (const auto& [name, e] : j.at("optimizer_effects").items()) {
            p.optimizers[name] = {e.at("loss_offset"), e.at("wd_center"), e.at("wd_curvature")};
        }
        p.noise_sigma = j.at("noise_sigma");
        p.curve_amplitude = j.at("curve_shape").at("amplitude");
        p.curve_exponent = j.at("curve_shape").at("exponent");
    } catch (const nlohmann::json::exception& e) {
        throw ArgumentError(std::string("malformed oracle parameters: ") + e.what());
    }
    p.validate();
    return p;
}

double oracle_chinchilla(const OracleParams& p, double N, double D) {
    return p.E + p.A / std::pow(N, p.alpha) + p.B / std::pow(D, p.beta);
}

double oracle_optimal_lr(const OracleParams& p, double N, double D) {
    return p.lr_c * std::pow(N, p.lr_alpha) * std::pow(D, p.lr_beta);
}

double oracle_optimal_batch(const OracleParams& p, double D) { return p.bs_d * std::pow(D, p.bs_gamma); }

double oracle_loss(const OracleParams& p, const RunConfig& c) {
    const auto it = p.optimizers.find(c.optimizer);
    if (it == p.optimizers.end()) throw ArgumentError("oracle has no effect for optimizer '" + c.optimizer + "'");
    const OptimizerEffect& eff = it->second;
    const double N = c.model_size_N, D = c.data_size_D;
    const double du = std::log(c.peak_lr) - std::log(oracle_optimal_lr(p, N, D));
    const double dv = std::log(c.batch_size) - std::log(oracle_optimal_batch(p, D));
    const double penalty = p.curvature[0] * du * du + 2.0 * p.curvature[1] * du * dv + p.curvature[2] * dv * dv;
    const double dw = c.weight_decay - eff.wd_center;
    return oracle_chinchilla(p, N, D) + penalty + eff.loss_offset + eff.wd_curvature * dw * dw;
}

double oracle_curve(const OracleParams& p, double final_loss, double frac) {
    return final_loss + p.curve_amplitude * std::pow(1.0 - std::clamp(frac, 0.0, 1.0), p.curve_exponent);
}

SweepDesign SweepDesign::standard() {
    SweepDesign d;
    for (double N : {130.0, 180.0, 240.0, 300.0, 370.0, 430.0}) {
        for (double D : {4.0, 8.0, 16.0, 32.0}) d.cells.emplace_back(N, D);
    }
    for (double N : {520.0, 1073.0}) {
        for (double D : {8.0, 16.0, 32.0}) d.cells.emplace_back(N, D);
    }
    for (int k = -4; k <= 4; ++k) {
        d.lr_multipliers.push_back(std::exp2(0.5 * k));
        d.batch_multipliers.push_back(std::exp2(0.5 * k));
    }
    d.weight_decays = {0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 1.0};
    return d;
}

Architecture architecture_for(double N) {
    Architecture a;
    a.num_layers = std::max(2, static_cast<int>(std::lround(8.0 + 6.0 * std::log2(N / 130.0))));
    const double width = std::sqrt(N * 1e6 / (12.0 * a.num_layers));
    a.hidden_dim = std::max(64, static_cast<int>(std::lround(width / 64.0)) * 64);
    a.num_heads = a.hidden_dim / 64;
    return a;
}

RunConfig synthetic_config(const std::string& source, const std::string& optimizer, double N, double D, double lr,
                           double batch_size, double weight_decay) {
    const Architecture arch = architecture_for(N);
    RunConfig c;
    c.source = source;
    c.model_size_N = N;
    c.num_layers = arch.num_layers;
    c.num_heads = arch.num_heads;
    c.hidden_dim = arch.hidden_dim;
    c.data_size_D = D;
    c.total_steps = std::max<std::int64_t>(1, std::llround(D * 1e9 / (batch_size * 2048.0)));
    c.optimizer = optimizer;
    c.peak_lr = lr;
    c.lr_schedule = "cosine";
    c.min_lr_ratio = 0.1;
    c.min_lr = 0.1 * lr;
    c.weight_decay = weight_decay;
    c.batch_size = batch_size;
    c.warmup = {0.01, WarmupUnit::ratio};
    c.max_grad_norm = 1.0;
    c.beta1 = 0.9;
    c.beta2 = 0.95;
    c.epsilon = 1e-8;
    validate(c);
    return c;
}

std::vector<RunRecord> generate_synthetic_runs(const OracleParams& params, const SweepDesign& design, std::uint64_t seed) {
    params.validate();
    if (design.cells.size() < 3) throw ArgumentError("synthetic design needs at least 3 (N, D) cells");
    if (design.lr_multipliers.empty() || design.batch_multipliers.empty() || design.weight_decays.empty() ||
        design.optimizers.empty()) {
        throw ArgumentError("synthetic design has an empty axis");
    }
    if (design.curve_points < 2) throw ArgumentError("synthetic design needs at least 2 curve points");

    Rng rng(seed);
    std::vector<RunRecord> runs;
    const std::size_t nl = design.lr_multipliers.size(), nb = design.batch_multipliers.size(),
                      nw = design.weight_decays.size();
    const std::size_t product = nl * nb * nw;

    auto nearest = [](const std::vector<double>& values, double target) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < values.size(); ++i) {
            if (std::abs(std::log(values[i] + 1e-12) - std::log(target + 1e-12)) <
                std::abs(std::log(values[best] + 1e-12) - std::log(target + 1e-12))) {
                best = i;
            }
        }
        return best;
    };

    for (const auto& [N, D] : design.cells) {
        const double lr_star = oracle_optimal_lr(params, N, D);
        const double bs_star = oracle_optimal_batch(params, D);
        for (const auto& opt : design.optimizers) {
            const auto eff = params.optimizers.find(opt);
            if (eff == params.optimizers.end()) throw ArgumentError("oracle has no effect for optimizer '" + opt + "'");
            const std::size_t centre = (nearest(design.lr_multipliers, 1.0) * nb + nearest(design.batch_multipliers, 1.0)) * nw +
                                       nearest(design.weight_decays, eff->second.wd_center);
            std::vector<std::size_t> picks(product);
            std::iota(picks.begin(), picks.end(), 0);
            if (design.samples_per_cell > 0 && design.samples_per_cell < product) {
                std::swap(picks[0], picks[centre]);
                rng.shuffle(std::span<std::size_t>(picks).subspan(1));
                picks.resize(design.samples_per_cell);
                std::sort(picks.begin(), picks.end());
            }
            for (std::size_t idx : picks) {
                const double lr = lr_star * design.lr_multipliers[idx / (nb * nw)];
                const double bs = bs_star * design.batch_multipliers[(idx / nw) % nb];
                const double wd = design.weight_decays[idx % nw];
                RunRecord r;
                r.config = synthetic_config(design.source, opt, N, D, lr, bs, wd);
                const double noise = params.noise_sigma > 0.0 ? params.noise_sigma * rng.normal() : 0.0;
                r.final_loss = oracle_loss(params, r.config) + noise;
                r.finished = true;
                const auto T = r.config.total_steps;
                for (std::size_t i = 1; i <= design.curve_points; ++i) {
                    const double frac = static_cast<double>(i) / static_cast<double>(design.curve_points);
                    const auto step = std::max<std::int64_t>(1, std::llround(frac * static_cast<double>(T)));
                    r.curve.push_back({step, oracle_curve(params, r.final_loss, frac)});
                }
                char id[32];
                std::snprintf(id, sizeof id, "syn-%05zu", runs.size());
                r.run_id = id;
                runs.push_back(std::move(r));
            }
        }
    }
    return runs;
}

}  // namespace cpl
