#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "cpl/errors.hpp"
#include "cpl/lawfit.hpp"
#include "cpl/runio.hpp"
#include "cpl/synth.hpp"

using namespace cpl;

namespace {

RunConfig centred(const OracleParams& p, const std::string& optimizer, double N, double D) {
    return synthetic_config("synthetic", optimizer, N, D, oracle_optimal_lr(p, N, D), oracle_optimal_batch(p, D),
                            p.optimizers.at(optimizer).wd_center);
}

}  // namespace

TEST_CASE("oracle loss at the centre is the Chinchilla value") {
    const OracleParams p;
    const RunConfig c = centred(p, "adamw", 300, 16);
    CHECK(oracle_loss(p, c) == doctest::Approx(1.7 + 6.0 * std::pow(300.0, -0.35) + 1.2 * std::pow(16.0, -0.3)).epsilon(1e-14));
    CHECK(oracle_optimal_lr(p, 300, 16) == doctest::Approx(0.006 * std::pow(300.0, -0.4) * std::pow(16.0, 0.1)));
    CHECK(oracle_optimal_batch(p, 16) == doctest::Approx(400.0));
}

TEST_CASE("doubling lr with identity curvature adds (ln 2)^2") {
    OracleParams p;
    p.curvature = {1.0, 0.0, 1.0};
    RunConfig c = centred(p, "adamw", 240, 8);
    const double centre = oracle_loss(p, c);
    c.peak_lr *= 2.0;
    c.min_lr = *c.min_lr_ratio * c.peak_lr;
    CHECK(oracle_loss(p, c) - centre == doctest::Approx(std::log(2.0) * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("weight-decay centres favour the matching optimizer") {
    OracleParams p;
    p.optimizers["lion"].loss_offset = 0.0;
    RunConfig a = centred(p, "adamw", 300, 16);
    a.weight_decay = 0.6;
    RunConfig l = a;
    l.optimizer = "lion";
    CHECK(oracle_loss(p, l) < oracle_loss(p, a));
    a.weight_decay = l.weight_decay = 0.1;
    CHECK(oracle_loss(p, a) < oracle_loss(p, l));
    a.optimizer = "sgd";
    CHECK_THROWS_AS(oracle_loss(p, a), ArgumentError);
}

TEST_CASE("argmin over lr and batch is the analytic optimum") {
    const OracleParams p;
    const RunConfig c = centred(p, "lion", 1073, 32);
    const double centre = oracle_loss(p, c);
    for (double du : {-0.01, 0.01})
        for (double dv : {-0.01, 0.0, 0.01}) {
            RunConfig d = c;
            d.peak_lr *= std::exp(du);
            d.batch_size *= std::exp(dv);
            CHECK(oracle_loss(p, d) > centre);
        }
}

TEST_CASE("oracle parameter validation and JSON round trip") {
    OracleParams p;
    p.curvature = {0.1, 0.2, 0.1};
    CHECK_THROWS_AS(p.validate(), ArgumentError);
    p = OracleParams{};
    p.noise_sigma = -1.0;
    CHECK_THROWS_AS(p.validate(), ArgumentError);

    p = OracleParams{};
    p.optimizers["muon"] = {0.02, 0.3, 0.5};
    p.curve_exponent = 1.5;
    const OracleParams q = oracle_from_json(to_json(p));
    CHECK(to_json(q) == to_json(p));
    CHECK(q.optimizers.at("muon").wd_center == 0.3);
}

TEST_CASE("curves decrease to the final loss") {
    const OracleParams p;
    double prev = oracle_curve(p, 2.9, 0.0);
    CHECK(prev == doctest::Approx(4.9));
    for (int i = 1; i <= 100; ++i) {
        const double v = oracle_curve(p, 2.9, i / 100.0);
        CHECK(v <= prev);
        prev = v;
    }
    CHECK(oracle_curve(p, 2.9, 1.0) == 2.9);
}

TEST_CASE("architecture and synthetic configs") {
    const Architecture a = architecture_for(130);
    CHECK(a.num_layers == 8);
    CHECK(a.hidden_dim % 64 == 0);
    CHECK(a.num_heads * 64 == a.hidden_dim);
    CHECK(architecture_for(1073).num_layers > architecture_for(430).num_layers);
    const RunConfig c = synthetic_config("synthetic", "adamw", 300, 16, 1e-3, 512, 0.1);
    CHECK_NOTHROW(validate(c));
    CHECK(c.total_steps == std::llround(16e9 / (512.0 * 2048.0)));
}

TEST_CASE("generated runs") {
    OracleParams p;
    SweepDesign d = SweepDesign::standard();

    SUBCASE("standard design size and geometry") {
        const auto runs = generate_synthetic_runs(p, d, 7);
        CHECK(runs.size() == 3000);
        std::set<double> sizes;
        for (const auto& r : runs) sizes.insert(r.config.model_size_N);
        CHECK(sizes == std::set<double>{130, 180, 240, 300, 370, 430, 520, 1073});
    }

    d.samples_per_cell = 8;
    d.curve_points = 20;

    SUBCASE("noiseless runs record the oracle loss exactly") {
        p.noise_sigma = 0.0;
        const auto runs = generate_synthetic_runs(p, d, 1);
        for (const auto& r : runs) {
            CHECK(r.final_loss == oracle_loss(p, r.config));
            REQUIRE(r.curve.size() == 20);
            CHECK(r.curve.back().loss == r.final_loss);
            CHECK(r.curve.back().step == r.config.total_steps);
            for (std::size_t i = 1; i < r.curve.size(); ++i) {
                CHECK(r.curve[i].loss <= r.curve[i - 1].loss);
                CHECK(r.curve[i].step > r.curve[i - 1].step);
            }
        }
    }
    SUBCASE("every cell includes its centre configuration") {
        p.noise_sigma = 0.0;
        const auto runs = generate_synthetic_runs(p, d, 2);
        std::map<std::tuple<double, double, std::string>, double> best;
        for (const auto& r : runs) {
            auto key = std::tuple{r.config.model_size_N, r.config.data_size_D, r.config.optimizer};
            auto it = best.find(key);
            if (it == best.end() || r.final_loss < it->second) best[key] = r.final_loss;
        }
        for (const auto& [key, loss] : best) {
            const auto& [N, D, opt] = key;
            const double centre = oracle_chinchilla(p, N, D) + p.optimizers.at(opt).loss_offset;
            CHECK(loss == doctest::Approx(centre).epsilon(1e-12));
        }
    }
    SUBCASE("seeded output is byte-identical") {
        const auto a = generate_synthetic_runs(p, d, 5);
        const auto b = generate_synthetic_runs(p, d, 5);
        const auto c = generate_synthetic_runs(p, d, 6);
        CHECK(to_jsonl(a) == to_jsonl(b));
        CHECK(to_jsonl(a) != to_jsonl(c));
    }
    SUBCASE("noise has the configured spread") {
        const auto runs = generate_synthetic_runs(p, SweepDesign::standard(), 3);
        double ss = 0.0;
        for (const auto& r : runs) ss += std::pow(r.final_loss - oracle_loss(p, r.config), 2);
        CHECK(std::sqrt(ss / static_cast<double>(runs.size())) == doctest::Approx(0.005).epsilon(0.1));
    }
}

TEST_CASE("power laws recovered from the noiseless frontier") {
    OracleParams p;
    p.noise_sigma = 0.0;
    std::vector<FrontierPoint> frontier;
    for (double N : {130.0, 240.0, 430.0})
        for (double D : {4.0, 16.0, 32.0}) {
            const RunConfig c = centred(p, "adamw", N, D);
            frontier.push_back({N, D, oracle_loss(p, c), c, ""});
        }
    const PowerLawFit f = fit_power_law(frontier);
    CHECK(f.c == doctest::Approx(p.lr_c).epsilon(1e-8));
    CHECK(f.alpha_lr == doctest::Approx(p.lr_alpha).epsilon(1e-8));
    CHECK(f.beta_lr == doctest::Approx(p.lr_beta).epsilon(1e-8));
    CHECK(f.d == doctest::Approx(p.bs_d).epsilon(1e-8));
    CHECK(f.gamma_bs == doctest::Approx(p.bs_gamma).epsilon(1e-8));
}
