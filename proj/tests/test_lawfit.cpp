#include <doctest.h>

#include <cmath>
#include <set>

#include "cpl/errors.hpp"
#include "cpl/lawfit.hpp"
#include "support.hpp"

using namespace cpl;
using testing::make_run;

namespace {

double law(double E, double A, double B, double a, double b, double N, double D) {
    return E + A * std::pow(N, -a) + B * std::pow(D, -b);
}

std::vector<FrontierPoint> law_points(double E, double A, double B, double a, double b) {
    std::vector<FrontierPoint> pts;
    for (double N : {100.0, 150.0, 220.0, 300.0, 400.0}) {
        for (double D : {2.0, 6.0, 15.0, 40.0}) pts.push_back({N, D, law(E, A, B, a, b, N, D), {}, ""});
    }
    return pts;
}

}  // namespace

TEST_CASE("closed-form prediction") {
    ChinchillaFit f{1.8, 300, 410, 0.34, 0.28, {}, 0, 0};
    // 268^0.34 = exp(0.34 ln 268), 25^0.28 = exp(0.28 ln 25)
    const double n_term = 300.0 / std::exp(0.34 * std::log(268.0));
    const double d_term = 410.0 / std::exp(0.28 * std::log(25.0));
    CHECK(predict_chinchilla(f, 268, 25) == doctest::Approx(1.8 + n_term + d_term).epsilon(1e-13));
    CHECK(n_term == doctest::Approx(44.82863).epsilon(1e-6));
    CHECK(d_term == doctest::Approx(166.47946).epsilon(1e-6));

    ChinchillaFit flat{2.0, 0, 0, 0.5, 0.5, {}, 0, 0};
    CHECK(predict_chinchilla(flat, 7, 9) == 2.0);
    ChinchillaFit one{0, 10, 0, 1.0, 0.5, {}, 0, 0};
    CHECK(predict_chinchilla(one, 20, 1) == doctest::Approx(predict_chinchilla(one, 10, 1) / 2));
    CHECK(predict_chinchilla(f, 300, 25) < predict_chinchilla(f, 268, 25));
    CHECK(predict_chinchilla(f, 268, 30) < predict_chinchilla(f, 268, 25));
    CHECK_THROWS_AS(predict_chinchilla(f, 0, 25), ArgumentError);
    CHECK_THROWS_AS(predict_chinchilla(f, 268, -1), ArgumentError);
}

TEST_CASE("residual target") {
    ChinchillaFit f{1.8, 300, 410, 0.34, 0.28, {}, 0, 0};
    const double base = predict_chinchilla(f, 268, 25);
    CHECK(residual_target(base, f, 268, 25) == 0.0);
    CHECK(residual_target(base + 0.1, f, 268, 25) == doctest::Approx(0.1));
    const double P = 3.14159;
    CHECK(residual_target(P, f, 268, 25) + base == doctest::Approx(P).epsilon(1e-14));
}

TEST_CASE("frontier selection") {
    const std::vector<RunRecord> runs{make_run("b", 268, 25, 3.1), make_run("a", 268, 25, 3.0), make_run("c", 268, 25, 3.0),
                                      make_run("d", 130, 25, 3.5), make_run("e", 130, 10, 3.7, "lion")};
    const auto all = select_best_per_group(runs, {"steplaw", std::nullopt});
    REQUIRE(all.size() == 3);
    std::set<std::pair<double, double>> keys;
    for (const auto& r : runs) keys.insert({r.config.model_size_N, r.config.data_size_D});
    CHECK(all.size() == keys.size());
    for (const auto& p : all) {
        if (p.N == 268) {
            CHECK(p.best_loss == 3.0);
            CHECK(p.run_id == "a");
        }
    }
    const auto adamw = select_best_per_group(runs, {"steplaw", "adamw"});
    const auto lion = select_best_per_group(runs, {"steplaw", "lion"});
    CHECK(adamw.size() + lion.size() == 3);
    CHECK(select_best_per_group(runs, {"marin", std::nullopt}).empty());
}

TEST_CASE("chinchilla fit recovers a noiseless law") {
    const auto pts = law_points(1.8, 300, 410, 0.34, 0.28);
    const ChinchillaFit fit = fit_chinchilla(pts);
    for (const auto& p : pts) CHECK(predict_chinchilla(fit, p.N, p.D) == doctest::Approx(p.best_loss).epsilon(1e-3));
    // no regression past initialization
    const auto starts = chinchilla_grid(pts, {});
    CHECK(starts.size() == 5u * 5 * 5 * 5 * 5);
    double best_start = INFINITY;
    for (const auto& s : starts) best_start = std::min(best_start, chinchilla_objective(s, pts, 1e-3));
    CHECK(fit.objective <= best_start);

    // refit on the fit's own predictions
    std::vector<FrontierPoint> self = pts;
    for (auto& p : self) p.best_loss = predict_chinchilla(fit, p.N, p.D);
    const ChinchillaFit again = fit_chinchilla(self);
    for (const auto& p : self) CHECK(predict_chinchilla(again, p.N, p.D) == doctest::Approx(p.best_loss).epsilon(1e-6));
}

TEST_CASE("chinchilla fit on a flat frontier") {
    std::vector<FrontierPoint> pts;
    for (double N : {1e6, 2e6, 4e6}) {
        for (double D : {1e6, 3e6}) pts.push_back({N, D, 2.2, {}, ""});
    }
    const ChinchillaFit fit = fit_chinchilla(pts);
    CHECK(fit.E == doctest::Approx(2.2).epsilon(1e-3));
    CHECK(predict_chinchilla(fit, 3e6, 2e6) == doctest::Approx(2.2).epsilon(1e-4));
}

TEST_CASE("chinchilla fit preconditions") {
    auto pts = law_points(1.8, 300, 410, 0.34, 0.28);
    pts.resize(4);
    CHECK_THROWS_AS(fit_chinchilla(pts), FitError);
    std::vector<FrontierPoint> single_n;
    for (double D : {1.0, 2.0, 3.0, 4.0, 5.0, 6.0}) single_n.push_back({100, D, 3.0 + 1.0 / D, {}, ""});
    CHECK_THROWS_AS(fit_chinchilla(single_n), FitError);
}

TEST_CASE("log-sum-exp prediction matches the direct sum") {
    const ChinchillaParams p{std::log(1.8), std::log(300.0), std::log(410.0), 0.34, 0.28};
    CHECK(std::exp(chinchilla_log_prediction(p, 268, 25)) == doctest::Approx(law(1.8, 300, 410, 0.34, 0.28, 268, 25)).epsilon(1e-13));
    const ChinchillaParams bad{0, 0, 0, -0.1, 0.3};
    const std::vector<FrontierPoint> pts{{100, 10, 3.0, {}, ""}};
    CHECK(std::isinf(chinchilla_objective(bad, pts, 1e-3)));
}

TEST_CASE("power law recovery") {
    auto make = [](double N, double D, double lr, double bs) {
        FrontierPoint p{N, D, 3.0, testing::sample_config(), ""};
        p.best_config.peak_lr = lr;
        p.best_config.batch_size = bs;
        return p;
    };
    std::vector<FrontierPoint> pts;
    for (double N : {100.0, 200.0, 400.0}) {
        for (double D : {5.0, 20.0, 50.0}) {
            pts.push_back(make(N, D, 0.01 * std::pow(N, -0.25) * std::pow(D, 0.1), 90 * std::pow(D, 0.4)));
        }
    }
    const PowerLawFit f = fit_power_law(pts);
    CHECK(f.c == doctest::Approx(0.01).epsilon(1e-10));
    CHECK(f.alpha_lr == doctest::Approx(-0.25).epsilon(1e-10));
    CHECK(f.beta_lr == doctest::Approx(0.1).epsilon(1e-10));
    CHECK(f.d == doctest::Approx(90).epsilon(1e-10));
    CHECK(f.gamma_bs == doctest::Approx(0.4).epsilon(1e-10));

    // constant learning rate
    std::vector<FrontierPoint> flat;
    for (double N : {100.0, 300.0}) {
        for (double D : {5.0, 50.0}) flat.push_back(make(N, D, 3e-4, 256));
    }
    const PowerLawFit ff = fit_power_law(flat);
    CHECK(ff.c == doctest::Approx(3e-4).epsilon(1e-10));
    CHECK(std::abs(ff.alpha_lr) < 1e-10);
    CHECK(std::abs(ff.beta_lr) < 1e-10);

    // batch 256 at D and 512 at 2D: gamma = 1, d = 256 / D
    std::vector<FrontierPoint> two{make(100, 10, 1e-3, 256), make(200, 20, 1e-3, 512), make(300, 10, 1e-3, 256)};
    const PowerLawFit ft = fit_power_law(two);
    CHECK(ft.gamma_bs == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ft.d == doctest::Approx(25.6).epsilon(1e-12));

    // N and D move together: log N, log D collinear
    std::vector<FrontierPoint> collinear{make(100, 10, 1e-3, 256), make(200, 20, 1e-3, 256), make(400, 40, 1e-3, 256)};
    CHECK_THROWS_AS(fit_power_law(collinear), FitError);
}

TEST_CASE("Nelder-Mead minimizes a shifted quadratic") {
    auto f = [](std::span<const double> x) { return (x[0] - 1.5) * (x[0] - 1.5) + 3 * (x[1] + 0.5) * (x[1] + 0.5); };
    const auto r = nelder_mead(f, {0.0, 0.0}, {4000, 1e-16, {}});
    CHECK(r.x[0] == doctest::Approx(1.5).epsilon(1e-5));
    CHECK(r.x[1] == doctest::Approx(-0.5).epsilon(1e-5));
}

TEST_CASE("baseline set lookup and serialization") {
    std::vector<RunRecord> runs;
    int k = 0;
    for (double N : {100.0, 200.0, 300.0}) {
        for (double D : {5.0, 10.0, 20.0}) {
            for (const char* opt : {"adamw", "lion"}) {
                runs.push_back(make_run("r" + std::to_string(k++), N, D, law(1.8, 300, 410, 0.34, 0.28, N, D) + (opt[0] == 'l' ? 0.05 : 0.0), opt));
            }
        }
    }
    const BaselineSet per = fit_baselines(runs, true);
    CHECK(per.fits().size() == 2);
    RunConfig c = runs[1].config;
    CHECK(per.lookup(c).scope.optimizer == std::optional<std::string>("lion"));
    c.source = "marin";
    CHECK_THROWS_AS(per.lookup(c), ScopeError);

    const ChinchillaFit& fit = per.fits().begin()->second;
    const ChinchillaFit back = parse_chinchilla_fit(format_fit(fit));
    CHECK(back.E == fit.E);
    CHECK(back.alpha == fit.alpha);
    CHECK(back.scope == fit.scope);
}
