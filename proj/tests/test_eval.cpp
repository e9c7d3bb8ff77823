#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cpl/errors.hpp"
#include "cpl/eval.hpp"
#include "cpl/rng.hpp"
#include "support.hpp"

using namespace cpl;

namespace {

// Spearman by the textbook route: ranks by counting, ties averaged, then
// Pearson on the ranks.
double brute_spearman(const std::vector<double>& a, const std::vector<double>& b) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            double below = 0, equal = 0;
            for (double w : v) {
                if (w < v[i]) ++below;
                if (w == v[i]) ++equal;
            }
            r[i] = below + (equal + 1.0) / 2.0;
        }
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

std::vector<SurfaceSample> scattered(double (*f)(double, double), int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<SurfaceSample> s;
    for (int i = 0; i < n; ++i) {
        const double lr = std::exp(rng.uniform(std::log(1e-4), std::log(1e-2)));
        const double bs = std::exp(rng.uniform(std::log(64.0), std::log(4096.0)));
        s.push_back({lr, bs, f(std::log(lr), std::log(bs))});
    }
    return s;
}

}  // namespace

TEST_CASE("metrics on small examples") {
    const std::vector<double> t{1.0, 2.0, 3.0, 4.0};
    Metrics m = compute_metrics(t, t);
    CHECK(m.mae == 0.0);
    CHECK(m.rmse == 0.0);
    CHECK(m.spearman_rho.value() == doctest::Approx(1.0));
    CHECK(m.n == 4);

    const std::vector<double> rev{9.0, 7.0, 2.0, -1.0};
    CHECK(compute_metrics(rev, t).spearman_rho.value() == doctest::Approx(-1.0));

    const std::vector<double> p{1, 2, 3}, q{1, 3, 2};
    CHECK(compute_metrics(p, q).spearman_rho.value() == doctest::Approx(0.5));

    const std::vector<double> off{1.5, 2.0, 3.0, 2.0};
    m = compute_metrics(off, t);
    CHECK(m.mae == doctest::Approx(2.5 / 4));
    CHECK(m.rmse == doctest::Approx(std::sqrt((0.25 + 4.0) / 4)));

    const std::vector<double> flat{2.0, 2.0, 2.0, 2.0};
    CHECK_FALSE(compute_metrics(flat, t).spearman_rho.has_value());

    CHECK_THROWS_AS(compute_metrics(std::vector<double>{1.0}, t), ArgumentError);
    CHECK_THROWS_AS(compute_metrics(std::vector<double>{}, std::vector<double>{}), ArgumentError);
}

TEST_CASE("average ranks") {
    const std::vector<double> v{10, 20, 20, 5, 20};
    const auto r = average_ranks(v);
    CHECK(r == std::vector<double>{2, 4, 4, 1, 4});
}

TEST_CASE("spearman against brute force, invariances, and MAE <= RMSE") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 3 + static_cast<std::size_t>(trial % 17);
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = std::round(rng.uniform() * 6.0);  // plenty of ties
            b[i] = a[i] + rng.normal();
        }
        if (std::all_of(a.begin(), a.end(), [&](double x) { return x == a[0]; })) a[0] += 1.0;
        const Metrics m = compute_metrics(a, b);
        CHECK(m.spearman_rho.value() == doctest::Approx(brute_spearman(a, b)).epsilon(1e-12));
        CHECK(std::abs(*m.spearman_rho) <= 1.0 + 1e-12);
        CHECK(m.mae <= m.rmse);

        std::vector<double> ea(n);
        for (std::size_t i = 0; i < n; ++i) ea[i] = std::exp(3.0 * a[i]) - 7.0;
        CHECK(spearman(ea, b).value() == doctest::Approx(*m.spearman_rho).epsilon(1e-12));

        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(std::span(perm));
        std::vector<double> pa(n), pb(n);
        for (std::size_t i = 0; i < n; ++i) {
            pa[i] = a[perm[i]];
            pb[i] = b[perm[i]];
        }
        const Metrics mp = compute_metrics(pa, pb);
        CHECK(mp.mae == doctest::Approx(m.mae));
        CHECK(mp.rmse == doctest::Approx(m.rmse));
        CHECK(*mp.spearman_rho == doctest::Approx(*m.spearman_rho));
    }
}

TEST_CASE("split evaluation") {
    std::vector<RunRecord> runs;
    for (int i = 0; i < 6; ++i) runs.push_back(testing::make_run("r" + std::to_string(i), 100.0 + 50 * i, 10.0, 3.0 - 0.1 * i));
    const auto lookup = batched([&](const RunConfig& c) { return 3.0 - 0.1 * ((c.model_size_N - 100.0) / 50.0); });
    const Metrics m = evaluate_split(lookup, runs);
    CHECK(m.mae == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(m.n == 6);
    CHECK_THROWS_AS(evaluate_split(lookup, std::span<const RunRecord>{}), ArgumentError);
}

TEST_CASE("report table") {
    const std::vector<ReportRow> rows{{"synthetic", "id", "ncpl", {0.01234, 0.02, 0.99, 10}},
                                      {"synthetic", "ood", "chinchilla", {0.1, 0.2, std::nullopt, 10}}};
    const std::string t = format_report(rows);
    CHECK(t.find("synthetic\tid\tncpl\t10\t0.0123\t0.0200\t0.9900") != std::string::npos);
    CHECK(t.find("undefined") != std::string::npos);
}

TEST_CASE("thin-plate interpolation") {
    SUBCASE("exact at the samples") {
        const auto s = scattered([](double u, double v) { return 2.0 + 0.1 * std::sin(u) * std::cos(0.5 * v); }, 30, 3);
        std::vector<double> x, y, z;
        for (const auto& p : s) {
            x.push_back(std::log(p.lr));
            y.push_back(std::log(p.batch));
            z.push_back(p.loss);
        }
        const ThinPlateSpline tps(x, y, z);
        for (std::size_t i = 0; i < s.size(); ++i) CHECK(tps(x[i], y[i]) == doctest::Approx(z[i]).epsilon(1e-9));
    }
    SUBCASE("planes are reproduced before smoothing") {
        const auto plane = [](double u, double v) { return 3.0 - 0.2 * u + 0.05 * v; };
        const auto s = scattered(plane, 25, 5);
        const ContourGrid g = interpolate_surface(s, 20);
        REQUIRE(g.log_lr.size() == 20);
        REQUIRE(g.z.size() == 400);
        for (std::size_t iy = 0; iy < 20; ++iy)
            for (std::size_t ix = 0; ix < 20; ++ix) CHECK(std::abs(g.at(ix, iy) - plane(g.log_lr[ix], g.log_batch[iy])) < 1e-6);
    }
    SUBCASE("constant stays constant through the blur") {
        const auto s = scattered([](double, double) { return 2.5; }, 12, 9);
        const ContourGrid g = export_contour_data(s, {15, 1.0});
        for (double z : g.z) CHECK(z == doctest::Approx(2.5).epsilon(1e-9));
    }
    SUBCASE("grid spans the sample range") {
        const auto s = scattered([](double u, double) { return u; }, 10, 2);
        const ContourGrid g = export_contour_data(s, {8, 0.0});
        double lo = 1e9, hi = -1e9;
        for (const auto& p : s) {
            lo = std::min(lo, std::log(p.lr));
            hi = std::max(hi, std::log(p.lr));
        }
        CHECK(g.log_lr.front() == doctest::Approx(lo));
        CHECK(g.log_lr.back() == doctest::Approx(hi));
        const std::string text = format_contour(g);
        CHECK(text.rfind("log_lr\tlog_batch\tloss\n", 0) == 0);
        CHECK(std::count(text.begin(), text.end(), '\n') == 65);
    }
    SUBCASE("bad inputs") {
        std::vector<SurfaceSample> s{{1e-3, 64, 2.0}, {2e-3, 64, 2.1}, {1e-3, 128, 2.2}, {1e-3, 64, 2.3}};
        CHECK_THROWS_AS(interpolate_surface(s, 10), ArgumentError);
        s.pop_back();
        CHECK_THROWS_AS(interpolate_surface(s, 10), ArgumentError);
    }
}

TEST_CASE("gaussian blur") {
    ContourGrid g;
    for (int i = 0; i < 15; ++i) {
        g.log_lr.push_back(i);
        g.log_batch.push_back(i);
    }
    g.z.assign(225, 0.0);
    g.z[7 * 15 + 7] = 1.0;
    const ContourGrid same = gaussian_blur(g, 0.0);
    CHECK(same.z == g.z);
    const ContourGrid b = gaussian_blur(g, 1.0);
    // Radius 3 around the centre stays inside the grid, so mass is kept.
    const double total = std::accumulate(b.z.begin(), b.z.end(), 0.0);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(b.at(6, 7) == doctest::Approx(b.at(8, 7)));
    CHECK(b.at(7, 6) == doctest::Approx(b.at(6, 7)));
    CHECK(b.at(6, 7) / b.at(7, 7) == doctest::Approx(std::exp(-0.5)));
    CHECK(b.at(5, 7) / b.at(7, 7) == doctest::Approx(std::exp(-2.0)));
    CHECK(b.at(3, 7) == 0.0);

    // Edge cells renormalise the truncated kernel, so constants survive.
    ContourGrid c = g;
    c.z.assign(225, 4.0);
    for (double z : gaussian_blur(c, 1.5).z) CHECK(z == doctest::Approx(4.0).epsilon(1e-12));
}
