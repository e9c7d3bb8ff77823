#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "cpl/errors.hpp"
#include "cpl/ingest.hpp"
#include "cpl/runio.hpp"
#include "support.hpp"

using namespace cpl;
using testing::make_run;

namespace {

std::vector<CurvePoint> decreasing_curve(std::size_t n, double start, double end) {
    std::vector<CurvePoint> c;
    for (std::size_t i = 0; i < n; ++i) {
        c.push_back({static_cast<std::int64_t>((i + 1) * 100), start + (end - start) * static_cast<double>(i) / static_cast<double>(n - 1)});
    }
    return c;
}

}  // namespace

TEST_CASE("EMA smoothing") {
    const std::vector<double> two{1.0, 0.0};
    const auto s = smooth_curve(two, 0.99);
    REQUIRE(s.size() == 2);
    CHECK(s[0] == 1.0);
    CHECK(s[1] == doctest::Approx(0.99).epsilon(1e-15));

    const std::vector<double> flat{2.5, 2.5, 2.5};
    CHECK(smooth_curve(flat) == flat);

    const std::vector<double> bumpy{3.0, 1.0, 4.0, 1.0, 5.0};
    CHECK(smooth_curve(bumpy, 0.0) == bumpy);
    for (double v : smooth_curve(bumpy, 0.7)) {
        CHECK(v >= 1.0);
        CHECK(v <= 5.0);
    }
    CHECK_THROWS_AS(smooth_curve(std::vector<double>{}), ArgumentError);
    CHECK_THROWS_AS(smooth_curve(bumpy, 1.0), ArgumentError);
}

TEST_CASE("parse_runs derives final loss from the smoothed curve") {
    RunRecord r = make_run("r1", 268, 25, 0.0);
    r.curve = {{100, 4.0}, {200, 3.0}, {300, 2.0}};
    auto j = to_json(r);
    j.erase("final_loss");
    j.erase("curve_smoothed");
    j.erase("finished");
    j["total_steps"] = 300;
    const ParseResult parsed = parse_runs_text(j.dump() + "\n");
    REQUIRE(parsed.runs.size() == 1);
    // independent recurrence
    double s = 4.0;
    s = 0.99 * s + 0.01 * 3.0;
    s = 0.99 * s + 0.01 * 2.0;
    CHECK(parsed.runs[0].final_loss == doctest::Approx(s).epsilon(1e-14));
    CHECK(parsed.runs[0].curve.back().loss == doctest::Approx(s).epsilon(1e-14));
    CHECK(parsed.runs[0].finished);
}

TEST_CASE("parse_runs edge cases") {
    CHECK(parse_runs_text("").runs.empty());
    RunRecord r = make_run("ok", 268, 25, 3.0);
    const std::string good = to_json(r).dump() + "\n";
    CHECK(parse_runs_text(good).runs.size() == 1);

    const ParseResult some_bad = parse_runs_text(good + good + "{not json\n");
    CHECK(some_bad.runs.size() == 2);
    REQUIRE(some_bad.malformed.size() == 1);
    CHECK(some_bad.malformed[0].line == 3);

    CHECK_THROWS_AS(parse_runs_text(good + "garbage\n{\"x\":1}\n"), FormatError);
    CHECK_THROWS_AS(parse_runs("/nonexistent/runs.jsonl"), IoError);
}

TEST_CASE("filter rules") {
    SUBCASE("divergence threshold") {
        const std::vector<RunRecord> runs{make_run("a", 268, 25, 4.2)};
        const FilterResult f = filter_runs(runs);
        REQUIRE(f.rejected.size() == 1);
        CHECK(f.rejected[0].rule == RejectRule::diverged_threshold);
    }
    SUBCASE("gap to the group best") {
        const std::vector<RunRecord> runs{make_run("a", 268, 25, 3.0), make_run("b", 268, 25, 3.4)};
        const FilterResult f = filter_runs(runs);
        REQUIRE(f.kept.size() == 1);
        CHECK(f.kept[0].run_id == "a");
        REQUIRE(f.rejected.size() == 1);
        CHECK(f.rejected[0].rule == RejectRule::diverged_gap);
    }
    SUBCASE("clean run is kept") {
        RunRecord r = make_run("a", 268, 25, 3.0);
        r.curve = decreasing_curve(40, 5.0, 3.0);
        const std::vector<RunRecord> runs{r};
        CHECK(filter_runs(runs).kept.size() == 1);
    }
    SUBCASE("unfinished") {
        RunRecord r = make_run("a", 268, 25, 3.0);
        r.finished = false;
        const std::vector<RunRecord> runs{r};
        CHECK(filter_runs(runs).rejected.at(0).rule == RejectRule::unfinished);
    }
    SUBCASE("loss spike") {
        RunRecord r = make_run("a", 268, 25, 3.0);
        r.curve = decreasing_curve(40, 5.0, 3.0);
        // +1.0 nats over two logged points 100 steps apart: slope 0.005 per step
        r.curve[20].loss = r.curve[19].loss + 0.5;
        r.curve[21].loss = r.curve[19].loss + 1.0;
        const std::vector<RunRecord> runs{r};
        const FilterResult f = filter_runs(runs);
        REQUIRE(f.rejected.size() == 1);
        CHECK(f.rejected[0].rule == RejectRule::unstable_slope);
    }
}

TEST_CASE("window slope uses ceil(5%) consecutive points, at least two") {
    std::vector<CurvePoint> c;
    for (int i = 0; i < 60; ++i) c.push_back({i * 10, 3.0});
    c[30].loss = 3.5;
    // 60 points -> window of 3: worst window rises 0.5 over 20 steps
    CHECK(max_window_slope(c, 0.05) == doctest::Approx(0.5 / 20.0));
    const std::vector<CurvePoint> one{{1, 3.0}};
    CHECK(max_window_slope(one, 0.05) == 0.0);
}

TEST_CASE("split: OOD threshold and group atomicity") {
    std::vector<RunRecord> runs;
    int id = 0;
    for (double N : {130.0, 268.0, 430.0, 520.0}) {
        for (double D : {10.0, 25.0}) {
            for (int k = 0; k < 3; ++k) runs.push_back(make_run("r" + std::to_string(id++), N, D, 3.0 + 0.01 * k));
        }
    }
    const DatasetSplits s = split_dataset(runs, {430, 0.8, 11});
    CHECK(s.train.size() + s.id_val.size() + s.ood_val.size() == runs.size());
    for (const auto& r : s.ood_val) CHECK(r.config.model_size_N > 430);
    std::set<std::pair<double, double>> train_groups;
    for (const auto& r : s.train) train_groups.insert({r.config.model_size_N, r.config.data_size_D});
    for (const auto& r : s.id_val) CHECK(train_groups.count({r.config.model_size_N, r.config.data_size_D}) == 0);
    // 6 ID groups at 0.8 -> round(4.8) = 5 train groups
    CHECK(s.train.size() == 15);
    CHECK(s.id_val.size() == 3);

    const DatasetSplits again = split_dataset(runs, {430, 0.8, 11});
    CHECK(again.train == s.train);
    CHECK(again.id_val == s.id_val);

    const std::vector<RunRecord> lonely{make_run("x", 100, 10, 3.0), make_run("y", 100, 10, 3.1)};
    CHECK_THROWS_AS(split_dataset(lonely), SplitError);
}

TEST_CASE("split manifests round-trip") {
    std::vector<RunRecord> runs;
    for (int i = 0; i < 12; ++i) runs.push_back(make_run("m" + std::to_string(i), 100.0 + 100.0 * (i % 6), 10, 3.0));
    const SplitParams params{430, 0.8, 5};
    const DatasetSplits s = split_dataset(runs, params);
    const auto dir = std::filesystem::temp_directory_path() / "cpl_manifest_test";
    std::filesystem::remove_all(dir);
    write_split_manifests(dir, s, params, {{RejectRule::diverged_gap, 4}});
    const DatasetSplits back = read_split_manifests(dir, runs);
    CHECK(back.train == s.train);
    CHECK(back.id_val == s.id_val);
    CHECK(back.ood_val == s.ood_val);
    const std::string header = read_text_file(dir / "train.txt");
    CHECK(header.find("# seed\t5") != std::string::npos);
    CHECK(header.find("rejected_diverged_gap\t4") != std::string::npos);
    std::filesystem::remove_all(dir);
}
