#include "cpl/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cpl/errors.hpp"
#include "cpl/rng.hpp"
#include "cpl/runio.hpp"

namespace cpl {

std::vector<double> smooth_curve(std::span<const double> values, double coeff) {
    if (values.empty()) throw ArgumentError("smooth_curve: empty curve");
    if (!(coeff >= 0.0 && coeff < 1.0)) throw ArgumentError("smooth_curve: coefficient must lie in [0, 1)");
    std::vector<double> out(values.size());
    out[0] = values[0];
    for (std::size_t t = 1; t < values.size(); ++t) out[t] = coeff * out[t - 1] + (1.0 - coeff) * values[t];
    return out;
}

std::vector<CurvePoint> smooth_curve(std::span<const CurvePoint> curve, double coeff) {
    std::vector<double> losses;
    losses.reserve(curve.size());
    for (const auto& p : curve) losses.push_back(p.loss);
    const auto smoothed = smooth_curve(losses, coeff);
    std::vector<CurvePoint> out(curve.begin(), curve.end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i].loss = smoothed[i];
    return out;
}

namespace {

RunRecord record_from_json(const nlohmann::json& j, double smoothing) {
    RunRecord run;
    run.config = config_from_json(j);
    if (auto it = j.find("run_id"); it != j.end() && it->is_string()) {
        run.run_id = it->get<std::string>();
    } else {
        throw SchemaError("missing required field 'run_id'");
    }

    if (auto it = j.find("curve"); it != j.end() && !it->is_null()) {
        if (!it->is_array()) throw SchemaError("field 'curve' must be an array of [step, loss]");
        for (const auto& point : *it) {
            if (!point.is_array() || point.size() != 2 || !point[0].is_number() || !point[1].is_number()) {
                throw SchemaError("curve entries must be [step, loss] pairs");
            }
            CurvePoint p{static_cast<std::int64_t>(std::llround(point[0].get<double>())), point[1].get<double>()};
            if (!std::isfinite(p.loss) || !(p.loss > 0.0)) throw SchemaError("curve losses must be finite and positive");
            if (!run.curve.empty() && p.step <= run.curve.back().step) {
                throw SchemaError("curve steps must be strictly increasing");
            }
            run.curve.push_back(p);
        }
    }
    const bool pre_smoothed = j.value("curve_smoothed", false);
    if (!run.curve.empty() && !pre_smoothed) run.curve = smooth_curve(run.curve, smoothing);

    if (!run.curve.empty()) {
        run.final_loss = run.curve.back().loss;
    } else if (auto it = j.find("final_loss"); it != j.end() && it->is_number()) {
        run.final_loss = it->get<double>();
    } else {
        throw SchemaError("missing required field 'final_loss' (and no curve)");
    }
    if (!std::isfinite(run.final_loss)) throw SchemaError("final_loss must be finite");

    if (auto it = j.find("finished"); it != j.end() && it->is_boolean()) {
        run.finished = it->get<bool>();
    } else {
        run.finished = run.curve.empty() || run.curve.back().step >= run.config.total_steps;
    }
    return run;
}

}  // namespace

ParseResult parse_runs_text(const std::string& contents, double smoothing) {
    ParseResult result;
    std::istringstream in(contents);
    std::string line;
    std::size_t line_no = 0;
    std::size_t nonblank = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++nonblank;
        try {
            result.runs.push_back(record_from_json(nlohmann::json::parse(line), smoothing));
        } catch (const nlohmann::json::exception& e) {
            result.malformed.push_back({line_no, e.what()});
        } catch (const Error& e) {
            result.malformed.push_back({line_no, e.what()});
        }
    }
    if (nonblank > 0 && 2 * result.malformed.size() > nonblank) {
        std::ostringstream msg;
        msg << result.malformed.size() << " of " << nonblank << " lines malformed (first at line "
            << result.malformed.front().line << ": " << result.malformed.front().message << ")";
        throw FormatError(msg.str());
    }
    return result;
}

ParseResult parse_runs(const std::filesystem::path& path, double smoothing) {
    return parse_runs_text(read_text_file(path), smoothing);
}

const char* to_string(RejectRule rule) {
    switch (rule) {
        case RejectRule::unfinished: return "unfinished";
        case RejectRule::diverged_threshold: return "diverged_threshold";
        case RejectRule::diverged_gap: return "diverged_gap";
        case RejectRule::unstable_slope: return "unstable_slope";
    }
    return "unknown";
}

std::map<RejectRule, std::size_t> FilterResult::counts() const {
    std::map<RejectRule, std::size_t> out{{RejectRule::unfinished, 0},
                                          {RejectRule::diverged_threshold, 0},
                                          {RejectRule::diverged_gap, 0},
                                          {RejectRule::unstable_slope, 0}};
    for (const auto& r : rejected) ++out[r.rule];
    return out;
}

SizeKey size_key(const RunConfig& c) { return {std::llround(c.model_size_N * 10.0), std::llround(c.data_size_D * 10.0)}; }

double max_window_slope(std::span<const CurvePoint> curve, double window_fraction) {
    const auto points = curve.size();
    const auto window = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(window_fraction * points)));
    if (points < window) return 0.0;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t start = 0; start + window <= points; ++start) {
        const auto& a = curve[start];
        const auto& b = curve[start + window - 1];
        worst = std::max(worst, (b.loss - a.loss) / static_cast<double>(b.step - a.step));
    }
    return worst;
}

FilterResult filter_runs(std::span<const RunRecord> runs, const FilterParams& params) {
    // Best final loss per (N, D) among finished runs, independent of the
    // divergence threshold.
    std::map<SizeKey, double> best;
    for (const auto& run : runs) {
        if (!run.finished) continue;
        auto [it, inserted] = best.try_emplace(size_key(run.config), run.final_loss);
        if (!inserted) it->second = std::min(it->second, run.final_loss);
    }

    FilterResult result;
    for (const auto& run : runs) {
        std::ostringstream detail;
        std::optional<RejectRule> rule;
        if (!run.finished) {
            rule = RejectRule::unfinished;
        } else if (run.final_loss > params.divergence_threshold) {
            rule = RejectRule::diverged_threshold;
            detail << "final loss " << run.final_loss << " > " << params.divergence_threshold;
        } else if (const double b = best.at(size_key(run.config)); run.final_loss > b + params.gap_threshold) {
            rule = RejectRule::diverged_gap;
            detail << "final loss " << run.final_loss << " exceeds group best " << b << " by more than "
                   << params.gap_threshold;
        } else if (const double slope = max_window_slope(run.curve, params.window_fraction);
                   slope > params.slope_threshold) {
            rule = RejectRule::unstable_slope;
            detail << "window slope " << slope << " > " << params.slope_threshold;
        }
        if (rule) {
            result.rejected.push_back({run, *rule, detail.str()});
        } else {
            result.kept.push_back(run);
        }
    }
    return result;
}

DatasetSplits split_dataset(std::span<const RunRecord> runs, const SplitParams& params) {
    if (!(params.ratio > 0.0 && params.ratio < 1.0)) throw SplitError("split ratio must lie in (0, 1)");
    DatasetSplits splits;
    splits.ood_threshold_N = params.ood_threshold_N;
    splits.seed = params.seed;

    using GroupKey = std::pair<std::string, SizeKey>;
    std::map<GroupKey, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& c = runs[i].config;
        if (c.model_size_N > params.ood_threshold_N) {
            splits.ood_val.push_back(runs[i]);
        } else {
            groups[{c.optimizer, size_key(c)}].push_back(i);
        }
    }
    if (groups.size() < 2) {
        throw SplitError("need at least 2 (optimizer, N, D) groups below the OOD threshold, found " +
                         std::to_string(groups.size()));
    }

    std::vector<const std::vector<std::size_t>*> order;
    for (const auto& [key, members] : groups) order.push_back(&members);
    Rng rng(params.seed);
    rng.shuffle(std::span(order));

    const auto total = static_cast<std::ptrdiff_t>(order.size());
    const auto n_train = std::clamp<std::ptrdiff_t>(std::llround(params.ratio * static_cast<double>(total)), 1, total - 1);
    for (std::ptrdiff_t g = 0; g < total; ++g) {
        auto& target = g < n_train ? splits.train : splits.id_val;
        for (std::size_t i : *order[static_cast<std::size_t>(g)]) target.push_back(runs[i]);
    }
    return splits;
}

namespace {

std::string manifest(const std::vector<RunRecord>& runs, const std::string& name, const SplitParams& params,
                     const std::map<RejectRule, std::size_t>& rejections) {
    std::ostringstream out;
    out << "# split\t" << name << "\n# seed\t" << params.seed << "\n# ood_threshold_N\t" << params.ood_threshold_N
        << "\n# ratio\t" << params.ratio << "\n";
    for (const auto& [rule, count] : rejections) out << "# rejected_" << to_string(rule) << '\t' << count << '\n';
    out << "# runs\t" << runs.size() << '\n';
    for (const auto& r : runs) out << r.run_id << '\n';
    return out.str();
}

std::vector<std::string> read_ids(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        ids.push_back(line);
    }
    return ids;
}

}  // namespace

void write_split_manifests(const std::filesystem::path& dir, const DatasetSplits& splits, const SplitParams& params,
                           const std::map<RejectRule, std::size_t>& rejections) {
    write_text_file(dir / "train.txt", manifest(splits.train, "train", params, rejections));
    write_text_file(dir / "id_val.txt", manifest(splits.id_val, "id_val", params, rejections));
    write_text_file(dir / "ood_val.txt", manifest(splits.ood_val, "ood_val", params, rejections));
}

DatasetSplits read_split_manifests(const std::filesystem::path& dir, std::span<const RunRecord> runs) {
    std::map<std::string, const RunRecord*> by_id;
    for (const auto& r : runs) by_id[r.run_id] = &r;
    auto load = [&](const char* file) {
        std::vector<RunRecord> out;
        for (const auto& id : read_ids(dir / file)) {
            auto it = by_id.find(id);
            if (it == by_id.end()) throw FormatError(std::string(file) + ": unknown run id '" + id + "'");
            out.push_back(*it->second);
        }
        return out;
    };
    DatasetSplits splits;
    splits.train = load("train.txt");
    splits.id_val = load("id_val.txt");
    splits.ood_val = load("ood_val.txt");
    return splits;
}

}  // namespace cpl
