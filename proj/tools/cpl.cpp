#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cpl/config.hpp"
#include "cpl/errors.hpp"
#include "cpl/eval.hpp"
#include "cpl/gbt.hpp"
#include "cpl/ingest.hpp"
#include "cpl/lawfit.hpp"
#include "cpl/regressor.hpp"
#include "cpl/runio.hpp"
#include "cpl/select.hpp"
#include "cpl/synth.hpp"
#include "pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cpl;
using cli::PipelineConfig;

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

void write_resolved(const fs::path& dir, const PipelineConfig& cfg) {
    write_text_file(dir / "resolved_config.json", to_json(cfg).dump(2) + "\n");
}

std::vector<RunRecord> load_runs(const std::string& path, double smoothing) {
    if (path.empty()) throw ArgumentError("--input is required");
    ParseResult parsed = parse_runs(path, smoothing);
    for (const auto& m : parsed.malformed) std::cerr << "warning: " << path << ":" << m.line << ": " << m.message << "\n";
    return std::move(parsed.runs);
}

std::vector<std::pair<std::string, RunConfig>> load_configs(const std::string& path) {
    if (path.empty()) throw ArgumentError("--input is required");
    std::istringstream in(read_text_file(path));
    std::vector<std::pair<std::string, RunConfig>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        std::string id = j.contains("run_id") && j["run_id"].is_string() ? j["run_id"].get<std::string>()
                                                                          : "row-" + std::to_string(out.size());
        RunConfig c = normalized(config_from_json(j));
        out.emplace_back(std::move(id), std::move(c));
    }
    return out;
}

std::string file_label(const Scope& scope) {
    std::string s = scope.source + "_" + scope.optimizer.value_or("all");
    for (char& ch : s) {
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '_' && ch != '-') ch = '-';
    }
    return s;
}

BaselineSet load_baselines(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("fit directory '" + dir.string() + "' does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (name.rfind("chinchilla_", 0) == 0 && e.path().extension() == ".txt") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no chinchilla_*.txt fits in '" + dir.string() + "'");
    BaselineSet set;
    for (const auto& f : files) set.add(parse_chinchilla_fit(read_text_file(f)));
    return set;
}

void write_baselines(const fs::path& dir, const BaselineSet& set) {
    for (const auto& [scope, fit] : set.fits()) write_text_file(dir / ("chinchilla_" + file_label(scope) + ".txt"), format_fit(fit));
}

// A trained model directory: model.ckpt (neural) or forest.txt plus its baselines (GBT).
struct LoadedModel {
    std::optional<TrainedPredictor> neural;
    std::optional<BoostedForest> forest;
    BaselineSet baseline;
    TargetKind kind = TargetKind::final_loss;

    std::vector<double> residuals(std::span<const RunConfig> configs, std::optional<double> frac) const {
        std::vector<double> out;
        for (const auto& c : configs) out.push_back(neural ? neural->predict_residual(c, frac) : predict_gbt(*forest, canonicalize(c, frac)));
        return out;
    }

    BatchPredictor final_loss() const {
        return [this](std::span<const RunConfig> configs) {
            if (neural) return neural->predict_final_losses(configs);
            const std::optional<double> frac = kind == TargetKind::curve_point ? std::optional(1.0) : std::nullopt;
            auto out = residuals(configs, frac);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += baseline.predict(configs[i]);
            return out;
        };
    }
};

LoadedModel load_model(const fs::path& dir) {
    LoadedModel m;
    if (fs::exists(dir / "model.ckpt")) {
        m.neural = deserialize_checkpoint(read_text_file(dir / "model.ckpt"));
        m.baseline = m.neural->baseline;
        m.kind = m.neural->kind;
    } else if (fs::exists(dir / "forest.txt")) {
        m.forest = parse_forest(read_text_file(dir / "forest.txt"));
        m.baseline = load_baselines(dir);
        m.kind = m.forest->feature_count == gbt_feature_names(true).size() ? TargetKind::curve_point : TargetKind::final_loss;
    } else {
        throw IoError("model directory '" + dir.string() + "' holds neither model.ckpt nor forest.txt");
    }
    return m;
}

std::vector<double> read_values(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::vector<double> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find_last_of("\t ,");
        const std::string cell = tab == std::string::npos ? line : line.substr(tab + 1);
        try {
            std::size_t used = 0;
            out.push_back(std::stod(cell, &used));
            if (used != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
            if (lineno == 1) continue;  // header row
            throw FormatError(path + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
        }
    }
    return out;
}

std::string rho_text(const Metrics& m) { return m.spearman_rho ? fmt("%.4f", *m.spearman_rho) : std::string("undefined"); }

DatasetSplits load_splits(const std::string& dir, std::span<const RunRecord> runs) {
    if (dir.empty()) throw ArgumentError("--splits is required");
    return read_split_manifests(dir, runs);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Configuration-to-performance scaling laws: fit, train, predict and sweep."};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    PipelineConfig cfg;
    std::string config_path, splits_dir, fits_dir, model_dir, pred_path, truth_path, base_path, oracle_path, format = "jsonl";
    std::string lr_range, bs_range, dataset = "dataset", schema_action = "dump";
    std::vector<std::string> fixes, extra_axes;
    std::uint64_t seed = 0;
    double ood_threshold = 430.0, split_ratio = 0.8, noise = 0.005, sweep_N = 0.0, sweep_D = 0.0;
    std::size_t samples_per_cell = 50, points = 30;
    bool per_optimizer = false;
    std::string method, target;

    auto add_config = [&](CLI::App* sub) { sub->add_option("--config", config_path, "Pipeline config file (JSON); flags override it"); };
    auto add_io = [&](CLI::App* sub, bool input_required) {
        auto* in = sub->add_option("--input", cfg.input, "Input file");
        if (input_required) in->required();
        sub->add_option("--output", cfg.output, "Output directory")->required();
    };

    auto* schema = app.add_subcommand("schema", "Print the canonical field table");
    schema->add_option("action", schema_action, "Only 'dump' is supported")->check(CLI::IsMember({"dump"}));
    schema->add_option("--output", cfg.output, "Write the table to this file instead of stdout");

    auto* synth = app.add_subcommand("synth", "Generate synthetic runs from a known oracle");
    synth->add_option("--output", cfg.output, "Output directory")->required();
    synth->add_option("--seed", seed, "Random seed")->capture_default_str();
    synth->add_option("--noise", noise, "Gaussian noise on final losses (nats)")->capture_default_str();
    synth->add_option("--samples-per-cell", samples_per_cell, "Runs per (N, D, optimizer) cell; 0 = full product")->capture_default_str();
    synth->add_option("--oracle", oracle_path, "Oracle parameters (JSON) replacing the defaults");

    auto* ingest = app.add_subcommand("ingest", "Parse, smooth and filter run logs");
    add_io(ingest, true);
    add_config(ingest);
    ingest->add_option("--format", format, "Input format")->check(CLI::IsMember({"jsonl"}))->capture_default_str();

    auto* split = app.add_subcommand("split", "Grouped train / ID / OOD split");
    add_io(split, true);
    add_config(split);
    split->add_option("--seed", seed, "Split seed")->capture_default_str();
    split->add_option("--ood-threshold", ood_threshold, "Runs with N above this (millions) are OOD")->capture_default_str();
    split->add_option("--split-ratio", split_ratio, "Fraction of ID groups used for training")->capture_default_str();

    auto* fit = app.add_subcommand("fit", "Fit Chinchilla and power-law baselines on the training split");
    add_io(fit, true);
    add_config(fit);
    fit->add_option("--splits", splits_dir, "Split manifest directory (default: fit on every input run)");
    fit->add_flag("--per-optimizer", per_optimizer, "One baseline per (source, optimizer)");

    auto* train = app.add_subcommand("train", "Train a residual regressor");
    add_io(train, true);
    add_config(train);
    train->add_option("--splits", splits_dir, "Split manifest directory")->required();
    train->add_option("--fits", fits_dir, "Baseline directory from 'fit' (default: fit on the training split)");
    train->add_option("--method", method, "ncpl or gbt")->check(CLI::IsMember({"ncpl", "gbt"}));
    train->add_option("--target", target, "final_loss or curve_point")->check(CLI::IsMember({"final_loss", "curve_point"}));
    train->add_option("--seed", seed, "Initialization and shuffling seed");

    auto* predict = app.add_subcommand("predict", "Predict final losses for configurations");
    predict->add_option("--model", model_dir, "Model directory from 'train'")->required();
    predict->add_option("--input", cfg.input, "JSONL configurations")->required();
    predict->add_option("--output", cfg.output, "Output file (default: stdout)");

    auto* curve = app.add_subcommand("curve", "Predict loss curves with a curve-trained model");
    curve->add_option("--model", model_dir, "Model directory from 'train'")->required();
    curve->add_option("--input", cfg.input, "JSONL configurations")->required();
    curve->add_option("--output", cfg.output, "Output file (default: stdout)");
    curve->add_option("--points", points, "Evenly spaced fractions per curve")->capture_default_str();

    auto* sweep_cmd = app.add_subcommand("sweep", "Sweep a predicted loss surface and recommend hyperparameters");
    sweep_cmd->add_option("--model", model_dir, "Model directory from 'train'")->required();
    sweep_cmd->add_option("--base", base_path, "Base configuration (JSON object)");
    sweep_cmd->add_option("--input", cfg.input, "Take the base configuration from the first run in this JSONL file");
    sweep_cmd->add_option("--output", cfg.output, "Output directory")->required();
    add_config(sweep_cmd);
    sweep_cmd->add_option("--N", sweep_N, "Target model size (millions)");
    sweep_cmd->add_option("--D", sweep_D, "Target data size (billions of tokens)");
    sweep_cmd->add_option("--lr-range", lr_range, "peak_lr axis as lo,hi,count (log-spaced)");
    sweep_cmd->add_option("--bs-range", bs_range, "batch_size axis as lo,hi,count (log-spaced)");
    sweep_cmd->add_option("--axis", extra_axes, "Extra linear axis FIELD=lo,hi,count (repeatable)");
    sweep_cmd->add_option("--fix", fixes, "Constraint FIELD=VALUE (repeatable)");

    auto* eval = app.add_subcommand("eval", "Metrics from prediction files or a model on a split");
    eval->add_option("--pred", pred_path, "Predicted values, one per line (last column)");
    eval->add_option("--truth", truth_path, "True values, one per line (last column)");
    eval->add_option("--model", model_dir, "Model directory from 'train'");
    eval->add_option("--input", cfg.input, "Runs (JSONL) for model evaluation");
    eval->add_option("--splits", splits_dir, "Split manifest directory for model evaluation");
    eval->add_option("--dataset", dataset, "Dataset label for the report")->capture_default_str();
    eval->add_option("--output", cfg.output, "Write report.tsv here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (!config_path.empty()) {
            const std::string input = cfg.input, output = cfg.output;
            try {
                cfg = cli::pipeline_from_json(json::parse(read_text_file(config_path)));
            } catch (const json::exception& e) {
                throw ArgumentError(config_path + ": " + e.what());
            }
            if (!input.empty()) cfg.input = input;
            if (!output.empty()) cfg.output = output;
        }
        auto given = [](CLI::App* sub, const char* name) { return sub->count(name) > 0; };

        if (schema->parsed()) {
            const std::string table = Schema::instance().dump();
            if (cfg.output.empty()) std::cout << table;
            else write_text_file(cfg.output, table);
            return 0;
        }

        if (synth->parsed()) {
            OracleParams oracle;
            if (!oracle_path.empty()) oracle = oracle_from_json(json::parse(read_text_file(oracle_path)));
            if (given(synth, "--noise")) oracle.noise_sigma = noise;
            SweepDesign design = SweepDesign::standard();
            design.samples_per_cell = samples_per_cell;
            const auto runs = generate_synthetic_runs(oracle, design, seed);
            const fs::path out = cfg.output;
            write_runs(out / "runs.jsonl", runs);
            write_text_file(out / "oracle.json", to_json(oracle).dump(2) + "\n");
            cfg.split.seed = seed;
            write_resolved(out, cfg);
            std::cout << "synth: wrote " << runs.size() << " runs to " << (out / "runs.jsonl").string() << "\n";
            return 0;
        }

        if (ingest->parsed()) {
            ParseResult parsed = parse_runs(cfg.input, cfg.smoothing);
            const FilterResult filtered = filter_runs(parsed.runs, cfg.filter);
            const fs::path out = cfg.output;
            write_runs(out / "runs.jsonl", filtered.kept);
            std::ostringstream rej;
            rej << "run_id\trule\tdetail\n";
            for (const auto& r : filtered.rejected) rej << r.run.run_id << '\t' << to_string(r.rule) << '\t' << r.detail << '\n';
            write_text_file(out / "rejections.tsv", rej.str());
            json counts = json::object();
            for (const auto& [rule, n] : filtered.counts()) counts[to_string(rule)] = n;
            write_text_file(out / "rejection_counts.json", counts.dump(2) + "\n");
            if (!parsed.malformed.empty()) {
                std::ostringstream bad;
                for (const auto& m : parsed.malformed) bad << m.line << '\t' << m.message << '\n';
                write_text_file(out / "malformed.tsv", bad.str());
            }
            write_resolved(out, cfg);
            std::cout << "ingest: " << parsed.runs.size() << " runs parsed, " << filtered.kept.size() << " kept, "
                      << filtered.rejected.size() << " rejected, " << parsed.malformed.size() << " malformed lines\n";
            return 0;
        }

        if (split->parsed()) {
            if (given(split, "--seed")) cfg.split.seed = seed;
            if (given(split, "--ood-threshold")) cfg.split.ood_threshold_N = ood_threshold;
            if (given(split, "--split-ratio")) cfg.split.ratio = split_ratio;
            const auto runs = load_runs(cfg.input, cfg.smoothing);
            std::map<RejectRule, std::size_t> rejections;
            const fs::path counts_file = fs::path(cfg.input).parent_path() / "rejection_counts.json";
            if (fs::exists(counts_file)) {
                const json counts = json::parse(read_text_file(counts_file));
                for (RejectRule r : {RejectRule::unfinished, RejectRule::diverged_threshold, RejectRule::diverged_gap, RejectRule::unstable_slope}) {
                    if (counts.contains(to_string(r))) rejections[r] = counts[to_string(r)].get<std::size_t>();
                }
            }
            const DatasetSplits s = split_dataset(runs, cfg.split);
            write_split_manifests(cfg.output, s, cfg.split, rejections);
            write_resolved(cfg.output, cfg);
            std::cout << "split: train " << s.train.size() << ", id_val " << s.id_val.size() << ", ood_val " << s.ood_val.size()
                      << " (seed " << cfg.split.seed << ", OOD above N=" << cfg.split.ood_threshold_N << ")\n";
            return 0;
        }

        if (fit->parsed()) {
            if (per_optimizer) cfg.per_optimizer = true;
            const auto runs = load_runs(cfg.input, cfg.smoothing);
            const std::vector<RunRecord> train_runs = splits_dir.empty() ? runs : load_splits(splits_dir, runs).train;
            ChinchillaFitOptions opts;
            opts.huber_delta = cfg.huber_delta;
            const BaselineSet baselines = fit_baselines(train_runs, cfg.per_optimizer, opts);
            const fs::path out = cfg.output;
            write_baselines(out, baselines);
            std::size_t power_laws = 0;
            for (const auto& [scope, f] : baselines.fits()) {
                try {
                    PowerLawFit p = fit_power_law(select_best_per_group(train_runs, scope));
                    p.scope = scope;
                    write_text_file(out / ("powerlaw_" + file_label(scope) + ".txt"), format_fit(p));
                    ++power_laws;
                } catch (const FitError& e) {
                    std::cerr << "warning: no power law for " << scope.label() << ": " << e.what() << "\n";
                }
            }
            write_resolved(out, cfg);
            std::cout << "fit: " << baselines.fits().size() << " chinchilla fit(s), " << power_laws << " power law(s) on "
                      << train_runs.size() << " runs\n";
            return 0;
        }

        if (train->parsed()) {
            if (!method.empty()) cfg.method = method;
            if (!target.empty()) {
                if (config_path.empty() && target == "curve_point") cfg.plan = TrainPlan::desk_curve_defaults();
                cfg.target = target;
            }
            if (given(train, "--seed")) cfg.train_seed = seed;
            const auto runs = load_runs(cfg.input, cfg.smoothing);
            const DatasetSplits splits = load_splits(splits_dir, runs);
            ChinchillaFitOptions opts;
            opts.huber_delta = cfg.huber_delta;
            const BaselineSet baseline = fits_dir.empty() ? fit_baselines(splits.train, cfg.per_optimizer, opts) : load_baselines(fits_dir);
            const TargetKind kind = cfg.target == "curve_point" ? TargetKind::curve_point : TargetKind::final_loss;
            const fs::path out = cfg.output;
            std::string val_summary;
            if (cfg.method == "ncpl") {
                ModelShape shape = cfg.shape;
                shape.with_frac = kind == TargetKind::curve_point;
                const auto tr = build_examples(splits.train, baseline, kind, cfg.curve_points);
                const auto va = build_examples(splits.id_val, baseline, kind, cfg.curve_points);
                TrainResult result = train_regressor(RegressorModel(shape, cfg.train_seed), tr, va, cfg.plan, cfg.train_seed ^ 0x9e3779b97f4a7c15ULL);
                const TrainedPredictor pred{std::move(result.model), baseline, kind, result.report};
                write_text_file(out / "model.ckpt", serialize_checkpoint(pred));
                std::ostringstream rep;
                rep << "stage\tepoch\ttrain_mse\tval_mae\n";
                for (const auto& e : pred.report.epochs) {
                    rep << e.stage << '\t' << e.epoch << '\t' << fmt("%.6g", e.train_mse) << '\t'
                        << (e.val_mae ? fmt("%.6g", *e.val_mae) : std::string("-")) << '\n';
                }
                write_text_file(out / "train_report.tsv", rep.str());
                val_summary = "stage1 mse " + fmt("%.4g", pred.report.stage1_mse) + ", stage2 mse " + fmt("%.4g", pred.report.stage2_mse);
            } else {
                const auto tr = build_examples(splits.train, baseline, kind, cfg.curve_points);
                const BoostedForest forest = fit_gbt(tr, cfg.gbt);
                write_text_file(out / "forest.txt", dump_forest(forest));
                write_baselines(out, baseline);
                val_summary = std::to_string(forest.trees.size()) + " trees";
            }
            write_resolved(out, cfg);
            std::cout << "train: " << cfg.method << " " << cfg.target << " model on " << splits.train.size() << " runs ("
                      << val_summary << ") -> " << out.string() << "\n";
            return 0;
        }

        if (predict->parsed()) {
            const LoadedModel model = load_model(model_dir);
            const auto rows = load_configs(cfg.input);
            std::vector<RunConfig> configs;
            for (const auto& [id, c] : rows) configs.push_back(c);
            const auto losses = model.final_loss()(configs);
            std::ostringstream out;
            out << "run_id\tpredicted_loss\n";
            for (std::size_t i = 0; i < rows.size(); ++i) out << rows[i].first << '\t' << fmt("%.10g", losses[i]) << '\n';
            if (cfg.output.empty()) std::cout << out.str();
            else {
                write_text_file(cfg.output, out.str());
                std::cout << "predict: " << rows.size() << " predictions -> " << cfg.output << "\n";
            }
            return 0;
        }

        if (curve->parsed()) {
            const LoadedModel model = load_model(model_dir);
            if (model.kind != TargetKind::curve_point) throw ArgumentError("curve needs a model trained with --target curve_point");
            if (points == 0) throw ArgumentError("--points must be positive");
            std::vector<double> fracs;
            for (std::size_t i = 1; i <= points; ++i) fracs.push_back(static_cast<double>(i) / static_cast<double>(points));
            const auto rows = load_configs(cfg.input);
            std::ostringstream out;
            out << "run_id\tfrac\tstep\tpredicted_loss\n";
            for (const auto& [id, c] : rows) {
                const RunConfig one[1] = {c};
                for (double f : fracs) {
                    const double base = model.baseline.predict(c);
                    const double loss = base + model.residuals(one, f).front();
                    out << id << '\t' << fmt("%.6g", f) << '\t' << std::llround(f * static_cast<double>(c.total_steps)) << '\t'
                        << fmt("%.10g", loss) << '\n';
                }
            }
            if (cfg.output.empty()) std::cout << out.str();
            else {
                write_text_file(cfg.output, out.str());
                std::cout << "curve: " << rows.size() << " curves x " << points << " points -> " << cfg.output << "\n";
            }
            return 0;
        }

        if (sweep_cmd->parsed()) {
            if (given(sweep_cmd, "--N")) cfg.sweep_N = sweep_N;
            if (given(sweep_cmd, "--D")) cfg.sweep_D = sweep_D;
            RunConfig base;
            if (!base_path.empty()) base = normalized(config_from_json(json::parse(read_text_file(base_path))));
            else if (!cfg.input.empty()) base = load_configs(cfg.input).at(0).second;
            else throw ArgumentError("sweep needs --base or --input for the base configuration");

            if (!lr_range.empty() || !bs_range.empty()) {
                std::erase_if(cfg.sweep_axes, [](const cli::AxisSpec& a) { return a.field == "peak_lr" || a.field == "batch_size"; });
            }
            if (!lr_range.empty()) cfg.sweep_axes.push_back(cli::parse_axis("peak_lr", lr_range, AxisScale::log));
            if (!bs_range.empty()) cfg.sweep_axes.push_back(cli::parse_axis("batch_size", bs_range, AxisScale::log));
            for (const auto& spec : extra_axes) {
                const auto eq = spec.find('=');
                if (eq == std::string::npos) throw ArgumentError("--axis expects FIELD=lo,hi,count");
                cfg.sweep_axes.push_back(cli::parse_axis(spec.substr(0, eq), spec.substr(eq + 1), AxisScale::linear));
            }
            auto has_axis = [&](const char* f) {
                return std::any_of(cfg.sweep_axes.begin(), cfg.sweep_axes.end(), [&](const cli::AxisSpec& a) { return a.field == f; });
            };
            if (!has_axis("peak_lr")) cfg.sweep_axes.push_back({"peak_lr", base.peak_lr / 8.0, base.peak_lr * 8.0, 16, AxisScale::log});
            if (!has_axis("batch_size")) cfg.sweep_axes.push_back({"batch_size", base.batch_size / 8.0, base.batch_size * 8.0, 16, AxisScale::log});

            SweepGrid grid;
            grid.base_config = base;
            for (const auto& a : cfg.sweep_axes) {
                grid.axes.push_back({a.field,
                                     a.scale == AxisScale::log ? SweepGrid::log_spaced(a.lo, a.hi, a.count)
                                                               : SweepGrid::linear_spaced(a.lo, a.hi, a.count),
                                     a.scale});
            }
            std::vector<FieldConstraint> constraints;
            for (const auto& f : fixes) {
                const auto eq = f.find('=');
                if (eq == std::string::npos || eq == 0) throw ArgumentError("--fix expects FIELD=VALUE, got '" + f + "'");
                constraints.push_back({f.substr(0, eq), f.substr(eq + 1)});
            }
            const LoadedModel model = load_model(model_dir);
            const Recommendation rec = recommend(model.final_loss(), cfg.sweep_N.value_or(base.model_size_N),
                                                 cfg.sweep_D.value_or(base.data_size_D), grid, constraints, cfg.near_frac);
            const fs::path out = cfg.output;
            write_text_file(out / "surface.tsv", format_surface(rec.predicted_surface));
            write_text_file(out / "recommendation.txt", format_recommendation(rec));
            write_text_file(out / "recommended_config.json", to_json(rec.recommended_config).dump(2) + "\n");
            std::vector<SurfaceSample> samples;
            for (const auto& p : rec.predicted_surface) samples.push_back({p.config.peak_lr, p.config.batch_size, p.loss});
            try {
                const ContourGrid contour = export_contour_data(samples, {cfg.contour_resolution, cfg.contour_sigma});
                write_text_file(out / "contour.tsv", format_contour(contour));
            } catch (const ArgumentError& e) {
                std::cerr << "warning: no contour export: " << e.what() << "\n";
            }
            write_resolved(out, cfg);
            std::cout << "sweep: " << rec.predicted_surface.size() << " points, recommend peak_lr "
                      << fmt("%.4g", rec.recommended_config.peak_lr) << " batch_size " << fmt("%.4g", rec.recommended_config.batch_size)
                      << " (predicted loss " << fmt("%.5f", rec.recommended_loss) << ", " << to_string(rec.refined.status) << ")\n";
            return 0;
        }

        if (eval->parsed()) {
            if (!pred_path.empty() || !truth_path.empty()) {
                if (pred_path.empty() || truth_path.empty()) throw ArgumentError("eval needs both --pred and --truth");
                const Metrics m = compute_metrics(read_values(pred_path), read_values(truth_path));
                std::cout << "eval: n " << m.n << ", MAE " << fmt("%.6g", m.mae) << ", RMSE " << fmt("%.6g", m.rmse)
                          << ", spearman " << rho_text(m) << "\n";
                return 0;
            }
            if (model_dir.empty()) throw ArgumentError("eval needs --pred/--truth or --model/--input/--splits");
            const LoadedModel model = load_model(model_dir);
            const auto runs = load_runs(cfg.input, cfg.smoothing);
            const DatasetSplits s = load_splits(splits_dir, runs);
            const std::string method_name = model.neural ? "ncpl" : "gbt";
            const BatchPredictor chinchilla = [&](std::span<const RunConfig> configs) {
                std::vector<double> out;
                for (const auto& c : configs) out.push_back(model.baseline.predict(c));
                return out;
            };
            std::vector<ReportRow> rows;
            for (const auto& [name, part] : {std::pair{"id", &s.id_val}, std::pair{"ood", &s.ood_val}}) {
                if (part->empty()) continue;
                rows.push_back({dataset, name, "chinchilla", evaluate_split(chinchilla, *part)});
                rows.push_back({dataset, name, method_name, evaluate_split(model.final_loss(), *part)});
            }
            if (rows.empty()) throw ArgumentError("eval: both validation splits are empty");
            const std::string report = format_report(rows);
            if (!cfg.output.empty()) {
                write_text_file(fs::path(cfg.output) / "report.tsv", report);
                write_resolved(cfg.output, cfg);
            }
            std::cout << report;
            const Metrics& main_row = rows[1].metrics;
            std::cout << "eval: " << method_name << " " << rows[1].split << " MAE " << fmt("%.6g", main_row.mae) << ", spearman "
                      << rho_text(main_row) << "\n";
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error [" << e.module() << "]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error [internal]: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
