#include "pipeline.hpp"

#include <sstream>

#include "cpl/config.hpp"
#include "cpl/errors.hpp"

namespace cpl::cli {

using nlohmann::json;

namespace {

template <typename T>
void read(const json& j, const char* key, T& into) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) into = it->get<T>();
}

template <typename T>
void read(const json& j, const char* key, std::optional<T>& into) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) into = it->get<T>();
}

const json& section(const json& j, const char* key) {
    static const json empty = json::object();
    auto it = j.find(key);
    if (it == j.end()) return empty;
    if (!it->is_object()) throw ArgumentError(std::string("pipeline config: '") + key + "' must be an object");
    return *it;
}

void read_stage(const json& j, StagePlan& s) {
    read(j, "epochs", s.epochs);
    read(j, "peak_lr", s.peak_lr);
    read(j, "warmup_ratio", s.warmup_ratio);
    read(j, "warmup_steps", s.warmup_steps);
    read(j, "train_trunk", s.train_trunk);
}

json stage_json(const StagePlan& s) {
    json j = {{"epochs", s.epochs}, {"peak_lr", s.peak_lr}, {"warmup_ratio", s.warmup_ratio}, {"train_trunk", s.train_trunk}};
    j["warmup_steps"] = s.warmup_steps ? json(*s.warmup_steps) : json(nullptr);
    return j;
}

AxisScale scale_from(const std::string& s) {
    if (s == "log") return AxisScale::log;
    if (s == "linear") return AxisScale::linear;
    throw ArgumentError("axis scale must be 'log' or 'linear', got '" + s + "'");
}

}  // namespace

PipelineConfig pipeline_from_json(const json& j) {
    if (!j.is_object()) throw ArgumentError("pipeline config must be a JSON object");
    PipelineConfig c;
    try {
        const json& paths = section(j, "paths");
        read(paths, "input", c.input);
        read(paths, "output", c.output);
        read(j, "schema_version", c.schema_version);
        if (!c.schema_version.empty() && c.schema_version != kSchemaVersion) {
            throw ArgumentError("pipeline config targets schema '" + c.schema_version + "', this build uses '" +
                                std::string(kSchemaVersion) + "'");
        }

        const json& ingest = section(j, "ingest");
        read(ingest, "smoothing", c.smoothing);
        read(ingest, "divergence_threshold", c.filter.divergence_threshold);
        read(ingest, "gap_threshold", c.filter.gap_threshold);
        read(ingest, "slope_threshold", c.filter.slope_threshold);
        read(ingest, "window_fraction", c.filter.window_fraction);

        const json& split = section(j, "split");
        read(split, "seed", c.split.seed);
        read(split, "ratio", c.split.ratio);
        read(split, "ood_threshold", c.split.ood_threshold_N);

        const json& fit = section(j, "fit");
        read(fit, "per_optimizer", c.per_optimizer);
        read(fit, "huber_delta", c.huber_delta);

        const json& train = section(j, "train");
        read(train, "method", c.method);
        read(train, "target", c.target);
        read(train, "seed", c.train_seed);
        if (c.target == "curve_point") c.plan = TrainPlan::desk_curve_defaults();
        read(train, "curve_points", c.curve_points);
        const json& shape = section(train, "shape");
        read(shape, "embed_dim", c.shape.embed_dim);
        read(shape, "encoder_hidden", c.shape.encoder_hidden);
        read(shape, "trunk_layers", c.shape.trunk_layers);
        read(shape, "trunk_width", c.shape.trunk_width);
        read_stage(section(train, "stage1"), c.plan.stage1);
        read_stage(section(train, "stage2"), c.plan.stage2);
        read(train, "beta1", c.plan.beta1);
        read(train, "beta2", c.plan.beta2);
        read(train, "epsilon", c.plan.epsilon);
        read(train, "weight_decay", c.plan.weight_decay);
        read(train, "batch_size", c.plan.batch_size);
        read(train, "reset_optimizer_state", c.plan.reset_optimizer_state);
        read(train, "eval_every", c.plan.eval_every);
        const json& gbt = section(train, "gbt");
        read(gbt, "rounds", c.gbt.rounds);
        read(gbt, "max_depth", c.gbt.max_depth);
        read(gbt, "learning_rate", c.gbt.learning_rate);
        read(gbt, "min_leaf", c.gbt.min_leaf);

        const json& sweep = section(j, "sweep");
        read(sweep, "N", c.sweep_N);
        read(sweep, "D", c.sweep_D);
        read(sweep, "near_frac", c.near_frac);
        read(sweep, "contour_resolution", c.contour_resolution);
        read(sweep, "contour_sigma", c.contour_sigma);
        if (auto it = sweep.find("axes"); it != sweep.end()) {
            for (const auto& a : *it) {
                AxisSpec s;
                s.field = a.at("field").get<std::string>();
                s.lo = a.at("lo").get<double>();
                s.hi = a.at("hi").get<double>();
                s.count = a.at("count").get<std::size_t>();
                s.scale = scale_from(a.value("scale", std::string("log")));
                c.sweep_axes.push_back(s);
            }
        }

        const json& targets = section(j, "metric_targets");
        read(targets, "id_mae", c.target_id_mae);
        read(targets, "id_rho", c.target_id_rho);
    } catch (const json::exception& e) {
        throw ArgumentError(std::string("pipeline config: ") + e.what());
    }
    if (c.method != "ncpl" && c.method != "gbt") throw ArgumentError("train.method must be 'ncpl' or 'gbt'");
    if (c.target != "final_loss" && c.target != "curve_point") throw ArgumentError("train.target must be 'final_loss' or 'curve_point'");
    return c;
}

json to_json(const PipelineConfig& c) {
    json j;
    j["paths"] = {{"input", c.input}, {"output", c.output}};
    j["schema_version"] = std::string(kSchemaVersion);
    j["ingest"] = {{"smoothing", c.smoothing},
                   {"divergence_threshold", c.filter.divergence_threshold},
                   {"gap_threshold", c.filter.gap_threshold},
                   {"slope_threshold", c.filter.slope_threshold},
                   {"window_fraction", c.filter.window_fraction}};
    j["split"] = {{"seed", c.split.seed}, {"ratio", c.split.ratio}, {"ood_threshold", c.split.ood_threshold_N}};
    j["fit"] = {{"per_optimizer", c.per_optimizer}, {"huber_delta", c.huber_delta}};
    j["train"] = {{"method", c.method},
                  {"target", c.target},
                  {"seed", c.train_seed},
                  {"curve_points", c.curve_points},
                  {"shape",
                   {{"embed_dim", c.shape.embed_dim},
                    {"encoder_hidden", c.shape.encoder_hidden},
                    {"trunk_layers", c.shape.trunk_layers},
                    {"trunk_width", c.shape.trunk_width}}},
                  {"stage1", stage_json(c.plan.stage1)},
                  {"stage2", stage_json(c.plan.stage2)},
                  {"beta1", c.plan.beta1},
                  {"beta2", c.plan.beta2},
                  {"epsilon", c.plan.epsilon},
                  {"weight_decay", c.plan.weight_decay},
                  {"batch_size", c.plan.batch_size},
                  {"reset_optimizer_state", c.plan.reset_optimizer_state},
                  {"eval_every", c.plan.eval_every},
                  {"gbt",
                   {{"rounds", c.gbt.rounds},
                    {"max_depth", c.gbt.max_depth},
                    {"learning_rate", c.gbt.learning_rate},
                    {"min_leaf", c.gbt.min_leaf}}}};
    json axes = json::array();
    for (const auto& a : c.sweep_axes) {
        axes.push_back({{"field", a.field}, {"lo", a.lo}, {"hi", a.hi}, {"count", a.count},
                        {"scale", a.scale == AxisScale::log ? "log" : "linear"}});
    }
    j["sweep"] = {{"N", c.sweep_N ? json(*c.sweep_N) : json(nullptr)},
                  {"D", c.sweep_D ? json(*c.sweep_D) : json(nullptr)},
                  {"axes", axes},
                  {"near_frac", c.near_frac},
                  {"contour_resolution", c.contour_resolution},
                  {"contour_sigma", c.contour_sigma}};
    j["metric_targets"] = {{"id_mae", c.target_id_mae ? json(*c.target_id_mae) : json(nullptr)},
                           {"id_rho", c.target_id_rho ? json(*c.target_id_rho) : json(nullptr)}};
    return j;
}

AxisSpec parse_axis(const std::string& field, const std::string& text, AxisScale scale) {
    std::istringstream in(text);
    AxisSpec a{field, 0.0, 0.0, 0, scale};
    char c1 = 0, c2 = 0;
    if (!(in >> a.lo >> c1 >> a.hi >> c2 >> a.count) || c1 != ',' || c2 != ',' || !(in >> std::ws).eof()) {
        throw ArgumentError("axis '" + field + "' must be given as lo,hi,count (got '" + text + "')");
    }
    if (a.count == 0 || a.hi < a.lo) throw ArgumentError("axis '" + field + "' needs lo <= hi and count >= 1");
    return a;
}

}  // namespace cpl::cli
