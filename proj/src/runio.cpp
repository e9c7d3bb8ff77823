#include "cpl/runio.hpp"

#include <fstream>
#include <sstream>

#include "cpl/errors.hpp"

namespace cpl {

using nlohmann::json;

json to_json(const RunConfig& c) {
    json j;
    j["source"] = c.source;
    j["model_size_N"] = c.model_size_N;
    j["num_layers"] = c.num_layers;
    j["num_heads"] = c.num_heads;
    j["hidden_dim"] = c.hidden_dim;
    j["data_size_D"] = c.data_size_D;
    j["total_steps"] = c.total_steps;
    j["optimizer"] = c.optimizer;
    j["peak_lr"] = c.peak_lr;
    j["lr_schedule"] = c.lr_schedule;
    if (c.min_lr) j["min_lr"] = *c.min_lr;
    if (c.min_lr_ratio) j["min_lr_ratio"] = *c.min_lr_ratio;
    j["weight_decay"] = c.weight_decay;
    j["batch_size"] = c.batch_size;
    j["warmup"] = c.warmup.value;
    j["warmup_unit"] = c.warmup.unit == WarmupUnit::steps ? "steps" : "ratio";
    j["max_grad_norm"] = c.max_grad_norm;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["epsilon"] = c.epsilon;
    j["optimizer_extras"] = json::object();
    for (const auto& [k, v] : c.optimizer_extras) j["optimizer_extras"][k] = v;
    return j;
}

namespace {

const json& require(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) throw SchemaError(std::string("missing required field '") + key + "'");
    return *it;
}

double number(const json& j, const char* key) {
    const json& v = require(j, key);
    if (!v.is_number()) throw SchemaError(std::string("field '") + key + "' must be a number");
    return v.get<double>();
}

std::string text(const json& j, const char* key) {
    const json& v = require(j, key);
    if (!v.is_string()) throw SchemaError(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

std::optional<double> optional_number(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) throw SchemaError(std::string("field '") + key + "' must be a number");
    return it->get<double>();
}

}  // namespace

RunConfig config_from_json(const json& j) {
    if (!j.is_object()) throw SchemaError("run configuration must be a JSON object");
    RunConfig c;
    c.source = text(j, "source");
    c.model_size_N = number(j, "model_size_N");
    c.num_layers = static_cast<int>(number(j, "num_layers"));
    c.num_heads = static_cast<int>(number(j, "num_heads"));
    c.hidden_dim = static_cast<int>(number(j, "hidden_dim"));
    c.data_size_D = number(j, "data_size_D");
    c.total_steps = static_cast<std::int64_t>(std::llround(number(j, "total_steps")));
    c.optimizer = text(j, "optimizer");
    c.peak_lr = number(j, "peak_lr");
    c.lr_schedule = text(j, "lr_schedule");
    c.min_lr = optional_number(j, "min_lr");
    c.min_lr_ratio = optional_number(j, "min_lr_ratio");
    c.weight_decay = number(j, "weight_decay");
    c.batch_size = number(j, "batch_size");
    c.warmup.value = number(j, "warmup");
    const std::string unit = j.contains("warmup_unit") ? text(j, "warmup_unit") : std::string("steps");
    if (unit != "steps" && unit != "ratio") throw SchemaError("field 'warmup_unit' must be 'steps' or 'ratio'");
    c.warmup.unit = unit == "steps" ? WarmupUnit::steps : WarmupUnit::ratio;
    c.max_grad_norm = number(j, "max_grad_norm");
    c.beta1 = number(j, "beta1");
    c.beta2 = number(j, "beta2");
    c.epsilon = number(j, "epsilon");
    if (auto it = j.find("optimizer_extras"); it != j.end() && !it->is_null()) {
        if (!it->is_object()) throw SchemaError("field 'optimizer_extras' must be an object");
        for (const auto& [k, v] : it->items()) {
            if (!v.is_number()) throw SchemaError("optimizer extra '" + k + "' must be a number");
            c.optimizer_extras[k] = v.get<double>();
        }
    }
    validate(c);
    return c;
}

json to_json(const RunRecord& run) {
    json j = to_json(run.config);
    j["run_id"] = run.run_id;
    j["finished"] = run.finished;
    j["final_loss"] = run.final_loss;
    j["curve_smoothed"] = true;
    json curve = json::array();
    for (const auto& p : run.curve) curve.push_back(json::array({p.step, p.loss}));
    j["curve"] = std::move(curve);
    return j;
}

std::string to_jsonl(std::span<const RunRecord> runs) {
    std::string out;
    for (const auto& run : runs) {
        out += to_json(run).dump();
        out += '\n';
    }
    return out;
}

void write_runs(const std::filesystem::path& path, std::span<const RunRecord> runs) {
    write_text_file(path, to_jsonl(runs));
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << contents;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace cpl
