#include "cpl/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "cpl/errors.hpp"

namespace cpl {
namespace {

std::string format_g(double value, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, value);
    return buf;
}

std::string format_exact(double value) { return format_g(value, 17); }

struct KnownExtra {
    const char* key;
    const char* optimizer;
};

constexpr KnownExtra kKnownExtras[] = {
    {"muon_adam_lr", "muon"},
    {"soap_block_size", "soap"},
    {"kron_precond_lr", "kron"},
};

const KnownExtra* find_known_extra(std::string_view key) {
    for (const auto& k : kKnownExtras) {
        if (key == k.key) return &k;
    }
    return nullptr;
}

std::vector<std::string> beta_vocabulary() {
    std::vector<std::string> vocab;
    for (double b1 : {0.8, 0.85, 0.9, 0.95, 0.98}) {
        for (double b2 : {0.9, 0.95, 0.98, 0.99, 0.995, 0.999}) {
            vocab.push_back(beta_token(b1, b2));
        }
    }
    return vocab;
}

std::vector<std::string> epsilon_vocabulary() {
    std::vector<std::string> vocab;
    for (int k = 1; k <= 20; ++k) vocab.push_back(std::to_string(k));
    return vocab;
}

int category_index(const FieldSpec& spec, const std::string& token) {
    auto it = std::find(spec.vocabulary.begin(), spec.vocabulary.end(), token);
    if (it == spec.vocabulary.end()) {
        throw SchemaError("field '" + spec.name + "': unknown categorical value '" + token + "'");
    }
    return static_cast<int>(it - spec.vocabulary.begin());
}

const std::string& category_token(const FieldSpec& spec, int index) {
    if (index < 0 || static_cast<std::size_t>(index) >= spec.vocabulary.size()) {
        throw SchemaError("field '" + spec.name + "': categorical index " + std::to_string(index) +
                          " out of vocabulary");
    }
    return spec.vocabulary[static_cast<std::size_t>(index)];
}

void require_positive(double value, const char* name) {
    if (!(value > 0.0) || !std::isfinite(value)) {
        throw SchemaError(std::string("field '") + name + "' must be positive and finite");
    }
}

}  // namespace

double RunConfig::warmup_ratio() const {
    if (warmup.unit == WarmupUnit::ratio) return warmup.value;
    return warmup.value / static_cast<double>(total_steps);
}

std::string beta_token(double beta1, double beta2) { return format_g(beta1) + "," + format_g(beta2); }

std::string epsilon_token(double epsilon) {
    const double neg_log = -std::log10(epsilon);
    const double rounded = std::round(neg_log);
    if (std::abs(neg_log - rounded) < 1e-9) return format_g(rounded);
    return format_g(neg_log, 4);
}

void validate(const RunConfig& c) {
    if (c.source.empty()) throw SchemaError("missing required field 'source'");
    if (c.optimizer.empty()) throw SchemaError("missing required field 'optimizer'");
    if (c.lr_schedule.empty()) throw SchemaError("missing required field 'lr_schedule'");
    require_positive(c.model_size_N, "model_size_N");
    require_positive(c.data_size_D, "data_size_D");
    require_positive(c.peak_lr, "peak_lr");
    require_positive(c.epsilon, "epsilon");
    if (c.total_steps <= 0) throw SchemaError("field 'total_steps' must be positive");
    if (!(c.batch_size >= 1.0)) throw SchemaError("field 'batch_size' must be >= 1");
    if (c.num_layers < 0 || c.num_heads < 0 || c.hidden_dim < 0) {
        throw SchemaError("architecture counts must be non-negative");
    }
    if (!(c.weight_decay >= 0.0)) throw SchemaError("field 'weight_decay' must be non-negative");
    if (!(c.warmup.value >= 0.0)) throw SchemaError("field 'warmup' must be non-negative");
    if (!c.min_lr && !c.min_lr_ratio) throw SchemaError("missing required field 'min_lr' or 'min_lr_ratio'");
    if (c.min_lr && (*c.min_lr < 0.0 || *c.min_lr > c.peak_lr)) {
        throw SchemaError("field 'min_lr' must lie in [0, peak_lr]");
    }
    if (c.min_lr && c.min_lr_ratio) {
        const double implied = *c.min_lr / c.peak_lr;
        if (std::abs(implied - *c.min_lr_ratio) > 1e-9 * std::max(std::abs(implied), 1e-12)) {
            throw SchemaError("fields 'min_lr' and 'min_lr_ratio' disagree");
        }
    }
    for (const auto& [key, value] : c.optimizer_extras) {
        if (!std::isfinite(value)) throw SchemaError("optimizer extra '" + key + "' is not finite");
        if (const auto* known = find_known_extra(key); known && c.optimizer != known->optimizer) {
            throw SchemaError("optimizer extra '" + key + "' is only valid for optimizer '" +
                              known->optimizer + "'");
        }
    }
}

RunConfig normalized(RunConfig c) {
    validate(c);
    if (!c.min_lr_ratio) c.min_lr_ratio = *c.min_lr / c.peak_lr;
    if (!c.min_lr) c.min_lr = *c.min_lr_ratio * c.peak_lr;
    return c;
}

Schema::Schema() {
    using K = FieldKind;
    fields_ = {
        {"source", K::categorical, 1.0, {"steplaw", "marin", "synthetic"}},
        {"model_size_N", K::numerical, 1e-2, {}},
        {"num_layers", K::numerical, 1.0, {}},
        {"num_heads", K::numerical, 1.0, {}},
        {"hidden_dim", K::numerical, 1e-2, {}},
        {"data_size_D", K::numerical, 1.0, {}},
        {"total_steps", K::numerical, 1e-3, {}},
        {"frac", K::numerical, 1.0, {}, false, true},
        {"optimizer", K::categorical, 1.0,
         {"adamw", "adam", "muon", "soap", "lion", "mars", "kron", "scion", "nadam", "cautious", "sgd",
          "adafactor", "sophia", "shampoo"}},
        {"peak_lr", K::numerical, 1e4, {}},
        {"lr_schedule", K::categorical, 1.0, {"cosine", "linear", "constant", "wsd", "inverse_sqrt", "exponential"}},
        {"min_lr", K::numerical, 1e4, {}},
        {"min_lr_ratio", K::numerical, 200.0, {}},
        {"weight_decay", K::numerical, 1e2, {}},
        {"batch_size", K::numerical, 1e-1, {}},
        {"warmup", K::numerical, 1e-2, {}},
        {"warmup_unit", K::categorical, 1.0, {"steps", "ratio"}},
        {"max_grad_norm", K::numerical, 1.0, {}},
        {"betas", K::categorical, 1.0, beta_vocabulary()},
        {"epsilon", K::categorical, 1.0, epsilon_vocabulary()},
        {"muon_adam_lr", K::numerical, 1e4, {}, true},
        {"soap_block_size", K::numerical, 2e-2, {}, true},
        {"kron_precond_lr", K::categorical, 1.0, {"<none>", "0.05", "0.1", "0.2", "0.3", "0.5", "1"}, true},
        {"optimizer_extras", K::hashed, 1.0, {}, true},
    };
    for (std::size_t i = 0; i < fields_.size(); ++i) {
        if (fields_[i].kind != K::hashed && !fields_[i].curve_only) slot_fields_.push_back(i);
    }
}

const Schema& Schema::instance() {
    static const Schema schema;
    return schema;
}

std::size_t Schema::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < fields_.size(); ++i) {
        if (fields_[i].name == name) return i;
    }
    throw SchemaError("unknown field '" + std::string(name) + "'");
}

const FieldSpec& Schema::field(std::string_view name) const { return fields_[index_of(name)]; }

std::size_t Schema::slot_of(std::string_view name) const {
    const std::size_t idx = index_of(name);
    auto it = std::find(slot_fields_.begin(), slot_fields_.end(), idx);
    if (it == slot_fields_.end()) throw SchemaError("field '" + std::string(name) + "' has no slot");
    return static_cast<std::size_t>(it - slot_fields_.begin());
}

std::string Schema::dump() const {
    static constexpr const char* kKindNames[] = {"categorical", "numerical", "hashed"};
    std::ostringstream out;
    out << "# schema\t" << kSchemaVersion << "\n";
    out << "order\tname\tkind\tscale_factor\toptional\tcurve_only\tvocabulary\n";
    for (std::size_t i = 0; i < fields_.size(); ++i) {
        const auto& f = fields_[i];
        out << i << '\t' << f.name << '\t' << kKindNames[static_cast<int>(f.kind)] << '\t'
            << (f.kind == FieldKind::numerical ? format_g(f.scale_factor) : "-") << '\t'
            << (f.optional ? 1 : 0) << '\t' << (f.curve_only ? 1 : 0) << '\t';
        if (f.vocabulary.empty()) {
            out << '-';
        } else {
            for (std::size_t v = 0; v < f.vocabulary.size(); ++v) out << (v ? "|" : "") << f.vocabulary[v];
        }
        out << '\n';
    }
    return out.str();
}

std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t Schema::hash() const { return fnv1a64(dump()); }

int Schema::extra_bucket(std::string_view key) { return static_cast<int>(fnv1a64(key) % kExtraBuckets); }

FeatureVector canonicalize(const RunConfig& raw, std::optional<double> frac) {
    const RunConfig c = normalized(raw);
    if (frac && !(*frac > 0.0 && *frac <= 1.0)) throw ArgumentError("frac must lie in (0, 1]");

    const Schema& schema = Schema::instance();
    FeatureVector fv;
    fv.frac = frac;
    fv.slots.reserve(schema.slot_fields().size());

    auto numeric = [](double v, const FieldSpec& f) { return Slot{v * f.scale_factor, -1, true}; };
    auto categorical = [](const std::string& token, const FieldSpec& f) {
        return Slot{0.0, category_index(f, token), true};
    };

    for (std::size_t idx : schema.slot_fields()) {
        const FieldSpec& f = schema.fields()[idx];
        const std::string& n = f.name;
        if (n == "source") fv.slots.push_back(categorical(c.source, f));
        else if (n == "model_size_N") fv.slots.push_back(numeric(c.model_size_N, f));
        else if (n == "num_layers") fv.slots.push_back(numeric(c.num_layers, f));
        else if (n == "num_heads") fv.slots.push_back(numeric(c.num_heads, f));
        else if (n == "hidden_dim") fv.slots.push_back(numeric(c.hidden_dim, f));
        else if (n == "data_size_D") fv.slots.push_back(numeric(c.data_size_D, f));
        else if (n == "total_steps") fv.slots.push_back(numeric(static_cast<double>(c.total_steps), f));
        else if (n == "optimizer") fv.slots.push_back(categorical(c.optimizer, f));
        else if (n == "peak_lr") fv.slots.push_back(numeric(c.peak_lr, f));
        else if (n == "lr_schedule") fv.slots.push_back(categorical(c.lr_schedule, f));
        else if (n == "min_lr") fv.slots.push_back(numeric(*c.min_lr, f));
        else if (n == "min_lr_ratio") fv.slots.push_back(numeric(*c.min_lr_ratio, f));
        else if (n == "weight_decay") fv.slots.push_back(numeric(c.weight_decay, f));
        else if (n == "batch_size") fv.slots.push_back(numeric(c.batch_size, f));
        else if (n == "warmup") fv.slots.push_back(numeric(c.warmup_ratio(), f));
        else if (n == "warmup_unit")
            fv.slots.push_back(categorical(c.warmup.unit == WarmupUnit::steps ? "steps" : "ratio", f));
        else if (n == "max_grad_norm") fv.slots.push_back(numeric(c.max_grad_norm, f));
        else if (n == "betas") fv.slots.push_back(categorical(beta_token(c.beta1, c.beta2), f));
        else if (n == "epsilon") fv.slots.push_back(categorical(epsilon_token(c.epsilon), f));
        else if (n == "muon_adam_lr" || n == "soap_block_size") {
            auto it = c.optimizer_extras.find(n);
            fv.slots.push_back(it == c.optimizer_extras.end() ? Slot{0.0, -1, false} : numeric(it->second, f));
        } else if (n == "kron_precond_lr") {
            auto it = c.optimizer_extras.find(n);
            fv.slots.push_back(it == c.optimizer_extras.end() ? Slot{0.0, 0, false}
                                                              : categorical(format_g(it->second), f));
        } else {
            throw SchemaError("no encoder for field '" + n + "'");
        }
    }

    for (const auto& [key, value] : c.optimizer_extras) {
        if (find_known_extra(key)) continue;
        fv.extras.push_back({key, Schema::extra_bucket(key), value});
    }
    return fv;
}

RunConfig decanonicalize(const FeatureVector& fv) {
    const Schema& schema = Schema::instance();
    if (fv.slots.size() != schema.slot_fields().size()) {
        throw SchemaError("feature vector has " + std::to_string(fv.slots.size()) + " slots, schema expects " +
                          std::to_string(schema.slot_fields().size()));
    }
    RunConfig c;
    double warmup_ratio = 0.0;
    bool warmup_in_steps = false;
    for (std::size_t s = 0; s < fv.slots.size(); ++s) {
        const FieldSpec& f = schema.fields()[schema.slot_fields()[s]];
        const Slot& slot = fv.slots[s];
        const std::string& n = f.name;
        const double v = slot.value / f.scale_factor;
        auto token = [&] { return category_token(f, slot.category); };
        if (n == "source") c.source = token();
        else if (n == "model_size_N") c.model_size_N = v;
        else if (n == "num_layers") c.num_layers = static_cast<int>(std::lround(v));
        else if (n == "num_heads") c.num_heads = static_cast<int>(std::lround(v));
        else if (n == "hidden_dim") c.hidden_dim = static_cast<int>(std::lround(v));
        else if (n == "data_size_D") c.data_size_D = v;
        else if (n == "total_steps") c.total_steps = std::llround(v);
        else if (n == "optimizer") c.optimizer = token();
        else if (n == "peak_lr") c.peak_lr = v;
        else if (n == "lr_schedule") c.lr_schedule = token();
        else if (n == "min_lr") c.min_lr = v;
        else if (n == "min_lr_ratio") c.min_lr_ratio = v;
        else if (n == "weight_decay") c.weight_decay = v;
        else if (n == "batch_size") c.batch_size = v;
        else if (n == "warmup") warmup_ratio = v;
        else if (n == "warmup_unit") warmup_in_steps = token() == "steps";
        else if (n == "max_grad_norm") c.max_grad_norm = v;
        else if (n == "betas") {
            const std::string t = token();
            const auto comma = t.find(',');
            c.beta1 = std::stod(t.substr(0, comma));
            c.beta2 = std::stod(t.substr(comma + 1));
        } else if (n == "epsilon") {
            c.epsilon = std::pow(10.0, -std::stod(token()));
        } else if (n == "muon_adam_lr" || n == "soap_block_size") {
            if (slot.present) c.optimizer_extras[n] = v;
        } else if (n == "kron_precond_lr") {
            if (slot.present) c.optimizer_extras[n] = std::stod(token());
        }
    }
    c.warmup = warmup_in_steps ? Warmup{warmup_ratio * static_cast<double>(c.total_steps), WarmupUnit::steps}
                               : Warmup{warmup_ratio, WarmupUnit::ratio};
    for (const auto& extra : fv.extras) c.optimizer_extras[extra.key] = extra.value;
    return c;
}

std::string FeatureVector::serialize() const {
    const Schema& schema = Schema::instance();
    std::ostringstream out;
    for (std::size_t s = 0; s < slots.size() && s < schema.slot_fields().size(); ++s) {
        const FieldSpec& f = schema.fields()[schema.slot_fields()[s]];
        out << f.name << '=';
        if (!slots[s].present) out << "NA";
        else if (f.kind == FieldKind::categorical) out << category_token(f, slots[s].category);
        else out << format_exact(slots[s].value);
        out << '\n';
    }
    for (const auto& e : extras) out << "extra:" << e.key << '=' << e.bucket << ':' << format_exact(e.value) << '\n';
    if (frac) out << "frac=" << format_exact(*frac) << '\n';
    return out.str();
}

double numeric_field(const RunConfig& c, std::string_view name) {
    if (name == "model_size_N") return c.model_size_N;
    if (name == "num_layers") return c.num_layers;
    if (name == "num_heads") return c.num_heads;
    if (name == "hidden_dim") return c.hidden_dim;
    if (name == "data_size_D") return c.data_size_D;
    if (name == "total_steps") return static_cast<double>(c.total_steps);
    if (name == "peak_lr") return c.peak_lr;
    if (name == "min_lr") return c.min_lr.value_or(c.min_lr_ratio.value_or(0.0) * c.peak_lr);
    if (name == "min_lr_ratio") return c.min_lr_ratio.value_or(c.min_lr.value_or(0.0) / c.peak_lr);
    if (name == "weight_decay") return c.weight_decay;
    if (name == "batch_size") return c.batch_size;
    if (name == "warmup") return c.warmup.value;
    if (name == "max_grad_norm") return c.max_grad_norm;
    if (name == "beta1") return c.beta1;
    if (name == "beta2") return c.beta2;
    if (name == "epsilon") return c.epsilon;
    if (auto it = c.optimizer_extras.find(std::string(name)); it != c.optimizer_extras.end()) return it->second;
    throw SchemaError("unknown numerical field '" + std::string(name) + "'");
}

void set_field(RunConfig& c, std::string_view name, double value) {
    if (name == "model_size_N") c.model_size_N = value;
    else if (name == "num_layers") c.num_layers = static_cast<int>(std::lround(value));
    else if (name == "num_heads") c.num_heads = static_cast<int>(std::lround(value));
    else if (name == "hidden_dim") c.hidden_dim = static_cast<int>(std::lround(value));
    else if (name == "data_size_D") c.data_size_D = value;
    else if (name == "total_steps") c.total_steps = std::llround(value);
    else if (name == "peak_lr") {
        // The final learning rate follows the peak through a fixed ratio.
        const double ratio = c.min_lr_ratio.value_or(c.min_lr.value_or(0.0) / c.peak_lr);
        c.peak_lr = value;
        c.min_lr_ratio = ratio;
        c.min_lr = ratio * value;
    } else if (name == "min_lr") {
        c.min_lr = value;
        c.min_lr_ratio = value / c.peak_lr;
    } else if (name == "min_lr_ratio") {
        c.min_lr_ratio = value;
        c.min_lr = value * c.peak_lr;
    } else if (name == "weight_decay") c.weight_decay = value;
    else if (name == "batch_size") c.batch_size = value;
    else if (name == "warmup") c.warmup.value = value;
    else if (name == "max_grad_norm") c.max_grad_norm = value;
    else if (name == "beta1") c.beta1 = value;
    else if (name == "beta2") c.beta2 = value;
    else if (name == "epsilon") c.epsilon = value;
    else if (find_known_extra(name) || name.starts_with("extra.")) {
        c.optimizer_extras[std::string(name.starts_with("extra.") ? name.substr(6) : name)] = value;
    } else {
        throw SchemaError("cannot set numerical field '" + std::string(name) + "'");
    }
}

void set_field(RunConfig& c, std::string_view name, const std::string& value) {
    if (name == "source") c.source = value;
    else if (name == "optimizer") c.optimizer = value;
    else if (name == "lr_schedule") c.lr_schedule = value;
    else if (name == "warmup_unit") {
        if (value != "steps" && value != "ratio") throw SchemaError("warmup_unit must be 'steps' or 'ratio'");
        c.warmup.unit = value == "steps" ? WarmupUnit::steps : WarmupUnit::ratio;
    } else {
        std::size_t used = 0;
        double parsed = 0.0;
        try {
            parsed = std::stod(value, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != value.size() || value.empty()) {
            throw SchemaError("field '" + std::string(name) + "' expects a number, got '" + value + "'");
        }
        set_field(c, name, parsed);
    }
}

}  // namespace cpl
