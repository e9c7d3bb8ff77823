#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cpl {

inline constexpr std::string_view kSchemaVersion = "cpl-schema/1";

enum class WarmupUnit { steps, ratio };

struct Warmup {
    double value = 0.0;
    WarmupUnit unit = WarmupUnit::ratio;

    bool operator==(const Warmup&) const = default;
};

// One pretraining configuration, in the units the logs use:
// model_size_N in millions of non-embedding parameters, data_size_D in
// billions of tokens, batch_size in sequences per step.
struct RunConfig {
    std::string source;
    double model_size_N = 0.0;
    int num_layers = 0;
    int num_heads = 0;
    int hidden_dim = 0;
    double data_size_D = 0.0;
    std::int64_t total_steps = 0;
    std::string optimizer;
    double peak_lr = 0.0;
    std::string lr_schedule;
    std::optional<double> min_lr;
    std::optional<double> min_lr_ratio;
    double weight_decay = 0.0;
    double batch_size = 0.0;
    Warmup warmup;
    double max_grad_norm = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double epsilon = 1e-8;
    std::map<std::string, double> optimizer_extras;

    bool operator==(const RunConfig&) const = default;

    double warmup_ratio() const;
};

// Throws SchemaError when a RunConfig invariant is violated.
void validate(const RunConfig& config);

// Fills min_lr / min_lr_ratio from each other; validates.
RunConfig normalized(RunConfig config);

enum class FieldKind { categorical, numerical, hashed };

struct FieldSpec {
    std::string name;
    FieldKind kind = FieldKind::numerical;
    double scale_factor = 1.0;
    std::vector<std::string> vocabulary;  // categorical only
    bool optional = false;                // slot may be absent
    bool curve_only = false;              // present only for intermediate-loss targets
};

// The fixed, ordered field table. Categorical vocabularies are closed: a
// value outside them is a schema error.
class Schema {
public:
    static const Schema& instance();

    std::span<const FieldSpec> fields() const { return fields_; }
    const FieldSpec& field(std::string_view name) const;
    std::size_t index_of(std::string_view name) const;

    // Fields that carry a slot in FeatureVector::slots (excludes the curve
    // fraction and the hashed extras bucket).
    std::span<const std::size_t> slot_fields() const { return slot_fields_; }
    std::size_t slot_of(std::string_view name) const;

    // Tab-separated table of order, name, kind, scale and vocabulary.
    std::string dump() const;
    std::uint64_t hash() const;

    static constexpr int kExtraBuckets = 16;
    static int extra_bucket(std::string_view key);

private:
    Schema();
    std::vector<FieldSpec> fields_;
    std::vector<std::size_t> slot_fields_;
};

std::uint64_t fnv1a64(std::string_view text);

struct Slot {
    double value = 0.0;  // scaled numerical value
    int category = -1;   // categorical index
    bool present = true;

    bool operator==(const Slot&) const = default;
};

struct ExtraSlot {
    std::string key;
    int bucket = 0;
    double value = 0.0;

    bool operator==(const ExtraSlot&) const = default;
};

struct FeatureVector {
    std::vector<Slot> slots;  // aligned with Schema::slot_fields()
    std::vector<ExtraSlot> extras;
    std::optional<double> frac;

    bool operator==(const FeatureVector&) const = default;

    // Deterministic "name=value" lines in schema order.
    std::string serialize() const;
};

FeatureVector canonicalize(const RunConfig& raw, std::optional<double> frac = std::nullopt);
RunConfig decanonicalize(const FeatureVector& fv);

// Categorical token helpers shared with the encoders.
std::string beta_token(double beta1, double beta2);
std::string epsilon_token(double epsilon);

// Set a numerical or categorical field by schema name (used by sweeps and
// CLI --fix). Throws SchemaError for unknown names.
void set_field(RunConfig& config, std::string_view name, double value);
void set_field(RunConfig& config, std::string_view name, const std::string& value);
double numeric_field(const RunConfig& config, std::string_view name);

}  // namespace cpl
