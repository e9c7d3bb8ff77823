#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "cpl/config.hpp"
#include "cpl/errors.hpp"
#include "cpl/runio.hpp"
#include "support.hpp"

using namespace cpl;

TEST_CASE("scale factors match the published field table") {
    const std::map<std::string, double> expected = {
        {"model_size_N", 1e-2}, {"num_layers", 1.0}, {"num_heads", 1.0},   {"hidden_dim", 1e-2},
        {"data_size_D", 1.0},   {"total_steps", 1e-3}, {"peak_lr", 1e4},   {"min_lr", 1e4},
        {"min_lr_ratio", 200.0}, {"weight_decay", 1e2}, {"batch_size", 1e-1}, {"warmup", 1e-2},
        {"max_grad_norm", 1.0}, {"muon_adam_lr", 1e4}, {"soap_block_size", 2e-2},
    };
    const Schema& s = Schema::instance();
    for (const auto& [name, factor] : expected) {
        CAPTURE(name);
        CHECK(s.field(name).kind == FieldKind::numerical);
        CHECK(s.field(name).scale_factor == factor);
    }
    for (const char* name : {"source", "optimizer", "lr_schedule", "betas", "epsilon", "kron_precond_lr"}) {
        CAPTURE(name);
        CHECK(s.field(name).kind == FieldKind::categorical);
    }
    CHECK(s.field("optimizer_extras").kind == FieldKind::hashed);
    CHECK_THROWS_AS(s.field("learning_rate"), SchemaError);
}

TEST_CASE("canonical encoding applies scale factors and tokens") {
    const RunConfig c = testing::sample_config();
    const FeatureVector fv = canonicalize(c);
    const Schema& s = Schema::instance();
    REQUIRE(fv.slots.size() == s.slot_fields().size());
    CHECK(fv.slots[s.slot_of("data_size_D")].value == doctest::Approx(26.8).epsilon(1e-15));
    CHECK(fv.slots[s.slot_of("peak_lr")].value == doctest::Approx(10.0));
    CHECK(fv.slots[s.slot_of("batch_size")].value == doctest::Approx(51.2));
    CHECK(fv.slots[s.slot_of("weight_decay")].value == doctest::Approx(10.0));
    CHECK(fv.slots[s.slot_of("model_size_N")].value == doctest::Approx(2.68));
    CHECK(fv.slots[s.slot_of("total_steps")].value == doctest::Approx(12.0));
    CHECK(fv.slots[s.slot_of("min_lr_ratio")].value == doctest::Approx(0.01 * 200.0));
    // warmup is encoded as a ratio of total steps
    CHECK(fv.slots[s.slot_of("warmup")].value == doctest::Approx(2000.0 / 12000.0 * 1e-2));

    const auto& eps = s.field("epsilon");
    CHECK(eps.vocabulary[static_cast<std::size_t>(fv.slots[s.slot_of("epsilon")].category)] == "8");
    const auto& betas = s.field("betas");
    CHECK(betas.vocabulary[static_cast<std::size_t>(fv.slots[s.slot_of("betas")].category)] == "0.9,0.95");
    CHECK_FALSE(fv.slots[s.slot_of("muon_adam_lr")].present);
}

TEST_CASE("canonicalize and decanonicalize round-trip") {
    RunConfig c = testing::sample_config();
    c.optimizer = "muon";
    c.optimizer_extras = {{"muon_adam_lr", 3e-4}, {"my_new_knob", 7.5}};
    c.epsilon = 1e-10;
    c.beta2 = 0.98;
    const FeatureVector fv = canonicalize(c, 0.5);
    const RunConfig back = decanonicalize(fv);
    CHECK(canonicalize(back, 0.5) == fv);
    CHECK(back.optimizer == "muon");
    CHECK(back.optimizer_extras.at("muon_adam_lr") == doctest::Approx(3e-4));
    CHECK(back.optimizer_extras.at("my_new_knob") == 7.5);
    CHECK(back.epsilon == doctest::Approx(1e-10));
    CHECK(back.warmup.unit == WarmupUnit::steps);
    CHECK(back.warmup.value == doctest::Approx(2000.0));
    REQUIRE(fv.extras.size() == 1);
    CHECK(fv.extras[0].bucket == Schema::extra_bucket("my_new_knob"));
    CHECK(fv.extras[0].bucket >= 0);
    CHECK(fv.extras[0].bucket < Schema::kExtraBuckets);
}

TEST_CASE("validation rejects inconsistent configurations") {
    RunConfig c = testing::sample_config();
    SUBCASE("min_lr above peak") {
        c.min_lr = 2e-3;
        CHECK_THROWS_AS(validate(c), SchemaError);
    }
    SUBCASE("ratio disagreement") {
        c.min_lr_ratio = 0.5;
        CHECK_THROWS_AS(validate(c), SchemaError);
    }
    SUBCASE("extra belongs to another optimizer") {
        c.optimizer_extras["soap_block_size"] = 128;
        CHECK_THROWS_AS(validate(c), SchemaError);
    }
    SUBCASE("unknown categorical value") {
        c.optimizer = "adamw-9000";
        CHECK_THROWS_AS(canonicalize(c), SchemaError);
    }
    SUBCASE("missing both min_lr fields") {
        c.min_lr.reset();
        CHECK_THROWS_AS(validate(c), SchemaError);
    }
    SUBCASE("frac out of range") {
        CHECK_THROWS_AS(canonicalize(c, 0.0), ArgumentError);
        CHECK_THROWS_AS(canonicalize(c, 1.5), ArgumentError);
    }
}

TEST_CASE("normalized fills min_lr fields from each other") {
    RunConfig c = testing::sample_config();
    c.min_lr.reset();
    c.min_lr_ratio = 0.1;
    const RunConfig n = normalized(c);
    CHECK(*n.min_lr == doctest::Approx(1e-4));
}

TEST_CASE("set_field keeps min_lr_ratio when the peak moves") {
    RunConfig c = normalized(testing::sample_config());
    set_field(c, "peak_lr", 2e-3);
    CHECK(*c.min_lr_ratio == doctest::Approx(0.01));
    CHECK(*c.min_lr == doctest::Approx(2e-5));
    CHECK_NOTHROW(validate(c));
    set_field(c, "optimizer", std::string("lion"));
    CHECK(c.optimizer == "lion");
    CHECK_THROWS_AS(set_field(c, "weight_decay", std::string("lots")), SchemaError);
    CHECK_THROWS_AS(set_field(c, "colour", 1.0), SchemaError);
}

TEST_CASE("schema dump is a stable machine-readable table") {
    const std::string dump = Schema::instance().dump();
    std::istringstream in(dump);
    std::string line;
    std::getline(in, line);
    CHECK(line == "# schema\tcpl-schema/1");
    std::getline(in, line);
    CHECK(line.rfind("order\tname\tkind\tscale_factor", 0) == 0);
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == Schema::instance().fields().size());
    CHECK(Schema::instance().hash() == fnv1a64(dump));
}

TEST_CASE("JSON configuration round-trip") {
    RunConfig c = normalized(testing::sample_config());
    c.optimizer_extras["my_new_knob"] = 2.0;
    CHECK(config_from_json(to_json(c)) == c);
    auto j = to_json(c);
    j.erase("warmup_unit");
    CHECK(config_from_json(j).warmup.unit == WarmupUnit::steps);
    j.erase("source");
    CHECK_THROWS_AS(config_from_json(j), SchemaError);
}
