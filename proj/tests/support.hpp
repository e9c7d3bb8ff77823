#pragma once

#include <string>
#include <vector>

#include "cpl/config.hpp"
#include "cpl/ingest.hpp"

namespace testing {

inline cpl::RunConfig sample_config() {
    cpl::RunConfig c;
    c.source = "steplaw";
    c.model_size_N = 268.0;
    c.num_layers = 16;
    c.num_heads = 16;
    c.hidden_dim = 1024;
    c.data_size_D = 26.8;
    c.total_steps = 12000;
    c.optimizer = "adamw";
    c.peak_lr = 1e-3;
    c.lr_schedule = "cosine";
    c.min_lr = 1e-5;
    c.weight_decay = 0.1;
    c.batch_size = 512;
    c.warmup = {2000, cpl::WarmupUnit::steps};
    c.max_grad_norm = 1.0;
    c.beta1 = 0.9;
    c.beta2 = 0.95;
    c.epsilon = 1e-8;
    return c;
}

inline cpl::RunRecord make_run(const std::string& id, double N, double D, double loss, std::string optimizer = "adamw") {
    cpl::RunRecord r;
    r.config = sample_config();
    r.config.model_size_N = N;
    r.config.data_size_D = D;
    r.config.optimizer = std::move(optimizer);
    r.final_loss = loss;
    r.run_id = id;
    return r;
}

}  // namespace testing
