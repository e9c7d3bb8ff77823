#pragma once

#include <functional>
#include <span>
#include <vector>

#include "cpl/config.hpp"

namespace cpl {

// Any final-loss predictor, evaluated over a batch of configurations.
using BatchPredictor = std::function<std::vector<double>(std::span<const RunConfig>)>;
using PointPredictor = std::function<double(const RunConfig&)>;

inline BatchPredictor batched(PointPredictor point) {
    return [point = std::move(point)](std::span<const RunConfig> configs) {
        std::vector<double> out;
        out.reserve(configs.size());
        for (const auto& c : configs) out.push_back(point(c));
        return out;
    };
}

// One point of a (learning rate, batch size) loss surface.
struct SurfaceSample {
    double lr = 0.0;
    double batch = 0.0;
    double loss = 0.0;
};

}  // namespace cpl
