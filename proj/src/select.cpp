#include "cpl/select.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "cpl/errors.hpp"

namespace cpl {

std::size_t SweepGrid::size() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.values.size();
    return n;
}

void SweepGrid::validate() const {
    std::set<std::string> names;
    for (const auto& a : axes) {
        if (a.values.empty()) throw SweepError("sweep axis '" + a.field + "' is empty");
        if (!names.insert(a.field).second) throw SweepError("sweep axis '" + a.field + "' appears twice");
    }
}

RunConfig SweepGrid::config_at(std::size_t index) const {
    RunConfig c = base_config;
    std::vector<std::size_t> coords(axes.size());
    for (std::size_t k = axes.size(); k-- > 0;) {
        coords[k] = index % axes[k].values.size();
        index /= axes[k].values.size();
    }
    for (std::size_t k = 0; k < axes.size(); ++k) {
        const double v = axes[k].values[coords[k]];
        if (axes[k].field == "batch_size") apply_batch_size(c, v);
        else set_field(c, axes[k].field, v);
    }
    return c;
}

std::vector<double> SweepGrid::log_spaced(double lo, double hi, std::size_t count) {
    if (!(lo > 0.0) || !(hi >= lo) || count == 0) throw SweepError("log_spaced: need 0 < lo <= hi and count >= 1");
    std::vector<double> out;
    for (std::size_t i = 0; i < count; ++i) {
        const double t = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
        out.push_back(std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo))));
    }
    return out;
}

std::vector<double> SweepGrid::linear_spaced(double lo, double hi, std::size_t count) {
    if (count == 0) throw SweepError("linear_spaced: count must be positive");
    std::vector<double> out;
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1));
    }
    return out;
}

void apply_batch_size(RunConfig& c, double batch_size) {
    if (!(batch_size > 0.0)) throw SchemaError("field 'batch_size' must be >= 1");
    const double scale = c.batch_size / batch_size;
    const auto steps = static_cast<double>(c.total_steps);
    c.total_steps = std::max<std::int64_t>(1, std::llround(steps * scale));
    if (c.warmup.unit == WarmupUnit::steps) c.warmup.value *= static_cast<double>(c.total_steps) / steps;
    c.batch_size = batch_size;
}

RunConfig at_scale(RunConfig c, double N, double D) {
    if (!(N > 0.0) || !(D > 0.0)) throw ArgumentError("at_scale: N and D must be positive");
    const auto steps = static_cast<double>(c.total_steps);
    c.total_steps = std::max<std::int64_t>(1, std::llround(steps * D / c.data_size_D));
    if (c.warmup.unit == WarmupUnit::steps) c.warmup.value *= static_cast<double>(c.total_steps) / steps;
    c.model_size_N = N;
    c.data_size_D = D;
    return c;
}

SweepResult sweep(const BatchPredictor& predictor, const SweepGrid& grid) {
    grid.validate();
    SweepResult result;
    std::vector<RunConfig> configs;
    std::vector<std::size_t> indices;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        try {
            RunConfig c = grid.config_at(i);
            validate(c);
            configs.push_back(std::move(c));
            indices.push_back(i);
        } catch (const Error& e) {
            result.skipped.push_back({i, e.what()});
        }
    }
    if (configs.empty()) throw SweepError("sweep: every grid point is invalid");
    const auto losses = predictor(configs);
    if (losses.size() != configs.size()) throw SweepError("sweep: predictor returned the wrong number of losses");
    for (std::size_t k = 0; k < configs.size(); ++k) {
        if (!std::isfinite(losses[k])) {
            result.skipped.push_back({indices[k], "non-finite predicted loss"});
            continue;
        }
        result.surface.push_back({std::move(configs[k]), losses[k], indices[k]});
    }
    if (result.surface.empty()) throw SweepError("sweep: no grid point produced a finite prediction");
    std::stable_sort(result.surface.begin(), result.surface.end(), [](const auto& a, const auto& b) {
        return a.loss < b.loss || (a.loss == b.loss && a.grid_index < b.grid_index);
    });
    std::sort(result.skipped.begin(), result.skipped.end(), [](const auto& a, const auto& b) { return a.grid_index < b.grid_index; });
    return result;
}

const char* to_string(RefineStatus status) {
    switch (status) {
        case RefineStatus::refined: return "refined";
        case RefineStatus::too_few_points: return "too_few_points";
        case RefineStatus::not_positive_definite: return "not_positive_definite";
        case RefineStatus::rejected_by_predictor: return "rejected_by_predictor";
        case RefineStatus::no_lr_batch_axes: return "no_lr_batch_axes";
    }
    return "unknown";
}

RefinedOptimum refine_optimum(std::span<const SurfaceSample> surface, double near_frac) {
    if (surface.empty()) throw ArgumentError("refine_optimum: empty surface");
    const auto best_it = std::min_element(surface.begin(), surface.end(), [](const auto& a, const auto& b) { return a.loss < b.loss; });
    const SurfaceSample& best = *best_it;
    RefinedOptimum fallback{best.lr, best.batch, RefineStatus::too_few_points, 0};

    const double cutoff = best.loss + near_frac * std::abs(best.loss);
    std::vector<const SurfaceSample*> near;
    for (const auto& s : surface) {
        if (s.loss <= cutoff) near.push_back(&s);
    }
    fallback.points_used = near.size();
    if (near.size() < 6) return fallback;

    // Centre on the best point for conditioning.
    const double u0 = std::log(best.lr), v0 = std::log(best.batch);
    const auto n = static_cast<Eigen::Index>(near.size());
    Eigen::MatrixXd design(n, 6);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double u = std::log(near[static_cast<std::size_t>(i)]->lr) - u0;
        const double v = std::log(near[static_cast<std::size_t>(i)]->batch) - v0;
        design.row(i) << 1.0, u, v, u * u, u * v, v * v;
        y(i) = near[static_cast<std::size_t>(i)]->loss;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    fallback.status = RefineStatus::not_positive_definite;
    if (qr.rank() < 6) return fallback;
    const Eigen::VectorXd coef = qr.solve(y);

    Eigen::Matrix2d hessian;
    hessian << 2.0 * coef(3), coef(4), coef(4), 2.0 * coef(5);
    const Eigen::Vector2d eig = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(hessian).eigenvalues();
    if (!(eig.minCoeff() > 1e-9 * std::max(1.0, std::abs(best.loss)))) return fallback;
    const Eigen::Vector2d vertex = hessian.ldlt().solve(-Eigen::Vector2d(coef(1), coef(2)));
    if (!vertex.allFinite()) return fallback;
    return {std::exp(u0 + vertex(0)), std::exp(v0 + vertex(1)), RefineStatus::refined, near.size()};
}

std::vector<SurfaceSample> lr_batch_slice(std::span<const SurfacePoint> surface, const SweepGrid& grid) {
    std::vector<SurfaceSample> out;
    if (surface.empty()) return out;
    auto coords = [&](std::size_t index) {
        std::vector<std::size_t> c(grid.axes.size());
        for (std::size_t k = grid.axes.size(); k-- > 0;) {
            c[k] = index % grid.axes[k].values.size();
            index /= grid.axes[k].values.size();
        }
        return c;
    };
    const auto best = coords(surface.front().grid_index);
    for (const auto& p : surface) {
        const auto c = coords(p.grid_index);
        bool on_slice = true;
        for (std::size_t k = 0; k < grid.axes.size(); ++k) {
            const auto& f = grid.axes[k].field;
            if (f != "peak_lr" && f != "batch_size" && c[k] != best[k]) on_slice = false;
        }
        if (on_slice) out.push_back({p.config.peak_lr, p.config.batch_size, p.loss});
    }
    return out;
}

Recommendation recommend(const BatchPredictor& predictor, double N, double D, SweepGrid grid,
                         std::span<const FieldConstraint> constraints, double near_frac) {
    grid.base_config = at_scale(grid.base_config, N, D);
    for (const auto& con : constraints) {
        if (con.field == "batch_size") {
            apply_batch_size(grid.base_config, std::stod(con.value));
        } else {
            set_field(grid.base_config, con.field, con.value);
        }
        std::erase_if(grid.axes, [&](const SweepAxis& a) { return a.field == con.field; });
    }

    SweepResult swept = sweep(predictor, grid);
    Recommendation rec;
    rec.best_grid_config = swept.surface.front().config;
    rec.best_grid_loss = swept.surface.front().loss;
    rec.recommended_config = rec.best_grid_config;
    rec.recommended_loss = rec.best_grid_loss;

    const bool has_axes = std::any_of(grid.axes.begin(), grid.axes.end(), [](auto& a) { return a.field == "peak_lr"; }) &&
                          std::any_of(grid.axes.begin(), grid.axes.end(), [](auto& a) { return a.field == "batch_size"; });
    if (!has_axes) {
        rec.refined = {rec.best_grid_config.peak_lr, rec.best_grid_config.batch_size, RefineStatus::no_lr_batch_axes, 0};
    } else {
        const auto slice = lr_batch_slice(swept.surface, grid);
        rec.refined = refine_optimum(slice, near_frac);
        if (rec.refined.status == RefineStatus::refined) {
            RunConfig candidate = rec.best_grid_config;
            set_field(candidate, "peak_lr", rec.refined.lr);
            apply_batch_size(candidate, rec.refined.batch);
            bool accepted = false;
            try {
                validate(candidate);
                const RunConfig one[1] = {candidate};
                const double loss = predictor(one).at(0);
                if (std::isfinite(loss) && loss <= rec.best_grid_loss + near_frac * std::abs(rec.best_grid_loss)) {
                    rec.recommended_config = candidate;
                    rec.recommended_loss = loss;
                    accepted = true;
                }
            } catch (const Error&) {
            }
            if (!accepted) rec.refined.status = RefineStatus::rejected_by_predictor;
        }
    }
    rec.relative_loss = (rec.recommended_loss - rec.best_grid_loss) / std::abs(rec.best_grid_loss);
    rec.predicted_surface = std::move(swept.surface);
    rec.skipped = std::move(swept.skipped);
    return rec;
}

namespace {

std::string g(double v, int digits = 10) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

}  // namespace

std::string format_surface(std::span<const SurfacePoint> surface) {
    std::ostringstream out;
    out << "grid_index\tpeak_lr\tbatch_size\tweight_decay\ttotal_steps\tpredicted_loss\n";
    for (const auto& p : surface) {
        out << p.grid_index << '\t' << g(p.config.peak_lr) << '\t' << g(p.config.batch_size) << '\t'
            << g(p.config.weight_decay) << '\t' << p.config.total_steps << '\t' << g(p.loss, 12) << '\n';
    }
    return out.str();
}

std::string format_recommendation(const Recommendation& rec) {
    std::ostringstream out;
    out << "[recommendation]\n"
        << "best_grid_peak_lr\t" << g(rec.best_grid_config.peak_lr) << '\n'
        << "best_grid_batch_size\t" << g(rec.best_grid_config.batch_size) << '\n'
        << "best_grid_weight_decay\t" << g(rec.best_grid_config.weight_decay) << '\n'
        << "best_grid_loss\t" << g(rec.best_grid_loss, 12) << '\n'
        << "refine_status\t" << to_string(rec.refined.status) << '\n'
        << "refine_points\t" << rec.refined.points_used << '\n'
        << "refined_peak_lr\t" << g(rec.refined.lr) << '\n'
        << "refined_batch_size\t" << g(rec.refined.batch) << '\n'
        << "recommended_peak_lr\t" << g(rec.recommended_config.peak_lr) << '\n'
        << "recommended_batch_size\t" << g(rec.recommended_config.batch_size) << '\n'
        << "recommended_loss\t" << g(rec.recommended_loss, 12) << '\n'
        << "relative_loss\t" << g(rec.relative_loss, 6) << '\n'
        << "surface_points\t" << rec.predicted_surface.size() << '\n'
        << "skipped_points\t" << rec.skipped.size() << '\n';
    return out.str();
}

}  // namespace cpl
