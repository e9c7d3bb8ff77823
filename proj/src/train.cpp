#include <algorithm>
#include <cmath>
#include <numeric>

#include "cpl/regressor.hpp"
#include "cpl/rng.hpp"

namespace cpl {

std::int64_t stage_warmup_steps(const StagePlan& stage, std::int64_t total_steps) {
    const auto by_ratio = static_cast<std::int64_t>(std::ceil(stage.warmup_ratio * static_cast<double>(total_steps)));
    const std::int64_t warmup = stage.warmup_steps ? std::min(*stage.warmup_steps, by_ratio) : by_ratio;
    return std::clamp<std::int64_t>(warmup, 0, total_steps);
}

double scheduled_lr(std::int64_t step, std::int64_t total, std::int64_t warmup, double peak) {
    if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
    const auto decay = std::max<std::int64_t>(1, total - warmup);
    return peak * static_cast<double>(std::max<std::int64_t>(0, total - step)) / static_cast<double>(decay);
}

TrainPlan TrainPlan::desk_defaults() {
    TrainPlan plan;
    plan.stage1 = {20, 1e-3, 0.1, std::nullopt, false};
    plan.stage2 = {200, 3e-4, 0.1, 1000, true};
    plan.batch_size = 64;
    return plan;
}

TrainPlan TrainPlan::desk_curve_defaults() {
    TrainPlan plan;
    plan.stage1 = {2, 3e-3, 0.1, std::nullopt, false};
    plan.stage2 = {30, 2e-3, 0.1, 1000, true};
    plan.batch_size = 256;
    return plan;
}

namespace {

void validate_plan(const TrainPlan& plan) {
    for (const StagePlan* s : {&plan.stage1, &plan.stage2}) {
        if (s->epochs < 0) throw ArgumentError("train plan: epochs must be non-negative");
        if (!(s->peak_lr > 0.0)) throw ArgumentError("train plan: learning rate must be positive");
        if (!(s->warmup_ratio >= 0.0 && s->warmup_ratio <= 1.0)) throw ArgumentError("train plan: warmup ratio must lie in [0, 1]");
    }
    if (plan.batch_size == 0) throw ArgumentError("train plan: batch size must be positive");
}

double mean_squared_error(const RegressorModel& model, const EncodedBatch& data, const Eigen::RowVectorXd& targets) {
    if (data.size == 0) return 0.0;
    return (forward_batch(model, data) - targets).squaredNorm() / static_cast<double>(data.size);
}

double mean_absolute_error(const RegressorModel& model, const EncodedBatch& data, const Eigen::RowVectorXd& targets) {
    return (forward_batch(model, data) - targets).cwiseAbs().sum() / static_cast<double>(data.size);
}

bool all_finite(const RegressorModel& model) {
    return std::all_of(model.tensors().begin(), model.tensors().end(), [](const Tensor& t) { return t.value.allFinite(); });
}

}  // namespace

TrainResult train_regressor(RegressorModel model, std::span<const TrainExample> train,
                            std::span<const TrainExample> validation, const TrainPlan& plan, std::uint64_t seed) {
    validate_plan(plan);
    if (train.empty()) throw ArgumentError("train: empty training set");

    auto split = [&](std::span<const TrainExample> examples, Eigen::RowVectorXd& targets) {
        std::vector<FeatureVector> features;
        features.reserve(examples.size());
        targets.resize(static_cast<Eigen::Index>(examples.size()));
        for (std::size_t i = 0; i < examples.size(); ++i) {
            features.push_back(examples[i].features);
            targets(static_cast<Eigen::Index>(i)) = examples[i].target;
        }
        return encode_batch(features, model.shape().with_frac);
    };
    Eigen::RowVectorXd train_y, val_y;
    const EncodedBatch train_x = split(train, train_y);
    const EncodedBatch val_x = split(validation, val_y);

    Rng rng(seed);
    AdamWState state;
    TrainReport report;
    auto last_finite = std::make_shared<const RegressorModel>(model);
    std::vector<Eigen::MatrixXd> grads;
    std::vector<std::size_t> order(train.size());

    const StagePlan* stages[2] = {&plan.stage1, &plan.stage2};
    for (int s = 0; s < 2; ++s) {
        const StagePlan& stage = *stages[s];
        if (s == 1 && plan.reset_optimizer_state) state = AdamWState{};
        std::vector<char> trainable;
        for (const auto& t : model.tensors()) trainable.push_back(t.group != ParamGroup::trunk || stage.train_trunk);

        const auto batch = std::min(plan.batch_size, train.size());
        const auto steps_per_epoch = static_cast<std::int64_t>((train.size() + batch - 1) / batch);
        const std::int64_t total = steps_per_epoch * stage.epochs;
        const std::int64_t warmup = stage_warmup_steps(stage, total);
        AdamWHyper hyper{0.0, plan.beta1, plan.beta2, plan.epsilon, plan.weight_decay};

        std::int64_t step = 0;
        for (int epoch = 0; epoch < stage.epochs; ++epoch) {
            std::iota(order.begin(), order.end(), 0);
            rng.shuffle(std::span(order));
            double running = 0.0;
            for (std::size_t begin = 0; begin < order.size(); begin += batch) {
                const auto rows = std::span(order).subspan(begin, std::min(batch, order.size() - begin));
                const EncodedBatch mb = train_x.gather(rows);
                Eigen::RowVectorXd y(static_cast<Eigen::Index>(rows.size()));
                for (std::size_t i = 0; i < rows.size(); ++i) y(static_cast<Eigen::Index>(i)) = train_y(static_cast<Eigen::Index>(rows[i]));

                const double mse = backward_batch(model, mb, y, grads, stage.train_trunk);
                if (!std::isfinite(mse)) {
                    throw TrainingError("non-finite training loss in stage " + std::to_string(s + 1) + ", epoch " +
                                            std::to_string(epoch),
                                        last_finite);
                }
                hyper.lr = scheduled_lr(step, total, warmup, stage.peak_lr);
                try {
                    adamw_step(model.tensors(), grads, state, hyper, trainable);
                } catch (const TrainingError& e) {
                    throw TrainingError(e.what(), last_finite);
                }
                ++step;
                running += mse * static_cast<double>(rows.size());
            }
            if (!all_finite(model)) throw TrainingError("non-finite parameters after stage " + std::to_string(s + 1), last_finite);
            last_finite = std::make_shared<const RegressorModel>(model);

            EpochReport er{s + 1, epoch, running / static_cast<double>(train.size()), std::nullopt};
            const bool eval_now = epoch + 1 == stage.epochs || (plan.eval_every > 0 && (epoch + 1) % plan.eval_every == 0);
            if (eval_now && val_x.size > 0) er.val_mae = mean_absolute_error(model, val_x, val_y);
            report.epochs.push_back(er);
        }
        (s == 0 ? report.stage1_mse : report.stage2_mse) = mean_squared_error(model, train_x, train_y);
    }
    return {std::move(model), std::move(report)};
}

std::vector<TrainExample> build_examples(std::span<const RunRecord> runs, const BaselineSet& baseline, TargetKind kind,
                                         std::size_t curve_points) {
    std::vector<TrainExample> out;
    for (const auto& run : runs) {
        const double base = baseline.predict(run.config);
        if (kind == TargetKind::final_loss) {
            out.push_back({canonicalize(run.config), run.final_loss - base});
            continue;
        }
        if (run.curve.empty()) {
            out.push_back({canonicalize(run.config, 1.0), run.final_loss - base});
            continue;
        }
        const std::size_t n = run.curve.size();
        const std::size_t k = std::min(curve_points, n);
        const auto total = static_cast<double>(run.config.total_steps);
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t idx = (i + 1) * n / k - 1;
            const auto& p = run.curve[idx];
            const double frac = std::min(1.0, static_cast<double>(p.step) / total);
            if (!(frac > 0.0)) continue;
            out.push_back({canonicalize(run.config, frac), p.loss - base});
        }
    }
    return out;
}

double TrainedPredictor::predict_residual(const RunConfig& config, std::optional<double> frac) const {
    if (kind == TargetKind::curve_point && !frac) frac = 1.0;
    if (kind == TargetKind::final_loss && frac) throw ArgumentError("final-loss model does not take a frac");
    return forward(model, canonicalize(config, frac));
}

double TrainedPredictor::predict_final_loss(const RunConfig& config) const {
    return baseline.predict(config) + predict_residual(config);
}

std::vector<double> TrainedPredictor::predict_final_losses(std::span<const RunConfig> configs) const {
    std::vector<FeatureVector> features;
    features.reserve(configs.size());
    const std::optional<double> frac = kind == TargetKind::curve_point ? std::optional(1.0) : std::nullopt;
    for (const auto& c : configs) features.push_back(canonicalize(c, frac));
    std::vector<double> out(configs.size());
    if (configs.empty()) return out;
    const Eigen::RowVectorXd residual = forward_batch(model, encode_batch(features, model.shape().with_frac));
    for (std::size_t i = 0; i < configs.size(); ++i) out[i] = baseline.predict(configs[i]) + residual(static_cast<Eigen::Index>(i));
    return out;
}

std::vector<CurvePoint> TrainedPredictor::predict_curve(const RunConfig& config, std::span<const double> fracs) const {
    if (kind != TargetKind::curve_point) throw ArgumentError("predict_curve requires a curve-trained model");
    std::vector<FeatureVector> features;
    for (std::size_t i = 0; i < fracs.size(); ++i) {
        if (!(fracs[i] > 0.0 && fracs[i] <= 1.0)) throw ArgumentError("predict_curve: frac must lie in (0, 1]");
        if (i > 0 && fracs[i] < fracs[i - 1]) throw ArgumentError("predict_curve: fracs must be sorted");
        features.push_back(canonicalize(config, fracs[i]));
    }
    std::vector<CurvePoint> out;
    if (fracs.empty()) return out;
    const double base = baseline.predict(config);
    const Eigen::RowVectorXd residual = forward_batch(model, encode_batch(features, true));
    for (std::size_t i = 0; i < fracs.size(); ++i) {
        out.push_back({std::llround(fracs[i] * static_cast<double>(config.total_steps)), base + residual(static_cast<Eigen::Index>(i))});
    }
    return out;
}

TrainedPredictor train_predictor(const DatasetSplits& splits, const BaselineSet& baseline, const ModelShape& shape,
                                 const TrainPlan& plan, TargetKind kind, std::uint64_t seed) {
    ModelShape s = shape;
    s.with_frac = kind == TargetKind::curve_point;
    const auto train = build_examples(splits.train, baseline, kind);
    const auto val = build_examples(splits.id_val, baseline, kind);
    TrainResult result = train_regressor(RegressorModel(s, seed), train, val, plan, seed ^ 0x9e3779b97f4a7c15ULL);
    return {std::move(result.model), baseline, kind, std::move(result.report)};
}

}  // namespace cpl
