#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cpl/config.hpp"
#include "cpl/errors.hpp"
#include "cpl/ingest.hpp"
#include "cpl/lawfit.hpp"

namespace cpl {

struct ModelShape {
    int embed_dim = 32;       // per-field embedding width
    int encoder_hidden = 64;  // hidden width of each numerical encoder
    int trunk_layers = 4;
    int trunk_width = 256;
    bool with_frac = false;   // input includes the fraction of training completed

    bool operator==(const ModelShape&) const = default;
};

enum class ParamGroup { encoder, trunk, head };

struct Tensor {
    std::string name;
    ParamGroup group = ParamGroup::encoder;
    Eigen::MatrixXd value;
};

// Field-embedding regressor. Each categorical field has an embedding table,
// each numerical field a scalar -> hidden -> embed_dim encoder (plus a
// learned vector for absent values), unknown optimizer extras share a
// bucketed table and encoder summed into one block. The concatenated
// blocks feed a GELU trunk and a linear head producing the residual.
class RegressorModel {
public:
    RegressorModel() = default;
    RegressorModel(const ModelShape& shape, std::uint64_t seed);

    const ModelShape& shape() const { return shape_; }
    std::uint64_t seed() const { return seed_; }
    std::vector<Tensor>& tensors() { return tensors_; }
    const std::vector<Tensor>& tensors() const { return tensors_; }
    std::size_t parameter_count() const;
    std::size_t input_width() const;

    void zero();

    enum class BlockKind { categorical, numerical, extras };
    struct Block {
        BlockKind kind;
        int slot = -1;                 // FeatureVector slot; -1 for frac / extras
        std::size_t table = 0;         // categorical / extras bucket table
        std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0, missing = 0;
    };
    const std::vector<Block>& blocks() const { return blocks_; }
    std::size_t trunk_weight(int layer) const { return trunk_[static_cast<std::size_t>(layer)]; }
    std::size_t head_weight() const { return head_; }

private:
    ModelShape shape_;
    std::uint64_t seed_ = 0;
    std::vector<Tensor> tensors_;
    std::vector<Block> blocks_;
    std::vector<std::size_t> trunk_;  // weight index per layer; bias is weight + 1
    std::size_t head_ = 0;            // head bias is head_ + 1
};

double gelu(double x);
double gelu_derivative(double x);

// Feature vectors laid out column-wise for batched evaluation.
struct EncodedBatch {
    std::size_t size = 0;
    std::vector<std::vector<int>> categories;  // per slot (categorical slots only)
    std::vector<Eigen::RowVectorXd> values;    // per slot (numerical slots only)
    std::vector<std::vector<char>> present;    // per slot
    Eigen::RowVectorXd frac;
    std::vector<std::vector<std::pair<int, double>>> extras;  // per example

    EncodedBatch gather(std::span<const std::size_t> rows) const;
};

// Throws ShapeError when vectors do not match the schema or the model's
// fraction setting.
EncodedBatch encode_batch(std::span<const FeatureVector> features, bool with_frac);

struct ForwardCache;

Eigen::RowVectorXd forward_batch(const RegressorModel& model, const EncodedBatch& batch);
double forward(const RegressorModel& model, const FeatureVector& fv);

// Gradients of mean_i (out_i - target_i)^2 in tensor order; returns the
// mean squared error. Trunk weight gradients are skipped (left zero) when
// `trunk_gradients` is false.
double backward_batch(const RegressorModel& model, const EncodedBatch& batch, const Eigen::RowVectorXd& targets,
                      std::vector<Eigen::MatrixXd>& grads, bool trunk_gradients = true);
// Gradients of (forward(model, fv) - target)^2.
std::vector<Eigen::MatrixXd> backward(const RegressorModel& model, const FeatureVector& fv, double target);

struct AdamWHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
};

struct AdamWState {
    std::vector<Eigen::MatrixXd> m;
    std::vector<Eigen::MatrixXd> v;
    std::int64_t step = 0;
};

class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& what, std::shared_ptr<const RegressorModel> last_finite = nullptr)
        : Error("regressor", what), last_finite_(std::move(last_finite)) {}
    // Parameters at the end of the last epoch whose loss was finite.
    const std::shared_ptr<const RegressorModel>& last_finite() const { return last_finite_; }

private:
    std::shared_ptr<const RegressorModel> last_finite_;
};

// Decoupled-weight-decay Adam on the tensors flagged trainable. State is
// sized lazily on the first call. Throws TrainingError naming the tensor
// when a gradient is not finite.
void adamw_step(std::vector<Tensor>& params, const std::vector<Eigen::MatrixXd>& grads, AdamWState& state,
                const AdamWHyper& hyper, const std::vector<char>& trainable);

struct StagePlan {
    int epochs = 1;
    double peak_lr = 1e-3;
    double warmup_ratio = 0.1;
    std::optional<std::int64_t> warmup_steps;  // capped at warmup_ratio of the stage
    bool train_trunk = true;
};

struct TrainPlan {
    StagePlan stage1{20, 5e-5, 0.1, std::nullopt, false};
    StagePlan stage2{200, 1e-5, 0.1, 1000, true};
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
    std::size_t batch_size = 480;
    bool reset_optimizer_state = true;
    int eval_every = 10;  // validation cadence in epochs; stage ends always evaluate

    static TrainPlan desk_defaults();
    // Curve targets carry ~30 examples per run, so fewer, larger steps.
    static TrainPlan desk_curve_defaults();
};

std::int64_t stage_warmup_steps(const StagePlan& stage, std::int64_t total_steps);
// Linear warmup from 0 to peak over `warmup` steps, then linear decay to 0
// at `total`.
double scheduled_lr(std::int64_t step, std::int64_t total, std::int64_t warmup, double peak);

struct TrainExample {
    FeatureVector features;
    double target = 0.0;
};

struct EpochReport {
    int stage = 1;
    int epoch = 0;
    double train_mse = 0.0;  // running mean over the epoch's minibatches
    std::optional<double> val_mae;
};

struct TrainReport {
    std::vector<EpochReport> epochs;
    double stage1_mse = 0.0;  // full-pass train MSE after each stage
    double stage2_mse = 0.0;
};

struct TrainResult {
    RegressorModel model;
    TrainReport report;
};

TrainResult train_regressor(RegressorModel model, std::span<const TrainExample> train,
                            std::span<const TrainExample> validation, const TrainPlan& plan, std::uint64_t seed);

enum class TargetKind { final_loss, curve_point };

struct TrainedPredictor {
    RegressorModel model;
    BaselineSet baseline;
    TargetKind kind = TargetKind::final_loss;
    TrainReport report;

    double predict_residual(const RunConfig& config, std::optional<double> frac = std::nullopt) const;
    double predict_final_loss(const RunConfig& config) const;
    std::vector<double> predict_final_losses(std::span<const RunConfig> configs) const;
    std::vector<CurvePoint> predict_curve(const RunConfig& config, std::span<const double> fracs) const;
};

// Residual examples; curve mode samples up to `curve_points` evenly spaced
// logged points per run and attaches their fraction of total steps.
std::vector<TrainExample> build_examples(std::span<const RunRecord> runs, const BaselineSet& baseline, TargetKind kind,
                                         std::size_t curve_points = 30);

TrainedPredictor train_predictor(const DatasetSplits& splits, const BaselineSet& baseline, const ModelShape& shape,
                                 const TrainPlan& plan, TargetKind kind, std::uint64_t seed);

std::string serialize_checkpoint(const TrainedPredictor& predictor);
// Throws CheckpointError on malformed text or a schema hash mismatch.
TrainedPredictor deserialize_checkpoint(const std::string& text);

}  // namespace cpl
