#include "cpl/regressor.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "cpl/rng.hpp"

namespace cpl {

namespace {

constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluCubic = 0.044715;

}  // namespace

double gelu(double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluScale * (x + kGeluCubic * x * x * x)));
}

double gelu_derivative(double x) {
    const double t = std::tanh(kGeluScale * (x + kGeluCubic * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
}

RegressorModel::RegressorModel(const ModelShape& shape, std::uint64_t seed) : shape_(shape), seed_(seed) {
    if (shape.embed_dim < 1 || shape.encoder_hidden < 1 || shape.trunk_layers < 0 || shape.trunk_width < 1) {
        throw ArgumentError("model shape dimensions must be positive");
    }
    const Schema& schema = Schema::instance();
    Rng rng(seed);
    const int de = shape.embed_dim;
    const int dh = shape.encoder_hidden;

    auto add = [&](std::string name, ParamGroup group, int rows, int cols, double bound) {
        Eigen::MatrixXd value(rows, cols);
        for (Eigen::Index c = 0; c < value.cols(); ++c)
            for (Eigen::Index r = 0; r < value.rows(); ++r) value(r, c) = bound == 0.0 ? 0.0 : rng.uniform(-bound, bound);
        tensors_.push_back({std::move(name), group, std::move(value)});
        return tensors_.size() - 1;
    };
    auto add_encoder = [&](Block& b, const std::string& prefix) {
        b.w1 = add(prefix + ".w1", ParamGroup::encoder, dh, 1, 1.0);
        b.b1 = add(prefix + ".b1", ParamGroup::encoder, dh, 1, 1.0);
        const double bound = 1.0 / std::sqrt(static_cast<double>(dh));
        b.w2 = add(prefix + ".w2", ParamGroup::encoder, de, dh, bound);
        b.b2 = add(prefix + ".b2", ParamGroup::encoder, de, 1, bound);
    };

    const auto slots = schema.slot_fields();
    for (std::size_t s = 0; s < slots.size(); ++s) {
        const FieldSpec& f = schema.fields()[slots[s]];
        Block b{};
        b.slot = static_cast<int>(s);
        if (f.kind == FieldKind::categorical) {
            b.kind = BlockKind::categorical;
            b.table = add("emb." + f.name, ParamGroup::encoder, de, static_cast<int>(f.vocabulary.size()), 1.0);
        } else {
            b.kind = BlockKind::numerical;
            add_encoder(b, "enc." + f.name);
            b.missing = add("enc." + f.name + ".missing", ParamGroup::encoder, de, 1, 0.0);
        }
        blocks_.push_back(b);
    }
    if (shape.with_frac) {
        Block b{};
        b.kind = BlockKind::numerical;
        b.slot = -1;
        add_encoder(b, "enc.frac");
        b.missing = add("enc.frac.missing", ParamGroup::encoder, de, 1, 0.0);
        blocks_.push_back(b);
    }
    {
        Block b{};
        b.kind = BlockKind::extras;
        b.table = add("emb.extras", ParamGroup::encoder, de, Schema::kExtraBuckets, 1.0);
        add_encoder(b, "enc.extras");
        blocks_.push_back(b);
    }

    int in = static_cast<int>(input_width());
    for (int l = 0; l < shape.trunk_layers; ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        trunk_.push_back(add("trunk." + std::to_string(l) + ".w", ParamGroup::trunk, shape.trunk_width, in, bound));
        add("trunk." + std::to_string(l) + ".b", ParamGroup::trunk, shape.trunk_width, 1, bound);
        in = shape.trunk_width;
    }
    head_ = add("head.w", ParamGroup::head, 1, in, 0.0);
    add("head.b", ParamGroup::head, 1, 1, 0.0);
}

std::size_t RegressorModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
    return n;
}

std::size_t RegressorModel::input_width() const {
    return blocks_.size() * static_cast<std::size_t>(shape_.embed_dim);
}

void RegressorModel::zero() {
    for (auto& t : tensors_) t.value.setZero();
}

EncodedBatch encode_batch(std::span<const FeatureVector> features, bool with_frac) {
    const Schema& schema = Schema::instance();
    const auto slots = schema.slot_fields();
    EncodedBatch batch;
    batch.size = features.size();
    const auto n = static_cast<Eigen::Index>(features.size());
    batch.categories.assign(slots.size(), {});
    batch.values.assign(slots.size(), Eigen::RowVectorXd());
    batch.present.assign(slots.size(), std::vector<char>(features.size(), 1));
    for (std::size_t s = 0; s < slots.size(); ++s) {
        if (schema.fields()[slots[s]].kind == FieldKind::categorical) {
            batch.categories[s].assign(features.size(), 0);
        } else {
            batch.values[s] = Eigen::RowVectorXd::Zero(n);
        }
    }
    batch.frac = Eigen::RowVectorXd::Zero(with_frac ? n : 0);
    batch.extras.resize(features.size());

    for (std::size_t i = 0; i < features.size(); ++i) {
        const FeatureVector& fv = features[i];
        if (fv.slots.size() != slots.size()) {
            throw ShapeError("feature vector has " + std::to_string(fv.slots.size()) + " slots, model expects " +
                             std::to_string(slots.size()));
        }
        if (fv.frac.has_value() != with_frac) {
            throw ShapeError(with_frac ? "model expects a 'frac' field" : "model does not accept a 'frac' field");
        }
        for (std::size_t s = 0; s < slots.size(); ++s) {
            const FieldSpec& f = schema.fields()[slots[s]];
            const Slot& slot = fv.slots[s];
            if (f.kind == FieldKind::categorical) {
                if (slot.category < 0 || static_cast<std::size_t>(slot.category) >= f.vocabulary.size()) {
                    throw ShapeError("field '" + f.name + "': category index out of range");
                }
                batch.categories[s][i] = slot.category;
            } else {
                batch.present[s][i] = slot.present ? 1 : 0;
                batch.values[s](static_cast<Eigen::Index>(i)) = slot.present ? slot.value : 0.0;
            }
        }
        if (with_frac) batch.frac(static_cast<Eigen::Index>(i)) = *fv.frac;
        for (const auto& e : fv.extras) {
            if (e.bucket < 0 || e.bucket >= Schema::kExtraBuckets) throw ShapeError("extra bucket out of range");
            batch.extras[i].emplace_back(e.bucket, e.value);
        }
    }
    return batch;
}

EncodedBatch EncodedBatch::gather(std::span<const std::size_t> rows) const {
    EncodedBatch out;
    out.size = rows.size();
    const auto n = static_cast<Eigen::Index>(rows.size());
    out.categories.resize(categories.size());
    out.values.resize(values.size());
    out.present.resize(present.size());
    for (std::size_t s = 0; s < categories.size(); ++s) {
        if (!categories[s].empty()) {
            out.categories[s].resize(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) out.categories[s][i] = categories[s][rows[i]];
        }
        if (values[s].size() > 0) {
            out.values[s].resize(n);
            for (std::size_t i = 0; i < rows.size(); ++i) out.values[s](static_cast<Eigen::Index>(i)) = values[s](static_cast<Eigen::Index>(rows[i]));
        }
        out.present[s].resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) out.present[s][i] = present[s][rows[i]];
    }
    out.frac.resize(frac.size() > 0 ? n : 0);
    if (frac.size() > 0) {
        for (std::size_t i = 0; i < rows.size(); ++i) out.frac(static_cast<Eigen::Index>(i)) = frac(static_cast<Eigen::Index>(rows[i]));
    }
    out.extras.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out.extras[i] = extras[rows[i]];
    return out;
}

struct ForwardCache {
    std::vector<Eigen::RowVectorXd> enc_x;  // per block: encoder input
    std::vector<Eigen::MatrixXd> enc_z1;    // per block: encoder pre-activation
    std::vector<Eigen::MatrixXd> enc_h1;
    std::vector<std::pair<std::size_t, int>> extras_owner;  // (example, bucket) per extra entry
    Eigen::MatrixXd x0;
    std::vector<Eigen::MatrixXd> z;
    std::vector<Eigen::MatrixXd> h;
    Eigen::RowVectorXd out;
};

namespace {

void check_model_input(const RegressorModel& model, const EncodedBatch& batch) {
    const auto slots = Schema::instance().slot_fields().size();
    if (batch.categories.size() != slots) throw ShapeError("encoded batch does not match the schema");
    if ((batch.frac.size() > 0 || (batch.size > 0 && model.shape().with_frac)) &&
        static_cast<std::size_t>(batch.frac.size()) != (model.shape().with_frac ? batch.size : 0)) {
        throw ShapeError(model.shape().with_frac ? "model expects a 'frac' field" : "model does not accept a 'frac' field");
    }
}

// Two-layer scalar encoder: W2 gelu(W1 x + b1) + b2.
Eigen::MatrixXd encode_scalar(const RegressorModel& model, const RegressorModel::Block& b, const Eigen::RowVectorXd& x,
                              Eigen::MatrixXd& z1, Eigen::MatrixXd& h1) {
    const auto& t = model.tensors();
    z1 = t[b.w1].value * x;
    z1.colwise() += t[b.b1].value.col(0);
    h1 = z1.unaryExpr([](double v) { return gelu(v); });
    Eigen::MatrixXd e = t[b.w2].value * h1;
    e.colwise() += t[b.b2].value.col(0);
    return e;
}

void run_forward(const RegressorModel& model, const EncodedBatch& batch, ForwardCache& cache) {
    check_model_input(model, batch);
    const auto& t = model.tensors();
    const auto& blocks = model.blocks();
    const int de = model.shape().embed_dim;
    const auto n = static_cast<Eigen::Index>(batch.size);

    cache.x0 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(model.input_width()), n);
    cache.enc_x.assign(blocks.size(), {});
    cache.enc_z1.assign(blocks.size(), {});
    cache.enc_h1.assign(blocks.size(), {});
    cache.extras_owner.clear();

    for (std::size_t k = 0; k < blocks.size(); ++k) {
        const auto& b = blocks[k];
        auto rows = cache.x0.middleRows(static_cast<Eigen::Index>(k) * de, de);
        switch (b.kind) {
            case RegressorModel::BlockKind::categorical: {
                const auto& table = t[b.table].value;
                const auto& cats = batch.categories[static_cast<std::size_t>(b.slot)];
                for (Eigen::Index j = 0; j < n; ++j) rows.col(j) = table.col(cats[static_cast<std::size_t>(j)]);
                break;
            }
            case RegressorModel::BlockKind::numerical: {
                cache.enc_x[k] = b.slot >= 0 ? batch.values[static_cast<std::size_t>(b.slot)] : batch.frac;
                rows = encode_scalar(model, b, cache.enc_x[k], cache.enc_z1[k], cache.enc_h1[k]);
                if (b.slot >= 0) {
                    const auto& present = batch.present[static_cast<std::size_t>(b.slot)];
                    for (Eigen::Index j = 0; j < n; ++j) {
                        if (!present[static_cast<std::size_t>(j)]) rows.col(j) = t[b.missing].value.col(0);
                    }
                }
                break;
            }
            case RegressorModel::BlockKind::extras: {
                for (std::size_t j = 0; j < batch.size; ++j)
                    for (const auto& [bucket, value] : batch.extras[j]) cache.extras_owner.emplace_back(j, bucket);
                const auto m = static_cast<Eigen::Index>(cache.extras_owner.size());
                if (m == 0) break;
                Eigen::RowVectorXd x(m);
                Eigen::Index idx = 0;
                for (std::size_t j = 0; j < batch.size; ++j)
                    for (const auto& [bucket, value] : batch.extras[j]) x(idx++) = value;
                cache.enc_x[k] = x;
                const Eigen::MatrixXd e = encode_scalar(model, b, x, cache.enc_z1[k], cache.enc_h1[k]);
                for (Eigen::Index i = 0; i < m; ++i) {
                    const auto [owner, bucket] = cache.extras_owner[static_cast<std::size_t>(i)];
                    rows.col(static_cast<Eigen::Index>(owner)) += e.col(i) + t[b.table].value.col(bucket);
                }
                break;
            }
        }
    }

    const int layers = model.shape().trunk_layers;
    cache.z.resize(static_cast<std::size_t>(layers));
    cache.h.resize(static_cast<std::size_t>(layers));
    const Eigen::MatrixXd* prev = &cache.x0;
    for (int l = 0; l < layers; ++l) {
        const std::size_t w = model.trunk_weight(l);
        auto& z = cache.z[static_cast<std::size_t>(l)];
        z.noalias() = t[w].value * (*prev);
        z.colwise() += t[w + 1].value.col(0);
        cache.h[static_cast<std::size_t>(l)] = z.unaryExpr([](double v) { return gelu(v); });
        prev = &cache.h[static_cast<std::size_t>(l)];
    }
    const std::size_t hw = model.head_weight();
    cache.out = t[hw].value * (*prev);
    cache.out.array() += t[hw + 1].value(0, 0);
}

void encoder_backward(const RegressorModel& model, const RegressorModel::Block& b, const Eigen::RowVectorXd& x,
                      const Eigen::MatrixXd& z1, const Eigen::MatrixXd& h1, const Eigen::MatrixXd& d_e,
                      std::vector<Eigen::MatrixXd>& grads) {
    const auto& t = model.tensors();
    grads[b.b2].col(0) += d_e.rowwise().sum();
    grads[b.w2].noalias() += d_e * h1.transpose();
    Eigen::MatrixXd dz1 = t[b.w2].value.transpose() * d_e;
    dz1.array() *= z1.unaryExpr([](double v) { return gelu_derivative(v); }).array();
    grads[b.w1].noalias() += dz1 * x.transpose();
    grads[b.b1].col(0) += dz1.rowwise().sum();
}

}  // namespace

Eigen::RowVectorXd forward_batch(const RegressorModel& model, const EncodedBatch& batch) {
    ForwardCache cache;
    run_forward(model, batch, cache);
    return cache.out;
}

double forward(const RegressorModel& model, const FeatureVector& fv) {
    return forward_batch(model, encode_batch(std::span(&fv, 1), model.shape().with_frac))(0);
}

double backward_batch(const RegressorModel& model, const EncodedBatch& batch, const Eigen::RowVectorXd& targets,
                      std::vector<Eigen::MatrixXd>& grads, bool trunk_gradients) {
    const auto& t = model.tensors();
    const auto& blocks = model.blocks();
    if (static_cast<std::size_t>(targets.size()) != batch.size || batch.size == 0) {
        throw ShapeError("backward: target count does not match the batch");
    }
    ForwardCache cache;
    run_forward(model, batch, cache);

    grads.resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) grads[i] = Eigen::MatrixXd::Zero(t[i].value.rows(), t[i].value.cols());

    const double n = static_cast<double>(batch.size);
    const Eigen::RowVectorXd err = cache.out - targets;
    const double mse = err.squaredNorm() / n;
    const Eigen::RowVectorXd d_out = (2.0 / n) * err;

    const int layers = model.shape().trunk_layers;
    const Eigen::MatrixXd& last = layers > 0 ? cache.h.back() : cache.x0;
    const std::size_t hw = model.head_weight();
    grads[hw].noalias() = d_out * last.transpose();
    grads[hw + 1](0, 0) = d_out.sum();
    Eigen::MatrixXd d_h = t[hw].value.transpose() * d_out;

    for (int l = layers - 1; l >= 0; --l) {
        const auto li = static_cast<std::size_t>(l);
        Eigen::MatrixXd d_z = d_h.array() * cache.z[li].unaryExpr([](double v) { return gelu_derivative(v); }).array();
        const Eigen::MatrixXd& input = l > 0 ? cache.h[li - 1] : cache.x0;
        const std::size_t w = model.trunk_weight(l);
        if (trunk_gradients) {
            grads[w].noalias() = d_z * input.transpose();
            grads[w + 1].col(0) = d_z.rowwise().sum();
        }
        d_h.noalias() = t[w].value.transpose() * d_z;
    }

    const int de = model.shape().embed_dim;
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        const auto& b = blocks[k];
        Eigen::MatrixXd d_block = d_h.middleRows(static_cast<Eigen::Index>(k) * de, de);
        switch (b.kind) {
            case RegressorModel::BlockKind::categorical: {
                const auto& cats = batch.categories[static_cast<std::size_t>(b.slot)];
                for (std::size_t j = 0; j < batch.size; ++j) grads[b.table].col(cats[j]) += d_block.col(static_cast<Eigen::Index>(j));
                break;
            }
            case RegressorModel::BlockKind::numerical: {
                if (b.slot >= 0) {
                    const auto& present = batch.present[static_cast<std::size_t>(b.slot)];
                    for (std::size_t j = 0; j < batch.size; ++j) {
                        if (present[j]) continue;
                        grads[b.missing].col(0) += d_block.col(static_cast<Eigen::Index>(j));
                        d_block.col(static_cast<Eigen::Index>(j)).setZero();
                    }
                }
                encoder_backward(model, b, cache.enc_x[k], cache.enc_z1[k], cache.enc_h1[k], d_block, grads);
                break;
            }
            case RegressorModel::BlockKind::extras: {
                const auto m = static_cast<Eigen::Index>(cache.extras_owner.size());
                if (m == 0) break;
                Eigen::MatrixXd d_e(de, m);
                for (Eigen::Index i = 0; i < m; ++i) {
                    const auto [owner, bucket] = cache.extras_owner[static_cast<std::size_t>(i)];
                    d_e.col(i) = d_block.col(static_cast<Eigen::Index>(owner));
                    grads[b.table].col(bucket) += d_e.col(i);
                }
                encoder_backward(model, b, cache.enc_x[k], cache.enc_z1[k], cache.enc_h1[k], d_e, grads);
                break;
            }
        }
    }
    return mse;
}

std::vector<Eigen::MatrixXd> backward(const RegressorModel& model, const FeatureVector& fv, double target) {
    std::vector<Eigen::MatrixXd> grads;
    Eigen::RowVectorXd y(1);
    y(0) = target;
    backward_batch(model, encode_batch(std::span(&fv, 1), model.shape().with_frac), y, grads, true);
    return grads;
}

void adamw_step(std::vector<Tensor>& params, const std::vector<Eigen::MatrixXd>& grads, AdamWState& state,
                const AdamWHyper& hyper, const std::vector<char>& trainable) {
    if (grads.size() != params.size() || trainable.size() != params.size()) {
        throw ShapeError("adamw_step: parameter, gradient and mask counts differ");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!trainable[i]) continue;
        if (grads[i].rows() != params[i].value.rows() || grads[i].cols() != params[i].value.cols()) {
            throw ShapeError("adamw_step: gradient shape mismatch for '" + params[i].name + "'");
        }
        if (!grads[i].allFinite()) throw TrainingError("non-finite gradient in parameter block '" + params[i].name + "'");
    }
    if (state.m.size() != params.size()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i] = Eigen::MatrixXd::Zero(params[i].value.rows(), params[i].value.cols());
            state.v[i] = Eigen::MatrixXd::Zero(params[i].value.rows(), params[i].value.cols());
        }
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!trainable[i]) continue;
        auto& m = state.m[i];
        auto& v = state.v[i];
        m = hyper.beta1 * m + (1.0 - hyper.beta1) * grads[i];
        v = hyper.beta2 * v + (1.0 - hyper.beta2) * grads[i].cwiseProduct(grads[i]);
        auto& p = params[i].value;
        for (Eigen::Index k = 0; k < p.size(); ++k) {
            const double m_hat = m(k) / c1;
            const double denom = std::sqrt(v(k) / c2) + hyper.epsilon;
            const double adam = denom > 0.0 ? m_hat / denom : 0.0;
            p(k) -= hyper.lr * (adam + hyper.weight_decay * p(k));
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kCheckpointMagic = "cpl-regressor";
constexpr int kCheckpointVersion = 1;

std::string exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

const char* group_name(ParamGroup g) {
    switch (g) {
        case ParamGroup::encoder: return "encoder";
        case ParamGroup::trunk: return "trunk";
        case ParamGroup::head: return "head";
    }
    return "?";
}

}  // namespace

std::string serialize_checkpoint(const TrainedPredictor& p) {
    std::ostringstream out;
    const ModelShape& s = p.model.shape();
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    out << "schema " << kSchemaVersion << ' ' << std::hex << Schema::instance().hash() << std::dec << '\n';
    out << "target " << (p.kind == TargetKind::final_loss ? "final_loss" : "curve_point") << '\n';
    out << "seed " << p.model.seed() << '\n';
    out << "shape " << s.embed_dim << ' ' << s.encoder_hidden << ' ' << s.trunk_layers << ' ' << s.trunk_width << ' '
        << (s.with_frac ? 1 : 0) << '\n';
    out << "baselines " << p.baseline.fits().size() << '\n';
    for (const auto& [scope, f] : p.baseline.fits()) {
        out << "chinchilla " << scope.source << ' ' << scope.optimizer.value_or("*") << ' ' << exact(f.E) << ' '
            << exact(f.A) << ' ' << exact(f.B) << ' ' << exact(f.alpha) << ' ' << exact(f.beta) << ' '
            << exact(f.objective) << ' ' << f.points << '\n';
    }
    const auto& tensors = p.model.tensors();
    out << "tensors " << tensors.size() << '\n';
    for (const auto& t : tensors) {
        out << "tensor " << t.name << ' ' << group_name(t.group) << ' ' << t.value.rows() << ' ' << t.value.cols() << '\n';
        for (Eigen::Index k = 0; k < t.value.size(); ++k) out << (k ? " " : "") << exact(t.value(k));
        out << '\n';
    }
    return out.str();
}

TrainedPredictor deserialize_checkpoint(const std::string& text) {
    std::istringstream in(text);
    auto expect = [&](const std::string& word) {
        std::string got;
        if (!(in >> got) || got != word) throw CheckpointError("checkpoint: expected '" + word + "', got '" + got + "'");
    };
    expect(kCheckpointMagic);
    int version = 0;
    in >> version;
    if (version != kCheckpointVersion) throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
    expect("schema");
    std::string schema_version, hash_text;
    in >> schema_version >> hash_text;
    std::ostringstream current;
    current << std::hex << Schema::instance().hash();
    if (schema_version != kSchemaVersion || hash_text != current.str()) {
        throw CheckpointError("checkpoint schema hash " + hash_text + " does not match current schema " + current.str());
    }
    TrainedPredictor p;
    expect("target");
    std::string kind;
    in >> kind;
    if (kind != "final_loss" && kind != "curve_point") throw CheckpointError("checkpoint: unknown target kind");
    p.kind = kind == "final_loss" ? TargetKind::final_loss : TargetKind::curve_point;
    expect("seed");
    std::uint64_t seed = 0;
    in >> seed;
    expect("shape");
    ModelShape shape;
    int with_frac = 0;
    in >> shape.embed_dim >> shape.encoder_hidden >> shape.trunk_layers >> shape.trunk_width >> with_frac;
    shape.with_frac = with_frac != 0;
    if (!in) throw CheckpointError("checkpoint: malformed header");
    expect("baselines");
    std::size_t n_baselines = 0;
    in >> n_baselines;
    for (std::size_t i = 0; i < n_baselines; ++i) {
        expect("chinchilla");
        ChinchillaFit f;
        std::string optimizer;
        in >> f.scope.source >> optimizer >> f.E >> f.A >> f.B >> f.alpha >> f.beta >> f.objective >> f.points;
        if (optimizer != "*") f.scope.optimizer = optimizer;
        if (!in) throw CheckpointError("checkpoint: malformed baseline");
        p.baseline.add(f);
    }
    p.model = RegressorModel(shape, seed);
    expect("tensors");
    std::size_t n_tensors = 0;
    in >> n_tensors;
    auto& tensors = p.model.tensors();
    if (n_tensors != tensors.size()) throw CheckpointError("checkpoint: tensor count does not match architecture");
    for (auto& t : tensors) {
        expect("tensor");
        std::string name, group;
        Eigen::Index rows = 0, cols = 0;
        in >> name >> group >> rows >> cols;
        if (name != t.name || rows != t.value.rows() || cols != t.value.cols()) {
            throw CheckpointError("checkpoint: tensor '" + name + "' does not match architecture");
        }
        for (Eigen::Index k = 0; k < t.value.size(); ++k) {
            std::string v;
            in >> v;
            t.value(k) = std::strtod(v.c_str(), nullptr);
        }
        if (!in) throw CheckpointError("checkpoint: truncated tensor '" + name + "'");
    }
    return p;
}

}  // namespace cpl
