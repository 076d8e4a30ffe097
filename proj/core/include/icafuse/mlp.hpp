#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "icafuse/datamodel.hpp"
#include "icafuse/generator.hpp"
#include "icafuse/matrix.hpp"
#include "icafuse/rng.hpp"

namespace icafuse {

struct UnimodalTopology {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden{20, 20, 20};
};

// Each branch is a stack of branch_hidden layers. merged_hidden[0] is the
// width of the concatenated branch outputs; the remaining entries are the
// merged hidden layers before the output unit.
struct MultimodalTopology {
    std::vector<std::size_t> branch_input_dims;
    std::vector<std::size_t> branch_hidden{20, 20, 20};
    std::vector<std::size_t> merged_hidden{40, 20};
};

using Topology = std::variant<UnimodalTopology, MultimodalTopology>;

struct MlpConfig {
    Topology topology;
    std::size_t output_dim = 1;
    double dropout_rate = 0.5;  // on every hidden layer
    double l2_input = 0.1;      // first layer of each branch
    double l2_rest = 0.01;
    double learning_rate = 0.001;
    double adagrad_epsilon = 1e-8;

    void validate() const;
    bool multimodal() const { return std::holds_alternative<MultimodalTopology>(topology); }
    std::size_t branch_count() const;
    std::vector<std::size_t> input_dims() const;
};

MlpConfig unimodal_config(std::size_t input_dim);
MlpConfig multimodal_config(std::vector<std::size_t> branch_input_dims);

struct LayerWeights {
    Matrix weights;  // fan_in x fan_out
    RowVector biases;
    double l2_weight = 0.0;

    std::size_t fan_in() const { return static_cast<std::size_t>(weights.rows()); }
    std::size_t fan_out() const { return static_cast<std::size_t>(weights.cols()); }
};

// Unimodal nets have a single branch holding the hidden stack and a head with
// only the output layer. Multimodal nets concatenate branch outputs into the
// head. Flat layer order everywhere: branch 0, branch 1, ..., head.
struct MlpModel {
    MlpConfig config;
    std::vector<std::vector<LayerWeights>> branches;
    std::vector<LayerWeights> head;

    std::size_t layer_count() const;
    LayerWeights& layer(std::size_t flat);
    const LayerWeights& layer(std::size_t flat) const;
};

enum class Mode { Train, Eval };

struct LayerTrace {
    Matrix input;   // as fed to the layer
    Matrix output;  // sigmoid activation, before dropout
    Matrix mask;    // empty when no dropout was applied; else 0 or 1/keep
};

struct ForwardPass {
    std::vector<LayerTrace> layers;  // flat order
    Vector probabilities;

    // Activation leaving layer `index` of `branch` (dropout applied).
    Matrix branch_activation(const MlpModel& model, std::size_t branch, std::size_t index) const;
};

struct LayerGradient {
    Matrix weights;
    RowVector biases;
};

struct LossAndGrad {
    double loss = 0.0;       // data_loss + l2_loss
    double data_loss = 0.0;  // mean binary cross-entropy
    double l2_loss = 0.0;
    std::vector<LayerGradient> gradients;  // flat order
};

struct AdagradState {
    std::vector<LayerGradient> accumulators;
    std::size_t steps = 0;
};

enum class TransferMode { Full, InputOnly };

struct OnlineTrainResult {
    MlpModel model;
    std::vector<double> loss_trace;
    std::vector<std::size_t> consumed_batches;
    std::size_t steps = 0;
};

struct FineTuneConfig {
    double val_fraction = 0.1;
    std::size_t epochs = 1000;
    std::size_t eval_every = 100;
    std::size_t batch_size = 20;
};

struct Checkpoint {
    std::size_t epoch = 0;
    double validation_loss = 0.0;
};

struct FineTuneResult {
    MlpModel best;
    std::vector<Checkpoint> history;
    std::size_t best_epoch = 0;
    double best_validation_loss = 0.0;
};

// Glorot-uniform weights, zero biases.
MlpModel init_mlp(const MlpConfig& config, RngStream& rng);

// inputs: one matrix per branch. rng may be null in Eval mode or when
// dropout_rate is 0.
ForwardPass forward(const MlpModel& model, std::span<const Matrix> inputs, Mode mode, RngStream* rng);

double binary_cross_entropy(const Vector& probabilities, std::span<const double> targets);
double l2_penalty(const MlpModel& model);
std::vector<double> label_targets(std::span<const Label> labels);

LossAndGrad loss_and_grad(const MlpModel& model, std::span<const Matrix> inputs, std::span<const double> targets,
                          Mode mode, RngStream* rng);

AdagradState make_adagrad_state(const MlpModel& model);
void adagrad_step(MlpModel& model, AdagradState& state, std::span<const LayerGradient> gradients);

using BatchSource = std::function<std::optional<SyntheticBatch>()>;

// One loss_and_grad + adagrad_step per batch, in source order, until the
// source is exhausted. Unimodal models only.
OnlineTrainResult train_online(MlpModel model, const BatchSource& source, AdagradState& state, RngStream& rng);

MlpModel transfer_weights(std::span<const MlpModel> unimodal_models, const MlpConfig& multimodal,
                          TransferMode mode, RngStream& rng);

FineTuneResult fine_tune(const MlpModel& model, std::span<const Matrix> inputs, std::span<const Label> labels,
                         const FineTuneConfig& config, RngStream& rng);

Vector predict_proba(const MlpModel& model, std::span<const Matrix> inputs);

}  // namespace icafuse
