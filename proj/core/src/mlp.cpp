#include "icafuse/mlp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "icafuse/error.hpp"

namespace icafuse {

namespace {

constexpr double kProbabilityClip = 1e-7;

Matrix sigmoid(const Matrix& z) {
    return (1.0 + (-z.array()).exp()).inverse().matrix();
}

LayerWeights glorot_layer(std::size_t fan_in, std::size_t fan_out, double l2, RngStream& rng) {
    LayerWeights layer;
    const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    layer.weights.resize(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(fan_out));
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = rng.uniform(-r, r);
    layer.biases = RowVector::Zero(static_cast<Eigen::Index>(fan_out));
    layer.l2_weight = l2;
    return layer;
}

std::vector<LayerWeights> init_stack(std::size_t input_dim, const std::vector<std::size_t>& widths, double l2_first,
                                     double l2_rest, RngStream& rng) {
    std::vector<LayerWeights> stack;
    std::size_t fan_in = input_dim;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        stack.push_back(glorot_layer(fan_in, widths[i], i == 0 ? l2_first : l2_rest, rng));
        fan_in = widths[i];
    }
    return stack;
}

void check_inputs(const MlpModel& model, std::span<const Matrix> inputs) {
    const auto dims = model.config.input_dims();
    if (inputs.size() != dims.size()) {
        throw ValidationError("model has " + std::to_string(dims.size()) + " input branch(es), got " +
                              std::to_string(inputs.size()) + " input matrices");
    }
    for (std::size_t b = 0; b < dims.size(); ++b) {
        if (static_cast<std::size_t>(inputs[b].cols()) != dims[b]) {
            throw ValidationError("branch " + std::to_string(b) + " expects " + std::to_string(dims[b]) +
                                  " features, got " + std::to_string(inputs[b].cols()));
        }
        if (inputs[b].rows() != inputs[0].rows()) {
            throw ValidationError("branch inputs disagree in row count");
        }
    }
}

// Runs one layer, recording its trace; returns the activation passed on.
Matrix run_layer(const LayerWeights& layer, Matrix input, bool hidden, Mode mode, double dropout_rate,
                 RngStream* rng, LayerTrace& trace) {
    Matrix z = input * layer.weights;
    z.rowwise() += layer.biases;
    trace.input = std::move(input);
    trace.output = sigmoid(z);
    trace.mask.resize(0, 0);
    if (hidden && mode == Mode::Train && dropout_rate > 0.0) {
        if (!rng) throw ValidationError("train-mode dropout needs a random stream");
        const double keep = 1.0 - dropout_rate;
        trace.mask.resize(trace.output.rows(), trace.output.cols());
        for (Eigen::Index i = 0; i < trace.mask.size(); ++i) {
            trace.mask.data()[i] = rng->uniform() < keep ? 1.0 / keep : 0.0;
        }
        return trace.output.cwiseProduct(trace.mask);
    }
    return trace.output;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

void shuffle(std::vector<std::size_t>& v, RngStream& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

void MlpConfig::validate() const {
    if (output_dim != 1) throw ValidationError("only a single output unit is supported");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ValidationError("dropout_rate must lie in [0, 1)");
    if (!(l2_input >= 0.0) || !(l2_rest >= 0.0)) throw ValidationError("L2 weights must be non-negative");
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
    if (!(adagrad_epsilon >= 0.0)) throw ValidationError("adagrad_epsilon must be non-negative");
    auto positive = [](const std::vector<std::size_t>& v, const char* what) {
        for (auto w : v) {
            if (w == 0) throw ValidationError(std::string(what) + " widths must be positive");
        }
    };
    if (const auto* uni = std::get_if<UnimodalTopology>(&topology)) {
        if (uni->input_dim == 0) throw ValidationError("input_dim must be positive");
        if (uni->hidden.empty()) throw ValidationError("unimodal topology needs at least one hidden layer");
        positive(uni->hidden, "hidden");
    } else {
        const auto& mm = std::get<MultimodalTopology>(topology);
        if (mm.branch_input_dims.size() < 2) throw ValidationError("multimodal topology needs at least 2 branches");
        for (auto d : mm.branch_input_dims) {
            if (d == 0) throw ValidationError("branch input dims must be positive");
        }
        if (mm.branch_hidden.empty()) throw ValidationError("branch_hidden must not be empty");
        positive(mm.branch_hidden, "branch_hidden");
        positive(mm.merged_hidden, "merged_hidden");
        const std::size_t concat = mm.branch_hidden.back() * mm.branch_input_dims.size();
        if (mm.merged_hidden.empty() || mm.merged_hidden.front() != concat) {
            throw ValidationError("merged_hidden must start with the concatenated width " + std::to_string(concat));
        }
    }
}

std::size_t MlpConfig::branch_count() const {
    if (const auto* mm = std::get_if<MultimodalTopology>(&topology)) return mm->branch_input_dims.size();
    return 1;
}

std::vector<std::size_t> MlpConfig::input_dims() const {
    if (const auto* mm = std::get_if<MultimodalTopology>(&topology)) return mm->branch_input_dims;
    return {std::get<UnimodalTopology>(topology).input_dim};
}

MlpConfig unimodal_config(std::size_t input_dim) {
    MlpConfig config;
    config.topology = UnimodalTopology{input_dim, {20, 20, 20}};
    return config;
}

MlpConfig multimodal_config(std::vector<std::size_t> branch_input_dims) {
    MlpConfig config;
    const std::size_t concat = 20 * branch_input_dims.size();
    config.topology = MultimodalTopology{std::move(branch_input_dims), {20, 20, 20}, {concat, 20}};
    return config;
}

std::size_t MlpModel::layer_count() const {
    std::size_t n = head.size();
    for (const auto& b : branches) n += b.size();
    return n;
}

LayerWeights& MlpModel::layer(std::size_t flat) {
    return const_cast<LayerWeights&>(static_cast<const MlpModel&>(*this).layer(flat));
}

const LayerWeights& MlpModel::layer(std::size_t flat) const {
    for (const auto& b : branches) {
        if (flat < b.size()) return b[flat];
        flat -= b.size();
    }
    return head.at(flat);
}

Matrix ForwardPass::branch_activation(const MlpModel& model, std::size_t branch, std::size_t index) const {
    std::size_t flat = 0;
    for (std::size_t b = 0; b < branch; ++b) flat += model.branches.at(b).size();
    if (index >= model.branches.at(branch).size()) throw ValidationError("branch layer index out of range");
    const auto& t = layers.at(flat + index);
    return t.mask.size() ? Matrix(t.output.cwiseProduct(t.mask)) : t.output;
}

MlpModel init_mlp(const MlpConfig& config, RngStream& rng) {
    config.validate();
    MlpModel model;
    model.config = config;
    if (const auto* uni = std::get_if<UnimodalTopology>(&config.topology)) {
        model.branches.push_back(init_stack(uni->input_dim, uni->hidden, config.l2_input, config.l2_rest, rng));
        model.head.push_back(glorot_layer(uni->hidden.back(), config.output_dim, config.l2_rest, rng));
    } else {
        const auto& mm = std::get<MultimodalTopology>(config.topology);
        for (auto dim : mm.branch_input_dims) {
            model.branches.push_back(init_stack(dim, mm.branch_hidden, config.l2_input, config.l2_rest, rng));
        }
        std::vector<std::size_t> widths(mm.merged_hidden.begin() + 1, mm.merged_hidden.end());
        widths.push_back(config.output_dim);
        model.head = init_stack(mm.merged_hidden.front(), widths, config.l2_rest, config.l2_rest, rng);
    }
    return model;
}

ForwardPass forward(const MlpModel& model, std::span<const Matrix> inputs, Mode mode, RngStream* rng) {
    check_inputs(model, inputs);
    const double rate = model.config.dropout_rate;
    ForwardPass pass;
    pass.layers.resize(model.layer_count());
    std::size_t flat = 0;

    std::vector<Matrix> branch_out;
    branch_out.reserve(model.branches.size());
    for (std::size_t b = 0; b < model.branches.size(); ++b) {
        Matrix a = inputs[b];
        for (const auto& layer : model.branches[b]) {
            a = run_layer(layer, std::move(a), true, mode, rate, rng, pass.layers[flat++]);
        }
        branch_out.push_back(std::move(a));
    }

    Matrix a;
    if (branch_out.size() == 1) {
        a = std::move(branch_out.front());
    } else {
        Eigen::Index width = 0;
        for (const auto& o : branch_out) width += o.cols();
        a.resize(branch_out.front().rows(), width);
        Eigen::Index col = 0;
        for (const auto& o : branch_out) {
            a.middleCols(col, o.cols()) = o;
            col += o.cols();
        }
    }
    for (std::size_t l = 0; l < model.head.size(); ++l) {
        const bool hidden = l + 1 < model.head.size();
        a = run_layer(model.head[l], std::move(a), hidden, mode, rate, rng, pass.layers[flat++]);
    }
    pass.probabilities = a.col(0);
    return pass;
}

double binary_cross_entropy(const Vector& probabilities, std::span<const double> targets) {
    if (static_cast<std::size_t>(probabilities.size()) != targets.size()) {
        throw ValidationError("binary_cross_entropy: size mismatch");
    }
    if (targets.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double p = std::clamp(probabilities(static_cast<Eigen::Index>(i)), kProbabilityClip, 1.0 - kProbabilityClip);
        sum += targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p);
    }
    return -sum / static_cast<double>(targets.size());
}

double l2_penalty(const MlpModel& model) {
    double total = 0.0;
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        const auto& layer = model.layer(l);
        total += layer.l2_weight * layer.weights.squaredNorm();
    }
    return total;
}

std::vector<double> label_targets(std::span<const Label> labels) {
    std::vector<double> y(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) y[i] = labels[i] == Label::SZ ? 1.0 : 0.0;
    return y;
}

LossAndGrad loss_and_grad(const MlpModel& model, std::span<const Matrix> inputs, std::span<const double> targets,
                          Mode mode, RngStream* rng) {
    for (double t : targets) {
        if (t != 0.0 && t != 1.0) throw ValidationError("labels must be 0 or 1");
    }
    check_inputs(model, inputs);
    if (static_cast<std::size_t>(inputs[0].rows()) != targets.size()) {
        throw ValidationError("got " + std::to_string(targets.size()) + " labels for " +
                              std::to_string(inputs[0].rows()) + " rows");
    }
    const ForwardPass pass = forward(model, inputs, mode, rng);

    LossAndGrad out;
    out.data_loss = binary_cross_entropy(pass.probabilities, targets);
    out.l2_loss = l2_penalty(model);
    out.loss = out.data_loss + out.l2_loss;
    out.gradients.resize(model.layer_count());

    const auto n = static_cast<Eigen::Index>(targets.size());
    Matrix dz(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        dz(i, 0) = (pass.probabilities(i) - targets[static_cast<std::size_t>(i)]) / static_cast<double>(n);
    }

    // Gradient w.r.t. the layer's pre-activation from the gradient w.r.t. its
    // (dropped-out) activation.
    auto through_activation = [](const LayerTrace& t, Matrix grad) {
        if (t.mask.size()) grad = grad.cwiseProduct(t.mask);
        return Matrix(grad.array() * t.output.array() * (1.0 - t.output.array()));
    };
    auto backprop = [&](std::size_t flat, const Matrix& dz_layer, bool input_grad = true) {
        const auto& layer = model.layer(flat);
        const auto& t = pass.layers[flat];
        auto& g = out.gradients[flat];
        g.weights.noalias() = t.input.transpose() * dz_layer;
        g.weights += 2.0 * layer.l2_weight * layer.weights;
        g.biases = dz_layer.colwise().sum();
        return input_grad ? Matrix(dz_layer * layer.weights.transpose()) : Matrix();
    };

    std::size_t head_start = 0;
    for (const auto& b : model.branches) head_start += b.size();
    Matrix grad_in;
    for (std::size_t l = model.head.size(); l-- > 0;) {
        const std::size_t flat = head_start + l;
        grad_in = backprop(flat, dz);
        if (l > 0) dz = through_activation(pass.layers[flat - 1], grad_in);
    }

    Eigen::Index col = 0;
    std::size_t branch_start = 0;
    for (const auto& branch : model.branches) {
        const auto width = static_cast<Eigen::Index>(branch.back().fan_out());
        Matrix g = grad_in.middleCols(col, width);
        col += width;
        for (std::size_t l = branch.size(); l-- > 0;) {
            const std::size_t flat = branch_start + l;
            dz = through_activation(pass.layers[flat], g);
            g = backprop(flat, dz, l > 0);
        }
        branch_start += branch.size();
    }
    return out;
}

AdagradState make_adagrad_state(const MlpModel& model) {
    AdagradState state;
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        const auto& layer = model.layer(l);
        state.accumulators.push_back({Matrix::Zero(layer.weights.rows(), layer.weights.cols()),
                                      RowVector::Zero(layer.biases.size())});
    }
    return state;
}

void adagrad_step(MlpModel& model, AdagradState& state, std::span<const LayerGradient> gradients) {
    if (state.accumulators.empty()) state = make_adagrad_state(model);
    if (gradients.size() != model.layer_count() || state.accumulators.size() != model.layer_count()) {
        throw ValidationError("adagrad_step: layer count mismatch");
    }
    const double lr = model.config.learning_rate;
    const double eps = model.config.adagrad_epsilon;
    for (std::size_t l = 0; l < gradients.size(); ++l) {
        auto& layer = model.layer(l);
        auto& acc = state.accumulators[l];
        const auto& g = gradients[l];
        if (g.weights.rows() != layer.weights.rows() || g.weights.cols() != layer.weights.cols() ||
            g.biases.size() != layer.biases.size()) {
            throw ValidationError("adagrad_step: gradient shape mismatch at layer " + std::to_string(l));
        }
        acc.weights.array() += g.weights.array().square();
        acc.biases.array() += g.biases.array().square();
        for (Eigen::Index i = 0; i < g.weights.size(); ++i) {
            const double gi = g.weights.data()[i];
            if (gi != 0.0) layer.weights.data()[i] -= lr * gi / (std::sqrt(acc.weights.data()[i]) + eps);
        }
        for (Eigen::Index i = 0; i < g.biases.size(); ++i) {
            const double gi = g.biases(i);
            if (gi != 0.0) layer.biases(i) -= lr * gi / (std::sqrt(acc.biases(i)) + eps);
        }
    }
    ++state.steps;
}

OnlineTrainResult train_online(MlpModel model, const BatchSource& source, AdagradState& state, RngStream& rng) {
    if (model.config.multimodal()) throw ValidationError("online training expects a unimodal model");
    const std::size_t input_dim = model.config.input_dims().front();
    if (state.accumulators.empty()) state = make_adagrad_state(model);

    OnlineTrainResult result;
    while (auto batch = source()) {
        if (static_cast<std::size_t>(batch->data.cols()) != input_dim) {
            throw ValidationError("batch " + std::to_string(batch->batch_index) + " has " +
                                  std::to_string(batch->data.cols()) + " features, model expects " +
                                  std::to_string(input_dim));
        }
        const auto targets = label_targets(batch->labels);
        const std::array<Matrix, 1> inputs{std::move(batch->data)};
        const auto lg = loss_and_grad(model, inputs, targets, Mode::Train, &rng);
        adagrad_step(model, state, lg.gradients);
        result.loss_trace.push_back(lg.loss);
        result.consumed_batches.push_back(batch->batch_index);
        ++result.steps;
    }
    result.model = std::move(model);
    return result;
}

MlpModel transfer_weights(std::span<const MlpModel> unimodal_models, const MlpConfig& multimodal, TransferMode mode,
                          RngStream& rng) {
    if (!multimodal.multimodal()) throw ValidationError("transfer target must be a multimodal config");
    MlpModel model = init_mlp(multimodal, rng);
    if (unimodal_models.size() != model.branches.size()) {
        throw ValidationError("transfer needs " + std::to_string(model.branches.size()) + " unimodal models, got " +
                              std::to_string(unimodal_models.size()));
    }
    for (std::size_t b = 0; b < model.branches.size(); ++b) {
        const auto& source = unimodal_models[b];
        if (source.config.multimodal() || source.branches.size() != 1) {
            throw ValidationError("branch " + std::to_string(b) + ": source model is not unimodal");
        }
        const auto& src_stack = source.branches.front();
        auto& dst_stack = model.branches[b];
        const std::size_t copy = mode == TransferMode::Full ? dst_stack.size() : 1;
        if (mode == TransferMode::Full && src_stack.size() != dst_stack.size()) {
            throw ValidationError("branch " + std::to_string(b) + ": source has " + std::to_string(src_stack.size()) +
                                  " hidden layers, branch has " + std::to_string(dst_stack.size()));
        }
        for (std::size_t l = 0; l < copy; ++l) {
            const auto& s = src_stack[l];
            auto& d = dst_stack[l];
            if (s.weights.rows() != d.weights.rows() || s.weights.cols() != d.weights.cols()) {
                throw ValidationError("branch " + std::to_string(b) + " layer " + std::to_string(l) + ": source is " +
                                      std::to_string(s.weights.rows()) + "x" + std::to_string(s.weights.cols()) +
                                      ", branch expects " + std::to_string(d.weights.rows()) + "x" +
                                      std::to_string(d.weights.cols()));
            }
            d.weights = s.weights;
            d.biases = s.biases;
        }
    }
    return model;
}

FineTuneResult fine_tune(const MlpModel& model, std::span<const Matrix> inputs, std::span<const Label> labels,
                         const FineTuneConfig& config, RngStream& rng) {
    check_inputs(model, inputs);
    if (labels.size() != static_cast<std::size_t>(inputs[0].rows())) {
        throw ValidationError("fine_tune: labels and rows differ in count");
    }
    if (!(config.val_fraction > 0.0 && config.val_fraction < 1.0)) {
        throw ValidationError("val_fraction must lie in (0, 1)");
    }
    if (config.epochs < 1 || config.eval_every < 1 || config.batch_size < 1) {
        throw ValidationError("epochs, eval_every and batch_size must be positive");
    }

    // Stratified split: at least one validation and one training row per class.
    std::vector<std::size_t> train_rows, val_rows;
    for (Label cls : {Label::HC, Label::SZ}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == cls) idx.push_back(i);
        }
        const auto n_val = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::lround(config.val_fraction * static_cast<double>(idx.size()))));
        if (idx.size() < n_val + 1) {
            throw ValidationError("stratification error: class " + std::string(to_string(cls)) + " has " +
                                  std::to_string(idx.size()) + " samples, cannot fill both splits");
        }
        shuffle(idx, rng);
        val_rows.insert(val_rows.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
        train_rows.insert(train_rows.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    }
    std::sort(val_rows.begin(), val_rows.end());
    std::sort(train_rows.begin(), train_rows.end());

    std::vector<Matrix> val_inputs;
    for (const auto& m : inputs) val_inputs.push_back(select_rows(m, val_rows));
    std::vector<Label> val_labels;
    for (auto r : val_rows) val_labels.push_back(labels[r]);
    const auto val_targets = label_targets(val_labels);
    const auto all_targets = label_targets(labels);

    MlpModel current = model;
    AdagradState state = make_adagrad_state(current);
    FineTuneResult result;
    result.best_validation_loss = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order = train_rows;
    std::vector<Matrix> batch_inputs(inputs.size());
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle(order, rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::span<const std::size_t> rows(order.data() + start,
                                                    std::min(config.batch_size, order.size() - start));
            for (std::size_t b = 0; b < inputs.size(); ++b) batch_inputs[b] = select_rows(inputs[b], rows);
            std::vector<double> targets;
            targets.reserve(rows.size());
            for (auto r : rows) targets.push_back(all_targets[r]);
            const auto lg = loss_and_grad(current, batch_inputs, targets, Mode::Train, &rng);
            adagrad_step(current, state, lg.gradients);
        }
        if (epoch % config.eval_every == 0) {
            const ForwardPass pass = forward(current, val_inputs, Mode::Eval, nullptr);
            const double val_loss = binary_cross_entropy(pass.probabilities, val_targets);
            result.history.push_back({epoch, val_loss});
            if (result.history.size() == 1 || val_loss < result.best_validation_loss) {
                result.best_validation_loss = val_loss;
                result.best_epoch = epoch;
                result.best = current;
            }
        }
    }
    if (result.history.empty()) {
        // Fewer epochs than one evaluation period: keep the final weights.
        const ForwardPass pass = forward(current, val_inputs, Mode::Eval, nullptr);
        result.best_validation_loss = binary_cross_entropy(pass.probabilities, val_targets);
        result.best_epoch = config.epochs;
        result.best = current;
    }
    return result;
}

Vector predict_proba(const MlpModel& model, std::span<const Matrix> inputs) {
    return forward(model, inputs, Mode::Eval, nullptr).probabilities;
}

}  // namespace icafuse
