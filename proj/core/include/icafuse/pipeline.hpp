#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icafuse/baselines.hpp"
#include "icafuse/datamodel.hpp"
#include "icafuse/generator.hpp"
#include "icafuse/ica.hpp"
#include "icafuse/mlp.hpp"

namespace icafuse {

struct FoldPlan {
    std::size_t k = 0;
    std::vector<std::size_t> assignments;  // fold index per subject
    bool stratified = true;

    std::vector<std::size_t> test_rows(std::size_t fold) const;
    std::vector<std::size_t> train_rows(std::size_t fold) const;
};

// Shuffles each class, concatenates the classes and deals subjects to folds
// round-robin, so fold sizes and per-class counts differ by at most one.
FoldPlan make_folds(std::span<const Label> labels, std::size_t k, bool stratified, RngStream& rng);

// Mann-Whitney AUC with half credit for ties; SZ is the positive class.
double auc(std::span<const double> scores, std::span<const Label> labels);
double auc(const Vector& scores, std::span<const Label> labels);

// One-tailed paired t-test of mean(a) > mean(b). Zero-variance differences
// give 0 (a ahead), 1 (a behind) or 0.5 (identical).
double significance_test(std::span<const double> a, std::span<const double> b);

struct PhantomSpec {
    std::size_t n_per_class = 80;
    std::vector<std::size_t> m_per_modality{2000, 2000};
    std::size_t true_sources = 10;
    // Group loading shift of modality j, applied to source j.
    std::vector<double> effect_sizes{1.0, 1.5};
    double noise_sigma = 1.0;
    std::vector<std::string> names{"A", "B"};

    void validate() const;
};

MultimodalDataset phantom_generate(const PhantomSpec& spec, RngStream& rng);

// Per-feature z-scoring fitted on training rows.
struct Standardizer {
    RowVector mean;
    RowVector scale;

    static Standardizer fit(const Matrix& x);
    Matrix apply(const Matrix& x) const;
};

enum class Method { MlpMvn, MlpRejection, MlpRaw, LogisticRegression, NaiveBayes, Lda, Knn };

std::string method_name(Method m);      // report label, e.g. "MLP with MVN"
std::string method_key(Method m);       // config token, e.g. "mlp_mvn"
Method parse_method(std::string_view key);
std::vector<Method> all_methods();

struct ModalitySource {
    std::string name;
    std::filesystem::path data;
    std::filesystem::path labels;
    MatrixFormat format = MatrixFormat::Bin;
};

struct MlpSettings {
    double learning_rate = 0.001;
    double dropout_rate = 0.5;
    double l2_input = 0.1;
    double l2_rest = 0.01;
    double adagrad_epsilon = 1e-8;
    FineTuneConfig fine_tune;
    TransferMode transfer = TransferMode::Full;

    MlpConfig unimodal(std::size_t input_dim) const;
    MlpConfig multimodal(std::vector<std::size_t> input_dims) const;
};

struct BaselineSettings {
    double lr_l2 = 1.0;
    std::size_t lr_max_iter = 500;
    double lda_shrinkage = 0.5;
    std::size_t knn_k = 5;
};

struct ExperimentConfig {
    std::vector<ModalitySource> modalities;
    std::optional<PhantomSpec> phantom;  // used when modalities is empty
    std::size_t c = 20;
    std::size_t bins = 20;
    BatchSpec batch_spec{10, 10, 10000};
    IcaConfig ica;
    MlpSettings mlp;
    BaselineSettings baselines;
    std::size_t folds = 8;
    bool stratified = true;
    bool transductive_ica = true;
    bool evaluate_unimodal = true;
    std::vector<Method> methods = all_methods();
    std::uint64_t seed = 0;
    std::size_t parallel_folds = 1;

    void validate() const;
};

ExperimentConfig parse_experiment_config(std::string_view json_text);
std::string experiment_config_to_json(const ExperimentConfig& config);

struct AucEntry {
    Method method;
    std::string modalities;
    std::size_t fold = 0;
    double auc = 0.0;
};

struct AggregateEntry {
    Method method;
    std::string modalities;
    double mean = 0.0;
    double std_dev = 0.0;  // sample (k - 1) standard deviation
    std::size_t folds = 0;
};

// What the single-pass and label-isolation instrumentation observed.
struct PretrainTrace {
    std::size_t fold = 0;
    std::string modality;
    Method method;
    std::size_t steps = 0;
    bool single_pass = false;   // consumed batch indices were 0..steps-1, each once
    bool labels_isolated = false;  // class models saw only training-fold labels
};

struct ExperimentReport {
    std::vector<std::string> modality_names;
    std::size_t folds = 0;
    std::vector<AucEntry> entries;  // sorted by method, modality set, fold
    std::vector<PretrainTrace> pretraining;

    std::vector<AggregateEntry> aggregates() const;
    std::vector<double> fold_aucs(Method method, std::string_view modalities) const;
    std::string to_csv() const;
    std::string to_table() const;
};

struct PretrainConfig {
    std::size_t c = 20;
    RvGeneratorKind kind = MvnKind{};
    BatchSpec batch_spec{10, 10, 10000};
    IcaConfig ica;
    MlpSettings mlp;
};

struct PretrainResult {
    MlpModel model;
    std::shared_ptr<const GeneratorModel> generator;
    std::vector<double> loss_trace;
    std::vector<std::size_t> consumed_batches;
    std::size_t steps = 0;
};

// Fits the generator's class models on train_rows, streams batch_spec
// batches through `scaler` and trains a fresh unimodal MLP on them online.
// When `ica` is null the factorization is fitted on train_rows only;
// otherwise the given (label-blind) factorization of all rows is reused.
PretrainResult run_unimodal_pretraining(const LabeledDataset& modality, std::span<const std::size_t> train_rows,
                                        const Standardizer& scaler, std::shared_ptr<const IcaModel> ica,
                                        const PretrainConfig& config, RngStream& rng);

MultimodalDataset load_experiment_data(const ExperimentConfig& config);
ExperimentReport run_experiment(const ExperimentConfig& config);
ExperimentReport run_experiment(const ExperimentConfig& config, const MultimodalDataset& data);

}  // namespace icafuse
