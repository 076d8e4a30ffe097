#include "icafuse/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <boost/math/distributions/students_t.hpp>
#include <charconv>
#include <cmath>
#include <json.hpp>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "icafuse/error.hpp"

namespace icafuse {

using json = nlohmann::json;

namespace {

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string fixed(double v, int digits) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

std::vector<Label> select_labels(std::span<const Label> labels, std::span<const std::size_t> rows) {
    std::vector<Label> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(labels[r]);
    return out;
}

void shuffle(std::vector<std::size_t>& v, RngStream& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

// Smooth sparse pattern: random spikes blurred by a Gaussian kernel, then
// standardized. Heavy-tailed, hence usable as an ICA source.
RowVector smooth_source(std::size_t m, RngStream& rng) {
    constexpr double kSpikeRate = 0.05;
    constexpr double kKernelSigma = 3.0;
    constexpr int kHalfWidth = 9;
    std::vector<double> spikes(m, 0.0);
    for (auto& s : spikes) {
        if (rng.uniform() < kSpikeRate) s = rng.normal();
    }
    std::vector<double> kernel;
    for (int d = -kHalfWidth; d <= kHalfWidth; ++d) kernel.push_back(std::exp(-0.5 * d * d / (kKernelSigma * kKernelSigma)));
    RowVector out = RowVector::Zero(static_cast<Eigen::Index>(m));
    const auto mi = static_cast<std::ptrdiff_t>(m);
    for (std::ptrdiff_t i = 0; i < mi; ++i) {
        double acc = 0.0;
        for (int d = -kHalfWidth; d <= kHalfWidth; ++d) {
            const auto j = i + d;
            if (j >= 0 && j < mi) acc += kernel[static_cast<std::size_t>(d + kHalfWidth)] * spikes[static_cast<std::size_t>(j)];
        }
        out(i) = acc;
    }
    out.array() -= out.mean();
    const double sd = std::sqrt(out.squaredNorm() / static_cast<double>(m));
    if (sd > 0.0) out /= sd;
    return out;
}

std::string join_names(const std::vector<std::string>& names) {
    std::string out;
    for (const auto& n : names) out += (out.empty() ? "" : "+") + n;
    return out;
}

bool is_baseline(Method m) {
    return m == Method::LogisticRegression || m == Method::NaiveBayes || m == Method::Lda || m == Method::Knn;
}

BaselineKind baseline_kind(Method m, const BaselineSettings& s) {
    switch (m) {
        case Method::LogisticRegression: return LogisticRegressionKind{s.lr_l2, s.lr_max_iter};
        case Method::NaiveBayes: return GaussianNbKind{};
        case Method::Lda: return LdaKind{s.lda_shrinkage};
        case Method::Knn: return KnnKind{s.knn_k};
        default: throw ValidationError("not a baseline method");
    }
}

struct FoldOutput {
    std::vector<AucEntry> entries;
    std::vector<PretrainTrace> pretraining;
};

template <typename F>
auto stage(std::size_t fold, const std::string& name, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const ValidationError& e) {
        throw ValidationError("fold " + std::to_string(fold) + ", stage " + name + ": " + e.what());
    } catch (const std::exception& e) {
        throw Error("fold " + std::to_string(fold) + ", stage " + name + ": " + e.what());
    }
}

}  // namespace

std::vector<std::size_t> FoldPlan::test_rows(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] == fold) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> FoldPlan::train_rows(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] != fold) out.push_back(i);
    }
    return out;
}

FoldPlan make_folds(std::span<const Label> labels, std::size_t k, bool stratified, RngStream& rng) {
    if (k < 2) throw ValidationError("need at least 2 folds, got " + std::to_string(k));
    FoldPlan plan;
    plan.k = k;
    plan.stratified = stratified;
    plan.assignments.assign(labels.size(), 0);

    std::vector<std::size_t> order;
    if (stratified) {
        for (Label cls : {Label::HC, Label::SZ}) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < labels.size(); ++i) {
                if (labels[i] == cls) idx.push_back(i);
            }
            if (idx.size() < k) {
                throw ValidationError("cannot stratify " + std::to_string(k) + " folds: class " +
                                      std::string(to_string(cls)) + " has only " + std::to_string(idx.size()) +
                                      " subjects");
            }
            shuffle(idx, rng);
            order.insert(order.end(), idx.begin(), idx.end());
        }
    } else {
        if (labels.size() < k) {
            throw ValidationError("cannot make " + std::to_string(k) + " folds from " + std::to_string(labels.size()) +
                                  " subjects");
        }
        order.resize(labels.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle(order, rng);
    }
    for (std::size_t pos = 0; pos < order.size(); ++pos) plan.assignments[order[pos]] = pos % k;
    return plan;
}

double auc(std::span<const double> scores, std::span<const Label> labels) {
    if (scores.size() != labels.size()) throw ValidationError("auc: scores and labels differ in length");
    for (double s : scores) {
        if (!std::isfinite(s)) throw ValidationError("auc: non-finite score");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

    // Rank sum of the positives, ties sharing their average rank.
    double positive_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t start = 0; start < order.size();) {
        std::size_t end = start;
        while (end < order.size() && scores[order[end]] == scores[order[start]]) ++end;
        const double avg_rank = 0.5 * static_cast<double>(start + 1 + end);
        for (std::size_t i = start; i < end; ++i) {
            if (labels[order[i]] == Label::SZ) {
                positive_rank_sum += avg_rank;
                ++n_pos;
            }
        }
        start = end;
    }
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw ValidationError("auc needs both classes present");
    const double np = static_cast<double>(n_pos);
    return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

double auc(const Vector& scores, std::span<const Label> labels) {
    return auc(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())), labels);
}

double significance_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ValidationError("significance_test: samples differ in length");
    const std::size_t k = a.size();
    if (k < 2) throw ValidationError("significance_test needs at least 2 paired values");
    std::vector<double> d(k);
    for (std::size_t i = 0; i < k; ++i) d[i] = a[i] - b[i];
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(k);
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(k - 1));
    if (!(sd > 0.0)) {
        if (mean > 0.0) return 0.0;
        if (mean < 0.0) return 1.0;
        return 0.5;
    }
    const double t = mean / (sd / std::sqrt(static_cast<double>(k)));
    const boost::math::students_t dist(static_cast<double>(k - 1));
    return boost::math::cdf(boost::math::complement(dist, t));
}

void PhantomSpec::validate() const {
    if (n_per_class < 1) throw ValidationError("phantom: n_per_class must be positive");
    if (m_per_modality.empty()) throw ValidationError("phantom: needs at least one modality");
    if (true_sources < 1) throw ValidationError("phantom: true_sources must be positive");
    if (effect_sizes.size() != m_per_modality.size() || names.size() != m_per_modality.size()) {
        throw ValidationError("phantom: m_per_modality, effect_sizes and names must have equal length");
    }
    for (std::size_t j = 0; j < m_per_modality.size(); ++j) {
        if (m_per_modality[j] < 1) throw ValidationError("phantom: modality dimensions must be positive");
        if (!(effect_sizes[j] >= 0.0)) throw ValidationError("phantom: effect sizes must be non-negative");
    }
    if (!(noise_sigma >= 0.0)) throw ValidationError("phantom: noise_sigma must be non-negative");
}

MultimodalDataset phantom_generate(const PhantomSpec& spec, RngStream& rng) {
    spec.validate();
    const std::size_t n = 2 * spec.n_per_class;
    std::vector<Label> labels(n, Label::HC);
    std::fill(labels.begin() + static_cast<std::ptrdiff_t>(spec.n_per_class), labels.end(), Label::SZ);
    const auto ids = default_subject_ids(n);
    const auto c = static_cast<Eigen::Index>(spec.true_sources);

    std::vector<NamedModality> modalities;
    for (std::size_t j = 0; j < spec.m_per_modality.size(); ++j) {
        RngStream mrng = rng.split("phantom-modality", j);
        const std::size_t m = spec.m_per_modality[j];
        Matrix sources(c, static_cast<Eigen::Index>(m));
        for (Eigen::Index k = 0; k < c; ++k) sources.row(k) = smooth_source(m, mrng);

        Matrix loadings(static_cast<Eigen::Index>(n), c);
        for (Eigen::Index i = 0; i < loadings.size(); ++i) loadings.data()[i] = mrng.normal();
        const auto effect_component = static_cast<Eigen::Index>(j % spec.true_sources);
        for (std::size_t i = spec.n_per_class; i < n; ++i) {
            loadings(static_cast<Eigen::Index>(i), effect_component) += spec.effect_sizes[j];
        }

        Matrix data = loadings * sources;
        if (spec.noise_sigma > 0.0) {
            for (Eigen::Index i = 0; i < data.size(); ++i) data.data()[i] += spec.noise_sigma * mrng.normal();
        }
        modalities.push_back({spec.names[j], LabeledDataset{std::move(data), labels, ids}});
    }
    return MultimodalDataset(std::move(modalities));
}

Standardizer Standardizer::fit(const Matrix& x) {
    if (x.rows() < 1) throw ValidationError("standardizer needs at least one row");
    Standardizer s;
    s.mean = x.colwise().mean();
    const Matrix centered = x.rowwise() - s.mean;
    s.scale = (centered.colwise().squaredNorm() / static_cast<double>(x.rows())).cwiseSqrt();
    for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
        if (!(s.scale(j) > 1e-12)) s.scale(j) = 1.0;
    }
    return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
    if (x.cols() != mean.size()) throw ValidationError("standardizer column count mismatch");
    return ((x.rowwise() - mean).array().rowwise() / scale.array()).matrix();
}

std::string method_name(Method m) {
    switch (m) {
        case Method::MlpMvn: return "MLP with MVN";
        case Method::MlpRejection: return "MLP with rejection";
        case Method::MlpRaw: return "MLP";
        case Method::LogisticRegression: return "Logistic Regression";
        case Method::NaiveBayes: return "Naive Bayes";
        case Method::Lda: return "LDA";
        case Method::Knn: return "Nearest Neighbors";
    }
    return "?";
}

std::string method_key(Method m) {
    switch (m) {
        case Method::MlpMvn: return "mlp_mvn";
        case Method::MlpRejection: return "mlp_rejection";
        case Method::MlpRaw: return "mlp_raw";
        case Method::LogisticRegression: return "logistic_regression";
        case Method::NaiveBayes: return "naive_bayes";
        case Method::Lda: return "lda";
        case Method::Knn: return "knn";
    }
    return "?";
}

Method parse_method(std::string_view key) {
    for (Method m : all_methods()) {
        if (method_key(m) == key) return m;
    }
    throw ValidationError("unknown method '" + std::string(key) + "'");
}

std::vector<Method> all_methods() {
    return {Method::MlpMvn,     Method::MlpRejection, Method::MlpRaw, Method::NaiveBayes,
            Method::LogisticRegression, Method::Lda, Method::Knn};
}

MlpConfig MlpSettings::unimodal(std::size_t input_dim) const {
    MlpConfig c = unimodal_config(input_dim);
    c.learning_rate = learning_rate;
    c.dropout_rate = dropout_rate;
    c.l2_input = l2_input;
    c.l2_rest = l2_rest;
    c.adagrad_epsilon = adagrad_epsilon;
    return c;
}

MlpConfig MlpSettings::multimodal(std::vector<std::size_t> input_dims) const {
    MlpConfig c = multimodal_config(std::move(input_dims));
    c.learning_rate = learning_rate;
    c.dropout_rate = dropout_rate;
    c.l2_input = l2_input;
    c.l2_rest = l2_rest;
    c.adagrad_epsilon = adagrad_epsilon;
    return c;
}

void ExperimentConfig::validate() const {
    if (modalities.empty() && !phantom) throw ValidationError("experiment needs modalities or a phantom spec");
    for (const auto& m : modalities) {
        if (!std::filesystem::exists(m.data)) throw ValidationError("data file not found: " + m.data.string());
        if (!std::filesystem::exists(m.labels)) throw ValidationError("labels file not found: " + m.labels.string());
    }
    if (phantom) phantom->validate();
    if (c < 1) throw ValidationError("c must be >= 1");
    if (bins < 1) throw ValidationError("bins must be >= 1");
    batch_spec.validate();
    if (folds < 2) throw ValidationError("folds must be >= 2");
    if (parallel_folds < 1) throw ValidationError("parallel_folds must be >= 1");
    if (methods.empty()) throw ValidationError("no methods selected");
    mlp.unimodal(1).validate();
}

namespace {

// Misspelled keys would otherwise fall back to defaults without a trace.
void reject_unknown_keys(const json& object, std::initializer_list<std::string_view> known, std::string_view where) {
    if (!object.is_object()) throw ValidationError("experiment config: " + std::string(where) + " must be an object");
    for (const auto& item : object.items()) {
        if (std::find(known.begin(), known.end(), item.key()) == known.end())
            throw ValidationError("experiment config: unknown key '" + item.key() + "' in " + std::string(where));
    }
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("experiment config: ") + e.what(), e.byte);
    }
    ExperimentConfig c;
    try {
        reject_unknown_keys(j,
                            {"modalities", "phantom", "c", "bins", "batch_spec", "ica", "mlp", "baselines", "folds",
                             "stratified", "transductive_ica", "evaluate_unimodal", "seed", "parallel_folds",
                             "methods", "rv_kind"},
                            "top level");
        if (j.contains("modalities")) {
            for (const auto& m : j.at("modalities")) {
                reject_unknown_keys(m, {"name", "data", "labels", "format"}, "modalities");
                ModalitySource src;
                src.name = m.at("name").get<std::string>();
                src.data = m.at("data").get<std::string>();
                src.labels = m.at("labels").get<std::string>();
                src.format = m.contains("format") ? parse_format(m.at("format").get<std::string>())
                                                  : format_from_path(src.data);
                c.modalities.push_back(std::move(src));
            }
        }
        if (j.contains("phantom")) {
            const auto& p = j.at("phantom");
            reject_unknown_keys(p, {"n_per_class", "m_per_modality", "true_sources", "effect_sizes", "noise_sigma", "names"},
                                "phantom");
            PhantomSpec spec;
            spec.n_per_class = p.value("n_per_class", spec.n_per_class);
            spec.m_per_modality = p.value("m_per_modality", spec.m_per_modality);
            spec.true_sources = p.value("true_sources", spec.true_sources);
            spec.effect_sizes = p.value("effect_sizes", spec.effect_sizes);
            spec.noise_sigma = p.value("noise_sigma", spec.noise_sigma);
            spec.names = p.value("names", spec.names);
            c.phantom = spec;
        }
        c.c = j.value("c", c.c);
        c.bins = j.value("bins", c.bins);
        if (j.contains("batch_spec")) {
            const auto& b = j.at("batch_spec");
            reject_unknown_keys(b, {"hc_per_batch", "sz_per_batch", "batches"}, "batch_spec");
            c.batch_spec.hc_per_batch = b.value("hc_per_batch", c.batch_spec.hc_per_batch);
            c.batch_spec.sz_per_batch = b.value("sz_per_batch", c.batch_spec.sz_per_batch);
            c.batch_spec.batches = b.value("batches", c.batch_spec.batches);
        }
        if (j.contains("ica")) {
            reject_unknown_keys(j.at("ica"), {"max_iter", "tol"}, "ica");
            c.ica.max_iter = j.at("ica").value("max_iter", c.ica.max_iter);
            c.ica.tol = j.at("ica").value("tol", c.ica.tol);
        }
        if (j.contains("mlp")) {
            const auto& m = j.at("mlp");
            reject_unknown_keys(m,
                                {"learning_rate", "dropout_rate", "l2_input", "l2_rest", "adagrad_epsilon", "epochs",
                                 "eval_every", "batch_size", "val_fraction", "transfer"},
                                "mlp");
            c.mlp.learning_rate = m.value("learning_rate", c.mlp.learning_rate);
            c.mlp.dropout_rate = m.value("dropout_rate", c.mlp.dropout_rate);
            c.mlp.l2_input = m.value("l2_input", c.mlp.l2_input);
            c.mlp.l2_rest = m.value("l2_rest", c.mlp.l2_rest);
            c.mlp.adagrad_epsilon = m.value("adagrad_epsilon", c.mlp.adagrad_epsilon);
            c.mlp.fine_tune.epochs = m.value("epochs", c.mlp.fine_tune.epochs);
            c.mlp.fine_tune.eval_every = m.value("eval_every", c.mlp.fine_tune.eval_every);
            c.mlp.fine_tune.batch_size = m.value("batch_size", c.mlp.fine_tune.batch_size);
            c.mlp.fine_tune.val_fraction = m.value("val_fraction", c.mlp.fine_tune.val_fraction);
            const auto transfer = m.value("transfer", std::string("full"));
            if (transfer == "full") {
                c.mlp.transfer = TransferMode::Full;
            } else if (transfer == "input-only") {
                c.mlp.transfer = TransferMode::InputOnly;
            } else {
                throw ValidationError("mlp.transfer must be 'full' or 'input-only'");
            }
        }
        if (j.contains("baselines")) {
            const auto& b = j.at("baselines");
            reject_unknown_keys(b, {"lr_l2", "lr_max_iter", "lda_shrinkage", "knn_k"}, "baselines");
            c.baselines.lr_l2 = b.value("lr_l2", c.baselines.lr_l2);
            c.baselines.lr_max_iter = b.value("lr_max_iter", c.baselines.lr_max_iter);
            c.baselines.lda_shrinkage = b.value("lda_shrinkage", c.baselines.lda_shrinkage);
            c.baselines.knn_k = b.value("knn_k", c.baselines.knn_k);
        }
        c.folds = j.value("folds", c.folds);
        c.stratified = j.value("stratified", c.stratified);
        c.transductive_ica = j.value("transductive_ica", c.transductive_ica);
        c.evaluate_unimodal = j.value("evaluate_unimodal", c.evaluate_unimodal);
        c.seed = j.value("seed", c.seed);
        c.parallel_folds = j.value("parallel_folds", c.parallel_folds);
        if (j.contains("methods")) {
            c.methods.clear();
            for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
        }
        if (j.contains("rv_kind")) {
            const auto kind = j.at("rv_kind").get<std::string>();
            if (kind != "mvn" && kind != "rejection") throw ValidationError("rv_kind must be 'mvn' or 'rejection'");
            const Method drop = kind == "mvn" ? Method::MlpRejection : Method::MlpMvn;
            c.methods.erase(std::remove(c.methods.begin(), c.methods.end(), drop), c.methods.end());
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("experiment config: ") + e.what());
    }
    return c;
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
    json j;
    j["modalities"] = json::array();
    for (const auto& m : c.modalities) {
        j["modalities"].push_back({{"name", m.name},
                                   {"data", m.data.string()},
                                   {"labels", m.labels.string()},
                                   {"format", m.format == MatrixFormat::Bin ? "bin" : "csv"}});
    }
    if (c.phantom) {
        const auto& p = *c.phantom;
        j["phantom"] = {{"n_per_class", p.n_per_class}, {"m_per_modality", p.m_per_modality},
                        {"true_sources", p.true_sources}, {"effect_sizes", p.effect_sizes},
                        {"noise_sigma", p.noise_sigma},   {"names", p.names}};
    }
    j["c"] = c.c;
    j["bins"] = c.bins;
    j["batch_spec"] = {{"hc_per_batch", c.batch_spec.hc_per_batch},
                       {"sz_per_batch", c.batch_spec.sz_per_batch},
                       {"batches", c.batch_spec.batches}};
    j["ica"] = {{"max_iter", c.ica.max_iter}, {"tol", c.ica.tol}};
    j["mlp"] = {{"learning_rate", c.mlp.learning_rate},
                {"dropout_rate", c.mlp.dropout_rate},
                {"l2_input", c.mlp.l2_input},
                {"l2_rest", c.mlp.l2_rest},
                {"adagrad_epsilon", c.mlp.adagrad_epsilon},
                {"epochs", c.mlp.fine_tune.epochs},
                {"eval_every", c.mlp.fine_tune.eval_every},
                {"batch_size", c.mlp.fine_tune.batch_size},
                {"val_fraction", c.mlp.fine_tune.val_fraction},
                {"transfer", c.mlp.transfer == TransferMode::Full ? "full" : "input-only"}};
    j["baselines"] = {{"lr_l2", c.baselines.lr_l2},
                      {"lr_max_iter", c.baselines.lr_max_iter},
                      {"lda_shrinkage", c.baselines.lda_shrinkage},
                      {"knn_k", c.baselines.knn_k}};
    j["folds"] = c.folds;
    j["stratified"] = c.stratified;
    j["transductive_ica"] = c.transductive_ica;
    j["evaluate_unimodal"] = c.evaluate_unimodal;
    j["seed"] = c.seed;
    j["parallel_folds"] = c.parallel_folds;
    j["methods"] = json::array();
    for (Method m : c.methods) j["methods"].push_back(method_key(m));
    return j.dump(2);
}

std::vector<AggregateEntry> ExperimentReport::aggregates() const {
    std::vector<AggregateEntry> out;
    for (std::size_t i = 0; i < entries.size();) {
        std::size_t end = i;
        while (end < entries.size() && entries[end].method == entries[i].method &&
               entries[end].modalities == entries[i].modalities) {
            ++end;
        }
        AggregateEntry agg{entries[i].method, entries[i].modalities, 0.0, 0.0, end - i};
        for (std::size_t k = i; k < end; ++k) agg.mean += entries[k].auc;
        agg.mean /= static_cast<double>(agg.folds);
        if (agg.folds > 1) {
            double ss = 0.0;
            for (std::size_t k = i; k < end; ++k) ss += (entries[k].auc - agg.mean) * (entries[k].auc - agg.mean);
            agg.std_dev = std::sqrt(ss / static_cast<double>(agg.folds - 1));
        }
        out.push_back(std::move(agg));
        i = end;
    }
    return out;
}

std::vector<double> ExperimentReport::fold_aucs(Method method, std::string_view modalities) const {
    std::vector<double> out;
    for (const auto& e : entries) {
        if (e.method == method && e.modalities == modalities) out.push_back(e.auc);
    }
    return out;
}

std::string ExperimentReport::to_csv() const {
    std::string out = "method,modalities,fold,auc\n";
    for (const auto& e : entries) {
        out += method_name(e.method) + "," + e.modalities + "," + std::to_string(e.fold) + "," + format_double(e.auc) + "\n";
    }
    return out;
}

std::string ExperimentReport::to_table() const {
    std::vector<std::string> columns = modality_names;
    if (modality_names.size() > 1) columns.push_back(join_names(modality_names));
    const auto aggs = aggregates();
    auto find = [&](Method m, const std::string& col) -> const AggregateEntry* {
        for (const auto& a : aggs) {
            if (a.method == m && a.modalities == col) return &a;
        }
        return nullptr;
    };

    constexpr std::size_t kMethodWidth = 22;
    constexpr std::size_t kCellWidth = 17;
    auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w) s.append(w - s.size(), ' ');
        return s;
    };
    std::ostringstream os;
    os << "# AUC over " << folds << " folds: mean +/- sample standard deviation (k-1 denominator)\n";
    std::string header = pad("Method", kMethodWidth);
    for (const auto& c : columns) header += "| " + pad(c, kCellWidth - 2);
    os << header << '\n' << std::string(header.size(), '-') << '\n';

    auto section = [&](const std::string& title, const std::vector<Method>& methods) {
        bool any = false;
        for (Method m : methods) {
            for (const auto& c : columns) any = any || find(m, c);
        }
        if (!any) return;
        os << "  " << title << '\n';
        for (Method m : methods) {
            bool present = false;
            for (const auto& c : columns) present = present || find(m, c);
            if (!present) continue;
            std::string row = pad(method_name(m), kMethodWidth);
            for (const auto& c : columns) {
                const auto* a = find(m, c);
                row += "| " + pad(a ? fixed(a->mean, 3) + " +/- " + fixed(a->std_dev, 3) : "-", kCellWidth - 2);
            }
            os << row << '\n';
        }
    };
    section("Online learning and synthetic data", {Method::MlpMvn, Method::MlpRejection});
    section("Raw data", {Method::MlpRaw, Method::NaiveBayes, Method::LogisticRegression, Method::Lda, Method::Knn});
    return os.str();
}

PretrainResult run_unimodal_pretraining(const LabeledDataset& modality, std::span<const std::size_t> train_rows,
                                        const Standardizer& scaler, std::shared_ptr<const IcaModel> ica,
                                        const PretrainConfig& config, RngStream& rng) {
    modality.validate();
    std::shared_ptr<const GeneratorModel> gen;
    if (ica) {
        if (ica->mixing.rows() != modality.data.rows()) {
            throw ValidationError("shared ICA model was fitted on a different number of subjects");
        }
        gen = std::make_shared<const GeneratorModel>(fit_class_models(ica, modality.labels, train_rows, config.kind));
    } else {
        const LabeledDataset train = modality.subset(train_rows);
        RngStream ica_rng = rng.split("ica");
        auto own = std::make_shared<const IcaModel>(fit_ica(train.data, config.c, config.ica, ica_rng));
        gen = std::make_shared<const GeneratorModel>(fit_class_models(own, train.labels, {}, config.kind));
    }

    RngStream init_rng = rng.split("init");
    RngStream dropout_rng = rng.split("dropout");
    MlpModel model = init_mlp(config.mlp.unimodal(gen->features()), init_rng);
    GeneratorStream stream = generator_stream(gen, config.batch_spec, rng.split("stream"));
    const BatchSource source = [&]() -> std::optional<SyntheticBatch> {
        auto batch = stream.next();
        if (batch) batch->data = scaler.apply(batch->data);
        return batch;
    };
    AdagradState state = make_adagrad_state(model);
    OnlineTrainResult trained = train_online(std::move(model), source, state, dropout_rng);

    PretrainResult out;
    out.model = std::move(trained.model);
    out.generator = std::move(gen);
    out.loss_trace = std::move(trained.loss_trace);
    out.consumed_batches = std::move(trained.consumed_batches);
    out.steps = trained.steps;
    return out;
}

MultimodalDataset load_experiment_data(const ExperimentConfig& config) {
    if (!config.modalities.empty()) {
        std::vector<NamedModality> mods;
        for (const auto& m : config.modalities) {
            mods.push_back({m.name, load_labeled_dataset(m.data, m.labels, m.format)});
        }
        return MultimodalDataset(std::move(mods));
    }
    if (!config.phantom) throw ValidationError("experiment needs modalities or a phantom spec");
    RngStream rng = RngStream(config.seed).split("phantom");
    return phantom_generate(*config.phantom, rng);
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
    config.validate();
    return run_experiment(config, load_experiment_data(config));
}

ExperimentReport run_experiment(const ExperimentConfig& config, const MultimodalDataset& data) {
    if (data.modality_count() < 1) throw ValidationError("experiment needs at least one modality");
    const RngStream root(config.seed);
    const auto& labels = data.labels();
    const std::size_t n_mod = data.modality_count();

    ExperimentReport report;
    for (const auto& m : data.modalities()) report.modality_names.push_back(m.name);
    report.folds = config.folds;
    const std::string all_name = join_names(report.modality_names);

    RngStream fold_rng = root.split("folds");
    const FoldPlan plan = make_folds(labels, config.folds, config.stratified, fold_rng);

    auto wants = [&](Method m) { return std::find(config.methods.begin(), config.methods.end(), m) != config.methods.end(); };
    const bool any_synthetic = wants(Method::MlpMvn) || wants(Method::MlpRejection);

    // Label-blind factorization of all subjects, shared by every fold.
    std::vector<std::shared_ptr<const IcaModel>> shared_ica(n_mod);
    if (config.transductive_ica && any_synthetic) {
        for (std::size_t j = 0; j < n_mod; ++j) {
            RngStream rng = root.split("ica", j);
            shared_ica[j] = std::make_shared<const IcaModel>(
                stage(0, "ica(" + report.modality_names[j] + ")",
                      [&] { return fit_ica(data.at(j).data, config.c, config.ica, rng); }));
        }
    }

    std::vector<std::size_t> dims;
    for (std::size_t j = 0; j < n_mod; ++j) dims.push_back(static_cast<std::size_t>(data.at(j).data.cols()));

    auto run_fold = [&](std::size_t f) {
        FoldOutput out;
        const RngStream frng = root.split("fold", f);
        const auto train = plan.train_rows(f);
        const auto test = plan.test_rows(f);
        const auto train_labels = select_labels(labels, train);
        const auto test_labels = select_labels(labels, test);

        std::vector<Standardizer> scalers;
        std::vector<Matrix> x_train, x_test;
        for (std::size_t j = 0; j < n_mod; ++j) {
            const Matrix tr = select_rows(data.at(j).data, train);
            scalers.push_back(Standardizer::fit(tr));
            x_train.push_back(scalers.back().apply(tr));
            x_test.push_back(scalers.back().apply(select_rows(data.at(j).data, test)));
        }

        auto record = [&](Method m, const std::string& mods, const Vector& scores) {
            out.entries.push_back({m, mods, f, auc(scores, test_labels)});
        };
        auto finetune_and_score = [&](const MlpModel& start, std::span<const Matrix> tr, std::span<const Matrix> te,
                                      RngStream rng) {
            const auto tuned = fine_tune(start, tr, train_labels, config.mlp.fine_tune, rng);
            return predict_proba(tuned.best, te);
        };

        if (wants(Method::MlpRaw)) {
            stage(f, "mlp raw", [&] {
                if (config.evaluate_unimodal || n_mod == 1) {
                    for (std::size_t j = 0; j < n_mod; ++j) {
                        RngStream init = frng.split("raw-init", j);
                        const MlpModel start = init_mlp(config.mlp.unimodal(dims[j]), init);
                        record(Method::MlpRaw, report.modality_names[j],
                               finetune_and_score(start, std::span(&x_train[j], 1), std::span(&x_test[j], 1),
                                                  frng.split("raw-tune", j)));
                    }
                }
                if (n_mod > 1) {
                    RngStream init = frng.split("raw-init-multi");
                    const MlpModel start = init_mlp(config.mlp.multimodal(dims), init);
                    record(Method::MlpRaw, all_name,
                           finetune_and_score(start, x_train, x_test, frng.split("raw-tune-multi")));
                }
            });
        }

        for (Method method : {Method::MlpMvn, Method::MlpRejection}) {
            if (!wants(method)) continue;
            const std::string key = method_key(method);
            stage(f, key, [&] {
                PretrainConfig pc;
                pc.c = config.c;
                pc.kind = method == Method::MlpMvn ? RvGeneratorKind{MvnKind{}} : RvGeneratorKind{RejectionKind{config.bins}};
                pc.batch_spec = config.batch_spec;
                pc.ica = config.ica;
                pc.mlp = config.mlp;
                std::vector<MlpModel> pretrained;
                for (std::size_t j = 0; j < n_mod; ++j) {
                    RngStream prng = frng.split(key + "-pretrain", j);
                    auto result = run_unimodal_pretraining(data.at(j), train, scalers[j], shared_ica[j], pc, prng);

                    PretrainTrace trace{f, report.modality_names[j], method, result.steps, false, true};
                    trace.single_pass = result.steps == config.batch_spec.batches &&
                                        result.consumed_batches.size() == result.steps;
                    for (std::size_t i = 0; i < result.consumed_batches.size(); ++i) {
                        trace.single_pass = trace.single_pass && result.consumed_batches[i] == i;
                    }
                    trace.labels_isolated = result.generator->class_counts[0] + result.generator->class_counts[1] ==
                                            train.size();
                    out.pretraining.push_back(trace);

                    if (config.evaluate_unimodal || n_mod == 1) {
                        record(method, report.modality_names[j],
                               finetune_and_score(result.model, std::span(&x_train[j], 1), std::span(&x_test[j], 1),
                                                  frng.split(key + "-tune", j)));
                    }
                    pretrained.push_back(std::move(result.model));
                }
                if (n_mod > 1) {
                    RngStream trng = frng.split(key + "-transfer");
                    const MlpModel start = transfer_weights(pretrained, config.mlp.multimodal(dims), config.mlp.transfer, trng);
                    record(method, all_name, finetune_and_score(start, x_train, x_test, frng.split(key + "-tune-multi")));
                }
            });
        }

        for (Method method : all_methods()) {
            if (!is_baseline(method) || !wants(method)) continue;
            stage(f, method_key(method), [&] {
                const BaselineKind kind = baseline_kind(method, config.baselines);
                for (std::size_t j = 0; j < n_mod; ++j) {
                    const auto model = fit_baseline(kind, x_train[j], train_labels);
                    record(method, report.modality_names[j], baseline_predict_proba(model, x_test[j]));
                }
                if (n_mod > 1) {
                    Eigen::Index width = 0;
                    for (const auto& x : x_train) width += x.cols();
                    Matrix tr(x_train[0].rows(), width), te(x_test[0].rows(), width);
                    Eigen::Index col = 0;
                    for (std::size_t j = 0; j < n_mod; ++j) {
                        tr.middleCols(col, x_train[j].cols()) = x_train[j];
                        te.middleCols(col, x_test[j].cols()) = x_test[j];
                        col += x_train[j].cols();
                    }
                    const auto model = fit_baseline(kind, tr, train_labels);
                    record(method, all_name, baseline_predict_proba(model, te));
                }
            });
        }
        return out;
    };

    std::vector<FoldOutput> outputs(config.folds);
    const std::size_t workers = std::min(config.parallel_folds, config.folds);
    if (workers <= 1) {
        for (std::size_t f = 0; f < config.folds; ++f) outputs[f] = run_fold(f);
    } else {
        std::atomic<std::size_t> next{0};
        std::mutex error_mutex;
        std::exception_ptr error;
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t f = next++; f < config.folds; f = next++) {
                    try {
                        outputs[f] = run_fold(f);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) error = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        if (error) std::rethrow_exception(error);
    }

    // Deterministic order: method, modality set (single modalities first), fold.
    std::map<std::string, std::size_t> modality_rank;
    for (std::size_t j = 0; j < n_mod; ++j) modality_rank[report.modality_names[j]] = j;
    modality_rank[all_name] = n_mod;
    for (auto& o : outputs) {
        report.entries.insert(report.entries.end(), o.entries.begin(), o.entries.end());
        report.pretraining.insert(report.pretraining.end(), o.pretraining.begin(), o.pretraining.end());
    }
    std::stable_sort(report.entries.begin(), report.entries.end(), [&](const AucEntry& a, const AucEntry& b) {
        if (a.method != b.method) return static_cast<int>(a.method) < static_cast<int>(b.method);
        if (a.modalities != b.modalities) return modality_rank[a.modalities] < modality_rank[b.modalities];
        return a.fold < b.fold;
    });
    return report;
}

}  // namespace icafuse
