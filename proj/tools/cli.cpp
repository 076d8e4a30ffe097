#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "icafuse/datamodel.hpp"
#include "icafuse/error.hpp"
#include "icafuse/generator.hpp"
#include "icafuse/ica.hpp"
#include "icafuse/mlp.hpp"
#include "icafuse/persist.hpp"
#include "icafuse/pipeline.hpp"

namespace icafuse::cli {

namespace fs = std::filesystem;

namespace {

struct Shared {
    std::uint64_t seed = 0;
    std::string out;
    std::string format;  // empty: infer from extension
};

MatrixFormat format_for(const Shared& s, const fs::path& path) {
    return s.format.empty() ? format_from_path(path) : parse_format(s.format);
}

std::string extension(MatrixFormat f) { return f == MatrixFormat::Bin ? ".bin" : ".csv"; }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void require_out(const Shared& s, const char* command) {
    if (s.out.empty()) throw ValidationError(std::string(command) + ": --out is required");
}

RvGeneratorKind parse_kind(const std::string& kind, std::size_t bins) {
    if (kind == "mvn") return MvnKind{};
    if (kind == "rejection") {
        if (bins < 1) throw ValidationError("--bins must be >= 1");
        return RejectionKind{bins};
    }
    throw ValidationError("--rv-kind must be 'rejection' or 'mvn', got '" + kind + "'");
}

TransferMode parse_transfer(const std::string& mode) {
    if (mode == "full") return TransferMode::Full;
    if (mode == "input-only") return TransferMode::InputOnly;
    throw ValidationError("--transfer must be 'full' or 'input-only', got '" + mode + "'");
}

bool parse_bool(const std::string& flag, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    throw ValidationError(flag + " must be 'true' or 'false', got '" + value + "'");
}

std::vector<Matrix> load_branches(const std::vector<std::string>& paths, const Shared& s) {
    std::vector<Matrix> out;
    for (const auto& p : paths) out.push_back(load_matrix(p, format_for(s, p)));
    return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"ICA-based synthetic data generation and multimodal MLP classification", "icafuse"};
    app.require_subcommand(1);
    Shared shared;
    auto add_shared = [&](CLI::App* cmd, bool with_format = true) {
        cmd->add_option("--seed", shared.seed, "Seed for all randomness");
        cmd->add_option("--out", shared.out, "Output path");
        if (with_format) cmd->add_option("--format", shared.format, "Matrix format: csv or bin (default: by extension)");
    };

    // phantom
    auto* phantom = app.add_subcommand("phantom", "Write a two-modality phantom dataset with planted class effects");
    PhantomSpec pspec;
    std::string phantom_dir;
    std::size_t phantom_m = 2000;
    phantom->add_option("--out-dir", phantom_dir, "Directory for the generated files")->required();
    phantom->add_option("--n-per-class", pspec.n_per_class);
    phantom->add_option("--m", phantom_m, "Features per modality");
    phantom->add_option("--sources", pspec.true_sources);
    phantom->add_option("--effects", pspec.effect_sizes, "Loading shift per modality")->delimiter(',');
    phantom->add_option("--noise", pspec.noise_sigma);
    phantom->add_option("--names", pspec.names, "Modality names")->delimiter(',');
    add_shared(phantom);

    // qc
    auto* qc = app.add_subcommand("qc", "Correlation-based quality control of subject rows");
    std::string qc_data;
    double qc_sigmas = 2.0;
    qc->add_option("--data", qc_data)->required();
    qc->add_option("--sigmas", qc_sigmas);
    add_shared(qc);

    // ica-fit
    auto* ica_fit = app.add_subcommand("ica-fit", "Fit FastICA to a subject x feature matrix");
    std::string ica_data;
    long long ica_c = 20;
    IcaConfig ica_cfg;
    ica_fit->add_option("--data", ica_data)->required();
    ica_fit->add_option("--c", ica_c, "Number of sources");
    ica_fit->add_option("--max-iter", ica_cfg.max_iter);
    ica_fit->add_option("--tol", ica_cfg.tol);
    add_shared(ica_fit);

    // gen-fit
    auto* gen_fit = app.add_subcommand("gen-fit", "Fit a class-conditional synthetic data generator");
    std::string gen_data, gen_labels, gen_kind = "mvn";
    long long gen_c = 20;
    std::size_t gen_bins = 20;
    IcaConfig gen_ica;
    gen_fit->add_option("--data", gen_data)->required();
    gen_fit->add_option("--labels", gen_labels)->required();
    gen_fit->add_option("--c", gen_c, "Number of sources");
    gen_fit->add_option("--rv-kind", gen_kind, "rejection or mvn");
    gen_fit->add_option("--bins", gen_bins, "Histogram bins per source (rejection)");
    gen_fit->add_option("--max-iter", gen_ica.max_iter);
    gen_fit->add_option("--tol", gen_ica.tol);
    add_shared(gen_fit);

    // gen-sample
    auto* gen_sample = app.add_subcommand("gen-sample", "Write synthetic batches from a fitted generator");
    std::string sample_model, sample_dir;
    BatchSpec sample_spec{10, 10, 1};
    gen_sample->add_option("--model", sample_model)->required();
    gen_sample->add_option("--out-dir", sample_dir)->required();
    gen_sample->add_option("--batches", sample_spec.batches, "Number of batches to write");
    gen_sample->add_option("--hc", sample_spec.hc_per_batch);
    gen_sample->add_option("--sz", sample_spec.sz_per_batch);
    add_shared(gen_sample);

    // pretrain
    auto* pretrain = app.add_subcommand("pretrain", "Train a unimodal MLP online on a generator's stream");
    std::string pre_model;
    BatchSpec pre_spec{10, 10, 10000};
    double pre_lr = 0.001;
    pretrain->add_option("--model", pre_model, "Generator manifest")->required();
    pretrain->add_option("--batches", pre_spec.batches, "Synthetic batches, one optimizer step each");
    pretrain->add_option("--hc", pre_spec.hc_per_batch);
    pretrain->add_option("--sz", pre_spec.sz_per_batch);
    pretrain->add_option("--lr", pre_lr, "AdaGrad learning rate");
    add_shared(pretrain, false);

    // train
    auto* train = app.add_subcommand("train", "Fine-tune a unimodal or multimodal MLP on labeled data");
    std::vector<std::string> train_data, train_init;
    std::string train_labels, train_transfer = "full";
    FineTuneConfig train_ft;
    double train_lr = 0.001;
    train->add_option("--data", train_data, "One matrix per modality")->required()->delimiter(',');
    train->add_option("--labels", train_labels)->required();
    train->add_option("--init", train_init, "Pre-trained checkpoint(s) to start from")->delimiter(',');
    train->add_option("--transfer", train_transfer, "full or input-only");
    train->add_option("--epochs", train_ft.epochs, "Fine-tuning epochs");
    train->add_option("--eval-every", train_ft.eval_every, "Epochs between validation checkpoints");
    train->add_option("--batch-size", train_ft.batch_size);
    train->add_option("--lr", train_lr, "AdaGrad learning rate");
    add_shared(train);

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Score labeled data with a checkpoint and report AUC");
    std::string eval_model, eval_labels;
    std::vector<std::string> eval_data;
    evaluate->add_option("--model", eval_model)->required();
    evaluate->add_option("--data", eval_data)->required()->delimiter(',');
    evaluate->add_option("--labels", eval_labels)->required();
    add_shared(evaluate);

    // experiment
    auto* experiment = app.add_subcommand("experiment", "Run the full cross-validated protocol");
    std::string exp_config, exp_table, exp_kind, exp_transfer, exp_transductive;
    std::size_t exp_parallel = 1, exp_folds = 0, exp_batches = 0, exp_epochs = 0, exp_eval_every = 0, exp_c = 0,
                exp_bins = 0;
    double exp_lr = 0.0;
    experiment->add_option("--config", exp_config, "JSON experiment config");
    experiment->add_option("--table", exp_table, "Also write the aligned-text summary table here");
    experiment->add_option("--parallel-folds", exp_parallel, "Folds run concurrently");
    experiment->add_option("--folds", exp_folds, "Cross-validation folds");
    experiment->add_option("--batches", exp_batches, "Synthetic pre-training batches");
    experiment->add_option("--epochs", exp_epochs, "Fine-tuning epochs");
    experiment->add_option("--eval-every", exp_eval_every, "Epochs between validation checkpoints");
    experiment->add_option("--lr", exp_lr, "AdaGrad learning rate");
    experiment->add_option("--c", exp_c, "Number of ICA sources");
    experiment->add_option("--bins", exp_bins, "Histogram bins per source");
    experiment->add_option("--rv-kind", exp_kind, "Keep only one generator kind: rejection or mvn");
    experiment->add_option("--transfer", exp_transfer, "full or input-only");
    experiment->add_option("--transductive-ica", exp_transductive, "true or false");
    add_shared(experiment, false);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (*phantom) {
            pspec.m_per_modality.assign(pspec.effect_sizes.size(), phantom_m);
            if (pspec.names.size() != pspec.effect_sizes.size()) {
                throw ValidationError("--names and --effects must list the same number of modalities");
            }
            RngStream rng = RngStream(shared.seed).split("phantom");
            const MultimodalDataset data = phantom_generate(pspec, rng);
            const MatrixFormat fmt = shared.format.empty() ? MatrixFormat::Bin : parse_format(shared.format);
            fs::create_directories(phantom_dir);
            for (const auto& m : data.modalities()) {
                save_labeled_dataset(m.dataset, fs::path(phantom_dir) / (m.name + extension(fmt)),
                                     fs::path(phantom_dir) / "labels.csv", fmt);
            }
            err << "wrote " << data.modality_count() << " modalities x " << data.subject_count() << " subjects to "
                << phantom_dir << "\n";
        } else if (*qc) {
            const Matrix data = load_matrix(qc_data, format_for(shared, qc_data));
            const QualityReport rep = quality_control(data, qc_sigmas);
            std::ostringstream os;
            os << "row,mean_correlation,status\n";
            for (std::size_t i = 0; i < rep.mean_correlation.size(); ++i) {
                const bool dropped = std::binary_search(rep.discarded.begin(), rep.discarded.end(), i);
                os << i << ',' << rep.mean_correlation[i] << ',' << (dropped ? "discarded" : "kept") << '\n';
            }
            if (shared.out.empty()) {
                out << os.str();
            } else {
                write_text(shared.out, os.str());
            }
            err << "threshold " << rep.threshold << " (mean - " << qc_sigmas << " population sd): kept "
                << rep.kept.size() << ", discarded " << rep.discarded.size() << "\n";
        } else if (*ica_fit) {
            if (ica_c < 1) throw ValidationError("--c must be >= 1, got " + std::to_string(ica_c));
            require_out(shared, "ica-fit");
            const Matrix data = load_matrix(ica_data, format_for(shared, ica_data));
            RngStream rng = RngStream(shared.seed).split("ica");
            const IcaModel model = fit_ica(data, static_cast<std::size_t>(ica_c), ica_cfg, rng);
            save_ica_model(model, shared.out);
            err << "ica: " << model.convergence.iterations << " iterations, "
                << (model.convergence.converged ? "converged" : "NOT converged") << "\n";
        } else if (*gen_fit) {
            if (gen_c < 1) throw ValidationError("--c must be >= 1, got " + std::to_string(gen_c));
            require_out(shared, "gen-fit");
            const auto kind = parse_kind(gen_kind, gen_bins);
            const LabeledDataset ds = load_labeled_dataset(gen_data, gen_labels, format_for(shared, gen_data));
            RngStream rng = RngStream(shared.seed).split("ica");
            const GeneratorModel gen = fit_generator(ds, static_cast<std::size_t>(gen_c), kind, gen_ica, rng);
            save_generator(gen, shared.out);
            err << "generator: " << gen.class_counts[0] << " HC, " << gen.class_counts[1] << " SZ, c = "
                << gen.components() << (gen.ica->convergence.converged ? "" : " (ICA NOT converged)") << "\n";
        } else if (*gen_sample) {
            sample_spec.validate();
            auto gen = std::make_shared<const GeneratorModel>(load_generator(sample_model));
            const MatrixFormat fmt = shared.format.empty() ? MatrixFormat::Bin : parse_format(shared.format);
            fs::create_directories(sample_dir);
            GeneratorStream stream = generator_stream(gen, sample_spec, RngStream(shared.seed).split("stream"));
            while (auto batch = stream.next()) {
                char name[32];
                std::snprintf(name, sizeof name, "batch_%05zu", batch->batch_index);
                LabeledDataset ds;
                ds.data = std::move(batch->data);
                ds.labels = batch->labels;
                for (std::size_t i = 0; i < ds.labels.size(); ++i) {
                    ds.subject_ids.push_back("b" + std::to_string(batch->batch_index) + "_" + std::to_string(i));
                }
                save_labeled_dataset(ds, fs::path(sample_dir) / (std::string(name) + extension(fmt)),
                                     fs::path(sample_dir) / (std::string(name) + ".labels.csv"), fmt);
            }
            err << "wrote " << stream.emitted() << " batches to " << sample_dir << "\n";
        } else if (*pretrain) {
            require_out(shared, "pretrain");
            pre_spec.validate();
            auto gen = std::make_shared<const GeneratorModel>(load_generator(pre_model));
            const RngStream root(shared.seed);
            RngStream init = root.split("init");
            MlpConfig config = unimodal_config(gen->features());
            config.learning_rate = pre_lr;
            MlpModel model = init_mlp(config, init);
            GeneratorStream stream = generator_stream(gen, pre_spec, root.split("stream"));
            AdagradState state = make_adagrad_state(model);
            RngStream dropout = root.split("dropout");
            const auto result = train_online(std::move(model), [&] { return stream.next(); }, state, dropout);
            save_mlp(result.model, shared.out, {result.steps, std::nullopt});
            err << "pretrain: " << result.steps << " steps, loss " << result.loss_trace.front() << " -> "
                << result.loss_trace.back() << "\n";
        } else if (*train) {
            require_out(shared, "train");
            const auto transfer = parse_transfer(train_transfer);
            std::vector<LabeledDataset> sets;
            for (const auto& p : train_data) sets.push_back(load_labeled_dataset(p, train_labels, format_for(shared, p)));
            for (const auto& s : sets) {
                if (s.subject_ids != sets.front().subject_ids) throw AlignmentError("--data files disagree on subjects");
            }
            std::vector<Matrix> inputs;
            std::vector<std::size_t> dims;
            for (const auto& s : sets) {
                inputs.push_back(s.data);
                dims.push_back(static_cast<std::size_t>(s.data.cols()));
            }
            const RngStream root(shared.seed);
            RngStream init = root.split("init");
            MlpModel start;
            if (inputs.size() == 1) {
                if (train_init.size() > 1) throw ValidationError("--init: one checkpoint expected for unimodal training");
                start = train_init.empty() ? init_mlp(unimodal_config(dims[0]), init) : load_mlp(train_init[0]);
            } else {
                MlpConfig config = multimodal_config(dims);
                config.learning_rate = train_lr;
                if (train_init.empty()) {
                    start = init_mlp(config, init);
                } else {
                    if (train_init.size() != inputs.size()) {
                        throw ValidationError("--init needs one unimodal checkpoint per --data file");
                    }
                    std::vector<MlpModel> uni;
                    for (const auto& p : train_init) uni.push_back(load_mlp(p));
                    start = transfer_weights(uni, config, transfer, init);
                }
            }
            start.config.learning_rate = train_lr;
            RngStream tune = root.split("tune");
            const auto result = fine_tune(start, inputs, sets.front().labels, train_ft, tune);
            save_mlp(result.best, shared.out, {result.best_epoch, result.best_validation_loss});
            for (const auto& c : result.history) err << "epoch " << c.epoch << " validation loss " << c.validation_loss << "\n";
            err << "kept epoch " << result.best_epoch << "\n";
        } else if (*evaluate) {
            const MlpModel model = load_mlp(eval_model);
            std::vector<Matrix> inputs;
            LabeledDataset first;
            for (std::size_t i = 0; i < eval_data.size(); ++i) {
                auto ds = load_labeled_dataset(eval_data[i], eval_labels, format_for(shared, eval_data[i]));
                inputs.push_back(ds.data);
                if (i == 0) first = std::move(ds);
            }
            const Vector scores = predict_proba(model, inputs);
            if (!shared.out.empty()) {
                std::ostringstream os;
                os.precision(17);
                os << "subject_id,label,score\n";
                for (std::size_t i = 0; i < first.size(); ++i) {
                    os << first.subject_ids[i] << ',' << to_string(first.labels[i]) << ','
                       << scores(static_cast<Eigen::Index>(i)) << '\n';
                }
                write_text(shared.out, os.str());
            }
            out << "auc," << auc(scores, first.labels) << "\n";
        } else if (*experiment) {
            require_out(shared, "experiment");
            ExperimentConfig config;
            if (!exp_config.empty()) {
                config = parse_experiment_config(read_text(exp_config));
                // Relative data paths are resolved against the config file.
                const auto base = fs::path(exp_config).parent_path();
                for (auto& m : config.modalities) {
                    if (m.data.is_relative()) m.data = base / m.data;
                    if (m.labels.is_relative()) m.labels = base / m.labels;
                }
            } else {
                config.phantom = PhantomSpec{};
            }
            if (experiment->count("--seed")) config.seed = shared.seed;
            if (experiment->count("--parallel-folds")) config.parallel_folds = exp_parallel;
            if (experiment->count("--folds")) config.folds = exp_folds;
            if (experiment->count("--batches")) config.batch_spec.batches = exp_batches;
            if (experiment->count("--epochs")) config.mlp.fine_tune.epochs = exp_epochs;
            if (experiment->count("--eval-every")) config.mlp.fine_tune.eval_every = exp_eval_every;
            if (experiment->count("--lr")) config.mlp.learning_rate = exp_lr;
            if (experiment->count("--c")) config.c = exp_c;
            if (experiment->count("--bins")) config.bins = exp_bins;
            if (experiment->count("--transfer")) config.mlp.transfer = parse_transfer(exp_transfer);
            if (experiment->count("--transductive-ica")) config.transductive_ica = parse_bool("--transductive-ica", exp_transductive);
            if (experiment->count("--rv-kind")) {
                parse_kind(exp_kind, 1);
                const Method drop = exp_kind == "mvn" ? Method::MlpRejection : Method::MlpMvn;
                std::erase(config.methods, drop);
            }
            config.validate();
            const ExperimentReport report = run_experiment(config);
            write_text(shared.out, report.to_csv());
            const std::string table = report.to_table();
            if (!exp_table.empty()) write_text(exp_table, table);
            err << table;
        }
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace icafuse::cli
