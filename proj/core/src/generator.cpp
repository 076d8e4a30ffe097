#include "icafuse/generator.hpp"

#include <algorithm>
#include <exception>
#include <numeric>
#include <string>

#include "icafuse/error.hpp"

namespace icafuse {

void BatchSpec::validate() const {
    if (batch_size() < 1) throw ValidationError("batch spec needs at least one sample per batch");
    if (batches < 1) throw ValidationError("batch spec needs at least one batch");
}

GeneratorModel fit_class_models(std::shared_ptr<const IcaModel> ica, std::span<const Label> labels,
                                std::span<const std::size_t> rows, const RvGeneratorKind& kind) {
    if (!ica) throw ValidationError("fit_class_models: no ICA model");
    const Matrix& mixing = ica->mixing;
    if (labels.size() != static_cast<std::size_t>(mixing.rows())) {
        throw ValidationError("fit_class_models: " + std::to_string(labels.size()) + " labels for " +
                              std::to_string(mixing.rows()) + " mixing rows");
    }
    std::vector<std::size_t> all;
    if (rows.empty()) {
        all.resize(labels.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        rows = all;
    }
    std::array<std::vector<std::size_t>, 2> by_class;
    for (auto r : rows) {
        if (r >= labels.size()) throw ValidationError("fit_class_models: row index out of range");
        by_class[static_cast<std::size_t>(labels[r])].push_back(r);
    }
    for (Label l : {Label::HC, Label::SZ}) {
        const auto count = by_class[static_cast<std::size_t>(l)].size();
        if (count < 2) {
            throw ValidationError("generator needs at least 2 subjects of class " + std::string(to_string(l)) +
                                  ", got " + std::to_string(count));
        }
    }
    if (const auto* rej = std::get_if<RejectionKind>(&kind); rej && rej->bin_count < 1) {
        throw ValidationError("rejection generator needs bin_count >= 1");
    }

    auto fit_one = [&](const std::vector<std::size_t>& idx) -> ClassRvModel {
        Matrix a(static_cast<Eigen::Index>(idx.size()), mixing.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            a.row(static_cast<Eigen::Index>(i)) = mixing.row(static_cast<Eigen::Index>(idx[i]));
        }
        if (const auto* rej = std::get_if<RejectionKind>(&kind)) {
            std::vector<HistogramPdf> pdfs;
            pdfs.reserve(static_cast<std::size_t>(a.cols()));
            std::vector<double> column(idx.size());
            for (Eigen::Index j = 0; j < a.cols(); ++j) {
                for (std::size_t i = 0; i < idx.size(); ++i) column[i] = a(static_cast<Eigen::Index>(i), j);
                pdfs.push_back(fit_histogram(column, rej->bin_count));
            }
            return pdfs;
        }
        return fit_mvn(a);
    };

    GeneratorModel gen;
    gen.ica = std::move(ica);
    gen.kind = kind;
    gen.hc_model = fit_one(by_class[0]);
    gen.sz_model = fit_one(by_class[1]);
    gen.class_counts = {by_class[0].size(), by_class[1].size()};
    return gen;
}

GeneratorModel fit_generator(const LabeledDataset& dataset, std::size_t c, const RvGeneratorKind& kind,
                             const IcaConfig& ica_config, RngStream& rng) {
    dataset.validate();
    for (Label l : {Label::HC, Label::SZ}) {
        if (dataset.count(l) < 2) {
            throw ValidationError("generator needs at least 2 subjects of class " + std::string(to_string(l)) +
                                  ", got " + std::to_string(dataset.count(l)));
        }
    }
    auto ica = std::make_shared<const IcaModel>(fit_ica(dataset.data, c, ica_config, rng));
    return fit_class_models(std::move(ica), dataset.labels, {}, kind);
}

Matrix sample_loadings(const ClassRvModel& model, std::size_t m, RngStream& rng) {
    if (const auto* pdfs = std::get_if<std::vector<HistogramPdf>>(&model)) {
        Matrix out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(pdfs->size()));
        for (std::size_t j = 0; j < pdfs->size(); ++j) {
            const auto col = rejection_sample((*pdfs)[j], m, rng);
            for (std::size_t i = 0; i < m; ++i) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
        }
        return out;
    }
    return mvn_sample(std::get<MvnParams>(model), m, rng);
}

std::optional<SyntheticBatch> next_batch(const GeneratorModel& gen, const BatchSpec& spec, std::size_t batch_index,
                                         RngStream& rng) {
    spec.validate();
    if (batch_index >= spec.batches) return std::nullopt;

    const Matrix hc = sample_loadings(gen.hc_model, spec.hc_per_batch, rng);
    const Matrix sz = sample_loadings(gen.sz_model, spec.sz_per_batch, rng);
    const auto size = spec.batch_size();

    // Fisher-Yates order of the stacked HC-then-SZ rows.
    std::vector<std::size_t> order(size);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = size; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    SyntheticBatch batch;
    batch.batch_index = batch_index;
    batch.loadings.resize(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(gen.components()));
    batch.labels.resize(size);
    for (std::size_t i = 0; i < size; ++i) {
        const auto src = order[i];
        const auto dst = static_cast<Eigen::Index>(i);
        if (src < spec.hc_per_batch) {
            batch.loadings.row(dst) = hc.row(static_cast<Eigen::Index>(src));
            batch.labels[i] = Label::HC;
        } else {
            batch.loadings.row(dst) = sz.row(static_cast<Eigen::Index>(src - spec.hc_per_batch));
            batch.labels[i] = Label::SZ;
        }
    }
    batch.data = reconstruct(batch.loadings, gen.ica->sources, gen.ica->feature_mean);
    return batch;
}

GeneratorStream::GeneratorStream(std::shared_ptr<const GeneratorModel> gen, BatchSpec spec, RngStream rng)
    : gen_(std::move(gen)), spec_(spec), rng_(std::move(rng)) {
    if (!gen_) throw ValidationError("generator stream needs a model");
    spec_.validate();
}

std::optional<SyntheticBatch> GeneratorStream::next() {
    auto batch = next_batch(*gen_, spec_, next_index_, rng_);
    if (batch) ++next_index_;
    return batch;
}

GeneratorStream generator_stream(std::shared_ptr<const GeneratorModel> gen, const BatchSpec& spec, RngStream rng) {
    return GeneratorStream(std::move(gen), spec, std::move(rng));
}

PrefetchingStream::PrefetchingStream(GeneratorStream source, std::size_t capacity)
    : source_(std::move(source)), capacity_(std::max<std::size_t>(capacity, 1)) {
    worker_ = std::thread([this] { produce(); });
}

PrefetchingStream::~PrefetchingStream() {
    {
        std::lock_guard lock(mutex_);
        stop_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
}

void PrefetchingStream::produce() {
    try {
        while (true) {
            auto batch = source_.next();
            std::unique_lock lock(mutex_);
            if (!batch) break;
            cv_.wait(lock, [&] { return stop_ || queue_.size() < capacity_; });
            if (stop_) break;
            queue_.push_back(std::move(*batch));
            cv_.notify_all();
        }
    } catch (...) {
        std::lock_guard lock(mutex_);
        error_ = std::current_exception();
    }
    std::lock_guard lock(mutex_);
    done_ = true;
    cv_.notify_all();
}

std::optional<SyntheticBatch> PrefetchingStream::next() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return !queue_.empty() || done_; });
    if (!queue_.empty()) {
        SyntheticBatch batch = std::move(queue_.front());
        queue_.pop_front();
        cv_.notify_all();
        return batch;
    }
    if (error_) std::rethrow_exception(error_);
    return std::nullopt;
}

}  // namespace icafuse
