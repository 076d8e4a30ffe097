#pragma once

#include <array>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <variant>
#include <vector>

#include "icafuse/datamodel.hpp"
#include "icafuse/ica.hpp"
#include "icafuse/rvgen.hpp"

namespace icafuse {

// Per-class loading model: c marginal histograms or one joint normal.
using ClassRvModel = std::variant<std::vector<HistogramPdf>, MvnParams>;

struct GeneratorModel {
    std::shared_ptr<const IcaModel> ica;
    RvGeneratorKind kind;
    ClassRvModel hc_model;
    ClassRvModel sz_model;
    std::array<std::size_t, 2> class_counts{};  // (HC, SZ) rows used for fitting

    std::size_t features() const { return ica->features(); }
    std::size_t components() const { return ica->components(); }
    const ClassRvModel& model_for(Label label) const { return label == Label::HC ? hc_model : sz_model; }
};

struct BatchSpec {
    std::size_t hc_per_batch = 10;
    std::size_t sz_per_batch = 10;
    std::size_t batches = 10000;

    std::size_t batch_size() const { return hc_per_batch + sz_per_batch; }
    void validate() const;
};

struct SyntheticBatch {
    Matrix data;                // batch_size x m
    std::vector<Label> labels;  // batch_size
    std::size_t batch_index = 0;
    Matrix loadings;            // batch_size x c; the synthetic mixing rows used
};

// Fits the loading models of each class from the given rows of ica.mixing.
// rows defaults to all rows. labels is indexed like ica.mixing rows.
GeneratorModel fit_class_models(std::shared_ptr<const IcaModel> ica, std::span<const Label> labels,
                                std::span<const std::size_t> rows, const RvGeneratorKind& kind);

// ICA on the unlabeled data matrix, then per-class loading models.
GeneratorModel fit_generator(const LabeledDataset& dataset, std::size_t c, const RvGeneratorKind& kind,
                             const IcaConfig& ica_config, RngStream& rng);

// Synthetic loading rows for one class (m x c).
Matrix sample_loadings(const ClassRvModel& model, std::size_t m, RngStream& rng);

// std::nullopt once batch_index >= spec.batches.
std::optional<SyntheticBatch> next_batch(const GeneratorModel& gen, const BatchSpec& spec,
                                         std::size_t batch_index, RngStream& rng);

// Lazy single-pass producer of spec.batches batches.
class GeneratorStream {
public:
    GeneratorStream(std::shared_ptr<const GeneratorModel> gen, BatchSpec spec, RngStream rng);

    std::optional<SyntheticBatch> next();
    std::size_t emitted() const { return next_index_; }
    const BatchSpec& spec() const { return spec_; }
    std::size_t features() const { return gen_->features(); }

private:
    std::shared_ptr<const GeneratorModel> gen_;
    BatchSpec spec_;
    RngStream rng_;
    std::size_t next_index_ = 0;
};

GeneratorStream generator_stream(std::shared_ptr<const GeneratorModel> gen, const BatchSpec& spec, RngStream rng);

// Runs a GeneratorStream on a worker thread, handing batches over through a
// bounded queue. Batch order and content match the wrapped stream exactly.
class PrefetchingStream {
public:
    PrefetchingStream(GeneratorStream source, std::size_t capacity = 4);
    ~PrefetchingStream();
    PrefetchingStream(const PrefetchingStream&) = delete;
    PrefetchingStream& operator=(const PrefetchingStream&) = delete;

    std::optional<SyntheticBatch> next();

private:
    void produce();

    GeneratorStream source_;
    std::size_t capacity_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<SyntheticBatch> queue_;
    bool done_ = false;
    bool stop_ = false;
    std::exception_ptr error_;
    std::thread worker_;
};

}  // namespace icafuse
