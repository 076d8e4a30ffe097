#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icafuse/matrix.hpp"

namespace icafuse {

enum class Label : std::uint8_t { HC = 0, SZ = 1 };

std::string_view to_string(Label label);
Label parse_label(std::string_view token);

enum class MatrixFormat { Csv, Bin };

MatrixFormat parse_format(std::string_view token);
// Guess from extension: ".bin" is MAT1, anything else CSV.
MatrixFormat format_from_path(const std::filesystem::path& path);

struct LabeledDataset {
    Matrix data;
    std::vector<Label> labels;
    std::vector<std::string> subject_ids;

    std::size_t size() const { return labels.size(); }
    std::size_t count(Label label) const;
    // Throws ValidationError unless the three members agree in length.
    void validate() const;
    LabeledDataset subset(std::span<const std::size_t> rows) const;
};

struct NamedModality {
    std::string name;
    LabeledDataset dataset;
};

// Several modalities observed on the same subjects.
class MultimodalDataset {
public:
    MultimodalDataset() = default;
    explicit MultimodalDataset(std::vector<NamedModality> modalities);

    const std::vector<NamedModality>& modalities() const { return modalities_; }
    std::size_t modality_count() const { return modalities_.size(); }
    const LabeledDataset& at(std::size_t i) const { return modalities_.at(i).dataset; }
    const std::vector<Label>& labels() const;
    std::size_t subject_count() const;

private:
    std::vector<NamedModality> modalities_;
};

struct QualityReport {
    std::vector<double> mean_correlation;
    double threshold = 0.0;
    double sigmas = 2.0;
    std::vector<std::size_t> kept;
    std::vector<std::size_t> discarded;
};

Matrix load_matrix(const std::filesystem::path& path, MatrixFormat format);
void save_matrix(const Matrix& m, const std::filesystem::path& path, MatrixFormat format);

// In-memory codecs behind load_matrix/save_matrix.
Matrix parse_matrix_csv(std::string_view text);
std::string format_matrix_csv(const Matrix& m);
Matrix decode_mat1(std::span<const std::byte> bytes);
std::vector<std::byte> encode_mat1(const Matrix& m);

// Subject ids for data rows come from "<data_path>.ids" (one id per line)
// when that file exists, otherwise they default to s1..sn.
std::filesystem::path ids_sidecar_path(const std::filesystem::path& data_path);
std::vector<std::string> default_subject_ids(std::size_t n);

LabeledDataset load_labeled_dataset(const std::filesystem::path& data_path,
                                    const std::filesystem::path& labels_path,
                                    MatrixFormat format);
// Writes data, labels CSV and the ids sidecar.
void save_labeled_dataset(const LabeledDataset& dataset, const std::filesystem::path& data_path,
                          const std::filesystem::path& labels_path, MatrixFormat format);

// Labels CSV: header "subject_id,label".
std::vector<std::pair<std::string, Label>> parse_labels_csv(std::string_view text);
std::string format_labels_csv(std::span<const std::string> ids, std::span<const Label> labels);

// Flags rows whose mean Pearson correlation with every other row falls
// strictly below mean - sigmas * std (population std) of those means.
QualityReport quality_control(const Matrix& data, double sigmas = 2.0);

}  // namespace icafuse
