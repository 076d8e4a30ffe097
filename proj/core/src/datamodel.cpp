#include "icafuse/datamodel.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "icafuse/error.hpp"

namespace icafuse {

namespace {

static_assert(std::endian::native == std::endian::little,
              "MAT1 codec assumes a little-endian host");

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path.string());
    return text;
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

// Splits into lines, dropping a trailing empty line and blank lines.
std::vector<std::pair<std::size_t, std::string_view>> lines_of(std::string_view text) {
    std::vector<std::pair<std::size_t, std::string_view>> out;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto pos = text.find('\n', start);
        auto line = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        ++line_no;
        if (!trim(line).empty()) out.emplace_back(line_no, line);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

double parse_double(std::string_view token, std::size_t line_no) {
    token = trim(token);
    if (!token.empty() && token.front() == '+') token.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size() || token.empty()) {
        throw ParseError("line " + std::to_string(line_no) + ": not a number: '" + std::string(token) + "'",
                         line_no);
    }
    if (!std::isfinite(value)) {
        throw ValidationError("line " + std::to_string(line_no) + ": non-finite value '" +
                              std::string(token) + "'");
    }
    return value;
}

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::span<const std::byte> b, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::to_integer<std::uint32_t>(b[off + i]) << (8 * i);
    return v;
}

}  // namespace

std::string_view to_string(Label label) { return label == Label::HC ? "HC" : "SZ"; }

Label parse_label(std::string_view token) {
    token = trim(token);
    if (token == "HC") return Label::HC;
    if (token == "SZ") return Label::SZ;
    throw ValidationError("unknown label token '" + std::string(token) + "' (expected HC or SZ)");
}

MatrixFormat parse_format(std::string_view token) {
    if (token == "csv") return MatrixFormat::Csv;
    if (token == "bin") return MatrixFormat::Bin;
    throw ValidationError("unknown matrix format '" + std::string(token) + "' (expected csv or bin)");
}

MatrixFormat format_from_path(const std::filesystem::path& path) {
    return path.extension() == ".bin" ? MatrixFormat::Bin : MatrixFormat::Csv;
}

std::size_t LabeledDataset::count(Label label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

void LabeledDataset::validate() const {
    if (labels.size() != static_cast<std::size_t>(data.rows()) || subject_ids.size() != labels.size()) {
        throw ValidationError("dataset has " + std::to_string(data.rows()) + " rows, " +
                              std::to_string(labels.size()) + " labels and " +
                              std::to_string(subject_ids.size()) + " subject ids");
    }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
    LabeledDataset out;
    out.data.resize(static_cast<Eigen::Index>(rows.size()), data.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.data.row(static_cast<Eigen::Index>(i)) = data.row(static_cast<Eigen::Index>(rows[i]));
        out.labels.push_back(labels.at(rows[i]));
        out.subject_ids.push_back(subject_ids.at(rows[i]));
    }
    return out;
}

MultimodalDataset::MultimodalDataset(std::vector<NamedModality> modalities)
    : modalities_(std::move(modalities)) {
    if (modalities_.empty()) throw ValidationError("multimodal dataset needs at least one modality");
    const auto& ref = modalities_.front().dataset;
    ref.validate();
    for (const auto& mod : modalities_) {
        mod.dataset.validate();
        if (mod.dataset.subject_ids != ref.subject_ids) {
            throw AlignmentError("modality '" + mod.name + "' subject ids differ from '" +
                                 modalities_.front().name + "'");
        }
        if (mod.dataset.labels != ref.labels) {
            throw AlignmentError("modality '" + mod.name + "' labels differ from '" +
                                 modalities_.front().name + "'");
        }
    }
}

const std::vector<Label>& MultimodalDataset::labels() const {
    return modalities_.at(0).dataset.labels;
}

std::size_t MultimodalDataset::subject_count() const {
    return modalities_.empty() ? 0 : modalities_.front().dataset.size();
}

Matrix parse_matrix_csv(std::string_view text) {
    std::vector<double> values;
    std::size_t rows = 0;
    std::size_t cols = 0;
    for (const auto& [line_no, line] : lines_of(text)) {
        auto fields = split(line, ',');
        if (rows == 0) {
            cols = fields.size();
        } else if (fields.size() != cols) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                                 " fields, found " + std::to_string(fields.size()),
                             line_no);
        }
        for (auto f : fields) values.push_back(parse_double(f, line_no));
        ++rows;
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::copy(values.begin(), values.end(), m.data());
    return m;
}

std::string format_matrix_csv(const Matrix& m) {
    std::string out;
    char buf[32];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out.push_back(',');
            // Shortest representation that round-trips exactly.
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, m(i, j));
            out.append(buf, ptr);
        }
        out.push_back('\n');
    }
    return out;
}

Matrix decode_mat1(std::span<const std::byte> bytes) {
    if (bytes.size() < 12) throw ParseError("MAT1: truncated header", bytes.size());
    if (std::memcmp(bytes.data(), "MAT1", 4) != 0) throw ParseError("MAT1: bad magic", 0);
    const std::uint64_t rows = get_u32(bytes, 4);
    const std::uint64_t cols = get_u32(bytes, 8);
    const std::uint64_t expected = 12 + rows * cols * 8;
    if (bytes.size() != expected) {
        throw ParseError("MAT1: payload is " + std::to_string(bytes.size()) + " bytes, header implies " +
                             std::to_string(expected),
                         std::min<std::uint64_t>(bytes.size(), expected));
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (rows * cols != 0) std::memcpy(m.data(), bytes.data() + 12, rows * cols * 8);
    for (std::uint64_t k = 0; k < rows * cols; ++k) {
        if (!std::isfinite(m.data()[k])) {
            throw ValidationError("MAT1: non-finite value at byte offset " + std::to_string(12 + 8 * k));
        }
    }
    return m;
}

std::vector<std::byte> encode_mat1(const Matrix& m) {
    if (m.rows() > 0xFFFFFFFFll || m.cols() > 0xFFFFFFFFll) throw ValidationError("MAT1: matrix too large");
    std::vector<std::byte> out;
    out.reserve(12 + static_cast<std::size_t>(m.size()) * 8);
    for (char c : std::string_view("MAT1")) out.push_back(static_cast<std::byte>(c));
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    const auto* p = reinterpret_cast<const std::byte*>(m.data());
    out.insert(out.end(), p, p + m.size() * 8);
    return out;
}

Matrix load_matrix(const std::filesystem::path& path, MatrixFormat format) {
    const std::string text = read_file(path);
    if (format == MatrixFormat::Csv) return parse_matrix_csv(text);
    return decode_mat1(std::as_bytes(std::span(text.data(), text.size())));
}

void save_matrix(const Matrix& m, const std::filesystem::path& path, MatrixFormat format) {
    if (format == MatrixFormat::Csv) {
        write_file(path, format_matrix_csv(m));
    } else {
        auto bytes = encode_mat1(m);
        write_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    }
}

std::filesystem::path ids_sidecar_path(const std::filesystem::path& data_path) {
    auto p = data_path;
    p += ".ids";
    return p;
}

std::vector<std::string> default_subject_ids(std::size_t n) {
    std::vector<std::string> ids;
    ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) ids.push_back("s" + std::to_string(i + 1));
    return ids;
}

std::vector<std::pair<std::string, Label>> parse_labels_csv(std::string_view text) {
    auto lines = lines_of(text);
    if (lines.empty() || trim(lines.front().second) != "subject_id,label") {
        throw ParseError("labels file must start with header 'subject_id,label'", 1);
    }
    std::vector<std::pair<std::string, Label>> out;
    for (std::size_t k = 1; k < lines.size(); ++k) {
        auto [line_no, line] = lines[k];
        auto fields = split(line, ',');
        if (fields.size() != 2) {
            throw ParseError("line " + std::to_string(line_no) + ": expected 'subject_id,label'", line_no);
        }
        out.emplace_back(std::string(trim(fields[0])), parse_label(fields[1]));
    }
    return out;
}

std::string format_labels_csv(std::span<const std::string> ids, std::span<const Label> labels) {
    if (ids.size() != labels.size()) throw ValidationError("ids and labels differ in length");
    std::string out = "subject_id,label\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out += ids[i];
        out += ',';
        out += to_string(labels[i]);
        out += '\n';
    }
    return out;
}

LabeledDataset load_labeled_dataset(const std::filesystem::path& data_path,
                                    const std::filesystem::path& labels_path, MatrixFormat format) {
    LabeledDataset ds;
    ds.data = load_matrix(data_path, format);
    const auto n = static_cast<std::size_t>(ds.data.rows());

    const auto sidecar = ids_sidecar_path(data_path);
    if (std::filesystem::exists(sidecar)) {
        const std::string text = read_file(sidecar);
        for (const auto& [line_no, line] : lines_of(text)) {
            ds.subject_ids.emplace_back(trim(line));
        }
        if (ds.subject_ids.size() != n) {
            throw AlignmentError(sidecar.string() + " lists " + std::to_string(ds.subject_ids.size()) +
                                 " ids for " + std::to_string(n) + " data rows");
        }
    } else {
        ds.subject_ids = default_subject_ids(n);
    }

    std::unordered_map<std::string, Label> by_id;
    for (auto& [id, label] : parse_labels_csv(read_file(labels_path))) {
        if (!by_id.emplace(id, label).second) throw ValidationError("duplicate subject_id '" + id + "' in labels");
    }
    std::vector<std::string> missing;
    for (const auto& id : ds.subject_ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) {
            missing.push_back(id);
        } else {
            ds.labels.push_back(it->second);
        }
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
        throw AlignmentError("labels file has no entry for subject(s): " + list);
    }
    return ds;
}

void save_labeled_dataset(const LabeledDataset& dataset, const std::filesystem::path& data_path,
                          const std::filesystem::path& labels_path, MatrixFormat format) {
    dataset.validate();
    save_matrix(dataset.data, data_path, format);
    std::string ids;
    for (const auto& id : dataset.subject_ids) ids += id + "\n";
    write_file(ids_sidecar_path(data_path), ids);
    write_file(labels_path, format_labels_csv(dataset.subject_ids, dataset.labels));
}

QualityReport quality_control(const Matrix& data, double sigmas) {
    const Eigen::Index n = data.rows();
    if (n < 3) throw ValidationError("quality_control needs at least 3 rows, got " + std::to_string(n));
    if (data.cols() < 2) throw ValidationError("quality_control needs at least 2 columns");

    Matrix z = data.colwise() - data.rowwise().mean();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double norm = z.row(i).norm();
        if (!(norm > 0.0) || norm <= 1e-12 * std::max(1.0, data.row(i).cwiseAbs().maxCoeff())) {
            throw ValidationError("row " + std::to_string(i) + " has zero variance; correlation undefined");
        }
        z.row(i) /= norm;
    }
    const Matrix corr = z * z.transpose();

    QualityReport report;
    report.sigmas = sigmas;
    report.mean_correlation.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        report.mean_correlation[static_cast<std::size_t>(i)] =
            (corr.row(i).sum() - corr(i, i)) / static_cast<double>(n - 1);
    }
    const auto& mc = report.mean_correlation;
    const double mean = std::accumulate(mc.begin(), mc.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double v : mc) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    report.threshold = mean - sigmas * sd;

    for (std::size_t i = 0; i < mc.size(); ++i) {
        if (sd > 0.0 && mc[i] < report.threshold) {
            report.discarded.push_back(i);
        } else {
            report.kept.push_back(i);
        }
    }
    return report;
}

}  // namespace icafuse
