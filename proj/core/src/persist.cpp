#include "icafuse/persist.hpp"

#include <fstream>
#include <json.hpp>

#include "icafuse/datamodel.hpp"
#include "icafuse/error.hpp"

namespace icafuse {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kFormatVersion = 1;

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what(), e.byte);
    }
}

class BlobWriter {
public:
    BlobWriter(const fs::path& manifest, json& blobs) : manifest_(manifest), blobs_(blobs) {}
    void put(const std::string& name, const Matrix& m) {
        const auto file = blob_file_name(manifest_, name);
        save_matrix(m, manifest_.parent_path() / file, MatrixFormat::Bin);
        blobs_[name] = file;
    }
    void put_row(const std::string& name, const RowVector& v) { put(name, Matrix(v)); }

private:
    fs::path manifest_;
    json& blobs_;
};

class BlobReader {
public:
    BlobReader(const fs::path& manifest, const json& blobs) : dir_(manifest.parent_path()), blobs_(blobs) {}
    Matrix get(const std::string& name) const {
        if (!blobs_.contains(name)) throw ValidationError("manifest lists no blob '" + name + "'");
        return load_matrix(dir_ / blobs_.at(name).get<std::string>(), MatrixFormat::Bin);
    }
    RowVector get_row(const std::string& name) const {
        Matrix m = get(name);
        if (m.rows() != 1) throw ValidationError("blob '" + name + "' should hold a single row");
        return m.row(0);
    }

private:
    fs::path dir_;
    const json& blobs_;
};

void put_ica(const IcaModel& model, BlobWriter& w, json& meta, const std::string& prefix) {
    w.put(prefix + "mixing", model.mixing);
    w.put(prefix + "sources", model.sources);
    w.put_row(prefix + "feature_mean", model.feature_mean);
    w.put(prefix + "rotation", model.rotation);
    w.put_row(prefix + "whitening_mean", model.whitening.mean);
    w.put(prefix + "whitening_projection", model.whitening.projection);
    w.put(prefix + "whitening_back_projection", model.whitening.back_projection);
    w.put_row(prefix + "whitening_eigenvalues", model.whitening.eigenvalues.transpose());
    meta["c"] = model.components();
    meta["subjects"] = model.mixing.rows();
    meta["features"] = model.features();
    meta["convergence"] = {{"iterations", model.convergence.iterations},
                           {"final_change", model.convergence.final_change},
                           {"converged", model.convergence.converged}};
}

IcaModel get_ica(const BlobReader& r, const json& meta, const std::string& prefix) {
    IcaModel model;
    model.mixing = r.get(prefix + "mixing");
    model.sources = r.get(prefix + "sources");
    model.feature_mean = r.get_row(prefix + "feature_mean");
    model.rotation = r.get(prefix + "rotation");
    model.whitening.mean = r.get_row(prefix + "whitening_mean");
    model.whitening.projection = r.get(prefix + "whitening_projection");
    model.whitening.back_projection = r.get(prefix + "whitening_back_projection");
    model.whitening.eigenvalues = r.get_row(prefix + "whitening_eigenvalues").transpose();
    const auto& conv = meta.at("convergence");
    model.convergence.iterations = conv.at("iterations").get<std::size_t>();
    model.convergence.final_change = conv.at("final_change").get<double>();
    model.convergence.converged = conv.at("converged").get<bool>();
    if (model.mixing.cols() != model.sources.rows() || model.sources.cols() != model.feature_mean.size() ||
        meta.at("c").get<std::size_t>() != model.components()) {
        throw ValidationError("ICA manifest dimensions disagree with its blobs");
    }
    return model;
}

void put_class_model(const ClassRvModel& model, BlobWriter& w, const std::string& prefix) {
    if (const auto* pdfs = std::get_if<std::vector<HistogramPdf>>(&model)) {
        const auto bins = pdfs->empty() ? 0 : pdfs->front().bin_count;
        Matrix table(static_cast<Eigen::Index>(pdfs->size()), static_cast<Eigen::Index>(bins + 2));
        for (std::size_t i = 0; i < pdfs->size(); ++i) {
            const auto& p = (*pdfs)[i];
            const auto row = static_cast<Eigen::Index>(i);
            table(row, 0) = p.lower;
            table(row, 1) = p.upper;
            for (std::size_t b = 0; b < bins; ++b) table(row, static_cast<Eigen::Index>(b + 2)) = p.masses[b];
        }
        w.put(prefix + "histograms", table);
    } else {
        const auto& p = std::get<MvnParams>(model);
        w.put_row(prefix + "mean", p.mean.transpose());
        w.put(prefix + "covariance", p.covariance);
        w.put(prefix + "spectral_root", p.spectral_root);
    }
}

ClassRvModel get_class_model(const BlobReader& r, const RvGeneratorKind& kind, const std::string& prefix) {
    if (const auto* rej = std::get_if<RejectionKind>(&kind)) {
        const Matrix table = r.get(prefix + "histograms");
        if (table.cols() != static_cast<Eigen::Index>(rej->bin_count + 2)) {
            throw ValidationError("histogram table width does not match bin_count");
        }
        std::vector<HistogramPdf> pdfs;
        for (Eigen::Index i = 0; i < table.rows(); ++i) {
            HistogramPdf p;
            p.bin_count = rej->bin_count;
            p.lower = table(i, 0);
            p.upper = table(i, 1);
            for (std::size_t b = 0; b < rej->bin_count; ++b) p.masses.push_back(table(i, static_cast<Eigen::Index>(b + 2)));
            pdfs.push_back(std::move(p));
        }
        return pdfs;
    }
    MvnParams p;
    p.mean = r.get_row(prefix + "mean").transpose();
    p.covariance = r.get(prefix + "covariance");
    p.spectral_root = r.get(prefix + "spectral_root");
    return p;
}

json topology_json(const MlpConfig& config) {
    if (const auto* uni = std::get_if<UnimodalTopology>(&config.topology)) {
        return {{"type", "unimodal"}, {"input_dim", uni->input_dim}, {"hidden", uni->hidden}};
    }
    const auto& mm = std::get<MultimodalTopology>(config.topology);
    return {{"type", "multimodal"},
            {"branch_input_dims", mm.branch_input_dims},
            {"branch_hidden", mm.branch_hidden},
            {"merged_hidden", mm.merged_hidden}};
}

Topology topology_from_json(const json& j) {
    const auto type = j.at("type").get<std::string>();
    if (type == "unimodal") {
        return UnimodalTopology{j.at("input_dim").get<std::size_t>(), j.at("hidden").get<std::vector<std::size_t>>()};
    }
    if (type == "multimodal") {
        return MultimodalTopology{j.at("branch_input_dims").get<std::vector<std::size_t>>(),
                                  j.at("branch_hidden").get<std::vector<std::size_t>>(),
                                  j.at("merged_hidden").get<std::vector<std::size_t>>()};
    }
    throw ValidationError("unknown topology type '" + type + "'");
}

std::string layer_blob(const std::string& stack, std::size_t index) {
    return "layer_" + stack + "_" + std::to_string(index);
}

Matrix pack_layer(const LayerWeights& layer) {
    Matrix m(layer.weights.rows() + 1, layer.weights.cols());
    m.topRows(layer.weights.rows()) = layer.weights;
    m.bottomRows(1) = layer.biases;
    return m;
}

void unpack_layer(const Matrix& m, LayerWeights& layer) {
    if (m.rows() != layer.weights.rows() + 1 || m.cols() != layer.weights.cols()) {
        throw ValidationError("layer blob shape does not match the topology");
    }
    layer.weights = m.topRows(m.rows() - 1);
    layer.biases = m.bottomRows(1);
}

}  // namespace

std::string blob_file_name(const fs::path& manifest, const std::string& blob) {
    return manifest.stem().string() + "." + blob + ".bin";
}

void save_ica_model(const IcaModel& model, const fs::path& manifest) {
    json j{{"format", "icafuse-ica"}, {"version", kFormatVersion}};
    json blobs = json::object();
    BlobWriter w(manifest, blobs);
    put_ica(model, w, j, "");
    j["blobs"] = blobs;
    write_json(j, manifest);
}

IcaModel load_ica_model(const fs::path& manifest) {
    const json j = read_json(manifest);
    if (j.value("format", "") != "icafuse-ica") throw ValidationError(manifest.string() + " is not an ICA manifest");
    try {
        return get_ica(BlobReader(manifest, j.at("blobs")), j, "");
    } catch (const json::exception& e) {
        throw ValidationError(manifest.string() + ": " + e.what());
    }
}

void save_generator(const GeneratorModel& gen, const fs::path& manifest) {
    json j{{"format", "icafuse-generator"}, {"version", kFormatVersion}};
    json blobs = json::object();
    BlobWriter w(manifest, blobs);
    json ica_meta;
    put_ica(*gen.ica, w, ica_meta, "ica_");
    j["ica"] = ica_meta;
    if (const auto* rej = std::get_if<RejectionKind>(&gen.kind)) {
        j["kind"] = {{"type", "rejection"}, {"bins", rej->bin_count}};
    } else {
        j["kind"] = {{"type", "mvn"}};
    }
    j["class_counts"] = {{"HC", gen.class_counts[0]}, {"SZ", gen.class_counts[1]}};
    put_class_model(gen.hc_model, w, "hc_");
    put_class_model(gen.sz_model, w, "sz_");
    j["blobs"] = blobs;
    write_json(j, manifest);
}

GeneratorModel load_generator(const fs::path& manifest) {
    const json j = read_json(manifest);
    if (j.value("format", "") != "icafuse-generator") {
        throw ValidationError(manifest.string() + " is not a generator manifest");
    }
    try {
        const BlobReader r(manifest, j.at("blobs"));
        GeneratorModel gen;
        gen.ica = std::make_shared<const IcaModel>(get_ica(r, j.at("ica"), "ica_"));
        const auto& kind = j.at("kind");
        if (kind.at("type") == "rejection") {
            gen.kind = RejectionKind{kind.at("bins").get<std::size_t>()};
        } else if (kind.at("type") == "mvn") {
            gen.kind = MvnKind{};
        } else {
            throw ValidationError("unknown generator kind");
        }
        gen.class_counts = {j.at("class_counts").at("HC").get<std::size_t>(),
                            j.at("class_counts").at("SZ").get<std::size_t>()};
        gen.hc_model = get_class_model(r, gen.kind, "hc_");
        gen.sz_model = get_class_model(r, gen.kind, "sz_");
        return gen;
    } catch (const json::exception& e) {
        throw ValidationError(manifest.string() + ": " + e.what());
    }
}

void save_mlp(const MlpModel& model, const fs::path& manifest, const CheckpointInfo& info) {
    const auto& c = model.config;
    json j{{"format", "icafuse-mlp"},
           {"version", kFormatVersion},
           {"topology", topology_json(c)},
           {"config",
            {{"output_dim", c.output_dim},
             {"dropout_rate", c.dropout_rate},
             {"l2_input", c.l2_input},
             {"l2_rest", c.l2_rest},
             {"learning_rate", c.learning_rate},
             {"adagrad_epsilon", c.adagrad_epsilon}}},
           {"epoch", info.epoch}};
    j["validation_loss"] = info.validation_loss ? json(*info.validation_loss) : json(nullptr);
    json blobs = json::object();
    BlobWriter w(manifest, blobs);
    for (std::size_t b = 0; b < model.branches.size(); ++b) {
        for (std::size_t l = 0; l < model.branches[b].size(); ++l) {
            w.put(layer_blob("b" + std::to_string(b), l), pack_layer(model.branches[b][l]));
        }
    }
    for (std::size_t l = 0; l < model.head.size(); ++l) w.put(layer_blob("head", l), pack_layer(model.head[l]));
    j["blobs"] = blobs;
    write_json(j, manifest);
}

MlpModel load_mlp(const fs::path& manifest, CheckpointInfo* info) {
    const json j = read_json(manifest);
    if (j.value("format", "") != "icafuse-mlp") throw ValidationError(manifest.string() + " is not an MLP checkpoint");
    try {
        MlpConfig config;
        config.topology = topology_from_json(j.at("topology"));
        const auto& c = j.at("config");
        config.output_dim = c.at("output_dim").get<std::size_t>();
        config.dropout_rate = c.at("dropout_rate").get<double>();
        config.l2_input = c.at("l2_input").get<double>();
        config.l2_rest = c.at("l2_rest").get<double>();
        config.learning_rate = c.at("learning_rate").get<double>();
        config.adagrad_epsilon = c.at("adagrad_epsilon").get<double>();

        // Shapes come from the topology; values from the blobs.
        RngStream scratch(0);
        MlpModel model = init_mlp(config, scratch);
        const BlobReader r(manifest, j.at("blobs"));
        for (std::size_t b = 0; b < model.branches.size(); ++b) {
            for (std::size_t l = 0; l < model.branches[b].size(); ++l) {
                unpack_layer(r.get(layer_blob("b" + std::to_string(b), l)), model.branches[b][l]);
            }
        }
        for (std::size_t l = 0; l < model.head.size(); ++l) unpack_layer(r.get(layer_blob("head", l)), model.head[l]);
        if (info) {
            info->epoch = j.at("epoch").get<std::size_t>();
            const auto& v = j.at("validation_loss");
            info->validation_loss = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
        }
        return model;
    } catch (const json::exception& e) {
        throw ValidationError(manifest.string() + ": " + e.what());
    }
}

}  // namespace icafuse
