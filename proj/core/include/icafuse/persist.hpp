#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>

#include "icafuse/generator.hpp"
#include "icafuse/ica.hpp"
#include "icafuse/mlp.hpp"

namespace icafuse {

// Models are stored as a JSON manifest plus one MAT1 file per matrix. Blob
// files sit next to the manifest and are named "<stem>.<blob>.bin"; the
// manifest refers to them by file name only.

void save_ica_model(const IcaModel& model, const std::filesystem::path& manifest);
IcaModel load_ica_model(const std::filesystem::path& manifest);

void save_generator(const GeneratorModel& gen, const std::filesystem::path& manifest);
GeneratorModel load_generator(const std::filesystem::path& manifest);

struct CheckpointInfo {
    std::size_t epoch = 0;
    std::optional<double> validation_loss;
};

// One blob per layer, "layer_<branch>_<index>", holding the weights with the
// bias appended as the final row. Branches are b0, b1, ...; the merged stack
// and output layer are "head".
void save_mlp(const MlpModel& model, const std::filesystem::path& manifest, const CheckpointInfo& info = {});
MlpModel load_mlp(const std::filesystem::path& manifest, CheckpointInfo* info = nullptr);

std::string blob_file_name(const std::filesystem::path& manifest, const std::string& blob);

}  // namespace icafuse
