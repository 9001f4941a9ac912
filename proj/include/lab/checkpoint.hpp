#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "lab/array.hpp"
#include "lab/model.hpp"

namespace lab {

struct NamedTensor {
  std::string name;
  Array value;
};

/// Writes `<manifest>` (JSON: names, shapes, byte offsets) and the payload
/// `<manifest>.bin` (raw little-endian float64, tensors back to back).
void write_checkpoint(const std::filesystem::path& manifest, const std::vector<NamedTensor>& tensors,
                      const nlohmann::json& meta = nlohmann::json::object());

struct Checkpoint {
  std::vector<NamedTensor> tensors;
  nlohmann::json meta;
};

Checkpoint read_checkpoint(const std::filesystem::path& manifest);

std::vector<NamedTensor> named_tensors(const EncoderParams& enc);
std::vector<NamedTensor> named_tensors(const ClassifierParams& clf);
/// Rebuilds an encoder from tensors named "encoder.<i>.weight|bias".
EncoderParams encoder_from_tensors(const std::vector<NamedTensor>& tensors);

}  // namespace lab
