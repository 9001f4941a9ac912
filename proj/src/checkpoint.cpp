#include "lab/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "lab/error.hpp"

namespace lab {
namespace {

constexpr const char* kFormat = "lab-checkpoint";

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return __builtin_bswap64(v);
  }
}

std::filesystem::path payload_path(const std::filesystem::path& manifest) {
  return std::filesystem::path(manifest.string() + ".bin");
}

}  // namespace

void write_checkpoint(const std::filesystem::path& manifest, const std::vector<NamedTensor>& tensors,
                      const nlohmann::json& meta) {
  const auto payload = payload_path(manifest);
  std::ofstream bin(payload, std::ios::binary | std::ios::trunc);
  if (!bin) throw Error("cannot write checkpoint payload " + payload.string());

  nlohmann::json entries = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const NamedTensor& t : tensors) {
    for (double v : t.value.data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      bits = to_little(bits);
      bin.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
    const std::uint64_t nbytes = t.value.size() * sizeof(double);
    entries.push_back({{"name", t.name},
                       {"shape", t.value.shape()},
                       {"offset", offset},
                       {"nbytes", nbytes}});
    offset += nbytes;
  }
  if (!bin) throw Error("short write to " + payload.string());

  nlohmann::json doc = {{"format", kFormat},
                        {"version", 1},
                        {"dtype", "float64"},
                        {"byte_order", "little"},
                        {"payload", payload.filename().string()},
                        {"payload_bytes", offset},
                        {"tensors", entries},
                        {"meta", meta}};
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint manifest " + manifest.string());
  out << doc.dump(2) << '\n';
}

Checkpoint read_checkpoint(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw ConfigError("cannot open checkpoint manifest " + manifest.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint manifest " + manifest.string() + ": " + e.what());
  }
  if (doc.value("format", "") != kFormat || doc.value("dtype", "") != "float64" ||
      doc.value("byte_order", "") != "little") {
    throw ConfigError("checkpoint manifest " + manifest.string() + " has an unsupported format");
  }
  const auto payload = manifest.parent_path() / doc.at("payload").get<std::string>();
  std::ifstream bin(payload, std::ios::binary);
  if (!bin) throw ConfigError("cannot open checkpoint payload " + payload.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  Checkpoint ck;
  ck.meta = doc.value("meta", nlohmann::json::object());
  for (const auto& e : doc.at("tensors")) {
    const Shape shape = e.at("shape").get<Shape>();
    const auto offset = e.at("offset").get<std::uint64_t>();
    const auto nbytes = e.at("nbytes").get<std::uint64_t>();
    if (nbytes != shape_size(shape) * sizeof(double) || offset + nbytes > bytes.size()) {
      throw ConfigError("checkpoint tensor '" + e.at("name").get<std::string>() +
                        "' lies outside the payload");
    }
    std::vector<double> values(shape_size(shape));
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, bytes.data() + offset + i * sizeof bits, sizeof bits);
      bits = to_little(bits);
      std::memcpy(&values[i], &bits, sizeof bits);
    }
    ck.tensors.push_back({e.at("name").get<std::string>(), Array(shape, std::move(values))});
  }
  return ck;
}

std::vector<NamedTensor> named_tensors(const EncoderParams& enc) {
  const auto names = parameter_names("encoder", enc.layers.size());
  const auto values = flatten(enc.layers);
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < names.size(); ++i) out.push_back({names[i], values[i]});
  return out;
}

std::vector<NamedTensor> named_tensors(const ClassifierParams& clf) {
  std::vector<NamedTensor> out = named_tensors(clf.encoder);
  out.push_back({"head.weight", clf.head.weight});
  out.push_back({"head.bias", clf.head.bias});
  return out;
}

EncoderParams encoder_from_tensors(const std::vector<NamedTensor>& tensors) {
  EncoderParams enc;
  for (std::size_t i = 0;; ++i) {
    const std::string w = "encoder." + std::to_string(i) + ".weight";
    const std::string b = "encoder." + std::to_string(i) + ".bias";
    const NamedTensor* wt = nullptr;
    const NamedTensor* bt = nullptr;
    for (const NamedTensor& t : tensors) {
      if (t.name == w) wt = &t;
      if (t.name == b) bt = &t;
    }
    if (!wt && !bt) break;
    if (!wt || !bt) throw ConfigError("checkpoint: incomplete encoder layer " + std::to_string(i));
    enc.layers.push_back({wt->value, bt->value});
  }
  enc.validate();
  return enc;
}

}  // namespace lab
