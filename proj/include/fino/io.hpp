#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fino/config.hpp"
#include "fino/dataset.hpp"

namespace fino {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "FINO" | u32 version | u32 header length | header JSON | float32 payload.
Bytes encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
/// Little-endian float32 payload of a dataset, as stored on disk.
Bytes dataset_payload(const Dataset& ds);

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

/// In-memory checkpoint: configs, float32 parameters and a metrics snapshot.
struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  std::vector<NamedTensor> params;
  json metrics = json::object();
  json data = json::object();  // PDE, grid and frame spacing the model was trained on
};

/// "FNCK" | u32 version | u32 header length | header JSON | float32 payload.
Bytes encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Parameters are stored in float32; float64 models are rounded.
template <typename T>
Checkpoint make_checkpoint(const FinoModel<T>& model, const TrainConfig& train, json metrics = json::object());

/// Rebuilds a model; rejects missing, extra or mis-shaped parameters and,
/// when `expected` is given, a differing ModelConfig.
template <typename T>
FinoModel<T> model_from_checkpoint(const Checkpoint& ck, const ModelConfig* expected = nullptr);

Bytes read_file(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::span<const std::uint8_t> bytes);

}  // namespace fino
