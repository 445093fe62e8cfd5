// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0
//
// BRLB tensor container.
//
//   offset 0   "BRLB"
//   offset 4   u32 LE format version
//   offset 8   u64 LE manifest byte length N
//   offset 16  N bytes of UTF-8 JSON manifest
//   ...        zero padding, then raw little-endian payloads, each starting on a
//              64-byte boundary (offsets are absolute file offsets)
//
// Manifest:
//   {"format_version": 1,
//    "entries": [{"name", "dtype", "width", "shape", "offset", "length"}, ...],
//    "metadata": {...}}
// Entries are sorted by offset and never overlap.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "bridgelab/model.hpp"
#include "bridgelab/tensor.hpp"

namespace bridgelab {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointAlignment = 64;
inline constexpr std::size_t kCheckpointHeaderBytes = 16;

enum class DType { f32, f64, i32, i64 };

std::string dtype_name(DType dtype);
std::size_t dtype_width(DType dtype);

using AnyTensor = std::variant<TensorF, TensorD, Tensor<std::int32_t>, Tensor<std::int64_t>>;

DType dtype_of(const AnyTensor& tensor);
const Shape& shape_of(const AnyTensor& tensor);

struct NamedTensor {
    std::string name;
    AnyTensor tensor;
    bool operator==(const NamedTensor&) const = default;
};
using TensorSet = std::vector<NamedTensor>;

struct ManifestEntry {
    std::string name;
    DType dtype = DType::f32;
    Shape shape;
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
};

struct Manifest {
    std::uint32_t version = kCheckpointVersion;
    std::vector<ManifestEntry> entries;
    nlohmann::json metadata = nlohmann::json::object();

    nlohmann::json to_json() const;
};

class CheckpointError : public Error {
public:
    enum class Kind { io, empty_set, duplicate_name, not_a_checkpoint, unsupported_version, corrupt_manifest, truncated };
    CheckpointError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

// Writes atomically (temporary file + rename).
void save_checkpoint(const TensorSet& tensors, const std::filesystem::path& path,
                     const nlohmann::json& metadata = nlohmann::json::object());

struct Checkpoint {
    Manifest manifest;
    TensorSet tensors;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);
Manifest inspect_checkpoint(const std::filesystem::path& path);

// Parses an in-memory image; the file entry points wrap these.
Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes);
Manifest parse_manifest(const std::vector<std::uint8_t>& bytes);

// Import adapter for tensor containers with a JSON header (safetensors layout:
// u64 LE header length, JSON {name: {dtype, shape, data_offsets}}, payload).
// F32/F64/F16/BF16 are converted to f32; I32/I64 are kept.
TensorSet import_safetensors(const std::filesystem::path& path);

TensorSet to_tensor_set(const ParamSet<float>& params);
// Float tensors of `set` as a ParamSet (f64 entries are narrowed).
ParamSet<float> to_param_set(const TensorSet& set);

// Model persistence: parameters plus the spec and trainable flags in the
// manifest metadata ("model_spec", "block_trainable").
void save_model(const Model& model, const std::filesystem::path& path,
                nlohmann::json metadata = nlohmann::json::object());
Model load_model(const std::filesystem::path& path);

}  // namespace bridgelab
