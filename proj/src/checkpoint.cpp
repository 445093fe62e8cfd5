// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "bridgelab/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include <unistd.h>

namespace bridgelab {

using nlohmann::json;

std::string dtype_name(DType dtype) {
    switch (dtype) {
        case DType::f32:
            return "f32";
        case DType::f64:
            return "f64";
        case DType::i32:
            return "i32";
        case DType::i64:
            return "i64";
    }
    return "f32";
}

std::size_t dtype_width(DType dtype) {
    return (dtype == DType::f32 || dtype == DType::i32) ? 4 : 8;
}

DType dtype_of(const AnyTensor& tensor) {
    return static_cast<DType>(tensor.index());
}

const Shape& shape_of(const AnyTensor& tensor) {
    return std::visit([](const auto& t) -> const Shape& { return t.shape(); }, tensor);
}

json Manifest::to_json() const {
    json entries_json = json::array();
    for (const auto& e : entries) {
        entries_json.push_back({{"name", e.name},
                                {"dtype", dtype_name(e.dtype)},
                                {"width", dtype_width(e.dtype)},
                                {"shape", e.shape},
                                {"offset", e.offset},
                                {"length", e.length}});
    }
    return {{"format_version", version}, {"entries", entries_json}, {"metadata", metadata}};
}

namespace {

[[noreturn]] void fail(CheckpointError::Kind kind, const std::string& message) {
    throw CheckpointError(kind, message);
}

std::uint64_t align_up(std::uint64_t value) {
    return (value + kCheckpointAlignment - 1) / kCheckpointAlignment * kCheckpointAlignment;
}

// Payloads are little-endian on disk; big-endian hosts swap element bytes.
void to_little_endian(std::uint8_t* data, std::size_t count, std::size_t width) {
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < count; ++i) {
            std::reverse(data + i * width, data + (i + 1) * width);
        }
    } else {
        (void)data;
        (void)count;
        (void)width;
    }
}

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i)));
    }
}

template <typename U>
U get_le(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    }
    return static_cast<U>(v);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(CheckpointError::Kind::io, "cannot open '" + path.string() + "'");
    }
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(size);
    if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
        fail(CheckpointError::Kind::io, "failed reading '" + path.string() + "'");
    }
    return bytes;
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    const std::filesystem::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            fail(CheckpointError::Kind::io, "cannot create '" + tmp.string() + "'");
        }
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            fail(CheckpointError::Kind::io, "failed writing '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        fail(CheckpointError::Kind::io, "cannot move checkpoint into place at '" + path.string() + "'");
    }
}

const std::uint8_t* payload_bytes(const AnyTensor& t) {
    return std::visit([](const auto& x) { return reinterpret_cast<const std::uint8_t*>(x.ptr()); }, t);
}

std::optional<DType> parse_dtype(const std::string& name) {
    for (DType d : {DType::f32, DType::f64, DType::i32, DType::i64}) {
        if (dtype_name(d) == name) {
            return d;
        }
    }
    return std::nullopt;
}

// Multiplies extents, returning nullopt on overflow or zero extents.
std::optional<std::uint64_t> checked_numel(const Shape& shape) {
    std::uint64_t n = 1;
    for (const std::size_t e : shape) {
        if (e == 0 || n > std::numeric_limits<std::uint64_t>::max() / e) {
            return std::nullopt;
        }
        n *= e;
    }
    return n;
}

template <typename T>
Tensor<T> decode_payload(const std::uint8_t* src, const Shape& shape, std::size_t numel) {
    std::vector<T> values(numel);
    std::memcpy(values.data(), src, numel * sizeof(T));
    to_little_endian(reinterpret_cast<std::uint8_t*>(values.data()), numel, sizeof(T));
    return Tensor<T>(shape, std::move(values));
}

Manifest parse_manifest_impl(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "BRLB", 4) != 0) {
        fail(CheckpointError::Kind::not_a_checkpoint, "not a checkpoint: bad magic");
    }
    if (bytes.size() < kCheckpointHeaderBytes) {
        fail(CheckpointError::Kind::corrupt_manifest, "corrupt manifest: header shorter than 16 bytes");
    }
    Manifest manifest;
    manifest.version = get_le<std::uint32_t>(bytes.data() + 4);
    if (manifest.version != kCheckpointVersion) {
        fail(CheckpointError::Kind::unsupported_version,
             "unsupported checkpoint version " + std::to_string(manifest.version));
    }
    const auto manifest_len = get_le<std::uint64_t>(bytes.data() + 8);
    if (manifest_len > bytes.size() - kCheckpointHeaderBytes) {
        fail(CheckpointError::Kind::corrupt_manifest, "corrupt manifest: declared length " +
                                                          std::to_string(manifest_len) + " exceeds file size " +
                                                          std::to_string(bytes.size()));
    }
    const std::uint64_t header_end = kCheckpointHeaderBytes + manifest_len;
    json doc;
    try {
        doc = json::parse(bytes.begin() + kCheckpointHeaderBytes,
                          bytes.begin() + static_cast<std::ptrdiff_t>(header_end));
        if (doc.at("format_version").get<std::uint32_t>() != manifest.version) {
            fail(CheckpointError::Kind::corrupt_manifest, "corrupt manifest: version field disagrees with header");
        }
        if (doc.contains("metadata")) {
            manifest.metadata = doc.at("metadata");
        }
        const json& entries = doc.at("entries");
        if (!entries.is_array()) {
            fail(CheckpointError::Kind::corrupt_manifest, "corrupt manifest: entries is not an array");
        }
        for (const json& e : entries) {
            ManifestEntry entry;
            entry.name = e.at("name").get<std::string>();
            const auto dtype = parse_dtype(e.at("dtype").get<std::string>());
            if (!dtype) {
                fail(CheckpointError::Kind::corrupt_manifest, "corrupt manifest: unknown dtype for '" + entry.name + "'");
            }
            entry.dtype = *dtype;
            if (e.at("width").get<std::uint64_t>() != dtype_width(entry.dtype)) {
                fail(CheckpointError::Kind::corrupt_manifest, "corrupt manifest: width disagrees with dtype");
            }
            for (const json& extent : e.at("shape")) {
                entry.shape.push_back(extent.get<std::size_t>());
            }
            entry.offset = e.at("offset").get<std::uint64_t>();
            entry.length = e.at("length").get<std::uint64_t>();
            manifest.entries.push_back(std::move(entry));
        }
    } catch (const json::exception& ex) {
        fail(CheckpointError::Kind::corrupt_manifest, std::string("corrupt manifest: ") + ex.what());
    }

    std::set<std::string> names;
    std::uint64_t previous_end = header_end;
    for (const auto& e : manifest.entries) {
        if (e.name.empty() || !names.insert(e.name).second) {
            fail(CheckpointError::Kind::corrupt_manifest, "corrupt manifest: empty or duplicate name '" + e.name + "'");
        }
        const auto numel = checked_numel(e.shape);
        const std::uint64_t width = dtype_width(e.dtype);
        if (!numel || *numel > std::numeric_limits<std::uint64_t>::max() / width || *numel * width != e.length) {
            fail(CheckpointError::Kind::corrupt_manifest, "corrupt manifest: length of '" + e.name +
                                                              "' does not match its shape");
        }
        if (e.offset % kCheckpointAlignment != 0 || e.offset < previous_end) {
            fail(CheckpointError::Kind::corrupt_manifest, "corrupt manifest: entry '" + e.name +
                                                              "' misaligned or overlapping");
        }
        if (e.length > bytes.size() || e.offset > bytes.size() - e.length) {
            fail(CheckpointError::Kind::truncated, "truncated: payload of '" + e.name + "' ends past file end");
        }
        previous_end = e.offset + e.length;
    }
    return manifest;
}

}  // namespace

void save_checkpoint(const TensorSet& tensors, const std::filesystem::path& path, const json& metadata) {
    if (tensors.empty()) {
        fail(CheckpointError::Kind::empty_set, "save: refusing to write an empty tensor set");
    }
    std::set<std::string> names;
    for (const auto& t : tensors) {
        if (t.name.empty()) {
            fail(CheckpointError::Kind::duplicate_name, "save: empty tensor name");
        }
        if (!names.insert(t.name).second) {
            fail(CheckpointError::Kind::duplicate_name, "save: duplicate tensor name '" + t.name + "'");
        }
    }

    // Offsets depend on the manifest length and vice versa; iterate until the
    // serialized manifest stops growing.
    Manifest manifest;
    manifest.metadata = metadata.is_null() ? json::object() : metadata;
    std::string manifest_text;
    std::uint64_t assumed_len = 0;
    for (int attempt = 0; attempt < 8; ++attempt) {
        manifest.entries.clear();
        std::uint64_t cursor = align_up(kCheckpointHeaderBytes + assumed_len);
        for (const auto& t : tensors) {
            ManifestEntry e;
            e.name = t.name;
            e.dtype = dtype_of(t.tensor);
            e.shape = shape_of(t.tensor);
            e.offset = cursor;
            e.length = shape_numel(e.shape) * dtype_width(e.dtype);
            cursor = align_up(cursor + e.length);
            manifest.entries.push_back(std::move(e));
        }
        manifest_text = manifest.to_json().dump();
        if (manifest_text.size() <= assumed_len) {
            break;
        }
        assumed_len = manifest_text.size() + 32;
    }
    if (manifest_text.size() > assumed_len) {
        fail(CheckpointError::Kind::io, "save: manifest layout did not converge");
    }
    // Pad the manifest with spaces so its declared length is exactly assumed_len.
    manifest_text.resize(assumed_len, ' ');

    std::vector<std::uint8_t> bytes;
    bytes.insert(bytes.end(), {'B', 'R', 'L', 'B'});
    put_le<std::uint32_t>(bytes, kCheckpointVersion);
    put_le<std::uint64_t>(bytes, manifest_text.size());
    bytes.insert(bytes.end(), manifest_text.begin(), manifest_text.end());
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const ManifestEntry& e = manifest.entries[i];
        bytes.resize(e.offset, 0);
        const std::uint8_t* src = payload_bytes(tensors[i].tensor);
        bytes.insert(bytes.end(), src, src + e.length);
        to_little_endian(bytes.data() + e.offset, e.length / dtype_width(e.dtype), dtype_width(e.dtype));
    }
    write_file_atomic(path, bytes);
}

Manifest parse_manifest(const std::vector<std::uint8_t>& bytes) {
    return parse_manifest_impl(bytes);
}

Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Checkpoint ckpt;
    ckpt.manifest = parse_manifest_impl(bytes);
    for (const auto& e : ckpt.manifest.entries) {
        const std::uint8_t* src = bytes.data() + e.offset;
        const std::size_t numel = e.length / dtype_width(e.dtype);
        AnyTensor t;
        switch (e.dtype) {
            case DType::f32:
                t = decode_payload<float>(src, e.shape, numel);
                break;
            case DType::f64:
                t = decode_payload<double>(src, e.shape, numel);
                break;
            case DType::i32:
                t = decode_payload<std::int32_t>(src, e.shape, numel);
                break;
            case DType::i64:
                t = decode_payload<std::int64_t>(src, e.shape, numel);
                break;
        }
        ckpt.tensors.push_back({e.name, std::move(t)});
    }
    return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return parse_checkpoint(read_file(path));
}

Manifest inspect_checkpoint(const std::filesystem::path& path) {
    return parse_manifest_impl(read_file(path));
}

namespace {

float half_to_float(std::uint16_t h) {
    const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000U) << 16U;
    std::uint32_t exponent = (h >> 10U) & 0x1FU;
    std::uint32_t mantissa = h & 0x3FFU;
    std::uint32_t bits = 0;
    if (exponent == 0) {
        if (mantissa == 0) {
            bits = sign;
        } else {
            exponent = 127 - 15 + 1;
            while ((mantissa & 0x400U) == 0) {
                mantissa <<= 1U;
                --exponent;
            }
            mantissa &= 0x3FFU;
            bits = sign | (exponent << 23U) | (mantissa << 13U);
        }
    } else if (exponent == 0x1F) {
        bits = sign | 0x7F800000U | (mantissa << 13U);
    } else {
        bits = sign | ((exponent + 127 - 15) << 23U) | (mantissa << 13U);
    }
    return std::bit_cast<float>(bits);
}

}  // namespace

TensorSet import_safetensors(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    if (bytes.size() < 8) {
        fail(CheckpointError::Kind::corrupt_manifest, "safetensors: file shorter than its length prefix");
    }
    const auto header_len = get_le<std::uint64_t>(bytes.data());
    if (header_len > bytes.size() - 8) {
        fail(CheckpointError::Kind::corrupt_manifest, "safetensors: header length exceeds file size");
    }
    const std::uint64_t data_start = 8 + header_len;
    const std::uint64_t data_size = bytes.size() - data_start;
    TensorSet out;
    try {
        const json header =
            json::parse(bytes.begin() + 8, bytes.begin() + static_cast<std::ptrdiff_t>(data_start));
        for (const auto& [name, info] : header.items()) {
            if (name == "__metadata__") {
                continue;
            }
            const std::string dtype = info.at("dtype").get<std::string>();
            Shape shape = info.at("shape").get<Shape>();
            if (shape.empty()) {
                shape = {1};
            }
            const auto begin = info.at("data_offsets").at(0).get<std::uint64_t>();
            const auto end = info.at("data_offsets").at(1).get<std::uint64_t>();
            const auto numel = checked_numel(shape);
            if (!numel || end < begin || end > data_size) {
                fail(CheckpointError::Kind::truncated, "safetensors: tensor '" + name + "' out of bounds");
            }
            const std::uint8_t* src = bytes.data() + data_start + begin;
            const std::uint64_t len = end - begin;
            auto expect = [&](std::uint64_t width) {
                if (*numel * width != len) {
                    fail(CheckpointError::Kind::corrupt_manifest, "safetensors: size mismatch for '" + name + "'");
                }
            };
            if (dtype == "F32") {
                expect(4);
                out.push_back({name, decode_payload<float>(src, shape, *numel)});
            } else if (dtype == "F64") {
                expect(8);
                out.push_back({name, decode_payload<double>(src, shape, *numel).cast<float>()});
            } else if (dtype == "I32") {
                expect(4);
                out.push_back({name, decode_payload<std::int32_t>(src, shape, *numel)});
            } else if (dtype == "I64") {
                expect(8);
                out.push_back({name, decode_payload<std::int64_t>(src, shape, *numel)});
            } else if (dtype == "F16" || dtype == "BF16") {
                expect(2);
                std::vector<float> values(*numel);
                for (std::size_t i = 0; i < values.size(); ++i) {
                    const auto raw = get_le<std::uint16_t>(src + 2 * i);
                    values[i] = dtype == "F16" ? half_to_float(raw)
                                               : std::bit_cast<float>(static_cast<std::uint32_t>(raw) << 16U);
                }
                out.push_back({name, TensorF(shape, std::move(values))});
            } else {
                fail(CheckpointError::Kind::corrupt_manifest, "safetensors: unsupported dtype " + dtype);
            }
        }
    } catch (const json::exception& ex) {
        fail(CheckpointError::Kind::corrupt_manifest, std::string("safetensors: ") + ex.what());
    }
    // Header key order is unspecified by the format; sort for reproducibility.
    std::sort(out.begin(), out.end(), [](const NamedTensor& a, const NamedTensor& b) { return a.name < b.name; });
    return out;
}

TensorSet to_tensor_set(const ParamSet<float>& params) {
    TensorSet set;
    for (std::size_t i = 0; i < params.count(); ++i) {
        set.push_back({params.name(i), params.tensor(i)});
    }
    return set;
}

ParamSet<float> to_param_set(const TensorSet& set) {
    ParamSet<float> params;
    for (const auto& t : set) {
        if (const auto* f = std::get_if<TensorF>(&t.tensor)) {
            params.add(t.name, *f);
        } else if (const auto* d = std::get_if<TensorD>(&t.tensor)) {
            params.add(t.name, d->cast<float>());
        }
    }
    return params;
}

void save_model(const Model& model, const std::filesystem::path& path, json metadata) {
    if (!metadata.is_object()) {
        metadata = json::object();
    }
    metadata["model_spec"] = model_spec_to_json(model.spec);
    metadata["block_trainable"] = model.block_trainable;
    save_checkpoint(to_tensor_set(model.params), path, metadata);
}

Model load_model(const std::filesystem::path& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    if (!ckpt.manifest.metadata.contains("model_spec")) {
        throw CheckpointError(CheckpointError::Kind::corrupt_manifest,
                              "'" + path.string() + "' has no model_spec metadata");
    }
    Model model;
    model.spec = model_spec_from_json(ckpt.manifest.metadata.at("model_spec"));
    model.spec.validate();
    model.params = to_param_set(ckpt.tensors);
    model.block_trainable = ckpt.manifest.metadata.value("block_trainable", std::vector<bool>(model.spec.n_layers, true));
    if (model.params.numel() != expected_parameter_count(model.spec)) {
        throw CheckpointError(CheckpointError::Kind::corrupt_manifest,
                              "'" + path.string() + "' parameters do not match its model_spec");
    }
    return model;
}

}  // namespace bridgelab
