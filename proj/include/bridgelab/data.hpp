// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic data sources and random-label assignment.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bridgelab/tensor.hpp"

namespace bridgelab {

enum class DataKind { gaussian, synthetic_images, cifar_binary };

std::string data_kind_name(DataKind kind);
DataKind parse_data_kind(const std::string& name);

struct DatasetSpec {
    DataKind kind = DataKind::synthetic_images;
    std::size_t n = 0;
    std::size_t num_classes = 10;
    std::size_t extent = 8;    // images: side length
    std::size_t dim = 0;       // gaussian: vector dimension
    std::size_t channels = 3;  // images
    std::uint64_t seed = 0;
    double noise = 0.15;       // synthetic images: pixel noise std
    std::string path;          // cifar-binary source file

    // Throws SpecError.
    void validate() const;
    nlohmann::json to_json() const;
    static DatasetSpec from_json(const nlohmann::json& j);
};

struct Dataset {
    DatasetSpec spec;
    TensorF inputs;           // images [n, C, H, W] or vectors [n, d]
    std::vector<int> labels;  // true labels

    std::size_t size() const noexcept { return labels.size(); }
};

struct GaussianSource {
    TensorD samples;                  // [n, d]
    TensorD covariance;               // Q diag(eigenvalues) Q^T
    TensorD rotation;                 // Q
    std::vector<double> eigenvalues;  // as given
};

// Zero-mean Gaussian vectors x = Q diag(sqrt(eigenvalues)) z. Q comes from
// `rotation_seed`, z from `seed`. Throws ContractViolation on a non-positive
// eigenvalue.
GaussianSource gaussian_source(std::span<const double> eigenvalues, std::uint64_t rotation_seed, std::size_t n,
                               std::uint64_t seed);

// Wraps gaussian_source samples as a float Dataset with all-zero labels
// (pair with assign_random_labels).
Dataset gaussian_dataset(const GaussianSource& source, std::size_t num_classes, std::uint64_t seed);

// Class c is a sinusoidal grating with a class-specific orientation and
// frequency, tinted by a class-specific colour vector. Each sample draws a
// random phase (the augment jitter) and i.i.d. pixel noise. Labels are
// stratified (i mod C) and then shuffled by the seed.
Dataset synthetic_images(std::size_t n, std::size_t num_classes, std::size_t extent, std::uint64_t seed,
                         double noise = 0.15, std::size_t channels = 3);

// Per-channel normalization applied after scaling pixels to [0, 1]:
// x = (p / 255 - mean[c]) / stddev[c]. Defaults are the usual CIFAR-10
// training-set statistics; identity() disables normalization.
struct CifarNormalization {
    std::array<double, 3> mean{0.4914, 0.4822, 0.4465};
    std::array<double, 3> stddev{0.2470, 0.2435, 0.2616};

    static CifarNormalization identity() { return {{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}}; }
    nlohmann::json to_json() const;
    static CifarNormalization from_json(const nlohmann::json& j);
};

inline constexpr std::size_t kCifarRecordBytes = 1 + 3 * 32 * 32;

class DataFormatError : public Error {
public:
    using Error::Error;
};

Dataset cifar_parse(std::span<const std::uint8_t> bytes, const CifarNormalization& norm = {});
Dataset cifar_import(const std::filesystem::path& path, const CifarNormalization& norm = {});

struct LabelTable {
    std::vector<int> true_labels;
    std::vector<int> effective;
    std::vector<std::size_t> corrupted;  // ascending
    double ratio = 0.0;
    std::size_t num_classes = 0;
    std::uint64_t seed = 0;
    bool exclude_true_class = false;

    nlohmann::json metadata() const;
    bool operator==(const LabelTable&) const = default;
};

// Selects round(ratio * n) indices without replacement and relabels each one
// uniformly over all classes, or over the C - 1 wrong classes when
// `exclude_true_class` is set.
LabelTable assign_random_labels(std::span<const int> true_labels, double ratio, std::size_t num_classes,
                                std::uint64_t seed, bool exclude_true_class = false);

// Identity table (ratio 0).
LabelTable clean_labels(std::span<const int> true_labels, std::size_t num_classes);

// <dir>/dataset.brlb holds inputs, labels and (if given) effective labels and
// the corrupted index set; <dir>/dataset.json holds the spec and label metadata.
void save_dataset(const Dataset& data, const LabelTable* labels, const std::filesystem::path& dir);

struct StoredDataset {
    Dataset data;
    std::optional<LabelTable> labels;
};
StoredDataset load_dataset(const std::filesystem::path& dir);

// Samples at `indices`, in that order.
Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

}  // namespace bridgelab
