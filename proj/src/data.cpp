// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "bridgelab/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "bridgelab/checkpoint.hpp"
#include "bridgelab/linalg.hpp"
#include "bridgelab/rng.hpp"

namespace bridgelab {

using nlohmann::json;

std::string data_kind_name(DataKind kind) {
    switch (kind) {
        case DataKind::gaussian:
            return "gaussian";
        case DataKind::synthetic_images:
            return "synthetic-images";
        case DataKind::cifar_binary:
            return "cifar-binary";
    }
    return "synthetic-images";
}

DataKind parse_data_kind(const std::string& name) {
    for (DataKind k : {DataKind::gaussian, DataKind::synthetic_images, DataKind::cifar_binary}) {
        if (data_kind_name(k) == name) {
            return k;
        }
    }
    throw SpecError("unknown dataset kind '" + name + "' (expected gaussian, synthetic-images or cifar-binary)");
}

void DatasetSpec::validate() const {
    if (num_classes < 2) {
        throw SpecError("dataset: class count must be at least 2");
    }
    switch (kind) {
        case DataKind::gaussian:
            if (n == 0 || dim == 0) {
                throw SpecError("dataset: gaussian source needs n > 0 and dim > 0");
            }
            break;
        case DataKind::synthetic_images:
            if (n == 0) {
                throw SpecError("dataset: n must be positive");
            }
            if (extent < 8) {
                throw SpecError("dataset: synthetic images need extent >= 8");
            }
            if (channels == 0 || !(noise >= 0.0)) {
                throw SpecError("dataset: channels must be positive and noise non-negative");
            }
            break;
        case DataKind::cifar_binary:
            if (path.empty()) {
                throw SpecError("dataset: cifar-binary needs a path");
            }
            break;
    }
}

json DatasetSpec::to_json() const {
    return {{"kind", data_kind_name(kind)}, {"n", n},       {"num_classes", num_classes},
            {"extent", extent},            {"dim", dim},   {"channels", channels},
            {"seed", seed},                {"noise", noise}, {"path", path}};
}

DatasetSpec DatasetSpec::from_json(const json& j) {
    DatasetSpec s;
    s.kind = parse_data_kind(j.at("kind").get<std::string>());
    s.n = j.value("n", s.n);
    s.num_classes = j.value("num_classes", s.num_classes);
    s.extent = j.value("extent", s.extent);
    s.dim = j.value("dim", s.dim);
    s.channels = j.value("channels", s.channels);
    s.seed = j.value("seed", s.seed);
    s.noise = j.value("noise", s.noise);
    s.path = j.value("path", s.path);
    return s;
}

GaussianSource gaussian_source(std::span<const double> eigenvalues, std::uint64_t rotation_seed, std::size_t n,
                               std::uint64_t seed) {
    if (eigenvalues.empty() || n == 0) {
        throw ContractViolation("gaussian_source: need at least one eigenvalue and one sample");
    }
    for (const double ev : eigenvalues) {
        if (!(ev > 0.0)) {
            throw ContractViolation("gaussian_source: eigenvalues must be positive, got " + std::to_string(ev));
        }
    }
    const std::size_t d = eigenvalues.size();
    GaussianSource out;
    out.eigenvalues.assign(eigenvalues.begin(), eigenvalues.end());
    out.rotation = random_orthogonal(d, RngStream(rotation_seed, hash_string("gaussian.rotation")));
    out.covariance = TensorD({d, d});
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                s += out.rotation(i, k) * eigenvalues[k] * out.rotation(j, k);
            }
            out.covariance(i, j) = s;
        }
    }
    // The identity rotation is exact for an isotropic spectrum.
    if (std::all_of(eigenvalues.begin(), eigenvalues.end(), [&](double v) { return v == eigenvalues[0]; })) {
        out.covariance = identity(d);
        for (double& x : out.covariance.data()) {
            x *= eigenvalues[0];
        }
    }

    std::vector<double> scale(d);
    for (std::size_t k = 0; k < d; ++k) {
        scale[k] = std::sqrt(eigenvalues[k]);
    }
    out.samples = TensorD({n, d});
    RngStream rng(seed, hash_string("gaussian.samples"));
    std::vector<double> z(d);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t k = 0; k < d; ++k) {
            z[k] = scale[k] * rng.normal();
        }
        for (std::size_t i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                s += out.rotation(i, k) * z[k];
            }
            out.samples(r, i) = s;
        }
    }
    return out;
}

Dataset gaussian_dataset(const GaussianSource& source, std::size_t num_classes, std::uint64_t seed) {
    Dataset data;
    data.spec.kind = DataKind::gaussian;
    data.spec.n = source.samples.dim(0);
    data.spec.dim = source.samples.dim(1);
    data.spec.num_classes = num_classes;
    data.spec.seed = seed;
    data.inputs = source.samples.cast<float>();
    data.labels.assign(data.spec.n, 0);
    return data;
}

Dataset synthetic_images(std::size_t n, std::size_t num_classes, std::size_t extent, std::uint64_t seed, double noise,
                         std::size_t channels) {
    Dataset data;
    data.spec.kind = DataKind::synthetic_images;
    data.spec.n = n;
    data.spec.num_classes = num_classes;
    data.spec.extent = extent;
    data.spec.channels = channels;
    data.spec.seed = seed;
    data.spec.noise = noise;
    try {
        data.spec.validate();
    } catch (const SpecError& e) {
        throw ContractViolation(std::string("synthetic_images: ") + e.what());
    }

    // Class design is fixed across seeds so that every dataset draws from the
    // same task; only phases, noise and label order depend on `seed`.
    const std::size_t n_orient = (num_classes + 1) / 2;
    std::vector<double> kx(num_classes), ky(num_classes);
    std::vector<std::vector<double>> tint(num_classes, std::vector<double>(channels));
    RngStream palette(0x62726c62ULL, hash_string("synthetic.palette"));
    for (std::size_t c = 0; c < num_classes; ++c) {
        const double angle = std::numbers::pi * static_cast<double>(c % n_orient) / static_cast<double>(n_orient);
        const double cycles = 1.0 + static_cast<double>(c / n_orient);
        const double k = 2.0 * std::numbers::pi * cycles / static_cast<double>(extent);
        kx[c] = k * std::cos(angle);
        ky[c] = k * std::sin(angle);
        for (double& t : tint[c]) {
            t = palette.uniform(0.3, 1.0);
        }
    }

    data.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        data.labels[i] = static_cast<int>(i % num_classes);
    }
    RngStream order(seed, hash_string("synthetic.labels"));
    order.shuffle(data.labels.begin(), data.labels.end());

    data.inputs = TensorF({n, channels, extent, extent});
    const RngStream samples(seed, hash_string("synthetic.samples"));
    float* out = data.inputs.ptr();
    for (std::size_t i = 0; i < n; ++i) {
        RngStream rng = samples.split(i);
        const auto c = static_cast<std::size_t>(data.labels[i]);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (std::size_t ch = 0; ch < channels; ++ch) {
            for (std::size_t y = 0; y < extent; ++y) {
                for (std::size_t x = 0; x < extent; ++x) {
                    const double wave =
                        std::cos(kx[c] * static_cast<double>(x) + ky[c] * static_cast<double>(y) + phase);
                    double v = 0.5 + 0.35 * tint[c][ch] * wave;
                    if (noise > 0.0) {
                        v += noise * rng.normal();
                    }
                    *out++ = static_cast<float>(v);
                }
            }
        }
    }
    return data;
}

json CifarNormalization::to_json() const {
    return {{"mean", mean}, {"std", stddev}};
}

CifarNormalization CifarNormalization::from_json(const json& j) {
    CifarNormalization n;
    n.mean = j.at("mean").get<std::array<double, 3>>();
    n.stddev = j.at("std").get<std::array<double, 3>>();
    for (const double s : n.stddev) {
        if (!(s > 0.0)) {
            throw SpecError("cifar normalization: std entries must be positive");
        }
    }
    return n;
}

Dataset cifar_parse(std::span<const std::uint8_t> bytes, const CifarNormalization& norm) {
    if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
        throw DataFormatError("cifar: file length " + std::to_string(bytes.size()) + " is not a positive multiple of " +
                              std::to_string(kCifarRecordBytes));
    }
    const std::size_t n = bytes.size() / kCifarRecordBytes;
    Dataset data;
    data.spec.kind = DataKind::cifar_binary;
    data.spec.n = n;
    data.spec.num_classes = 10;
    data.spec.extent = 32;
    data.spec.channels = 3;
    data.inputs = TensorF({n, 3, 32, 32});
    data.labels.resize(n);
    float* out = data.inputs.ptr();
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* rec = bytes.data() + i * kCifarRecordBytes;
        if (rec[0] >= 10) {
            throw DataFormatError("cifar: record " + std::to_string(i) + " has label byte " + std::to_string(rec[0]));
        }
        data.labels[i] = rec[0];
        for (std::size_t ch = 0; ch < 3; ++ch) {
            for (std::size_t p = 0; p < 1024; ++p) {
                const double v = static_cast<double>(rec[1 + ch * 1024 + p]) / 255.0;
                *out++ = static_cast<float>((v - norm.mean[ch]) / norm.stddev[ch]);
            }
        }
    }
    return data;
}

Dataset cifar_import(const std::filesystem::path& path, const CifarNormalization& norm) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cifar: cannot open '" + path.string() + "'");
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Dataset data = cifar_parse(bytes, norm);
    data.spec.path = path.string();
    return data;
}

json LabelTable::metadata() const {
    return {{"ratio", ratio},
            {"num_classes", num_classes},
            {"seed", seed},
            {"exclude_true_class", exclude_true_class},
            {"n", true_labels.size()},
            {"corrupted_count", corrupted.size()}};
}

LabelTable assign_random_labels(std::span<const int> true_labels, double ratio, std::size_t num_classes,
                                std::uint64_t seed, bool exclude_true_class) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) {
        throw ContractViolation("assign_random_labels: ratio must lie in [0, 1]");
    }
    if (num_classes < 2) {
        throw ContractViolation("assign_random_labels: need at least two classes");
    }
    for (const int y : true_labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw ContractViolation("assign_random_labels: true label " + std::to_string(y) + " out of range");
        }
    }
    LabelTable table;
    table.true_labels.assign(true_labels.begin(), true_labels.end());
    table.effective = table.true_labels;
    table.ratio = ratio;
    table.num_classes = num_classes;
    table.seed = seed;
    table.exclude_true_class = exclude_true_class;

    const std::size_t n = true_labels.size();
    const auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    const RngStream base(seed, hash_string("labels.random"));
    std::vector<std::size_t> perm = base.split("select").permutation(n);
    table.corrupted.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(table.corrupted.begin(), table.corrupted.end());

    RngStream draw = base.split("draw");
    for (const std::size_t i : table.corrupted) {
        if (exclude_true_class) {
            auto y = static_cast<int>(draw.uniform_index(num_classes - 1));
            if (y >= table.true_labels[i]) {
                ++y;
            }
            table.effective[i] = y;
        } else {
            table.effective[i] = static_cast<int>(draw.uniform_index(num_classes));
        }
    }
    return table;
}

LabelTable clean_labels(std::span<const int> true_labels, std::size_t num_classes) {
    return assign_random_labels(true_labels, 0.0, num_classes, 0);
}

namespace {

Tensor<std::int32_t> int_tensor(const std::vector<int>& v) {
    return Tensor<std::int32_t>({v.size()}, std::vector<std::int32_t>(v.begin(), v.end()));
}

std::vector<int> int_vector(const AnyTensor& t, const std::string& name) {
    const auto* p = std::get_if<Tensor<std::int32_t>>(&t);
    if (p == nullptr) {
        throw Error("dataset: tensor '" + name + "' is not i32");
    }
    return {p->data().begin(), p->data().end()};
}

}  // namespace

void save_dataset(const Dataset& data, const LabelTable* labels, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    TensorSet set;
    set.push_back({"inputs", data.inputs});
    set.push_back({"labels", int_tensor(data.labels)});
    json sidecar = {{"format", "bridgelab-dataset"}, {"version", 1}, {"spec", data.spec.to_json()}, {"labels", nullptr}};
    if (labels != nullptr) {
        if (labels->true_labels != data.labels) {
            throw ContractViolation("save_dataset: label table does not match the dataset's true labels");
        }
        set.push_back({"effective_labels", int_tensor(labels->effective)});
        if (!labels->corrupted.empty()) {
            set.push_back({"corrupted",
                           Tensor<std::int64_t>({labels->corrupted.size()},
                                                std::vector<std::int64_t>(labels->corrupted.begin(),
                                                                          labels->corrupted.end()))});
        }
        sidecar["labels"] = labels->metadata();
    }
    save_checkpoint(set, dir / "dataset.brlb", {{"kind", "dataset"}});
    std::ofstream out(dir / "dataset.json");
    out << sidecar.dump(2) << '\n';
    if (!out) {
        throw Error("save_dataset: cannot write " + (dir / "dataset.json").string());
    }
}

StoredDataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "dataset.json");
    if (!in) {
        throw Error("load_dataset: cannot open " + (dir / "dataset.json").string());
    }
    json sidecar;
    try {
        sidecar = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(std::string("load_dataset: malformed sidecar: ") + e.what());
    }
    const Checkpoint ckpt = load_checkpoint(dir / "dataset.brlb");
    StoredDataset stored;
    stored.data.spec = DatasetSpec::from_json(sidecar.at("spec"));
    std::vector<int> effective;
    std::vector<std::size_t> corrupted;
    for (const auto& t : ckpt.tensors) {
        if (t.name == "inputs") {
            stored.data.inputs = std::get<TensorF>(t.tensor);
        } else if (t.name == "labels") {
            stored.data.labels = int_vector(t.tensor, t.name);
        } else if (t.name == "effective_labels") {
            effective = int_vector(t.tensor, t.name);
        } else if (t.name == "corrupted") {
            const auto& c = std::get<Tensor<std::int64_t>>(t.tensor);
            corrupted.assign(c.data().begin(), c.data().end());
        }
    }
    if (stored.data.inputs.empty() || stored.data.inputs.dim(0) != stored.data.labels.size()) {
        throw Error("load_dataset: inputs and labels disagree in " + dir.string());
    }
    const json& meta = sidecar.at("labels");
    if (!meta.is_null()) {
        LabelTable table;
        table.true_labels = stored.data.labels;
        table.effective = effective;
        table.corrupted = corrupted;
        table.ratio = meta.at("ratio").get<double>();
        table.num_classes = meta.at("num_classes").get<std::size_t>();
        table.seed = meta.at("seed").get<std::uint64_t>();
        table.exclude_true_class = meta.at("exclude_true_class").get<bool>();
        if (table.effective.size() != table.true_labels.size()) {
            throw Error("load_dataset: effective labels missing or mis-sized");
        }
        stored.labels = std::move(table);
    }
    return stored;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
    if (indices.empty()) {
        throw ContractViolation("subset: empty index list");
    }
    const std::size_t row = data.inputs.size() / data.inputs.dim(0);
    Shape shape = data.inputs.shape();
    shape[0] = indices.size();
    Dataset out;
    out.spec = data.spec;
    out.spec.n = indices.size();
    out.inputs = TensorF(shape);
    out.labels.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= data.size()) {
            throw ContractViolation("subset: index out of range");
        }
        std::copy_n(data.inputs.ptr() + indices[i] * row, row, out.inputs.ptr() + i * row);
        out.labels[i] = data.labels[indices[i]];
    }
    return out;
}

}  // namespace bridgelab
