// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "bridgelab/forensics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>

#include "bridgelab/format.hpp"

namespace bridgelab {

using nlohmann::json;

namespace {

constexpr double kFlatStd = 1e-12;

template <typename T>
TensorStats stats_impl(std::span<const T> w) {
    if (w.empty()) {
        throw ContractViolation("tensor_stats: empty tensor");
    }
    TensorStats s;
    s.n = w.size();
    double sum = 0.0;
    for (const T v : w) {
        sum += static_cast<double>(v);
        s.max_abs = std::max(s.max_abs, std::abs(static_cast<double>(v)));
    }
    s.mean = sum / static_cast<double>(s.n);
    double m2 = 0.0;
    double m4 = 0.0;
    for (const T v : w) {
        const double c = static_cast<double>(v) - s.mean;
        const double c2 = c * c;
        m2 += c2;
        m4 += c2 * c2;
    }
    m2 /= static_cast<double>(s.n);
    m4 /= static_cast<double>(s.n);
    s.std = std::sqrt(m2);
    if (s.n >= 4 && s.std >= kFlatStd) {
        s.excess_kurtosis = m4 / (m2 * m2) - 3.0;
    }
    return s;
}

}  // namespace

TensorStats tensor_stats(std::span<const float> w) { return stats_impl(w); }
TensorStats tensor_stats(std::span<const double> w) { return stats_impl(w); }

OutlierResult outlier_count(std::span<const float> w, double z, std::size_t cap) {
    OutlierResult r;
    if (w.empty()) {
        return r;
    }
    const TensorStats s = tensor_stats(w);
    if (s.std < kFlatStd) {
        return r;
    }
    const double limit = z * s.std;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (std::abs(static_cast<double>(w[i]) - s.mean) > limit) {
            if (r.indices.size() < cap) {
                r.indices.push_back(i);
            }
            ++r.count;
        }
    }
    return r;
}

std::array<double, 3> tail_fractions(std::span<const float> w) {
    std::array<double, 3> out{};
    if (w.empty()) {
        return out;
    }
    const TensorStats s = tensor_stats(w);
    if (s.std < kFlatStd) {
        return out;
    }
    std::array<std::size_t, 3> counts{};
    for (const float v : w) {
        const double dev = std::abs(static_cast<double>(v) - s.mean);
        for (std::size_t k = 0; k < 3; ++k) {
            counts[k] += static_cast<std::size_t>(dev > 3.0 * static_cast<double>(k + 1) * s.std);
        }
    }
    for (std::size_t k = 0; k < 3; ++k) {
        out[k] = static_cast<double>(counts[k]) / static_cast<double>(w.size());
    }
    return out;
}

double Histogram::bin_left(std::size_t i) const {
    return -limit + 2.0 * limit * static_cast<double>(i) / static_cast<double>(kBins);
}

double Histogram::bin_right(std::size_t i) const { return bin_left(i + 1); }

Histogram symmetric_histogram(std::span<const float> w) {
    Histogram h;
    h.counts.assign(Histogram::kBins, 0);
    for (const float v : w) {
        h.limit = std::max(h.limit, std::abs(static_cast<double>(v)));
    }
    for (const float v : w) {
        std::size_t bin = Histogram::kBins / 2;
        if (h.limit > 0.0) {
            const double pos = (static_cast<double>(v) + h.limit) / (2.0 * h.limit) * static_cast<double>(Histogram::kBins);
            bin = std::min(static_cast<std::size_t>(std::max(pos, 0.0)), Histogram::kBins - 1);
        }
        ++h.counts[bin];
    }
    return h;
}

std::optional<std::size_t> forensic_layer(std::string_view name) {
    for (const std::string_view key : {"h.", "layers.", "blocks."}) {
        std::size_t pos = 0;
        while ((pos = name.find(key, pos)) != std::string_view::npos) {
            if (pos == 0 || name[pos - 1] == '.') {
                const std::string_view rest = name.substr(pos + key.size());
                std::size_t index = 0;
                const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), index);
                if (ec == std::errc{} && ptr != rest.data() && ptr != rest.data() + rest.size() && *ptr == '.') {
                    return index;
                }
            }
            pos += key.size();
        }
    }
    return std::nullopt;
}

std::optional<double> OutlierReport::mean_block_kurtosis() const {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& l : layers) {
        if (l.mean_excess_kurtosis) {
            sum += *l.mean_excess_kurtosis;
            ++count;
        }
    }
    if (count == 0) {
        return std::nullopt;
    }
    return sum / static_cast<double>(count);
}

json OutlierReport::to_json() const {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json t = json::array();
    for (const auto& r : tensors) {
        t.push_back({{"name", r.name},
                     {"layer", r.layer ? json(*r.layer) : json(nullptr)},
                     {"n", r.stats.n},
                     {"mean", r.stats.mean},
                     {"std", r.stats.std},
                     {"excess_kurtosis", opt(r.stats.excess_kurtosis)},
                     {"max_abs", r.stats.max_abs},
                     {"outliers", r.outliers},
                     {"tail_3sigma", r.tails[0]},
                     {"tail_6sigma", r.tails[1]},
                     {"tail_9sigma", r.tails[2]}});
    }
    json l = json::array();
    for (const auto& a : layers) {
        l.push_back({{"layer", a.layer},
                     {"tensors", a.tensors},
                     {"n", a.n},
                     {"outliers", a.outliers},
                     {"max_abs", a.max_abs},
                     {"mean_excess_kurtosis", opt(a.mean_excess_kurtosis)}});
    }
    return {{"z", z},
            {"tensors", t},
            {"layers", l},
            {"unassigned", unassigned},
            {"mean_block_kurtosis", opt(mean_block_kurtosis())}};
}

std::string OutlierReport::histogram_csv() const {
    CsvWriter csv({"tensor", "bin_left", "bin_right", "count"});
    for (const auto& r : tensors) {
        for (std::size_t i = 0; i < Histogram::kBins; ++i) {
            csv.row({r.name, format_double(r.histogram.bin_left(i)), format_double(r.histogram.bin_right(i)),
                     std::to_string(r.histogram.counts[i])});
        }
    }
    return csv.str();
}

OutlierReport layer_report(const ParamSet<float>& params, double z) {
    if (!(z > 0.0)) {
        throw ContractViolation("layer_report: z must be positive");
    }
    OutlierReport report;
    report.z = z;
    std::map<std::size_t, std::vector<std::size_t>> by_layer;
    for (std::size_t i = 0; i < params.count(); ++i) {
        const auto w = params.tensor(i).data();
        TensorReport r;
        r.name = params.name(i);
        r.layer = forensic_layer(r.name);
        r.stats = tensor_stats(w);
        r.outliers = outlier_count(w, z, 0).count;
        r.tails = tail_fractions(w);
        r.histogram = symmetric_histogram(w);
        if (r.layer) {
            by_layer[*r.layer].push_back(report.tensors.size());
        } else {
            report.unassigned.push_back(r.name);
        }
        report.tensors.push_back(std::move(r));
    }
    for (const auto& [layer, members] : by_layer) {
        LayerAggregate a;
        a.layer = layer;
        a.tensors = members.size();
        double kurt = 0.0;
        std::size_t defined = 0;
        for (const std::size_t m : members) {
            const TensorReport& r = report.tensors[m];
            a.n += r.stats.n;
            a.outliers += r.outliers;
            a.max_abs = std::max(a.max_abs, r.stats.max_abs);
            if (r.stats.excess_kurtosis) {
                kurt += *r.stats.excess_kurtosis;
                ++defined;
            }
        }
        if (defined > 0) {
            a.mean_excess_kurtosis = kurt / static_cast<double>(defined);
        }
        report.layers.push_back(a);
    }
    return report;
}

}  // namespace bridgelab
