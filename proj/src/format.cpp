// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "bridgelab/format.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "bridgelab/tensor.hpp"

namespace bridgelab {

std::string format_double(double value) {
    if (std::isnan(value)) {
        return "nan";
    }
    if (std::isinf(value)) {
        return value > 0 ? "inf" : "-inf";
    }
    char buf[32];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return {buf, end};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) {
        throw Error("cannot write " + path.string());
    }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
    write_text(path, doc.dump(2) + "\n");
}

CsvWriter::CsvWriter(std::vector<std::string> header) : width_(header.size()) {
    row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != width_) {
        throw ContractViolation("csv: row has " + std::to_string(cells.size()) + " cells, expected " +
                                std::to_string(width_));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        text_ += cells[i];
        text_ += i + 1 < cells.size() ? ',' : '\n';
    }
}

}  // namespace bridgelab
