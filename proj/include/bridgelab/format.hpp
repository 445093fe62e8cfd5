// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Locale-independent number formatting and small file helpers for reports.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace bridgelab {

// Shortest round-trip representation ("nan"/"inf" spelled out).
std::string format_double(double value);

// Writes `text` to `path`, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);

// Pretty-printed JSON with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

// Minimal CSV writer; cells are written verbatim.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    void row(const std::vector<std::string>& cells);
    std::string str() const { return text_; }
    void save(const std::filesystem::path& path) const { write_text(path, text_); }

private:
    std::size_t width_;
    std::string text_;
};

}  // namespace bridgelab
