#pragma once

#include <string>

#include <json.hpp>

#include "sinkflow/types.hpp"

namespace sinkflow {

// File IO failures (open/rename/write) as opposed to malformed content.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text_file(const std::string& path);

// Writes through a temp file in the same directory, then renames over the
// target, so readers never observe a half-written artifact.
void atomic_write_text(const std::string& path, const std::string& content);

// nlohmann objects keep keys sorted and print doubles shortest-roundtrip, so
// this dump is byte-deterministic for equal document values.
std::string canonical_dump(const nlohmann::json& j);

// Parse with the path in the error message.
nlohmann::json parse_json_file(const std::string& path);

}  // namespace sinkflow
