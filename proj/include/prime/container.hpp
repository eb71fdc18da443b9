#pragma once

// Versioned, checksummed newline-delimited JSON records. Every file holds a
// header line, one line per record, and a trailer line
//   {"checksum": "<crc32 hex of all preceding bytes>", "records": N}.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace prime {

using Json = nlohmann::json;

struct RecordFile {
  Json header;
  std::vector<Json> records;
};

// `header` must already carry "format" and "version".
void write_records(const std::string& path, const Json& header, const std::vector<Json>& records);
std::string encode_records(const Json& header, const std::vector<Json>& records);

// Throws VersionMismatch on a foreign format or version, CorruptFile on a
// missing trailer, checksum failure, or malformed line.
RecordFile read_records(const std::string& path, std::string_view format, int version);
RecordFile decode_records(std::string_view text, std::string_view format, int version);

std::uint32_t crc32_of(std::string_view bytes);
std::uint32_t crc32_of_file(const std::string& path);
std::string hex32(std::uint32_t v);

}  // namespace prime
