#include "prime/container.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "prime/errors.hpp"

namespace prime {

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const std::size_t n = std::min(kChunk, bytes.size() - off);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::uint32_t crc32_of_file(const std::string& path) { return crc32_of(slurp(path)); }

std::string encode_records(const Json& header, const std::vector<Json>& records) {
  std::string body = header.dump();
  body += '\n';
  for (const auto& r : records) {
    body += r.dump();
    body += '\n';
  }
  Json trailer = {{"checksum", hex32(crc32_of(body))}, {"records", records.size()}};
  body += trailer.dump();
  body += '\n';
  return body;
}

void write_records(const std::string& path, const Json& header, const std::vector<Json>& records) {
  const std::string text = encode_records(header, records);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for " + path);
}

RecordFile decode_records(std::string_view text, std::string_view format, int version) {
  const auto first_nl = text.find('\n');
  if (first_nl == std::string_view::npos) throw CorruptFile("missing header line");
  RecordFile file;
  try {
    file.header = Json::parse(text.substr(0, first_nl));
  } catch (const Json::exception&) {
    throw CorruptFile("unreadable header line");
  }
  if (!file.header.is_object() || !file.header.contains("format") || !file.header.contains("version"))
    throw CorruptFile("header lacks format/version");
  if (file.header["format"] != format)
    throw VersionMismatch("expected format " + std::string(format) + ", found " +
                          file.header["format"].dump());
  if (file.header["version"] != version)
    throw VersionMismatch("unsupported " + std::string(format) + " version " +
                          file.header["version"].dump());

  // Trailer is the last non-empty line.
  std::string_view trimmed = text;
  if (trimmed.empty() || trimmed.back() != '\n') throw CorruptFile("file truncated (no final newline)");
  trimmed.remove_suffix(1);
  const auto last_nl = trimmed.rfind('\n');
  if (last_nl == std::string_view::npos || last_nl < first_nl) throw CorruptFile("missing trailer");
  const std::string_view body = text.substr(0, last_nl + 1);
  Json trailer;
  try {
    trailer = Json::parse(trimmed.substr(last_nl + 1));
  } catch (const Json::exception&) {
    throw CorruptFile("unreadable trailer");
  }
  if (!trailer.is_object() || !trailer.contains("checksum")) throw CorruptFile("missing trailer");
  if (trailer["checksum"] != hex32(crc32_of(body))) throw CorruptFile("checksum mismatch");

  std::size_t pos = first_nl + 1;
  while (pos < body.size()) {
    const auto nl = body.find('\n', pos);
    try {
      file.records.push_back(Json::parse(body.substr(pos, nl - pos)));
    } catch (const Json::exception&) {
      throw CorruptFile("unreadable record line");
    }
    pos = nl + 1;
  }
  if (trailer.value("records", std::size_t{0}) != file.records.size())
    throw CorruptFile("record count mismatch");
  return file;
}

RecordFile read_records(const std::string& path, std::string_view format, int version) {
  return decode_records(slurp(path), format, version);
}

}  // namespace prime
