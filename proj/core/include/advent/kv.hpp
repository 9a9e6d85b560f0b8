#pragma once

// Plain-text key-value files: one "key = value" per line, '#' starts a comment.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace advent::kv {

using Record = std::map<std::string, std::string>;

Record parse(const std::string& text, const std::string& origin = "<string>");
Record read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const Record& record, const std::string& header = "");

/// Typed lookups. Throw ConfigError naming the key on malformed values.
std::int64_t get_int(const Record& r, const std::string& key, std::int64_t fallback);
std::uint64_t get_uint(const Record& r, const std::string& key, std::uint64_t fallback);
double get_double(const Record& r, const std::string& key, double fallback);
bool get_bool(const Record& r, const std::string& key, bool fallback);
std::string get_string(const Record& r, const std::string& key, const std::string& fallback);

std::string trim(const std::string& s);

/// Parses a single space-separated "k=v k=v ..." line.
Record parse_line(const std::string& line);

}  // namespace advent::kv
