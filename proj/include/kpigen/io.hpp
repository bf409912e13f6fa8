#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace kpigen {

// RFC 4180 style reader: quoted fields may contain delimiters, doubled
// quotes and newlines.
std::vector<std::vector<std::string>> read_csv(std::istream& in, char delimiter = ',');

// Quotes a field when it contains the delimiter, a quote or a newline.
std::string csv_field(std::string_view s, char delimiter = ',');

// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace kpigen
