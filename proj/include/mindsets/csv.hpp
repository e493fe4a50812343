#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace mindsets::csv {

using Row = std::vector<std::string>;

struct Document {
  Row header;
  std::vector<Row> rows;
  /// Leading lines starting with '#', without the '#'.
  std::vector<std::string> comments;
};

/// RFC 4180-ish: comma separated, double-quote escaping, '#' comment lines
/// allowed before the header.
Document read(const std::filesystem::path& path);
Document parse(const std::string& text);

std::string escape(const std::string& field);
std::string format_row(const Row& row);

/// Shortest representation that round-trips a double exactly.
std::string format_double(double value);

void write(const std::filesystem::path& path, const Document& doc);

}  // namespace mindsets::csv
