#include "mindsets/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "mindsets/error.hpp"

namespace mindsets::csv {

namespace {

// Splits one logical record starting at pos; advances pos past the newline.
Row parse_record(const std::string& text, std::size_t& pos) {
  Row row;
  std::string field;
  bool quoted = false;
  while (pos < text.size()) {
    const char c = text[pos];
    if (quoted) {
      if (c == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          field += '"';
          ++pos;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && pos + 1 < text.size() && text[pos + 1] == '\n') ++pos;
      ++pos;
      row.push_back(std::move(field));
      return row;
    } else {
      field += c;
    }
    ++pos;
  }
  if (quoted) throw Error(Errc::InvalidArgument, "unterminated quoted CSV field");
  row.push_back(std::move(field));
  return row;
}

}  // namespace

Document parse(const std::string& text) {
  Document doc;
  std::size_t pos = 0;
  while (pos < text.size() && text[pos] == '#') {
    const auto end = text.find('\n', pos);
    auto line = text.substr(pos + 1, end == std::string::npos ? std::string::npos : end - pos - 1);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    doc.comments.push_back(std::move(line));
    pos = end == std::string::npos ? text.size() : end + 1;
  }
  if (pos >= text.size()) return doc;
  doc.header = parse_record(text, pos);
  while (pos < text.size()) {
    auto row = parse_record(text, pos);
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != doc.header.size()) {
      throw Error(Errc::InvalidArgument, "CSV row has " + std::to_string(row.size()) +
                                             " fields, header has " + std::to_string(doc.header.size()));
    }
    doc.rows.push_back(std::move(row));
  }
  return doc;
}

Document read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string format_row(const Row& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i > 0) out += ',';
    out += escape(row[i]);
  }
  return out;
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw Error(Errc::InvalidArgument, "cannot format double");
  return std::string(buf, end);
}

void write(const std::filesystem::path& path, const Document& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  for (const auto& c : doc.comments) out << '#' << c << '\n';
  out << format_row(doc.header) << '\n';
  for (const auto& row : doc.rows) out << format_row(row) << '\n';
  if (!out) throw Error(Errc::Io, "write failed for " + path.string());
}

}  // namespace mindsets::csv
