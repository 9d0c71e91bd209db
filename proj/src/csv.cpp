#include "reticgen/csv.hpp"

#include "reticgen/error.hpp"
#include "reticgen/text.hpp"

namespace reticgen::csv {

std::string field(std::string_view value) {
  if (value.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(value);
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += field(fields[i]);
  }
  return out;
}

namespace {

std::vector<std::string> split_line(std::string_view line, const std::string& source, std::size_t lineno) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ValidationError(source + ":" + std::to_string(lineno) + ": unterminated quoted field");
  out.push_back(std::move(cur));
  return out;
}

}  // namespace

std::optional<std::size_t> Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (text::trim(header[i]) == name) return i;
  }
  return std::nullopt;
}

std::size_t Table::require_column(std::string_view name, const std::string& source) const {
  if (auto c = column(name)) return *c;
  throw ValidationError(source + ":1: missing column '" + std::string(name) + "'");
}

Table parse(std::string_view body, const std::string& source) {
  Table t;
  const auto all = text::lines(body);
  bool have_header = false;
  for (std::size_t n = 0; n < all.size(); ++n) {
    if (text::trim(all[n]).empty()) continue;
    auto fields = split_line(all[n], source, n + 1);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw ValidationError(source + ":" + std::to_string(n + 1) + ": expected " + std::to_string(t.header.size()) +
                            " fields, found " + std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(n + 1);
  }
  if (!have_header) throw ValidationError(source + ": empty CSV file");
  return t;
}

Table load(const std::string& path) { return parse(text::read_file(path), path); }

}  // namespace reticgen::csv
