#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace reticgen::csv {

// Quotes the field when it holds a comma, quote or newline.
std::string field(std::string_view value);
std::string row(const std::vector<std::string>& fields);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // source line of each row

  std::optional<std::size_t> column(std::string_view name) const;
  std::size_t require_column(std::string_view name, const std::string& source) const;
};

// RFC 4180 subset: quoted fields with doubled quotes, no embedded newlines.
// Throws ValidationError with line numbers on ragged rows.
Table parse(std::string_view text, const std::string& source = "<csv>");
Table load(const std::string& path);

}  // namespace reticgen::csv
