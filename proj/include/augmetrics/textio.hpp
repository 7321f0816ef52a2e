#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace augmetrics {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

/// Strict full-string parse; nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

std::vector<std::string> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

/// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(std::string_view text);
/// Splits one CSV record, honoring double-quoted fields. Nullopt on an
/// unterminated quote or stray characters after a closing quote.
std::optional<std::vector<std::string>> split_csv_record(std::string_view line);

} // namespace augmetrics
