#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/errors.hpp"

namespace prefopt::io {

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// Shortest round-trip decimal form; the canonical float encoding for every
// emitted CSV/JSON so reruns are byte-identical.
std::string format_double(double v);

double parse_double(const std::string& s, const std::string& context);
int64_t parse_int(const std::string& s, const std::string& context);

// Minimal CSV: comma separator, no quoting; fields must not contain commas or
// newlines (ids and sequences never do).
std::vector<std::string> split_csv_line(const std::string& line);
std::string join_csv(const std::vector<std::string>& fields);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // line numbers start at 2
};

// Reads and validates rectangular CSV with the exact expected header.
CsvTable read_csv(const std::string& path,
                  const std::vector<std::string>& expected_header);

}  // namespace prefopt::io
