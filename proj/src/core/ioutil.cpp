#include "core/ioutil.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace prefopt::io {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc{} || res.ptr != end)
    throw DataError(context + ": invalid number '" + s + "'");
  return v;
}

int64_t parse_int(const std::string& s, const std::string& context) {
  int64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw DataError(context + ": invalid integer '" + s + "'");
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string join_csv(const std::vector<std::string>& fields) {
  std::string out;
  for (size_t i = 0; i < fields.size(); ++i) {
    if (fields[i].find(',') != std::string::npos ||
        fields[i].find('\n') != std::string::npos)
      throw DataError("csv field contains a separator: '" + fields[i] + "'");
    if (i) out.push_back(',');
    out += fields[i];
  }
  return out;
}

CsvTable read_csv(const std::string& path,
                  const std::vector<std::string>& expected_header) {
  const std::string text = read_file(path);
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (line_no == 1) {
      if (fields != expected_header)
        throw DataError(path + ": header mismatch; expected '" +
                        join_csv(expected_header) + "', got '" + line + "'");
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != expected_header.size())
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(expected_header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    table.rows.push_back(std::move(fields));
  }
  if (table.header.empty())
    throw DataError(path + ": empty file, header row required");
  return table;
}

}  // namespace prefopt::io
