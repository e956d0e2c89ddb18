#include "bcjrnet/csv.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <system_error>

namespace bcjrnet {
namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

}  // namespace

std::string format_double(double v) {
  if (v == 0.0) return "0";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CsvReader::CsvReader(std::istream& in) : in_(in) {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (!blank(line)) {
      header_ = split(line);
      break;
    }
  }
}

std::size_t CsvReader::column(const std::string& name) const {
  for (std::size_t i = 0; i < header_.size(); ++i)
    if (header_[i] == name) return i;
  throw CsvError(1, "missing column '" + name + "'");
}

bool CsvReader::next(std::vector<std::string>& fields) {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (blank(line)) continue;
    fields = split(line);
    if (fields.size() != header_.size())
      throw CsvError(line_, "expected " + std::to_string(header_.size()) + " fields, got " +
                                std::to_string(fields.size()));
    return true;
  }
  return false;
}

double CsvReader::parse_double(const std::string& field) const {
  double v = 0.0;
  const char* end = field.data() + field.size();
  auto res = std::from_chars(field.data(), end, v);
  if (field.empty() || res.ec != std::errc() || res.ptr != end || !std::isfinite(v))
    throw CsvError(line_, "malformed number '" + field + "'");
  return v;
}

long long CsvReader::parse_int(const std::string& field) const {
  long long v = 0;
  const char* end = field.data() + field.size();
  auto res = std::from_chars(field.data(), end, v);
  if (field.empty() || res.ec != std::errc() || res.ptr != end)
    throw CsvError(line_, "malformed integer '" + field + "'");
  return v;
}

}  // namespace bcjrnet
