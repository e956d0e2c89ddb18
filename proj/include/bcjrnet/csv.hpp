#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace bcjrnet {

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);

class CsvError : public std::runtime_error {
 public:
  CsvError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Minimal comma-separated reader: header row, no quoting.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in);

  /// False if the input had no header line at all.
  bool has_header() const { return !header_.empty(); }
  const std::vector<std::string>& header() const { return header_; }
  /// Column position by name; throws CsvError if missing.
  std::size_t column(const std::string& name) const;

  /// Reads the next non-blank row. Returns false at end of input.
  bool next(std::vector<std::string>& fields);
  std::size_t line() const { return line_; }

  double parse_double(const std::string& field) const;
  long long parse_int(const std::string& field) const;

 private:
  std::istream& in_;
  std::vector<std::string> header_;
  std::size_t line_ = 0;
};

}  // namespace bcjrnet
