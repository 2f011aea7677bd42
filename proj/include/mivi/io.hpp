#pragma once

#include "mivi/tensor.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace mivi {

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CsvTable {
  std::vector<std::string> header;
  Mat rows;
};

/// Parses a comma-separated file with a header row of column names and numeric
/// cells. Throws CsvError naming the line on a malformed row.
CsvTable read_csv(const std::string& path);
CsvTable parse_csv(std::istream& in, const std::string& source = "<stream>");

/// Writes a header row and one line per matrix row, 17 significant digits.
void write_csv(const std::string& path, const std::vector<std::string>& header, const Mat& rows);
void write_csv(std::ostream& out, const std::vector<std::string>& header, const Mat& rows);

/// Shortest round-trip-exact decimal for a double ("%.17g").
std::string format_double(double v);

}  // namespace mivi
