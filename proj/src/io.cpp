#include "mivi/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace mivi {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n\"");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\"");
  return s.substr(first, last - first + 1);
}

}  // namespace

CsvTable parse_csv(std::istream& in, const std::string& source) {
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw CsvError(source + ": empty file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  for (auto& h : split_line(line)) table.header.push_back(trim(h));
  const std::size_t ncol = table.header.size();

  std::vector<double> values;
  std::size_t nrow = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != ncol) {
      throw CsvError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(ncol) +
                     " columns, found " + std::to_string(cells.size()));
    }
    for (const auto& c : cells) {
      const std::string t = trim(c);
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(t, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (t.empty() || used != t.size()) {
        throw CsvError(source + ":" + std::to_string(lineno) + ": malformed number '" + t + "'");
      }
      values.push_back(v);
    }
    ++nrow;
  }
  table.rows.resize(static_cast<Eigen::Index>(nrow), static_cast<Eigen::Index>(ncol));
  for (std::size_t i = 0; i < nrow; ++i) {
    for (std::size_t j = 0; j < ncol; ++j) {
      table.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * ncol + j];
    }
  }
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CsvError(path + ": cannot open");
  return parse_csv(in, path);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(std::ostream& out, const std::vector<std::string>& header, const Mat& rows) {
  if (static_cast<Eigen::Index>(header.size()) != rows.cols()) {
    throw std::invalid_argument("write_csv: header has " + std::to_string(header.size()) +
                                " names for " + std::to_string(rows.cols()) + " columns");
  }
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      out << (j ? "," : "") << format_double(rows(i, j));
    }
    out << '\n';
  }
}

void write_csv(const std::string& path, const std::vector<std::string>& header, const Mat& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  write_csv(out, header, rows);
  if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace mivi
