#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "plate_support/errors.hpp"
#include "plate_support/grid.hpp"

namespace plate_support {

/// %.17g, so a dump reads back bit-exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Plain-text matrix: ny lines of nx values, row j = constant y, first line y = origin.
inline void write_matrix(std::ostream& os, const ScalarField2D& u) {
  const auto& g = u.grid();
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) os << (i ? " " : "") << format_double(u[g.index(i, j)]);
    os << '\n';
  }
}

/// Reads whitespace- or comma-separated rows. Blank lines and '#' lines are skipped.
inline std::vector<std::vector<double>> read_table(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    for (char& c : line)
      if (c == ',' || c == ';' || c == '\t' || c == '\r') c = ' ';
    if (line.find_first_not_of(' ') == std::string::npos || line[line.find_first_not_of(' ')] == '#') continue;
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ConfigError("line " + std::to_string(lineno) + ": '" + tok + "' is not a number");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Nodal field from a matrix file; the shape must match the grid.
inline ScalarField2D read_matrix(std::istream& is, const Grid2D& g) {
  const auto rows = read_table(is);
  if (static_cast<int>(rows.size()) != g.ny())
    throw ConfigError("matrix has " + std::to_string(rows.size()) + " rows, grid has ny = " + std::to_string(g.ny()));
  ScalarField2D u(g);
  for (int j = 0; j < g.ny(); ++j) {
    if (static_cast<int>(rows[j].size()) != g.nx())
      throw ConfigError("matrix row " + std::to_string(j) + " has " + std::to_string(rows[j].size()) +
                        " values, grid has nx = " + std::to_string(g.nx()));
    for (int i = 0; i < g.nx(); ++i) u[g.index(i, j)] = rows[j][i];
  }
  return u;
}

inline ScalarField2D read_matrix_file(const std::string& path, const Grid2D& g) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path);
  return read_matrix(is, g);
}

/// Long-format CSV: x,y,value per node.
inline void write_field_csv(std::ostream& os, const ScalarField2D& u, const std::string& name = "u") {
  const auto& g = u.grid();
  os << "x,y," << name << '\n';
  for (int n = 0; n < g.size(); ++n) {
    const auto p = g.position(n);
    os << format_double(p[0]) << ',' << format_double(p[1]) << ',' << format_double(u[n]) << '\n';
  }
}

/// Minimal CSV writer: header once, then rows of doubles or preformatted cells.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
  void add(std::vector<std::string> cells) {
    if (cells.size() != header_.size()) throw ConfigError("csv row width differs from header");
    rows_.push_back(std::move(cells));
  }
  void add_numbers(const std::vector<double>& v) {
    std::vector<std::string> cells;
    for (double x : v) cells.push_back(format_double(x));
    add(std::move(cells));
  }
  std::size_t rows() const { return rows_.size(); }
  void write(std::ostream& os) const {
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t k = 0; k < r.size(); ++k) os << (k ? "," : "") << r[k];
      os << '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace plate_support
