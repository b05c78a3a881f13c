#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "volley/errors.hpp"

namespace volley {

// Dense row-major matrix. Deliberately minimal: storage, CSV round trip.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), a_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t r = 0;
    for (const auto& row : rows) {
      if (row.size() != m.cols_) throw ShapeMismatch("from_rows: ragged initializer");
      std::size_t c = 0;
      for (double v : row) m(r, c++) = v;
      ++r;
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return a_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return a_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return a_[r * cols_ + c]; }

  const std::vector<double>& values() const { return a_; }
  std::vector<double>& values() { return a_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

  static Matrix read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile("cannot open " + path);
    Matrix m;
    std::string line;
    std::size_t lineno = 0;
    std::vector<double> row;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() && in.peek() == EOF) break;  // tolerate one trailing newline
      row.clear();
      const char* p = line.c_str();
      while (true) {
        char* end = nullptr;
        double v = std::strtod(p, &end);
        if (end == p)
          throw ParseError(path + ":" + std::to_string(lineno) + ": expected a number");
        row.push_back(v);
        p = end;
        while (*p == ' ' || *p == '\t') ++p;
        if (*p == ',') {
          ++p;
          continue;
        }
        if (*p == '\0' || *p == '\r') break;
        throw ParseError(path + ":" + std::to_string(lineno) + ": unexpected character '" +
                         std::string(1, *p) + "'");
      }
      if (m.rows_ == 0) {
        m.cols_ = row.size();
      } else if (row.size() != m.cols_) {
        throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                         std::to_string(m.cols_) + " columns, got " + std::to_string(row.size()));
      }
      m.a_.insert(m.a_.end(), row.begin(), row.end());
      ++m.rows_;
    }
    if (m.rows_ == 0) throw ParseError(path + ": empty matrix");
    return m;
  }

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw MissingFile("cannot open " + path + " for writing");
    out << to_csv();
    if (!out) throw Error("write failed: " + path);
  }

  std::string to_csv() const {
    std::ostringstream os;
    char buf[64];
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t c = 0; c < cols_; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", a_[r * cols_ + c]);
        os << buf << (c + 1 < cols_ ? "," : "");
      }
      os << '\n';
    }
    return os.str();
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> a_;
};

}  // namespace volley
