#pragma once

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "volley/errors.hpp"
#include "volley/quadgrad.hpp"

namespace volley {

// libsvm multiclass text format: one sample per line, "label idx:val idx:val"
// with 1-based sparse indices. The loader prepends the all-ones bias column,
// infers d from the largest index seen, min-max normalizes every feature into
// [0,1] (constant columns become 0), and remaps the distinct raw labels to
// 0..c-1 in sorted order.
inline LrDataset load_libsvm(const std::string& path, std::size_t c) {
  std::ifstream in(path);
  if (!in) throw MissingFile("cannot open " + path);

  std::vector<double> raw_labels;
  std::vector<std::vector<std::pair<std::size_t, double>>> rows;
  std::size_t d = 0;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const char* p = line.c_str();
    while (*p == ' ' || *p == '\t') ++p;
    if (*p == '\0' || *p == '\r') continue;  // blank line

    char* end = nullptr;
    const double label = std::strtod(p, &end);
    if (end == p || (*end != ' ' && *end != '\t' && *end != '\0' && *end != '\r'))
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected a label");
    p = end;

    std::vector<std::pair<std::size_t, double>> entries;
    while (true) {
      while (*p == ' ' || *p == '\t') ++p;
      if (*p == '\0' || *p == '\r') break;
      const long idx = std::strtol(p, &end, 10);
      if (end == p || *end != ':' || idx < 1)
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": expected 1-based index:value");
      p = end + 1;
      const double val = std::strtod(p, &end);
      if (end == p)
        throw ParseError(path + ":" + std::to_string(lineno) + ": expected a feature value");
      p = end;
      entries.emplace_back(static_cast<std::size_t>(idx), val);
      d = std::max(d, static_cast<std::size_t>(idx));
    }
    raw_labels.push_back(label);
    rows.push_back(std::move(entries));
  }
  if (rows.empty()) throw ParseError(path + ": no samples");

  std::vector<double> distinct(raw_labels);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() > c)
    throw LabelOutOfRange(path + ": " + std::to_string(distinct.size()) +
                          " distinct labels exceed " + std::to_string(c) + " classes");

  LrDataset ds;
  ds.c = c;
  ds.X = Matrix(rows.size(), 1 + d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ds.X(i, 0) = 1.0;
    for (const auto& [idx, val] : rows[i]) ds.X(i, idx) = val;
    const auto at = std::lower_bound(distinct.begin(), distinct.end(), raw_labels[i]);
    ds.y.push_back(static_cast<int>(at - distinct.begin()));
  }

  for (std::size_t j = 1; j <= d; ++j) {
    double lo = ds.X(0, j), hi = ds.X(0, j);
    for (std::size_t i = 1; i < ds.X.rows(); ++i) {
      lo = std::min(lo, ds.X(i, j));
      hi = std::max(hi, ds.X(i, j));
    }
    for (std::size_t i = 0; i < ds.X.rows(); ++i)
      ds.X(i, j) = (hi > lo) ? (ds.X(i, j) - lo) / (hi - lo) : 0.0;
  }

  ds.validate();
  return ds;
}

}  // namespace volley
