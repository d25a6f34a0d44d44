#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "gmc/datasets.hpp"
#include "gmc/error.hpp"

namespace gmc {

/// Label column selector: a header name or a zero-based index.
using ColumnRef = std::variant<std::string, std::size_t>;

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cell.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(ch);
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view text, double& out) {
  text = trim(text);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

inline std::string cell_location(std::size_t line, std::size_t column) {
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

}  // namespace detail

/// Parses CSV text. Labels are re-encoded to 0..C-1 in order of first
/// appearance; the original label strings become `class_names`.
inline Dataset parse_csv(std::istream& in, const ColumnRef& label_column, bool has_header) {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> row_lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (has_header && header.empty() && rows.empty()) {
      for (auto& c : cells) c = std::string(detail::trim(c));
      header = std::move(cells);
      continue;
    }
    rows.push_back(std::move(cells));
    row_lines.push_back(line_no);
  }
  if (rows.empty()) throw ParseError("", "CSV contains no data rows");

  const std::size_t width = has_header ? header.size() : rows.front().size();
  std::size_t label_index = 0;
  if (const auto* name = std::get_if<std::string>(&label_column)) {
    if (!has_header) throw ParseError("", "label column '" + *name + "' given by name but the file has no header");
    const auto it = std::find(header.begin(), header.end(), *name);
    if (it == header.end()) throw ParseError("line 1", "label column '" + *name + "' not found in header");
    label_index = static_cast<std::size_t>(it - header.begin());
  } else {
    label_index = std::get<std::size_t>(label_column);
    if (label_index >= width)
      throw ParseError("", "label column index " + std::to_string(label_index) + " out of range for " +
                               std::to_string(width) + " columns");
  }
  if (width < 2) throw ParseError("", "CSV needs at least one feature column besides the label");

  Dataset ds;
  ds.features = Matrix(rows.size(), width - 1);
  ds.labels.reserve(rows.size());
  std::unordered_map<std::string, std::size_t> codes;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    if (cells.size() != width)
      throw ParseError(detail::cell_location(row_lines[r], cells.size()),
                       "expected " + std::to_string(width) + " cells, found " + std::to_string(cells.size()));
    std::size_t out_col = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (c == label_index) continue;
      double v = 0.0;
      if (!detail::parse_double(cells[c], v)) {
        std::string column = std::to_string(c);
        if (has_header) column += " ('" + header[c] + "')";
        throw ParseError("line " + std::to_string(row_lines[r]) + ", column " + column,
                         "non-numeric feature value '" + cells[c] + "'");
      }
      ds.features(r, out_col++) = v;
    }
    const std::string key(detail::trim(cells[label_index]));
    auto [it, inserted] = codes.emplace(key, ds.class_names.size());
    if (inserted) ds.class_names.push_back(key);
    ds.labels.push_back(it->second);
  }
  ds.class_count = ds.class_names.size();
  for (std::size_t c = 0; c < width; ++c) {
    if (c == label_index) continue;
    ds.feature_names.push_back(has_header ? header[c] : "x" + std::to_string(ds.feature_names.size()));
  }
  return ds;
}

inline Dataset load_csv(const std::string& path, const ColumnRef& label_column, bool has_header) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, "cannot open file");
  try {
    return parse_csv(in, label_column, has_header);
  } catch (const ParseError& e) {
    throw ParseError(e.location().empty() ? path : path + ": " + e.location(), e.message());
  }
}

/// Writes features followed by a trailing `label` column, with a header.
/// Class names are written when present, otherwise integer indices.
inline void write_csv(std::ostream& out, const Dataset& ds) {
  out.precision(17);
  for (std::size_t c = 0; c < ds.dim(); ++c)
    out << (ds.feature_names.empty() ? "x" + std::to_string(c) : ds.feature_names[c]) << ',';
  out << "label\n";
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t c = 0; c < ds.dim(); ++c) out << ds.features(r, c) << ',';
    if (ds.class_names.empty())
      out << ds.labels[r] << '\n';
    else
      out << ds.class_names[ds.labels[r]] << '\n';
  }
}

}  // namespace gmc
