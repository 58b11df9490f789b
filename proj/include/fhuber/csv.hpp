#pragma once

#include "fhuber/core.hpp"

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace fhuber {

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double v)
{
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct Dataset {
  ProblemData data;
  std::string response;
  std::vector<std::string> feature_names;
};

namespace detail {

inline std::string_view trim(std::string_view s)
{
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line)
{
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool parse_number(std::string_view s, double& out)
{
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace detail

/// Parses a header-led numeric CSV. The column named `response` becomes y; every other column is a
/// feature in file order. Errors name the file line and column of the first bad cell.
inline Dataset parse_csv(std::istream& in, const std::string& response = "y", const std::string& source = "<csv>")
{
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) { throw CsvError(source + ": " + msg); };

  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      have_header = true;
      break;
    }
  }
  if (!have_header) fail("empty file (no header row)");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  std::vector<std::string> names;
  for (auto f : detail::split_commas(line)) names.emplace_back(f);
  std::ptrdiff_t resp_col = -1;
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (names[c] != response) continue;
    if (resp_col >= 0) fail("response column '" + response + "' appears more than once");
    resp_col = static_cast<std::ptrdiff_t>(c);
  }
  if (resp_col < 0) fail("no response column named '" + response + "' in header");
  if (names.size() < 3) fail("need at least 2 feature columns besides the response");

  std::vector<double> values;
  std::size_t rows = 0;
  const std::size_t cols = names.size();
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_commas(line);
    if (fields.size() != cols)
      fail("line " + std::to_string(line_no) + ": expected " + std::to_string(cols) + " fields, found " +
           std::to_string(fields.size()));
    ++rows;
    for (std::size_t c = 0; c < cols; ++c) {
      double v = 0.0;
      if (!detail::parse_number(fields[c], v))
        fail("line " + std::to_string(line_no) + " (data row " + std::to_string(rows) + "), column " +
             std::to_string(c + 1) + " '" + names[c] + "': " +
             (fields[c].empty() ? std::string("missing value") : "non-numeric value '" + std::string(fields[c]) + "'"));
      values.push_back(v);
    }
  }
  if (rows == 0) fail("header present but no data rows");

  const auto n = static_cast<Eigen::Index>(rows);
  const auto p = static_cast<Eigen::Index>(cols - 1);
  Matrix X(n, p);
  Vector y(n);
  std::vector<std::string> features;
  for (std::size_t c = 0; c < cols; ++c)
    if (static_cast<std::ptrdiff_t>(c) != resp_col) features.push_back(names[c]);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index j = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = values[static_cast<std::size_t>(i) * cols + c];
      if (static_cast<std::ptrdiff_t>(c) == resp_col)
        y[i] = v;
      else
        X(i, j++) = v;
    }
  }
  return {ProblemData(std::move(X), std::move(y)), response, std::move(features)};
}

inline Dataset load_dataset(const std::filesystem::path& path, const std::string& response = "y")
{
  std::ifstream in(path);
  if (!in) throw CsvError(path.string() + ": cannot open for reading");
  return parse_csv(in, response, path.string());
}

/// ProblemData from a CSV file with a named response column.
inline ProblemData load_csv(const std::filesystem::path& path, const std::string& response = "y")
{
  return load_dataset(path, response).data;
}

/// Header "y,x1,...,xp" (or the given names), shortest round-trip formatting.
inline void write_csv(std::ostream& os, const ProblemData& data, const std::string& response = "y",
                      const std::vector<std::string>& feature_names = {})
{
  if (!feature_names.empty() && static_cast<Eigen::Index>(feature_names.size()) != data.p())
    throw std::invalid_argument("write_csv: feature name count does not match p");
  os << response;
  for (Eigen::Index j = 0; j < data.p(); ++j)
    os << ',' << (feature_names.empty() ? "x" + std::to_string(j + 1) : feature_names[static_cast<std::size_t>(j)]);
  os << '\n';
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    os << format_double(data.y()[i]);
    for (Eigen::Index j = 0; j < data.p(); ++j) os << ',' << format_double(data.X()(i, j));
    os << '\n';
  }
}

inline void save_csv(const std::filesystem::path& path, const ProblemData& data, const std::string& response = "y",
                     const std::vector<std::string>& feature_names = {})
{
  std::ofstream out(path);
  if (!out) throw CsvError(path.string() + ": cannot open for writing");
  write_csv(out, data, response, feature_names);
  if (!out) throw CsvError(path.string() + ": write failed");
}

/// Single-column vector file "index,<name>" with 1-based indices.
inline void save_vector_csv(const std::filesystem::path& path, const Vector& v, const std::string& name)
{
  std::ofstream out(path);
  if (!out) throw CsvError(path.string() + ": cannot open for writing");
  out << "index," << name << '\n';
  for (Eigen::Index i = 0; i < v.size(); ++i) out << (i + 1) << ',' << format_double(v[i]) << '\n';
  if (!out) throw CsvError(path.string() + ": write failed");
}

/// Reads the second column of an "index,<name>" file.
inline Vector load_vector_csv(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in) throw CsvError(path.string() + ": cannot open for reading");
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> vals;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto f = detail::split_commas(line);
    double v = 0.0;
    if (f.size() < 2 || !detail::parse_number(f[1], v))
      throw CsvError(path.string() + ": line " + std::to_string(line_no) + ": expected 'index,value'");
    vals.push_back(v);
  }
  return Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

}  // namespace fhuber
