#include "tprobe/core/table_io.hpp"

#include "tprobe/core/errors.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace tprobe {

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, out);
  return res.ec == std::errc{} && res.ptr == end;
}

}  // namespace

std::string format_real(double v) { return fmt::format("{}", v); }

std::string labeled_csv_text(const LabeledRows& rows) {
  if (static_cast<std::size_t>(rows.values.rows()) != rows.ids.size()) {
    throw DataError("labeled rows: id count differs from row count");
  }
  fmt::memory_buffer out;
  fmt::format_to(std::back_inserter(out), "token_id");
  for (Eigen::Index c = 0; c < rows.values.cols(); ++c) {
    fmt::format_to(std::back_inserter(out), ",c{}", c);
  }
  out.push_back('\n');
  for (std::size_t i = 0; i < rows.ids.size(); ++i) {
    fmt::format_to(std::back_inserter(out), "{}", rows.ids[i]);
    for (Eigen::Index c = 0; c < rows.values.cols(); ++c) {
      fmt::format_to(std::back_inserter(out), ",{}", rows.values(static_cast<Eigen::Index>(i), c));
    }
    out.push_back('\n');
  }
  return fmt::to_string(out);
}

void write_labeled_csv(const std::filesystem::path& path, const LabeledRows& rows) {
  write_file_atomic(path, labeled_csv_text(rows));
}

LabeledRows read_labeled_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open " + path.string());
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError(path.string() + ": empty file");
  }
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  const auto header = split_commas(line);
  if (header.empty() || header[0] != "token_id") {
    throw DataError(path.string() + ": header must start with token_id");
  }
  const std::size_t cols = header.size() - 1;
  std::vector<std::uint32_t> ids;
  std::vector<double> flat;
  std::unordered_set<std::uint32_t> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    const auto fields = split_commas(line);
    if (fields.size() != cols + 1) {
      throw DataError(fmt::format("{}:{}: expected {} fields, got {}", path.string(), lineno, cols + 1, fields.size()));
    }
    std::uint32_t id = 0;
    if (!parse_number(fields[0], id)) {
      throw DataError(fmt::format("{}:{}: bad token id '{}'", path.string(), lineno, fields[0]));
    }
    if (!seen.insert(id).second) {
      throw DataError(fmt::format("{}:{}: duplicate token id {}", path.string(), lineno, id));
    }
    ids.push_back(id);
    for (std::size_t c = 1; c <= cols; ++c) {
      double v = 0.0;
      if (!parse_number(fields[c], v) || !std::isfinite(v)) {
        throw DataError(fmt::format("{}:{}: non-finite or malformed value '{}'", path.string(), lineno, fields[c]));
      }
      flat.push_back(v);
    }
  }
  LabeledRows rows;
  rows.ids = std::move(ids);
  rows.values.resize(static_cast<Eigen::Index>(rows.ids.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.ids.size(); ++i) {
    for (std::size_t c = 0; c < cols; ++c) {
      rows.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = flat[i * cols + c];
    }
  }
  return rows;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw DataError("cannot write " + tmp.string());
    }
    out << text;
    out.flush();
    if (!out) {
      throw DataError("write failed for " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace tprobe
