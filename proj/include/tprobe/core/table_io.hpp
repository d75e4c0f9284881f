#pragma once

#include "tprobe/core/linalg.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tprobe {

/// Rows of real coordinates keyed by token id.
struct LabeledRows {
  std::vector<std::uint32_t> ids;
  Matrix values;  // ids.size() x columns

  std::size_t size() const noexcept { return ids.size(); }
};

/// Shortest round-trip decimal form of a double.
std::string format_real(double v);

/// Writes `token_id,c0,...,c{K-1}` followed by one LF-terminated line per
/// row, in the order given.
void write_labeled_csv(const std::filesystem::path& path, const LabeledRows& rows);
std::string labeled_csv_text(const LabeledRows& rows);

/// Reads the format written by write_labeled_csv. Requires the header, a
/// consistent column count, unique ids and finite values; throws DataError
/// with the offending line otherwise.
LabeledRows read_labeled_csv(const std::filesystem::path& path);

/// Writes `text` to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

}  // namespace tprobe
