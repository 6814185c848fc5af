#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace jumpfbsde {

/// Round-trip text form of a double (17 significant digits).
std::string format_double(double v);

/// Buffered CSV table written in one piece.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> columns);

  void row(const std::vector<double>& values);
  std::size_t rows() const { return rows_; }
  /// Writes to path via a temporary file and rename.
  void save(const std::filesystem::path& path) const;

 private:
  std::size_t n_cols_;
  std::size_t rows_ = 0;
  std::string text_;
};

/// Writes text to path atomically (temporary sibling, then rename).
void write_atomic(const std::filesystem::path& path, const std::string& text);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace jumpfbsde
