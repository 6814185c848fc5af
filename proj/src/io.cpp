#include "jumpfbsde/io.hpp"

#include <fstream>

#include <fmt/format.h>

#include "jumpfbsde/errors.hpp"

namespace jumpfbsde {

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

CsvWriter::CsvWriter(std::vector<std::string> columns) : n_cols_(columns.size()) {
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (k) text_ += ',';
    text_ += columns[k];
  }
  text_ += '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != n_cols_) {
    throw Error(fmt::format("csv row has {} values for {} columns", values.size(), n_cols_));
  }
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (k) text_ += ',';
    text_ += format_double(values[k]);
  }
  text_ += '\n';
  ++rows_;
}

void CsvWriter::save(const std::filesystem::path& path) const { write_atomic(path, text_); }

void write_atomic(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError(fmt::format("cannot write '{}'", tmp.string()));
    out << text;
    out.flush();
    if (!out) throw ConfigError(fmt::format("write to '{}' failed", tmp.string()));
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw ConfigError(fmt::format("cannot move '{}' to '{}': {}", tmp.string(), path.string(), ec.message()));
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  write_atomic(path, doc.dump(2) + "\n");
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open '{}'", path.string()));
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("{}: parse error: {}", path.string(), e.what()));
  }
}

}  // namespace jumpfbsde
