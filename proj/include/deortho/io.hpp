#pragma once

// CSV output with `#` comment headers, file hashing and the run manifest.

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "deortho/errors.hpp"

namespace deortho {

using Json = nlohmann::ordered_json;

/// One CSV cell: real numbers print as %.12e, integers verbatim.
using Cell = std::variant<double, long>;

inline std::string format_cell(const Cell& c) {
  if (std::holds_alternative<long>(c)) return std::to_string(std::get<long>(c));
  const double v = std::get<double>(c);
  if (!std::isfinite(v)) throw StabilityError("non-finite value in output");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12e", v == 0.0 ? 0.0 : v);
  return buf;
}

/// Schema-versioned CSV file. Comment lines first, then the column header.
class CsvWriter {
public:
  CsvWriter(const std::filesystem::path& path, const std::string& schema,
            const std::vector<std::string>& comments, const std::vector<std::string>& columns)
      : path_(path), out_(path, std::ios::binary), width_(columns.size()) {
    if (!out_) throw ConfigError("cannot write '" + path.string() + "'");
    out_ << "# schema: " << schema << "\n";
    for (const auto& c : comments) out_ << "# " << c << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
    out_ << "\n";
  }

  void row(const std::vector<Cell>& cells) {
    if (cells.size() != width_) throw InvalidArgument("CSV row width mismatch in " + path_.string());
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << format_cell(cells[i]);
    out_ << "\n";
  }

  const std::filesystem::path& path() const { return path_; }

private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t width_;
};

/// Lower-case hex SHA-256 of a file's bytes.
inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot read '" + path.string() + "' for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw InvalidArgument("SHA-256 unavailable");
  }
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

/// Writes `j` with two-space indentation and a trailing newline.
inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

/// {"file name": sha256} for every path, relative to `root`.
inline Json hash_files(const std::filesystem::path& root, const std::vector<std::filesystem::path>& files) {
  Json out = Json::object();
  for (const auto& f : files) out[std::filesystem::relative(f, root).generic_string()] = sha256_file(f);
  return out;
}

} // namespace deortho
