#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace vigil::cli {

// Shortest round-trip text; NaN and infinities become "NA".
std::string num(double v);
std::string fixed(double v, int digits);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t column(std::string_view name) const;
};

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

// Files directly under dir with the given extension, sorted by name.
std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir, std::string_view extension);

}  // namespace vigil::cli
