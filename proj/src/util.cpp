#include "icrl/util.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace icrl {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "' for read");
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for write");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw FormatError("write failed for '" + path + "'");
}

bool file_exists(const std::string& path) {
  return std::filesystem::exists(path);
}

CsvWriter::CsvWriter(std::vector<std::string> header)
    : width_(header.size()) {
  if (header.empty()) throw ContractError("CsvWriter: empty header");
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i].find(',') != std::string::npos)
      throw ContractError("CsvWriter: comma in field");
    text_ += header[i];
    text_ += (i + 1 < header.size()) ? "," : "\n";
  }
}

void CsvWriter::add_row(const std::vector<std::string>& fields) {
  if (fields.size() != width_)
    throw ContractError("CsvWriter: row width mismatch");
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i].find(',') != std::string::npos)
      throw ContractError("CsvWriter: comma in field");
    text_ += fields[i];
    text_ += (i + 1 < fields.size()) ? "," : "\n";
  }
}

void CsvWriter::save(const std::string& path) const {
  write_text_file(path, text_);
}

}  // namespace icrl
