#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "memmamba/errors.hpp"

namespace memmamba::csv {

/// Shortest round-trip decimal form of a double ("%.17g" trimmed), so equal
/// values always serialise to identical bytes.
std::string fmt(double v);

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path);
  void row(std::span<const std::string> fields);
  void row(std::initializer_list<std::string> fields);

 private:
  std::ofstream os_;
};

/// Read back a CSV written by Writer (no quoting/escaping in this project).
std::vector<std::vector<std::string>> read(const std::filesystem::path& path);

}  // namespace memmamba::csv
