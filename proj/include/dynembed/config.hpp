#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dynembed/common.hpp"

namespace dynembed {

// Plain-text "key = value" configuration. '#' starts a comment; keys are
// unique. Matrices are written row by row with ';' between rows:
//
//   B1 = 0.08 0.02; 0.02 0.20
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& source = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.contains(key); }
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;

  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int_or(const std::string& key, long long fallback) const;
  std::vector<double> get_list(const std::string& key) const;
  Matrix get_matrix(const std::string& key) const;
  std::vector<std::vector<long long>> get_int_rows(const std::string& key) const;

  void set(const std::string& key, const std::string& value);

  // Sorted "key = value" lines; stable input for config hashes.
  std::string canonical() const;
  const std::string& source() const noexcept { return source_; }

 private:
  struct Entry {
    std::string value;
    std::size_t line = 0;
  };
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

  std::map<std::string, Entry> entries_;
  std::string source_;
};

}  // namespace dynembed
