#include "dynembed/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace dynembed {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> tokens(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == ',') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::string> split_rows(const std::string& s) {
  std::vector<std::string> rows;
  std::stringstream ss(s);
  std::string row;
  while (std::getline(ss, row, ';')) {
    if (!trim(row).empty()) rows.push_back(row);
  }
  return rows;
}

bool to_double(const std::string& s, double& out) {
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end != s.c_str() && *end == '\0';
}

bool to_int(const std::string& s, long long& out) {
  char* end = nullptr;
  out = std::strtoll(s.c_str(), &end, 10);
  return end != s.c_str() && *end == '\0';
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& source) {
  KeyValueConfig cfg;
  cfg.source_ = source;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, lineno, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(source, lineno, "empty key");
    if (!cfg.entries_.emplace(key, Entry{value, lineno}).second) {
      throw ParseError(source, lineno, "duplicate key '" + key + "'");
    }
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  return parse(in, path.string());
}

void KeyValueConfig::fail(const std::string& key, const std::string& what) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw DataError(source_ + ": missing key '" + key + "'");
  throw ParseError(source_, it->second.line, "key '" + key + "': " + what);
}

const std::string& KeyValueConfig::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) fail(key, "missing");
  return it->second.value;
}

std::string KeyValueConfig::get_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key) const {
  double v = 0.0;
  if (!to_double(get(key), v)) fail(key, "not a number");
  return v;
}

double KeyValueConfig::get_double_or(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long long KeyValueConfig::get_int(const std::string& key) const {
  long long v = 0;
  if (!to_int(get(key), v)) fail(key, "not an integer");
  return v;
}

long long KeyValueConfig::get_int_or(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

std::vector<double> KeyValueConfig::get_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& tok : tokens(get(key))) {
    double v = 0.0;
    if (!to_double(tok, v)) fail(key, "'" + tok + "' is not a number");
    out.push_back(v);
  }
  return out;
}

Matrix KeyValueConfig::get_matrix(const std::string& key) const {
  const auto rows = split_rows(get(key));
  std::vector<std::vector<double>> values;
  for (const auto& row : rows) {
    std::vector<double> r;
    for (const auto& tok : tokens(row)) {
      double v = 0.0;
      if (!to_double(tok, v)) fail(key, "'" + tok + "' is not a number");
      r.push_back(v);
    }
    if (!values.empty() && r.size() != values.front().size()) fail(key, "ragged matrix rows");
    values.push_back(std::move(r));
  }
  if (values.empty()) fail(key, "empty matrix");
  Matrix m(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(values.front().size()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (std::size_t j = 0; j < values[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i][j];
  }
  return m;
}

std::vector<std::vector<long long>> KeyValueConfig::get_int_rows(const std::string& key) const {
  std::vector<std::vector<long long>> out;
  for (const auto& row : split_rows(get(key))) {
    std::vector<long long> r;
    for (const auto& tok : tokens(row)) {
      long long v = 0;
      if (!to_int(tok, v)) fail(key, "'" + tok + "' is not an integer");
      r.push_back(v);
    }
    out.push_back(std::move(r));
  }
  return out;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) { entries_[key] = Entry{value, 0}; }

std::string KeyValueConfig::canonical() const {
  std::string out;
  for (const auto& [key, entry] : entries_) out += key + " = " + entry.value + "\n";
  return out;
}

}  // namespace dynembed
