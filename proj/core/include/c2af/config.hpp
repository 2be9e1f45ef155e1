#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace c2af {

// Flat "key = value" text, one pair per line, '#' starts a comment. Keys are
// unique; duplicates are rejected so typos surface instead of silently
// shadowing earlier values.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_text(const std::string& text);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  std::vector<std::string> keys() const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  // Comma-separated list of non-negative integers, e.g. "64,128,64".
  std::vector<std::size_t> get_size_list(const std::string& key,
                                         const std::vector<std::size_t>& fallback) const;

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace c2af
