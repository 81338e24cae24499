#pragma once

#include <map>
#include <set>
#include <string>

namespace g2k::config {

// Fully resolved key=value run configuration. Every key has a default;
// unknown keys are rejected so typos surface as usage errors.
class RunConfig {
 public:
  RunConfig();

  void set(const std::string& key, const std::string& value);
  // key=value lines, '#' comments.
  void merge_text(const std::string& text);
  void merge_file(const std::string& path);

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  bool is_default(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }

  // Sorted "key=value\n" lines; input of hash().
  std::string serialize() const;
  // 16 hex digits, FNV-1a 64 over serialize().
  std::string hash() const;

  static const std::map<std::string, std::string>& defaults();

 private:
  std::map<std::string, std::string> values_;
};

std::string fnv1a_hex(const std::string& bytes);

}  // namespace g2k::config
