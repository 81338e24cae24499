#include "g2k/config.hpp"

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "g2k/error.hpp"

namespace g2k::config {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::map<std::string, std::string>& RunConfig::defaults() {
  static const std::map<std::string, std::string> d = {
      {"variant", ""},
      {"obs_len", "8"},
      {"pred_len", "12"},
      {"hidden", "128"},
      {"num_blocks", "4"},
      {"block_skip", "4"},
      {"cell_units", "2"},
      {"embed_x", "16"},
      {"embed_v", "16"},
      {"conv_channels", "16"},
      {"grid_size", "4"},
      {"lambda", "0.0005"},
      {"neighborhood_size", "32"},
      {"window_shift", "1"},
      {"batch_size", "16"},
      {"epochs", "10"},
      {"lr", "0.001"},
      {"optimizer", "adam"},
      {"seed", "0"},
      {"clip_norm", "0"},
      {"tau", "auto"},
      {"mp_tau", "auto"},
      {"self_loops", "true"},
      {"mask_trainable", "true"},
      {"attention", "true"},
      {"static_grid", "true"},
      {"decode", "offsets"},
      {"phi_tanh", "false"},
      {"init_std", "0.01"},
      {"scene_image", ""},
  };
  return d;
}

RunConfig::RunConfig() : values_(defaults()) {}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) {
    fail(ErrorKind::kConfig, "unknown config key '" + key + "'");
  }
  if (value.find('\n') != std::string::npos) {
    fail(ErrorKind::kConfig, "config value for '" + key + "' spans lines");
  }
  it->second = value;
}

void RunConfig::merge_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::kConfig,
           "config line " + std::to_string(line_no) + ": expected key=value");
    }
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::merge_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str());
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    fail(ErrorKind::kConfig, "unknown config key '" + key + "'");
  }
  return it->second;
}

int RunConfig::get_int(const std::string& key) const {
  const auto& s = get(key);
  int v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    fail(ErrorKind::kConfig, "config '" + key + "' is not an integer: '" + s + "'");
  }
  return v;
}

double RunConfig::get_double(const std::string& key) const {
  const auto& s = get(key);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    fail(ErrorKind::kConfig, "config '" + key + "' is not a number: '" + s + "'");
  }
  return v;
}

bool RunConfig::get_bool(const std::string& key) const {
  const auto& s = get(key);
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  fail(ErrorKind::kConfig, "config '" + key + "' is not a boolean: '" + s + "'");
}

bool RunConfig::is_default(const std::string& key) const {
  return get(key) == defaults().at(key);
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::string RunConfig::hash() const { return fnv1a_hex(serialize()); }

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace g2k::config
