#pragma once

// "g2k-ckpt-v1" text checkpoints.
//
//   g2k-ckpt-v1
//   config_hash <16 hex>
//   config <key> <value>            one line per key, sorted, value may be empty
//   epoch <n>
//   loss_history <count> <v1> <v2> ...
//   param <name> <rows> <cols> <init_spec> <trainable 0|1>
//   <row-major values, one matrix row per line>
//   end
//
// Numbers use the shortest round-trip decimal form, so load(save(x))
// reproduces every double bit for bit.

#include <iosfwd>
#include <string>
#include <vector>

#include "g2k/autodiff.hpp"
#include "g2k/config.hpp"
#include "g2k/sri.hpp"

namespace g2k::checkpoint {

inline constexpr const char* kFormatTag = "g2k-ckpt-v1";

struct StoredParam {
  std::string name;
  ad::InitSpec init;
  bool trainable = true;
  ad::Matrix values;
};

struct Checkpoint {
  config::RunConfig config;
  int epoch = 0;
  std::vector<double> loss_history;
  std::vector<StoredParam> params;
};

void write(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read(std::istream& in);
void save(const std::string& path, const Checkpoint& ckpt);
Checkpoint load(const std::string& path);

Checkpoint capture(const sri::G2KModel& model, const config::RunConfig& config,
                   int epoch, const std::vector<double>& loss_history);
// Copies stored values into a model built from the same config; names and
// shapes must match exactly.
void restore(sri::G2KModel& model, const Checkpoint& ckpt);

}  // namespace g2k::checkpoint
