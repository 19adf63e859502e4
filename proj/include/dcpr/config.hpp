#pragma once

// Flat `key = value` configuration files and the resolved training settings.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dcpr/denoisers.hpp"

namespace dcpr {

struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

// Blank lines and `#` comments are skipped; anything else must be `key = value`.
std::vector<KeyValue> parse_key_values(std::string_view text, const std::string& source);
std::string read_text_file(const std::filesystem::path& path);

long long parse_int(const std::string& key, const std::string& value);
std::uint64_t parse_u64(const std::string& key, const std::string& value);
double parse_double(const std::string& key, const std::string& value);
std::vector<int> parse_int_list(const std::string& key, const std::string& value);

enum class Mode { kDcpr, kDcprT };
enum class Optimizer { kSgd, kAdam };
enum class Precision { kF32, kF64 };

std::string to_string(Mode m);
std::string to_string(Optimizer o);
std::string to_string(Precision p);
std::string to_string(LossForm f);

struct TrainConfig {
  int max_step = 1024;        // T
  int reverse_steps = 16;     // T_R
  double w = 1e-4;
  double eta = 0.002;         // learning rate
  int dim = 64;
  double lambda = kDefaultLambda;
  double gamma_cat = kDefaultGammaCat;
  double dropout = 0.2;
  int batch_size = 16;
  int max_epochs = 200;
  int patience = 10;
  int negatives = 64;
  std::uint64_t seed = 1;
  int history_window = 200;
  int max_seq_len = 200;
  Optimizer optimizer = Optimizer::kSgd;
  LossForm loss = LossForm::kPrinted;
  Precision precision = Precision::kF32;
  Mode mode = Mode::kDcpr;
  double region_fraction = 0.5;
  int regions = 5;
  int candidates = 200;       // H
  double clip_km = 100.0;
  double clip_hours = 168.0;

  // Throws ConfigError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  // Canonical `key = value` listing of every field, in a fixed order.
  std::string format() const;
  void validate() const;
  GapClip clip() const { return {clip_km, clip_hours}; }
};

bool is_train_config_key(const std::string& key);
TrainConfig parse_train_config(std::string_view text, const std::string& source = "<config>");

}  // namespace dcpr
