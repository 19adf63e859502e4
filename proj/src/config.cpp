#include "dcpr/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "dcpr/error.hpp"

namespace dcpr {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw ConfigError("invalid value '" + value + "' for '" + key + "': expected " + want);
}

}  // namespace

std::vector<KeyValue> parse_key_values(std::string_view text, const std::string& source) {
  std::vector<KeyValue> out;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string body = trim(line);
    if (body.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    KeyValue kv{trim(std::string_view(body).substr(0, eq)),
                trim(std::string_view(body).substr(eq + 1)), line_no};
    if (kv.key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    out.push_back(std::move(kv));
    if (end == text.size()) break;
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

long long parse_int(const std::string& key, const std::string& value) {
  long long v = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || p != value.data() + value.size()) bad_value(key, value, "an integer");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || p != value.data() + value.size()) {
    bad_value(key, value, "a non-negative integer");
  }
  return v;
}

double parse_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || p != value.data() + value.size()) bad_value(key, value, "a number");
  return v;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(static_cast<int>(parse_int(key, trim(item))));
  }
  if (out.empty()) bad_value(key, value, "a comma-separated list of integers");
  return out;
}

std::string to_string(Mode m) { return m == Mode::kDcpr ? "dcpr" : "dcpr_t"; }
std::string to_string(Optimizer o) { return o == Optimizer::kSgd ? "sgd" : "adam"; }
std::string to_string(Precision p) { return p == Precision::kF32 ? "f32" : "f64"; }
std::string to_string(LossForm f) { return f == LossForm::kPrinted ? "printed" : "bce"; }

namespace {

const std::vector<std::string>& train_keys() {
  static const std::vector<std::string> keys = {
      "T",         "T_R",           "w",          "eta",        "dim",
      "lambda",    "gamma_cat",     "dropout",    "batch_size", "max_epochs",
      "patience",  "negatives",     "seed",       "history_window", "max_seq_len",
      "optimizer", "loss",          "precision",  "mode",       "region_fraction",
      "regions",   "candidates",    "clip_km",    "clip_hours"};
  return keys;
}

std::string num(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace

bool is_train_config_key(const std::string& key) {
  for (const auto& k : train_keys())
    if (k == key) return true;
  return false;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  auto as_int = [&] { return static_cast<int>(parse_int(key, value)); };
  if (key == "T") max_step = as_int();
  else if (key == "T_R") reverse_steps = as_int();
  else if (key == "w") w = parse_double(key, value);
  else if (key == "eta") eta = parse_double(key, value);
  else if (key == "dim") dim = as_int();
  else if (key == "lambda") lambda = parse_double(key, value);
  else if (key == "gamma_cat") gamma_cat = parse_double(key, value);
  else if (key == "dropout") dropout = parse_double(key, value);
  else if (key == "batch_size") batch_size = as_int();
  else if (key == "max_epochs") max_epochs = as_int();
  else if (key == "patience") patience = as_int();
  else if (key == "negatives") negatives = as_int();
  else if (key == "seed") seed = parse_u64(key, value);
  else if (key == "history_window") history_window = as_int();
  else if (key == "max_seq_len") max_seq_len = as_int();
  else if (key == "optimizer") {
    if (value == "sgd") optimizer = Optimizer::kSgd;
    else if (value == "adam") optimizer = Optimizer::kAdam;
    else bad_value(key, value, "sgd or adam");
  } else if (key == "loss") {
    if (value == "printed") loss = LossForm::kPrinted;
    else if (value == "bce") loss = LossForm::kBce;
    else bad_value(key, value, "printed or bce");
  } else if (key == "precision") {
    if (value == "f32") precision = Precision::kF32;
    else if (value == "f64") precision = Precision::kF64;
    else bad_value(key, value, "f32 or f64");
  } else if (key == "mode") {
    if (value == "dcpr") mode = Mode::kDcpr;
    else if (value == "dcpr_t") mode = Mode::kDcprT;
    else bad_value(key, value, "dcpr or dcpr_t");
  } else if (key == "region_fraction") region_fraction = parse_double(key, value);
  else if (key == "regions") regions = as_int();
  else if (key == "candidates") candidates = as_int();
  else if (key == "clip_km") clip_km = parse_double(key, value);
  else if (key == "clip_hours") clip_hours = parse_double(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

std::string TrainConfig::format() const {
  std::ostringstream o;
  o << "T = " << max_step << '\n'
    << "T_R = " << reverse_steps << '\n'
    << "w = " << num(w) << '\n'
    << "eta = " << num(eta) << '\n'
    << "dim = " << dim << '\n'
    << "lambda = " << num(lambda) << '\n'
    << "gamma_cat = " << num(gamma_cat) << '\n'
    << "dropout = " << num(dropout) << '\n'
    << "batch_size = " << batch_size << '\n'
    << "max_epochs = " << max_epochs << '\n'
    << "patience = " << patience << '\n'
    << "negatives = " << negatives << '\n'
    << "seed = " << seed << '\n'
    << "history_window = " << history_window << '\n'
    << "max_seq_len = " << max_seq_len << '\n'
    << "optimizer = " << to_string(optimizer) << '\n'
    << "loss = " << to_string(loss) << '\n'
    << "precision = " << to_string(precision) << '\n'
    << "mode = " << to_string(mode) << '\n'
    << "region_fraction = " << num(region_fraction) << '\n'
    << "regions = " << regions << '\n'
    << "candidates = " << candidates << '\n'
    << "clip_km = " << num(clip_km) << '\n'
    << "clip_hours = " << num(clip_hours) << '\n';
  return o.str();
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(max_step >= 2, "T must be >= 2");
  require(reverse_steps >= 1 && reverse_steps <= max_step, "T_R must lie in [1, T]");
  require(w > 0.0 && w < 1.0, "w must lie in (0, 1)");
  require(eta > 0.0, "eta must be positive");
  require(dim >= 1, "dim must be >= 1");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(max_epochs >= 0, "max_epochs must be >= 0");
  require(patience >= 1, "patience must be >= 1");
  require(negatives >= 1, "negatives must be >= 1");
  require(history_window >= 1, "history_window must be >= 1");
  require(max_seq_len >= 3, "max_seq_len must be >= 3");
  require(region_fraction > 0.0 && region_fraction < 1.0, "region_fraction must lie in (0, 1)");
  require(regions >= 1, "regions must be >= 1");
  require(candidates >= 1, "candidates must be >= 1");
  require(clip_km > 0.0 && clip_hours > 0.0, "clip thresholds must be positive");
}

TrainConfig parse_train_config(std::string_view text, const std::string& source) {
  TrainConfig cfg;
  for (const auto& kv : parse_key_values(text, source)) {
    try {
      cfg.set(kv.key, kv.value);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(kv.line) + ": " + e.what());
    }
  }
  return cfg;
}

}  // namespace dcpr
