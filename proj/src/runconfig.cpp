#include "prlstm/runconfig.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace prlstm::cli {

namespace {

using nlohmann::json;

// Every legal key with its default (compact JSON). Config files and --set
// may only touch keys listed here.
const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> kDefaults = {
      {"task", "\"\""},
      {"out_dir", "\"out\""},
      {"workers", "2"},
      {"preset", "\"\""},
      {"model.variant", "\"pr-lstm\""},
      {"model.d_h", "64"},
      {"model.refine_stages", "1"},
      {"train.steps", "40000"},
      {"train.batch", "128"},
      {"train.lr", "0.001"},
      {"train.clip_norm", "1.0"},
      {"train.seed", "0"},
      {"train.seeds", "1"},
      {"train.train_min", "1"},
      {"train.train_max", "40"},
      {"train.eval_min", "41"},
      {"train.eval_max", "500"},
      {"train.eval_batch", "64"},
      {"bench.variant", "\"pr-lstm\""},
      {"bench.lengths", "[64,128,256,512,1024]"},
      {"bench.batch", "1024"},
      {"bench.repeats", "100"},
      {"bench.warmup", "3"},
      {"bench.threshold_ms", "500.0"},
      {"bench.d_h", "16"},
      {"bench.refine_stages", "1"},
      {"bench.seed", "0"},
      {"gen.count", "10"},
      {"gen.length", "8"},
      {"gen.seed", "0"},
  };
  return kDefaults;
}

json parse_value(const std::string& text) {
  return json::parse(text, nullptr, true);
}

}  // namespace

RunConfig::RunConfig() : values_(default_values()) {
  if (const char* env = std::getenv("PRLSTM_WORKERS")) {
    try {
      values_["workers"] = json(std::stoll(env)).dump();
    } catch (...) {
      throw ConfigError("PRLSTM_WORKERS is not an integer: " + std::string(env));
    }
  }
}

void RunConfig::assign(const std::string& key, const std::string& json_value,
                       const std::string& origin) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "' (" + origin + ")");
  it->second = json_value;
}

void RunConfig::apply_preset(const std::string& name) {
  // Presets bundle a scale; explicit file/flag values still override them.
  std::map<std::string, std::string> p;
  if (name == "desk") {
    p = {{"model.d_h", "64"}, {"train.steps", "4000"},   {"train.batch", "64"},
         {"train.seeds", "3"}, {"train.eval_max", "200"}, {"train.eval_batch", "64"}};
  } else if (name == "paper") {
    p = {{"model.d_h", "256"}, {"train.steps", "40000"}, {"train.batch", "128"},
         {"train.seeds", "10"}, {"train.eval_max", "500"}, {"train.eval_batch", "64"}};
  } else {
    throw ConfigError("unknown preset: " + name);
  }
  for (const auto& [k, v] : p) assign(k, v, "preset " + name);
  assign("preset", json(name).dump(), "preset");
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object of dotted keys");
  // preset first so file keys override it
  if (j.contains("preset") && j["preset"].get<std::string>() != "")
    apply_preset(j["preset"].get<std::string>());
  for (auto& [key, value] : j.items()) {
    if (key == "preset") continue;
    if (value.is_object()) throw ConfigError("config values must be flat; use dotted keys");
    assign(key, value.dump(), path);
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  json v;
  try {
    v = parse_value(value);
  } catch (...) {
    v = json(value);  // bare strings allowed: --set task=parity-check
  }
  if (key == "preset") {
    apply_preset(v.get<std::string>());
    return;
  }
  assign(key, v.dump(), "override");
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string RunConfig::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  json v = parse_value(it->second);
  if (!v.is_string()) throw ConfigError("config key '" + key + "' is not a string");
  return v.get<std::string>();
}

int64_t RunConfig::get_int(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  json v = parse_value(it->second);
  if (!v.is_number_integer()) throw ConfigError("config key '" + key + "' is not an integer");
  return v.get<int64_t>();
}

double RunConfig::get_double(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  json v = parse_value(it->second);
  if (!v.is_number()) throw ConfigError("config key '" + key + "' is not a number");
  return v.get<double>();
}

std::vector<int64_t> RunConfig::get_int_list(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  json v = parse_value(it->second);
  if (!v.is_array()) throw ConfigError("config key '" + key + "' is not a list");
  std::vector<int64_t> out;
  for (const auto& e : v) {
    if (!e.is_number_integer()) throw ConfigError("config key '" + key + "' has non-integers");
    out.push_back(e.get<int64_t>());
  }
  return out;
}

std::string RunConfig::resolved_json() const {
  json j;
  for (const auto& [k, v] : values_) j[k] = parse_value(v);
  return j.dump(2);
}

std::string RunConfig::content_hash() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(resolved_json())));
  return buf;
}

void RunConfig::write_resolved(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  json j = json::parse(resolved_json());
  j["config_hash"] = content_hash();
  std::ofstream os(dir + "/resolved_config.json", std::ios::trunc);
  if (!os) throw ConfigError("cannot write resolved config in " + dir);
  os << j.dump(2) << "\n";
}

uint64_t fnv1a64(const std::string& data) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace prlstm::cli
