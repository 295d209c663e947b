#include "lga/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>

#include "lga/errors.hpp"

namespace lga {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  if (v.empty() || v[0] == '-')
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  char* end = nullptr;
  std::uint64_t out = std::strtoull(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size())
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

double parse_f64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError(key + ": expected true/false/1/0, got '" + v + "'");
}

std::uint64_t parse_positive(const std::string& key, const std::string& v) {
  std::uint64_t out = parse_u64(key, v);
  if (out == 0) throw ConfigError(key + ": must be positive");
  return out;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "channels") task.channels = parse_positive(key, value);
  else if (key == "classes") task.classes = parse_positive(key, value);
  else if (key == "patch_size") task.patch = parse_positive(key, value);
  else if (key == "signature_strength") {
    task.strength = parse_f64(key, value);
    if (task.strength <= 0.0) throw ConfigError(key + ": must be positive");
  } else if (key == "noise_level") {
    task.noise = parse_f64(key, value);
    if (task.noise < 0.0) throw ConfigError(key + ": must be non-negative");
  } else if (key == "distractors") task.distractors = parse_u64(key, value);
  else if (key == "masks") lga.masks = parse_positive(key, value);
  else if (key == "downsample_channels") {
    lga.down_channels = parse_positive(key, value);
    down_channels_set_ = true;
  } else if (key == "hidden") lga.hidden = parse_positive(key, value);
  else if (key == "lambda_reg") {
    lga.lambda_reg = parse_f64(key, value);
    if (lga.lambda_reg < 0.0) throw ConfigError(key + ": must be non-negative");
    lambda_reg_set_ = true;
  } else if (key == "lambda_lga") {
    lga.lambda_lga = parse_f64(key, value);
    if (lga.lambda_lga < 0.0) throw ConfigError(key + ": must be non-negative");
    lambda_lga_set_ = true;
  } else if (key == "epochs") train.epochs = parse_positive(key, value);
  else if (key == "batch_size") train.batch_size = parse_positive(key, value);
  else if (key == "learning_rate") {
    train.learning_rate = parse_f64(key, value);
    if (train.learning_rate <= 0.0) throw ConfigError(key + ": must be positive");
  } else if (key == "seed") train.seed = parse_u64(key, value);
  else if (key == "lga_enabled") train.lga_enabled = parse_bool(key, value);
  else if (key == "n_train") n_train = parse_positive(key, value);
  else if (key == "n_val") n_val = parse_positive(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::finalize() {
  lga.channels = task.channels;
  lga.classes = task.classes;
  lga.height = task.height;
  lga.width = task.width;
  if (!down_channels_set_) lga.down_channels = std::max<std::size_t>(1, task.channels / 4);
  if (lambda_reg_set_) train.lambda_reg = lga.lambda_reg;
  if (lambda_lga_set_) train.lambda_lga = lga.lambda_lga;
  task.validate();
  lga.validate();
  train.validate();
}

}  // namespace lga
