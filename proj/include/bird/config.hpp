#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace bird {

enum class Variant { dreamer_baseline, bird, soft_bird };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::dreamer_baseline: return "dreamer";
    case Variant::bird: return "bird";
    case Variant::soft_bird: return "soft-bird";
  }
  return "?";
}

inline Variant variant_from_name(const std::string& s) {
  if (s == "dreamer") return Variant::dreamer_baseline;
  if (s == "bird") return Variant::bird;
  if (s == "soft-bird") return Variant::soft_bird;
  throw std::invalid_argument("unknown variant '" + s + "' (expected dreamer|bird|soft-bird)");
}

/// All run hyperparameters. Defaults follow the reference training setup;
/// dims are desk-scale. Serialized as flat `key = value` lines.
struct RunConfig {
  std::string env = "pendulum-swingup";
  std::string obs_mode = "vector";  // vector | image
  Variant variant = Variant::dreamer_baseline;
  std::uint64_t seed = 0;

  std::uint64_t total_episodes = 150;
  std::uint64_t prefill_episodes = 5;
  std::uint64_t decision_steps = 500;  // T; 1000 internal steps at action repeat 2
  std::uint64_t action_repeat = 2;
  double expl_noise = 0.3;

  std::uint64_t horizon = 15;      // H
  std::uint64_t learn_steps = 100; // C
  std::uint64_t batch_size = 50;   // B
  std::uint64_t seq_len = 50;      // L

  double gamma = 0.99;
  double lambda = 0.95;
  double beta = 1.0;
  double w_mi = 1e-8;
  double alpha_soft = 1e-3;

  double lr_model = 6e-4;
  double lr_action = 8e-5;
  double lr_value = 8e-5;
  double grad_clip = 100.0;
  double std_floor = 1e-4;

  std::uint64_t buffer_capacity = 100000;

  std::uint64_t dim_deter = 64;
  std::uint64_t dim_stoch = 16;
  std::uint64_t dim_hidden = 64;
  std::uint64_t dim_embed = 32;

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
    if (obs_mode != "vector" && obs_mode != "image") fail("obs_mode must be vector|image");
    if (decision_steps < 1) fail("decision_steps must be >= 1");
    if (action_repeat < 1) fail("action_repeat must be >= 1");
    if (expl_noise < 0) fail("expl_noise must be >= 0");
    if (horizon < 1) fail("horizon must be >= 1");
    if (learn_steps < 1) fail("learn_steps must be >= 1");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (seq_len < 2) fail("seq_len must be >= 2");
    if (!(gamma > 0 && gamma <= 1)) fail("gamma must be in (0, 1]");
    if (!(lambda >= 0 && lambda <= 1)) fail("lambda must be in [0, 1]");
    if (beta < 0) fail("beta must be >= 0");
    if (w_mi < 0) fail("w_mi must be >= 0");
    if (alpha_soft < 0) fail("alpha_soft must be >= 0");
    if (!(lr_model > 0 && lr_action > 0 && lr_value > 0)) fail("learning rates must be > 0");
    if (!(grad_clip > 0)) fail("grad_clip must be > 0");
    if (!(std_floor > 0)) fail("std_floor must be > 0");
    if (buffer_capacity < seq_len) fail("buffer_capacity must be >= seq_len");
    if (dim_deter < 1 || dim_stoch < 1 || dim_hidden < 1 || dim_embed < 1)
      fail("network dims must be >= 1");
  }
};

namespace detail {

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct ConfigField {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline const std::map<std::string, ConfigField>& config_fields() {
  static const std::map<std::string, ConfigField> fields = [] {
    std::map<std::string, ConfigField> f;
    auto str = [&](const std::string& key, std::string RunConfig::* mem) {
      f[key] = {[mem](const RunConfig& c) { return c.*mem; },
                [mem](RunConfig& c, const std::string& s) { c.*mem = s; }};
    };
    auto u64 = [&](const std::string& key, std::uint64_t RunConfig::* mem) {
      f[key] = {[mem](const RunConfig& c) { return std::to_string(c.*mem); },
                [mem, key](RunConfig& c, const std::string& s) {
                  try {
                    std::size_t pos = 0;
                    c.*mem = std::stoull(s, &pos);
                    if (pos != s.size()) throw std::invalid_argument(s);
                  } catch (const std::exception&) {
                    throw std::invalid_argument("config: bad integer for '" + key + "': " + s);
                  }
                }};
    };
    auto dbl = [&](const std::string& key, double RunConfig::* mem) {
      f[key] = {[mem](const RunConfig& c) { return fmt_double(c.*mem); },
                [mem, key](RunConfig& c, const std::string& s) {
                  try {
                    std::size_t pos = 0;
                    c.*mem = std::stod(s, &pos);
                    if (pos != s.size()) throw std::invalid_argument(s);
                  } catch (const std::exception&) {
                    throw std::invalid_argument("config: bad number for '" + key + "': " + s);
                  }
                }};
    };
    str("env", &RunConfig::env);
    str("obs_mode", &RunConfig::obs_mode);
    f["variant"] = {[](const RunConfig& c) { return variant_name(c.variant); },
                    [](RunConfig& c, const std::string& s) { c.variant = variant_from_name(s); }};
    u64("seed", &RunConfig::seed);
    u64("total_episodes", &RunConfig::total_episodes);
    u64("prefill_episodes", &RunConfig::prefill_episodes);
    u64("decision_steps", &RunConfig::decision_steps);
    u64("action_repeat", &RunConfig::action_repeat);
    dbl("expl_noise", &RunConfig::expl_noise);
    u64("horizon", &RunConfig::horizon);
    u64("learn_steps", &RunConfig::learn_steps);
    u64("batch_size", &RunConfig::batch_size);
    u64("seq_len", &RunConfig::seq_len);
    dbl("gamma", &RunConfig::gamma);
    dbl("lambda", &RunConfig::lambda);
    dbl("beta", &RunConfig::beta);
    dbl("w_mi", &RunConfig::w_mi);
    dbl("alpha_soft", &RunConfig::alpha_soft);
    dbl("lr_model", &RunConfig::lr_model);
    dbl("lr_action", &RunConfig::lr_action);
    dbl("lr_value", &RunConfig::lr_value);
    dbl("grad_clip", &RunConfig::grad_clip);
    dbl("std_floor", &RunConfig::std_floor);
    u64("buffer_capacity", &RunConfig::buffer_capacity);
    u64("dim_deter", &RunConfig::dim_deter);
    u64("dim_stoch", &RunConfig::dim_stoch);
    u64("dim_hidden", &RunConfig::dim_hidden);
    u64("dim_embed", &RunConfig::dim_embed);
    return f;
  }();
  return fields;
}

}  // namespace detail

/// Parses flat `key = value` text. Blank lines and `#` comments are skipped;
/// unknown keys are errors.
inline RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    auto it = detail::config_fields().find(key);
    if (it == detail::config_fields().end())
      throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second.set(cfg, value);
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

/// Fully resolved config as deterministic `key = value` lines (sorted).
inline std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& [key, field] : detail::config_fields()) os << key << " = " << field.get(cfg) << "\n";
  return os.str();
}

}  // namespace bird
