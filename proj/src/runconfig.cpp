#include "mira/runconfig.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mira::runconfig {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v[0] == '-') {
    throw std::invalid_argument("config key '" + key + "': expected unsigned integer, got '" +
                                v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) {
    throw std::invalid_argument("config key '" + key + "': expected number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config key '" + key + "': expected true/false, got '" + v +
                              "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "model.preset") {
    preset = value;
    model = model::ModelConfig::preset(value);  // throws on unknown preset
  } else if (key == "model.layers") {
    model.layers = to_u64(key, value);
  } else if (key == "model.d_model") {
    model.d_model = to_u64(key, value);
  } else if (key == "model.d_ff") {
    model.d_ff = to_u64(key, value);
  } else if (key == "model.d_expert") {
    model.d_expert = to_u64(key, value);
  } else if (key == "model.n_experts") {
    model.n_experts = to_u64(key, value);
  } else if (key == "model.top_k") {
    model.top_k = to_u64(key, value);
  } else if (key == "model.n_heads") {
    model.n_heads = to_u64(key, value);
  } else if (key == "model.max_seq_len") {
    model.max_seq_len = to_u64(key, value);
  } else if (key == "model.huber_delta") {
    model.huber_delta = to_double(key, value);
  } else if (key == "model.aux_weight") {
    model.aux_weight = to_double(key, value);
  } else if (key == "model.rope_mode") {
    model.rope_mode = model::parse_rope_mode(value);
  } else if (key == "model.dense_ffn") {
    model.dense_ffn = to_bool(key, value);
  } else if (key == "model.extrapolation") {
    model.extrapolation = model::parse_extrapolation(value);
  } else if (key == "model.grad_mode") {
    model.grad_mode = model::parse_grad_mode(value);
  } else if (key == "model.spectral_norm") {
    model.spectral_norm = to_bool(key, value);
  } else if (key == "solver.rtol") {
    model.solver.rtol = to_double(key, value);
  } else if (key == "solver.atol") {
    model.solver.atol = to_double(key, value);
  } else if (key == "solver.max_steps") {
    model.solver.max_steps = to_u64(key, value);
  } else if (key == "train.steps") {
    train.steps = to_u64(key, value);
  } else if (key == "train.batch") {
    train.batch = to_u64(key, value);
  } else if (key == "train.lr") {
    train.lr = to_double(key, value);
  } else if (key == "train.beta1") {
    train.beta1 = to_double(key, value);
  } else if (key == "train.beta2") {
    train.beta2 = to_double(key, value);
  } else if (key == "train.eps") {
    train.eps = to_double(key, value);
  } else if (key == "train.clip_norm") {
    train.clip_norm = to_double(key, value);
  } else if (key == "train.rollout") {
    train.rollout = to_bool(key, value);
  } else if (key == "window.context_length") {
    window.context_length = to_u64(key, value);
  } else if (key == "window.horizon") {
    window.horizon = to_u64(key, value);
  } else if (key == "window.stride") {
    window.stride = to_u64(key, value);
  } else if (key == "window.min_context") {
    window.min_context = to_u64(key, value);
  } else if (key == "data.path") {
    data_path = value;
  } else if (key == "seed") {
    seed = to_u64(key, value);
    train.seed = seed;
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

RunConfig parse(const std::string& text) {
  RunConfig cfg;
  if (const char* env = std::getenv("MIRA_SEED")) {
    cfg.seed = to_u64("MIRA_SEED", env);
    cfg.train.seed = cfg.seed;
  }
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + line + "'");
    }
    entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  // The preset resets the whole model block, so apply it before overrides.
  for (const auto& [k, v] : entries) {
    if (k == "model.preset") cfg.set(k, v);
  }
  for (const auto& [k, v] : entries) {
    if (k != "model.preset") cfg.set(k, v);
  }
  return cfg;
}

RunConfig parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

}  // namespace mira::runconfig
