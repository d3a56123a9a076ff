#include "hadamax/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hadamax/envs.hpp"
#include "hadamax/trainer.hpp"

namespace hadamax {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789'_") != std::string::npos)
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  std::string digits;
  for (char c : v)
    if (c != '\'' && c != '_') digits += c;
  errno = 0;
  const unsigned long long n = std::strtoull(digits.c_str(), nullptr, 10);
  if (errno == ERANGE) throw ConfigError(key + ": integer out of range");
  return n;
}

double to_real(const std::string& key, const std::string& v) {
  char* end = nullptr;
  errno = 0;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(d))
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  return d;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string real(double d) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, d);
  return {buf, r.ptr};
}

std::string boolean(bool b) { return b ? "true" : "false"; }

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = {
      "env.name",           "env.resolution",        "encoder.variant",      "encoder.use_maxpool",
      "encoder.use_hadamard", "encoder.activation",  "encoder.norm",         "encoder.hidden_width",
      "train.num_envs",     "train.num_steps",       "train.eps_start",      "train.eps_finish",
      "train.eps_decay",    "train.num_epochs",      "train.num_minibatches", "train.lr",
      "train.max_grad_norm", "train.gamma",          "train.lambda",         "train.total_frames",
      "run.seed",           "run.out_dir",           "run.log_interval",     "run.checkpoint_interval",
      "run.probe_size",     "run.threads"};
  return k;
}

std::string RunConfig::resolve_key(const std::string& name) {
  std::vector<std::string> hits;
  for (const auto& k : keys()) {
    if (k == name) return k;
    if (k.size() > name.size() && k.compare(k.size() - name.size(), name.size(), name) == 0 &&
        k[k.size() - name.size() - 1] == '.')
      hits.push_back(k);
  }
  if (hits.size() == 1) return hits.front();
  if (hits.empty()) throw ConfigError(name + ": unknown configuration key");
  std::string all;
  for (const auto& h : hits) all += (all.empty() ? "" : ", ") + h;
  throw ConfigError(name + ": ambiguous key (" + all + ")");
}

std::string RunConfig::get(const std::string& key) const {
  const pqn::TrainConfig& t = train;
  if (key == "env.name") return env;
  if (key == "env.resolution") return std::to_string(resolution);
  if (key == "encoder.variant") return to_string(encoder.variant);
  if (key == "encoder.use_maxpool") return boolean(encoder.use_maxpool);
  if (key == "encoder.use_hadamard") return boolean(encoder.use_hadamard);
  if (key == "encoder.activation") return to_string(encoder.activation);
  if (key == "encoder.norm") return to_string(encoder.norm);
  if (key == "encoder.hidden_width") return std::to_string(encoder.hidden_width);
  if (key == "train.num_envs") return std::to_string(t.num_envs);
  if (key == "train.num_steps") return std::to_string(t.num_steps);
  if (key == "train.eps_start") return real(t.eps_start);
  if (key == "train.eps_finish") return real(t.eps_finish);
  if (key == "train.eps_decay") return real(t.eps_decay);
  if (key == "train.num_epochs") return std::to_string(t.num_epochs);
  if (key == "train.num_minibatches") return std::to_string(t.num_minibatches);
  if (key == "train.lr") return real(t.lr);
  if (key == "train.max_grad_norm") return real(t.max_grad_norm);
  if (key == "train.gamma") return real(t.gamma);
  if (key == "train.lambda") return real(t.lambda);
  if (key == "train.total_frames") return std::to_string(t.total_frames);
  if (key == "run.seed") return std::to_string(seed);
  if (key == "run.out_dir") return out_dir;
  if (key == "run.log_interval") return std::to_string(log_interval);
  if (key == "run.checkpoint_interval") return std::to_string(checkpoint_interval);
  if (key == "run.probe_size") return std::to_string(probe_size);
  if (key == "run.threads") return std::to_string(threads);
  throw ConfigError(key + ": unknown configuration key");
}

void RunConfig::set(const std::string& key, const std::string& value) {
  pqn::TrainConfig& t = train;
  const std::string& v = value;
  try {
    if (key == "env.name") env = v;
    else if (key == "env.resolution") resolution = to_u64(key, v);
    else if (key == "encoder.variant") {
      const Variant var = parse_variant(v);
      const EncoderSpec defaults = var == Variant::nature || var == Variant::resnet15 ? EncoderSpec::nature(1)
                                                                                      : EncoderSpec::hadamax(1);
      encoder.variant = var;
      encoder.use_maxpool = defaults.use_maxpool;
      encoder.use_hadamard = defaults.use_hadamard;
      encoder.activation = defaults.activation;
    } else if (key == "encoder.use_maxpool") encoder.use_maxpool = to_bool(key, v);
    else if (key == "encoder.use_hadamard") encoder.use_hadamard = to_bool(key, v);
    else if (key == "encoder.activation") encoder.activation = parse_activation(v);
    else if (key == "encoder.norm") encoder.norm = parse_norm(v);
    else if (key == "encoder.hidden_width") encoder.hidden_width = to_u64(key, v);
    else if (key == "train.num_envs") t.num_envs = to_u64(key, v);
    else if (key == "train.num_steps") t.num_steps = to_u64(key, v);
    else if (key == "train.eps_start") t.eps_start = to_real(key, v);
    else if (key == "train.eps_finish") t.eps_finish = to_real(key, v);
    else if (key == "train.eps_decay") t.eps_decay = to_real(key, v);
    else if (key == "train.num_epochs") t.num_epochs = to_u64(key, v);
    else if (key == "train.num_minibatches") t.num_minibatches = to_u64(key, v);
    else if (key == "train.lr") t.lr = to_real(key, v);
    else if (key == "train.max_grad_norm") t.max_grad_norm = to_real(key, v);
    else if (key == "train.gamma") t.gamma = to_real(key, v);
    else if (key == "train.lambda") t.lambda = to_real(key, v);
    else if (key == "train.total_frames") t.total_frames = to_u64(key, v);
    else if (key == "run.seed") seed = to_u64(key, v);
    else if (key == "run.out_dir") out_dir = v;
    else if (key == "run.log_interval") log_interval = to_u64(key, v);
    else if (key == "run.checkpoint_interval") checkpoint_interval = to_u64(key, v);
    else if (key == "run.probe_size") probe_size = to_u64(key, v);
    else if (key == "run.threads") threads = to_u64(key, v);
    else throw ConfigError(key + ": unknown configuration key");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void RunConfig::apply(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set(resolve_key(trim(assignment.substr(0, eq))), trim(assignment.substr(eq + 1)));
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    const auto& all = keys();
    if (std::find(all.begin(), all.end(), key) == all.end()) throw ConfigError(where + key + ": unknown configuration key");
    try {
      cfg.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string RunConfig::dump() const {
  std::string out;
  std::string section;
  for (const auto& k : keys()) {
    const std::string s = k.substr(0, k.find('.'));
    if (s != section) {
      if (!section.empty()) out += '\n';
      section = s;
    }
    out += k + " = " + get(k) + '\n';
  }
  return out;
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << dump();
}

void RunConfig::validate() const {
  try {
    envs::make_game(env);
  } catch (const envs::EnvError& e) {
    throw ConfigError(std::string("env.name: ") + e.what());
  }
  if (resolution < 16) throw ConfigError("env.resolution: must be at least 16");
  train.validate();
  try {
    pqn::spec_for_env(encoder, env, resolution).validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (log_interval == 0) throw ConfigError("run.log_interval: must be positive");
  if (probe_size < 2) throw ConfigError("run.probe_size: need at least 2 observations");
  if (out_dir.empty()) throw ConfigError("run.out_dir: must not be empty");
}

}  // namespace hadamax
