#include "dsr/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dsr/fcn.hpp"
#include "dsr/types.hpp"

namespace dsr {

namespace {

using nlohmann::json;

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw std::invalid_argument("bad value for " + key + ": '" + text + "'");
  }
  return value;
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// JSON scalar or array of ints -> the text form accepted by Config::set.
std::string to_text(const std::string& key, const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number_float()) return format_double(v.get<double>());
  if (v.is_array()) {
    std::string out;
    for (const auto& e : v) {
      if (!e.is_number_integer()) throw FormatError("config key " + key + " expects a list of integers");
      out += (out.empty() ? "" : ",") + e.dump();
    }
    return out;
  }
  throw FormatError("config key " + key + " has an unsupported value type");
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
  for (const auto& [k, v] : j.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      flatten(v, key, out);
    } else {
      out.emplace_back(key, to_text(key, v));
    }
  }
}

}  // namespace

std::set<int> parse_scales(const std::string& text) {
  std::set<int> scales;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const int s = parse_number<int>("scales", item);
    if (s < 1) throw std::invalid_argument("scales must be positive");
    scales.insert(s);
  }
  if (scales.empty()) throw std::invalid_argument("scales must not be empty");
  return scales;
}

std::string format_scales(const std::set<int>& scales) {
  std::string out;
  for (int s : scales) out += (out.empty() ? "" : ",") + std::to_string(s);
  return out;
}

const std::vector<std::string>& Config::keys() {
  static const std::vector<std::string> k{
      "beta",        "scales",          "normalization",   "solver.tol_kkt", "solver.max_iters",
      "train.lr",    "train.seed",      "train.margin",    "train.epochs",   "train.scales",
      "pretrain.epochs", "pretrain.lr", "fcn.layers",      "workers",        "seed"};
  return k;
}

void Config::set(const std::string& key, const std::string& value) {
  Config next = *this;
  if (key == "beta" || key == "solver.beta") {
    next.beta = parse_number<double>(key, value);
  } else if (key == "scales") {
    next.scales = parse_scales(value);
  } else if (key == "normalization") {
    next.normalization = parse_normalization(value);
  } else if (key == "solver.tol_kkt") {
    next.solver.tol_kkt = parse_number<double>(key, value);
  } else if (key == "solver.max_iters") {
    next.solver.max_iters = parse_number<int>(key, value);
  } else if (key == "train.lr") {
    next.train_lr = parse_number<double>(key, value);
  } else if (key == "train.seed") {
    next.train_seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "train.margin") {
    next.train_margin = parse_number<double>(key, value);
  } else if (key == "train.epochs") {
    next.train_epochs = parse_number<int>(key, value);
  } else if (key == "train.scales") {
    next.train_scales = parse_scales(value);
  } else if (key == "pretrain.epochs") {
    next.pretrain_epochs = parse_number<int>(key, value);
  } else if (key == "pretrain.lr") {
    next.pretrain_lr = parse_number<double>(key, value);
  } else if (key == "fcn.layers") {
    next.fcn_layers = value;
  } else if (key == "workers") {
    next.workers = parse_number<int>(key, value);
  } else if (key == "seed") {
    next.seed = parse_number<std::uint64_t>(key, value);
  } else {
    throw std::invalid_argument("unknown config key: " + key);
  }
  next.validate();
  *this = std::move(next);
}

std::string Config::get(const std::string& key) const {
  if (key == "beta" || key == "solver.beta") return format_double(beta);
  if (key == "scales") return format_scales(scales);
  if (key == "normalization") return to_string(normalization);
  if (key == "solver.tol_kkt") return format_double(solver.tol_kkt);
  if (key == "solver.max_iters") return std::to_string(solver.max_iters);
  if (key == "train.lr") return format_double(train_lr);
  if (key == "train.seed") return std::to_string(train_seed);
  if (key == "train.margin") return format_double(train_margin);
  if (key == "train.epochs") return std::to_string(train_epochs);
  if (key == "train.scales") return format_scales(train_scales);
  if (key == "pretrain.epochs") return std::to_string(pretrain_epochs);
  if (key == "pretrain.lr") return format_double(pretrain_lr);
  if (key == "fcn.layers") return fcn_layers;
  if (key == "workers") return std::to_string(workers);
  if (key == "seed") return std::to_string(seed);
  throw std::invalid_argument("unknown config key: " + key);
}

void Config::merge_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  std::vector<std::pair<std::string, std::string>> entries;
  flatten(j, "", entries);
  Config next = *this;
  for (const auto& [k, v] : entries) {
    try {
      next.set(k, v);
    } catch (const std::invalid_argument& e) {
      throw FormatError(std::string("config: ") + e.what());
    }
  }
  *this = std::move(next);
}

void Config::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  merge_json(buf.str());
}

std::string Config::to_json() const {
  json j = json::object();
  for (const auto& key : keys()) {
    const std::string v = get(key);
    json* node = &j;
    std::string rest = key;
    for (auto dot = rest.find('.'); dot != std::string::npos; dot = rest.find('.')) {
      node = &(*node)[rest.substr(0, dot)];
      rest = rest.substr(dot + 1);
    }
    if (key == "scales" || key == "train.scales") {
      (*node)[rest] = json(key == "scales" ? scales : train_scales);
    } else if (key == "normalization" || key == "fcn.layers") {
      (*node)[rest] = v;
    } else {
      (*node)[rest] = json::parse(v);
    }
  }
  return j.dump(2);
}

void Config::validate() const {
  if (!(beta >= 0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be finite and >= 0");
  if (scales.empty() || train_scales.empty()) throw std::invalid_argument("scales must not be empty");
  if (!(solver.tol_kkt > 0)) throw std::invalid_argument("solver.tol_kkt must be > 0");
  if (solver.max_iters < 1) throw std::invalid_argument("solver.max_iters must be >= 1");
  if (!(train_lr >= 0) || !std::isfinite(train_lr)) throw std::invalid_argument("train.lr must be finite and >= 0");
  if (!std::isfinite(train_margin)) throw std::invalid_argument("train.margin must be finite");
  if (train_epochs < 0 || pretrain_epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(pretrain_lr >= 0)) throw std::invalid_argument("pretrain.lr must be >= 0");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  FcnConfig::parse(fcn_layers, 3);
}

Config resolve_config(const std::optional<std::filesystem::path>& file,
                      const std::vector<std::pair<std::string, std::string>>& overrides) {
  Config c;
  if (file) c.merge_file(*file);
  for (const auto& [k, v] : overrides) c.set(k, v);
  return c;
}

}  // namespace dsr
