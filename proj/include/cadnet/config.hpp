#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cadnet/trainer.hpp"

namespace cadnet {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

// Flat key=value text with [section] headers; keys become "section.key".
// '#' starts a comment. Every key must be consumed by the caller — leftovers
// are reported as unknown-key errors so typos never pass silently.
class KvConfig {
 public:
  static KvConfig parse(std::istream& in, const std::string& origin) {
    KvConfig cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string s = detail::trim(line.substr(0, line.find('#')));
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']')
          throw ConfigError(origin + ":" + std::to_string(lineno) +
                            ": malformed section header '" + s + "'");
        section = detail::trim(s.substr(1, s.size() - 2));
        continue;
      }
      size_t eq = s.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": expected key=value, got '" + s + "'");
      std::string key = detail::trim(s.substr(0, eq));
      if (key.empty())
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": empty key");
      if (!section.empty()) key = section + "." + key;
      if (cfg.values_.count(key))
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": duplicate key '" + key + "'");
      cfg.values_[key] = detail::trim(s.substr(eq + 1));
    }
    cfg.origin_ = origin;
    return cfg;
  }

  static KvConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse(in, path);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string take_string(const std::string& key, const std::string& fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::string v = it->second;
    values_.erase(it);
    return v;
  }

  std::string take_required(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end())
      throw ConfigError(origin_ + ": missing required key '" + key + "'");
    std::string v = it->second;
    values_.erase(it);
    return v;
  }

  template <typename T>
  T take_number(const std::string& key, T fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::istringstream ss(it->second);
    T v{};
    std::string rest;
    if (!(ss >> v) || (ss >> rest && !rest.empty()))
      throw ConfigError(origin_ + ": key '" + key + "' has invalid value '" +
                        it->second + "'");
    values_.erase(it);
    return v;
  }

  bool take_bool(const std::string& key, bool fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::string v = it->second;
    values_.erase(it);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(origin_ + ": key '" + key +
                      "' expects true/false, got '" + v + "'");
  }

  std::vector<int> take_int_list(const std::string& key,
                                 std::vector<int> fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<int> out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = detail::trim(item);
      if (item.empty())
        throw ConfigError(origin_ + ": key '" + key +
                          "' has an empty list element");
      try {
        size_t pos = 0;
        out.push_back(std::stoi(item, &pos));
        if (pos != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw ConfigError(origin_ + ": key '" + key +
                          "' has non-integer element '" + item + "'");
      }
    }
    if (out.empty())
      throw ConfigError(origin_ + ": key '" + key + "' is an empty list");
    values_.erase(it);
    return out;
  }

  // call after consuming everything you recognize
  void reject_unknown() const {
    if (values_.empty()) return;
    std::string msg = origin_ + ": unknown key(s):";
    for (const auto& [k, v] : values_) msg += " '" + k + "'";
    throw ConfigError(msg);
  }

 private:
  std::map<std::string, std::string> values_;
  std::string origin_ = "<config>";
};

// Full run description for the CLI: dataset location plus training settings.
struct RunConfig {
  std::string data_dir;
  TrainConfig train;
  std::vector<int> eval_rates = {2, 3, 4, 8};
  int eval_trials = 10;

  static RunConfig from_kv(KvConfig cfg) {
    RunConfig rc;
    rc.data_dir = cfg.take_required("data.dir");

    TrainConfig& t = rc.train;
    t.lambda_adv_df = cfg.take_number("train.lambda_adv_df", t.lambda_adv_df);
    t.lambda_rec = cfg.take_number("train.lambda_rec", t.lambda_rec);
    t.lambda_adv_di = cfg.take_number("train.lambda_adv_di", t.lambda_adv_di);
    t.margin = cfg.take_number("train.margin", t.margin);
    t.lr_main = cfg.take_number("train.lr_main", t.lr_main);
    t.momentum = cfg.take_number("train.momentum", t.momentum);
    t.weight_decay = cfg.take_number("train.weight_decay", t.weight_decay);
    t.lr_disc = cfg.take_number("train.lr_disc", t.lr_disc);
    t.p = cfg.take_number("train.p", t.p);
    t.k = cfg.take_number("train.k", t.k);
    t.epochs = cfg.take_number("train.epochs", t.epochs);
    t.seed = cfg.take_number("train.seed", t.seed);
    t.rates = cfg.take_int_list("train.rates", t.rates);
    t.no_adv_df = cfg.take_bool("train.no_adv_df", t.no_adv_df);
    t.no_adv_di = cfg.take_bool("train.no_adv_di", t.no_adv_di);
    t.no_rec = cfg.take_bool("train.no_rec", t.no_rec);
    t.no_cls = cfg.take_bool("train.no_cls", t.no_cls);
    std::string variant = cfg.take_string("train.variant", to_string(t.variant));
    try {
      t.variant = joint_variant_from_string(variant);
    } catch (const std::exception&) {
      throw ConfigError("key 'train.variant' has invalid value '" + variant +
                        "'");
    }

    ModelConfig& m = t.model;
    m.height = cfg.take_number("model.height", m.height);
    m.width = cfg.take_number("model.width", m.width);
    m.channels = cfg.take_int_list("model.channels", m.channels);
    m.image_adv_real_weight =
        cfg.take_number("model.image_adv_real_weight", m.image_adv_real_weight);

    rc.eval_rates = cfg.take_int_list("eval.rates", rc.eval_rates);
    rc.eval_trials = cfg.take_number("eval.trials", rc.eval_trials);

    cfg.reject_unknown();
    t.validate();
    return rc;
  }

  static RunConfig from_file(const std::string& path) {
    return from_kv(KvConfig::parse_file(path));
  }
};

}  // namespace cadnet
