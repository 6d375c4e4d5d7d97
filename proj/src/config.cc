/* Copyright 2026 The tpflex Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "tpflex/config.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "tpflex/error.h"

namespace tpflex {
namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& section,
                    const std::set<std::string>& allowed) {
  if (!obj.is_object()) {
    throw ConfigError((section.empty() ? std::string("config") : section) +
                      " must be a JSON object");
  }
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown key '" +
                        (section.empty() ? key : section + "." + key) + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, const std::string& section,
          T& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  const std::string name = section.empty() ? key : section + "." + key;
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, int> ||
                  std::is_same_v<T, std::uint64_t>) {
      if (!it->is_number_integer() ||
          (it->is_number_integer() && it->template get<long long>() < 0 &&
           !std::is_same_v<T, int>)) {
        throw ConfigError("'" + name + "' must be a non-negative integer");
      }
    }
    out = it->template get<T>();
  } catch (const json::exception&) {
    throw ConfigError("'" + name + "' has the wrong type");
  }
}

std::string read_string(const json& obj, const char* key,
                        const std::string& section, const std::string& dflt) {
  std::string s = dflt;
  read(obj, key, section, s);
  return s;
}

template <typename F>
auto parse_enum(const std::string& key, const std::string& value, F parse) {
  try {
    return parse(value);
  } catch (const ConfigError& e) {
    throw ConfigError("'" + key + "': " + e.what());
  }
}

HeteroEntry parse_entry(const json& j, std::size_t n) {
  const std::string sec = "heterogeneity.schedule[" + std::to_string(n) + "]";
  reject_unknown(j, sec, {"epochs", "ranks", "chi"});
  HeteroEntry e;
  std::vector<int> range;
  read(j, "epochs", sec, range);
  if (range.size() != 2) {
    throw ConfigError("'" + sec + ".epochs' must be [first, last]");
  }
  e.first = range[0];
  e.last = range[1];
  read(j, "ranks", sec, e.ranks);
  if (j.contains("chi") && j["chi"].is_number()) {
    e.chi.assign(e.ranks.size(), j["chi"].get<double>());
  } else {
    read(j, "chi", sec, e.chi);
  }
  if (e.chi.size() != e.ranks.size()) {
    throw ConfigError("'" + sec + ".chi' needs one value per rank");
  }
  return e;
}

}  // namespace

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::kBaseline: return "baseline";
    case Mode::kZeroRd: return "zero-rd";
    case Mode::kZeroPri: return "zero-pri";
    case Mode::kZeroPriDiffE: return "zero-pridiff-e";
    case Mode::kZeroPriDiffR: return "zero-pridiff-r";
    case Mode::kMig: return "mig";
    case Mode::kSemi: return "semi";
  }
  return "unknown";
}

Mode parse_mode(const std::string& name) {
  for (Mode m : {Mode::kBaseline, Mode::kZeroRd, Mode::kZeroPri,
                 Mode::kZeroPriDiffE, Mode::kZeroPriDiffR, Mode::kMig,
                 Mode::kSemi}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown mode '" + name + "'");
}

bool is_zero_mode(Mode mode) {
  return mode == Mode::kZeroRd || mode == Mode::kZeroPri ||
         mode == Mode::kZeroPriDiffE || mode == Mode::kZeroPriDiffR;
}

HeterogeneityProfile HeterogeneityProfile::round_robin(int epochs, int e,
                                                       double chi, int nu,
                                                       int period) {
  HeterogeneityProfile p;
  if (chi == 1.0 || nu <= 0) return p;
  period = std::max(period, 1);
  for (int first = 1; first <= epochs; first += period) {
    HeteroEntry entry;
    entry.first = first;
    entry.last = std::min(epochs, first + period - 1);
    const int step = (first - 1) / period;
    for (int j = 0; j < std::min(nu, e); ++j) {
      entry.ranks.push_back((step * nu + j) % e + 1);
      entry.chi.push_back(chi);
    }
    p.schedule.push_back(std::move(entry));
  }
  return p;
}

HeterogeneityProfile HeterogeneityProfile::fixed(
    int epochs, const std::vector<double>& chi) {
  HeterogeneityProfile p;
  HeteroEntry entry;
  entry.first = 1;
  entry.last = epochs;
  for (std::size_t i = 0; i < chi.size(); ++i) {
    entry.ranks.push_back(static_cast<int>(i) + 1);
    entry.chi.push_back(chi[i]);
  }
  if (!entry.ranks.empty()) p.schedule.push_back(std::move(entry));
  return p;
}

double HeterogeneityProfile::chi(int epoch, int rank) const {
  for (const HeteroEntry& entry : schedule) {
    if (epoch < entry.first || epoch > entry.last) continue;
    for (std::size_t i = 0; i < entry.ranks.size(); ++i) {
      if (entry.ranks[i] == rank) return entry.chi[i];
    }
  }
  return 1.0;
}

int HeterogeneityProfile::nu(int epoch) const {
  std::set<int> slow;
  for (const HeteroEntry& entry : schedule) {
    if (epoch < entry.first || epoch > entry.last) continue;
    for (std::size_t i = 0; i < entry.ranks.size(); ++i) {
      if (entry.chi[i] > 1.0) slow.insert(entry.ranks[i]);
    }
  }
  return static_cast<int>(slow.size());
}

void HeterogeneityProfile::validate(int e, int epochs) const {
  std::vector<std::vector<bool>> used(
      static_cast<std::size_t>(e), std::vector<bool>(
                                       static_cast<std::size_t>(epochs), false));
  for (const HeteroEntry& entry : schedule) {
    if (entry.first < 1 || entry.last < entry.first || entry.last > epochs) {
      throw ConfigError("heterogeneity epoch range [" +
                        std::to_string(entry.first) + ", " +
                        std::to_string(entry.last) + "] outside [1, " +
                        std::to_string(epochs) + "]");
    }
    for (std::size_t i = 0; i < entry.ranks.size(); ++i) {
      const int r = entry.ranks[i];
      if (r < 1 || r > e) {
        throw ConfigError("heterogeneity rank " + std::to_string(r) +
                          " outside [1, " + std::to_string(e) + "]");
      }
      if (!(entry.chi[i] >= 1.0) || !std::isfinite(entry.chi[i])) {
        throw ConfigError("heterogeneity chi must be >= 1, got " +
                          std::to_string(entry.chi[i]));
      }
      for (int ep = entry.first; ep <= entry.last; ++ep) {
        auto slot = used[static_cast<std::size_t>(r - 1)]
                        [static_cast<std::size_t>(ep - 1)];
        if (slot) {
          throw ConfigError("heterogeneity ranges overlap for rank " +
                            std::to_string(r) + " at epoch " +
                            std::to_string(ep));
        }
        slot = true;
      }
    }
  }
}

HeterogeneityProfile parse_chi_spec(const std::string& spec, int e,
                                    int epochs) {
  auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("invalid chi spec '" + spec + "'");
    }
  };
  auto check_chi = [&](double v) {
    if (!(v >= 1.0)) {
      throw ConfigError("chi must be >= 1 in spec '" + spec + "'");
    }
    return v;
  };
  if (spec.empty() || spec == "none") return {};
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string tok; std::getline(ss, tok, ':');) parts.push_back(tok);
  if (parts.size() == 1) {
    return HeterogeneityProfile::round_robin(epochs, e,
                                             check_chi(number(parts[0])));
  }
  if (parts[0] == "rr" && parts.size() <= 4) {
    const double chi = check_chi(number(parts[1]));
    const int nu = parts.size() > 2 ? static_cast<int>(number(parts[2])) : 1;
    const int period =
        parts.size() > 3 ? static_cast<int>(number(parts[3])) : 1;
    if (nu < 1 || nu >= std::max(e, 2) || period < 1) {
      throw ConfigError("invalid round-robin parameters in '" + spec + "'");
    }
    return HeterogeneityProfile::round_robin(epochs, e, chi, nu, period);
  }
  if (parts[0] == "fixed" && parts.size() == 2) {
    std::vector<double> chi;
    std::stringstream cs(parts[1]);
    for (std::string tok; std::getline(cs, tok, ',');) {
      chi.push_back(check_chi(number(tok)));
    }
    if (chi.empty() || static_cast<int>(chi.size()) > e) {
      throw ConfigError("fixed chi list must name between 1 and " +
                        std::to_string(e) + " ranks");
    }
    return HeterogeneityProfile::fixed(epochs, chi);
  }
  throw ConfigError("invalid chi spec '" + spec + "'");
}

HeterogeneityProfile ExperimentConfig::profile() const {
  if (!schedule.empty()) return HeterogeneityProfile{schedule};
  return parse_chi_spec(chi_spec, model.e, epochs);
}

void ExperimentConfig::validate() const {
  model.validate();
  if (epochs < 1) throw ConfigError("'epochs' must be at least 1");
  if (iterations_per_epoch < 1) {
    throw ConfigError("'iterations_per_epoch' must be at least 1");
  }
  if (!(cost.compute_rate > 0.0)) {
    throw ConfigError("'cost.compute_rate' must be positive");
  }
  for (double v : {cost.alpha, cost.beta_net, cost.prune_alloc,
                   cost.prune_col_cost, cost.wall_clock_us}) {
    if (!(v >= 0.0)) throw ConfigError("cost parameters must be non-negative");
  }
  if (!(priority.gamma_max > 0.0 && priority.gamma_max < 1.0)) {
    throw ConfigError("'resizing.gamma_max' must lie in (0, 1)");
  }
  if (!(priority.alpha >= 0.0 && priority.alpha <= 1.0)) {
    throw ConfigError("'resizing.alpha' must lie in [0, 1]");
  }
  if (!(priority.theta_iter >= 0.0)) {
    throw ConfigError("'resizing.theta_iter' must be non-negative");
  }
  if (!(refresh_threshold >= 0.0)) {
    throw ConfigError("'resizing.refresh_threshold' must be non-negative");
  }
  if (fixed_gamma) {
    if (!is_zero_mode(mode)) {
      throw ConfigError("'resizing.fixed_gamma' only applies to zero-* modes");
    }
    if (!(*fixed_gamma >= 0.0 && *fixed_gamma <= priority.gamma_max)) {
      throw ConfigError("'resizing.fixed_gamma' must lie in [0, gamma_max]");
    }
  }
  if ((mode == Mode::kMig || mode == Mode::kSemi) && model.e < 2) {
    throw ConfigError("mode " + to_string(mode) + " needs model.e >= 2");
  }
  if (lambda && mode != Mode::kSemi) {
    throw ConfigError("'semi.lambda' only applies to mode semi");
  }
  if (!(epsilon >= 0.0)) throw ConfigError("'semi.epsilon' must be >= 0");
  if (sample_gammas.size() < 2) {
    throw ConfigError("'semi.sample_gammas' needs at least two values");
  }
  for (double g : sample_gammas) {
    if (!(g >= 0.0 && g <= 1.0)) {
      throw ConfigError("'semi.sample_gammas' values must lie in [0, 1]");
    }
  }
  if (train_size < model.rows()) {
    throw ConfigError("'data.train_size' must hold at least one batch");
  }
  if (eval_size < 1) throw ConfigError("'data.eval_size' must be at least 1");
  if (!(data_noise >= 0.0)) throw ConfigError("'data.noise' must be >= 0");
  profile().validate(model.e, epochs);
}

ExperimentConfig parse_config(const json& j) {
  reject_unknown(j, "",
                 {"model", "mode", "epochs", "iterations_per_epoch", "seed",
                  "imputation", "cost", "resizing", "migration", "semi",
                  "heterogeneity", "data", "output", "criterion", "lambda"});
  ExperimentConfig cfg;
  if (j.contains("model")) {
    const json& m = j["model"];
    reject_unknown(m, "model",
                   {"depth", "hs", "expansion", "bs", "sql", "e", "lr",
                    "classes"});
    read(m, "depth", "model", cfg.model.depth);
    read(m, "hs", "model", cfg.model.hs);
    read(m, "expansion", "model", cfg.model.expansion);
    read(m, "bs", "model", cfg.model.bs);
    read(m, "sql", "model", cfg.model.sql);
    read(m, "e", "model", cfg.model.e);
    read(m, "lr", "model", cfg.model.lr);
    read(m, "classes", "model", cfg.model.classes);
  }
  cfg.mode = parse_enum("mode", read_string(j, "mode", "", "baseline"),
                        parse_mode);
  read(j, "epochs", "", cfg.epochs);
  read(j, "iterations_per_epoch", "", cfg.iterations_per_epoch);
  read(j, "seed", "", cfg.seed);
  cfg.imputation = parse_enum("imputation",
                              read_string(j, "imputation", "", "zero"),
                              parse_imputation_policy);
  if (j.contains("cost")) {
    const json& c = j["cost"];
    reject_unknown(c, "cost",
                   {"alpha", "beta_net", "compute_rate", "prune_alloc",
                    "prune_col_cost", "wall_clock_us"});
    read(c, "alpha", "cost", cfg.cost.alpha);
    read(c, "beta_net", "cost", cfg.cost.beta_net);
    read(c, "compute_rate", "cost", cfg.cost.compute_rate);
    read(c, "prune_alloc", "cost", cfg.cost.prune_alloc);
    read(c, "prune_col_cost", "cost", cfg.cost.prune_col_cost);
    read(c, "wall_clock_us", "cost", cfg.cost.wall_clock_us);
  }
  std::string criterion = read_string(j, "criterion", "", "avg");
  if (j.contains("resizing")) {
    const json& r = j["resizing"];
    reject_unknown(r, "resizing",
                   {"theta_iter", "alpha", "gamma_max", "refresh_threshold",
                    "priority_update", "fixed_gamma", "criterion"});
    read(r, "theta_iter", "resizing", cfg.priority.theta_iter);
    read(r, "alpha", "resizing", cfg.priority.alpha);
    read(r, "gamma_max", "resizing", cfg.priority.gamma_max);
    read(r, "refresh_threshold", "resizing", cfg.refresh_threshold);
    const std::string upd =
        read_string(r, "priority_update", "resizing", "incremental");
    if (upd != "incremental" && upd != "full") {
      throw ConfigError("'resizing.priority_update' must be incremental or "
                        "full, got '" + upd + "'");
    }
    cfg.priority.incremental = upd == "incremental";
    if (r.contains("fixed_gamma") && !r["fixed_gamma"].is_null()) {
      double g = 0.0;
      read(r, "fixed_gamma", "resizing", g);
      cfg.fixed_gamma = g;
    }
    criterion = read_string(r, "criterion", "resizing", criterion);
  }
  if (criterion == "avg") {
    cfg.criterion = Criterion::kAvg;
  } else if (criterion == "min") {
    cfg.criterion = Criterion::kMin;
  } else {
    throw ConfigError("'criterion' must be avg or min, got '" + criterion +
                      "'");
  }
  if (j.contains("migration")) {
    const json& m = j["migration"];
    reject_unknown(m, "migration", {"collection", "primitive"});
    cfg.collection = parse_enum(
        "migration.collection",
        read_string(m, "collection", "migration", "merged"),
        parse_collection_mode);
    cfg.primitive = parse_enum(
        "migration.primitive",
        read_string(m, "primitive", "migration", "broadcast_reduce"),
        parse_migration_primitive);
  }
  auto read_lambda = [&](const json& obj, const std::string& sec) {
    if (obj.contains("lambda") && !obj["lambda"].is_null()) {
      std::size_t l = 0;
      read(obj, "lambda", sec, l);
      cfg.lambda = l;
    }
  };
  read_lambda(j, "");
  if (j.contains("semi")) {
    const json& s = j["semi"];
    reject_unknown(s, "semi", {"epsilon", "sample_gammas", "lambda"});
    read(s, "epsilon", "semi", cfg.epsilon);
    read(s, "sample_gammas", "semi", cfg.sample_gammas);
    read_lambda(s, "semi");
  }
  if (j.contains("heterogeneity")) {
    const json& h = j["heterogeneity"];
    if (h.is_string()) {
      cfg.chi_spec = h.get<std::string>();
    } else {
      reject_unknown(h, "heterogeneity", {"spec", "round_robin", "fixed",
                                          "schedule"});
      if (h.size() > 1) {
        throw ConfigError("'heterogeneity' takes exactly one of spec, "
                          "round_robin, fixed, schedule");
      }
      cfg.chi_spec = read_string(h, "spec", "heterogeneity", cfg.chi_spec);
      if (h.contains("round_robin")) {
        const json& rr = h["round_robin"];
        reject_unknown(rr, "heterogeneity.round_robin",
                       {"chi", "stragglers", "period"});
        double chi = 1.0;
        int nu = 1, period = 1;
        read(rr, "chi", "heterogeneity.round_robin", chi);
        read(rr, "stragglers", "heterogeneity.round_robin", nu);
        read(rr, "period", "heterogeneity.round_robin", period);
        std::ostringstream os;
        os.precision(17);
        os << "rr:" << chi << ":" << nu << ":" << period;
        cfg.chi_spec = os.str();
      }
      if (h.contains("fixed")) {
        std::vector<double> chi;
        read(h, "fixed", "heterogeneity", chi);
        std::ostringstream os;
        os.precision(17);
        os << "fixed:";
        for (std::size_t i = 0; i < chi.size(); ++i) {
          os << (i ? "," : "") << chi[i];
        }
        cfg.chi_spec = os.str();
      }
      if (h.contains("schedule")) {
        const json& sch = h["schedule"];
        if (!sch.is_array()) {
          throw ConfigError("'heterogeneity.schedule' must be a list");
        }
        for (std::size_t n = 0; n < sch.size(); ++n) {
          cfg.schedule.push_back(parse_entry(sch[n], n));
        }
      }
    }
  }
  if (j.contains("data")) {
    const json& d = j["data"];
    reject_unknown(d, "data", {"train_size", "eval_size", "noise"});
    read(d, "train_size", "data", cfg.train_size);
    read(d, "eval_size", "data", cfg.eval_size);
    read(d, "noise", "data", cfg.data_noise);
  }
  read(j, "output", "", cfg.output);
  if (cfg.mode == Mode::kZeroPriDiffE && !cfg.fixed_gamma) {
    cfg.fixed_gamma = 0.5;
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["model"] = {{"depth", cfg.model.depth},     {"hs", cfg.model.hs},
                {"expansion", cfg.model.expansion}, {"bs", cfg.model.bs},
                {"sql", cfg.model.sql},         {"e", cfg.model.e},
                {"lr", cfg.model.lr},           {"classes", cfg.model.classes}};
  j["mode"] = to_string(cfg.mode);
  j["epochs"] = cfg.epochs;
  j["iterations_per_epoch"] = cfg.iterations_per_epoch;
  j["seed"] = cfg.seed;
  j["imputation"] = to_string(cfg.imputation);
  j["cost"] = {{"alpha", cfg.cost.alpha},
               {"beta_net", cfg.cost.beta_net},
               {"compute_rate", cfg.cost.compute_rate},
               {"prune_alloc", cfg.cost.prune_alloc},
               {"prune_col_cost", cfg.cost.prune_col_cost},
               {"wall_clock_us", cfg.cost.wall_clock_us}};
  j["resizing"] = {
      {"theta_iter", cfg.priority.theta_iter},
      {"alpha", cfg.priority.alpha},
      {"gamma_max", cfg.priority.gamma_max},
      {"refresh_threshold", cfg.refresh_threshold},
      {"priority_update", cfg.priority.incremental ? "incremental" : "full"},
      {"fixed_gamma",
       cfg.fixed_gamma ? json(*cfg.fixed_gamma) : json(nullptr)},
      {"criterion", to_string(cfg.criterion)}};
  j["migration"] = {{"collection", to_string(cfg.collection)},
                    {"primitive", to_string(cfg.primitive)}};
  j["semi"] = {{"epsilon", cfg.epsilon},
               {"sample_gammas", cfg.sample_gammas},
               {"lambda", cfg.lambda ? json(*cfg.lambda) : json(nullptr)}};
  if (cfg.schedule.empty()) {
    j["heterogeneity"] = {{"spec", cfg.chi_spec}};
  } else {
    json sch = json::array();
    for (const HeteroEntry& e : cfg.schedule) {
      sch.push_back({{"epochs", {e.first, e.last}},
                     {"ranks", e.ranks},
                     {"chi", e.chi}});
    }
    j["heterogeneity"] = {{"schedule", sch}};
  }
  j["data"] = {{"train_size", cfg.train_size},
               {"eval_size", cfg.eval_size},
               {"noise", cfg.data_noise}};
  j["output"] = cfg.output;
  return j;
}

}  // namespace tpflex
