#include "hvacf/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include "hvacf/errors.hpp"

namespace hvacf {

namespace {

std::string valid_variant_list() {
  std::string s;
  for (Variant v : kAllVariants) {
    if (!s.empty()) s += ", ";
    s += variant_name(v);
  }
  return s;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

double parse_real(std::string_view key, std::string_view text) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v))
    throw ConfigError("config key '" + std::string(key) + "': '" + std::string(text) +
                      "' is not a number");
  return v;
}

std::uint64_t parse_count(std::string_view key, std::string_view text) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError("config key '" + std::string(key) + "': '" + std::string(text) +
                      "' is not a non-negative integer");
  return v;
}

}  // namespace

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::complete: return "complete";
    case Variant::euclidean: return "euclidean";
    case Variant::no_adj: return "no-adj";
    case Variant::no_aggregation: return "no-aggregation";
    case Variant::no_attention: return "no-attention";
    case Variant::attn_no_visual: return "attn-no-visual";
    case Variant::attn_no_v: return "attn-no-v";
    case Variant::attn_no_p: return "attn-no-p";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants)
    if (variant_name(v) == name) return v;
  throw ConfigError("unknown variant '" + std::string(name) +
                    "'; valid variants: " + valid_variant_list());
}

double TrainConfig::attention_tau() const {
  return tau > 0.0 ? tau : std::sqrt(static_cast<double>(dim));
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(dim > 0, "dim must be positive");
  require(c > 0.0, "c must be positive");
  require(gamma >= 0.0, "gamma must be >= 0");
  require(lambda >= 0.0, "lambda must be >= 0");
  require(margin > 0.0, "margin must be positive");
  require(neighbors > 0, "neighbors must be positive");
  require(tau >= 0.0, "tau must be >= 0 (0 selects sqrt(dim))");
  require(lr > 0.0, "lr must be positive");
  require(batch > 0, "batch must be positive");
  require(weight_decay >= 0.0, "weight_decay must be >= 0");
}

void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  if (key == "dim") cfg.dim = parse_count(key, value);
  else if (key == "c") cfg.c = parse_real(key, value);
  else if (key == "gamma") cfg.gamma = parse_real(key, value);
  else if (key == "lambda") cfg.lambda = parse_real(key, value);
  else if (key == "margin") cfg.margin = parse_real(key, value);
  else if (key == "neighbors") cfg.neighbors = parse_count(key, value);
  else if (key == "tau") cfg.tau = parse_real(key, value);
  else if (key == "lr") cfg.lr = parse_real(key, value);
  else if (key == "batch") cfg.batch = parse_count(key, value);
  else if (key == "epochs") cfg.epochs = parse_count(key, value);
  else if (key == "seed") cfg.seed = parse_count(key, value);
  else if (key == "variant") cfg.variant = parse_variant(value);
  else if (key == "weight_decay") cfg.weight_decay = parse_real(key, value);
  else if (key == "neg_per_user") cfg.neg_per_user = parse_count(key, value);
  else
    throw ConfigError("unknown config key '" + std::string(key) +
                      "'; valid keys: dim, c, gamma, lambda, margin, neighbors, tau, lr, "
                      "batch, epochs, seed, variant, weight_decay, neg_per_user");
}

TrainConfig parse_config_text(std::string_view text, TrainConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    set_config_value(base, s.substr(0, eq), s.substr(eq + 1));
  }
  return base;
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {
      {"dim", cfg.dim},
      {"c", cfg.c},
      {"gamma", cfg.gamma},
      {"lambda", cfg.lambda},
      {"margin", cfg.margin},
      {"neighbors", cfg.neighbors},
      {"tau", cfg.tau},
      {"lr", cfg.lr},
      {"batch", cfg.batch},
      {"epochs", cfg.epochs},
      {"seed", cfg.seed},
      {"variant", std::string(variant_name(cfg.variant))},
      {"weight_decay", cfg.weight_decay},
      {"neg_per_user", cfg.neg_per_user},
  };
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  try {
    cfg.dim = j.at("dim").get<std::size_t>();
    cfg.c = j.at("c").get<double>();
    cfg.gamma = j.at("gamma").get<double>();
    cfg.lambda = j.at("lambda").get<double>();
    cfg.margin = j.at("margin").get<double>();
    cfg.neighbors = j.at("neighbors").get<std::size_t>();
    cfg.tau = j.at("tau").get<double>();
    cfg.lr = j.at("lr").get<double>();
    cfg.batch = j.at("batch").get<std::size_t>();
    cfg.epochs = j.at("epochs").get<std::size_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.variant = parse_variant(j.at("variant").get<std::string>());
    cfg.weight_decay = j.at("weight_decay").get<double>();
    cfg.neg_per_user = j.at("neg_per_user").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config json: ") + e.what());
  }
  return cfg;
}

std::string canonical_json(const TrainConfig& cfg) { return to_json(cfg).dump(); }

ModelWiring apply_variant(const TrainConfig& cfg) {
  ModelWiring w;
  w.gamma = cfg.gamma;
  switch (cfg.variant) {
    case Variant::complete: break;
    case Variant::euclidean:
      w.hyperbolic = false;
      w.use_adj = false;
      break;
    case Variant::no_adj:
      w.use_adj = false;
      w.gamma = 0.0;
      break;
    case Variant::no_aggregation: w.aggregate = false; break;
    case Variant::no_attention: w.attention = false; break;
    case Variant::attn_no_visual: w.term_visual = false; break;
    case Variant::attn_no_v: w.term_v = false; break;
    case Variant::attn_no_p: w.term_p = false; break;
  }
  if (!w.use_adj) w.gamma = 0.0;
  return w;
}

}  // namespace hvacf
