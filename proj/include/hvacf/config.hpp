#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

namespace hvacf {

enum class Variant {
  complete,
  euclidean,
  no_adj,
  no_aggregation,
  no_attention,
  attn_no_visual,
  attn_no_v,
  attn_no_p,
};

inline constexpr std::array<Variant, 8> kAllVariants = {
    Variant::complete,       Variant::euclidean,    Variant::no_adj,
    Variant::no_aggregation, Variant::no_attention, Variant::attn_no_visual,
    Variant::attn_no_v,      Variant::attn_no_p,
};

std::string_view variant_name(Variant v);
// Throws ConfigError listing the valid names.
Variant parse_variant(std::string_view name);

struct TrainConfig {
  std::size_t dim = 50;
  double c = 1.0;
  double gamma = 0.5;
  double lambda = 0.01;
  double margin = 0.5;
  std::size_t neighbors = 32;
  double tau = 0.0;  // 0 selects sqrt(dim)
  double lr = 0.001;
  std::size_t batch = 512;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  Variant variant = Variant::complete;
  double weight_decay = 0.0;
  std::size_t neg_per_user = 100;  // 0 = every available negative

  double attention_tau() const;
  void validate() const;  // throws ConfigError
};

// Sets one field from its text form; throws ConfigError for unknown keys or
// unparseable values.
void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value);
// Flat `key = value` text; `#` starts a comment.
TrainConfig parse_config_text(std::string_view text, TrainConfig base = {});

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const nlohmann::json& j);
// Sorted keys, compact, shortest round-trip number formatting.
std::string canonical_json(const TrainConfig& cfg);

// How a variant rewires the forward model and objective.
struct ModelWiring {
  bool hyperbolic = true;   // false: d_euc replaces d_c and h() is skipped
  bool use_adj = true;      // adjustment loss term
  bool aggregate = true;    // neighbor aggregation of the user vector
  bool attention = true;    // false: uniform weights over the neighbor sample
  bool term_visual = true;  // W_f E(I_l) in the attention logit
  bool term_v = true;       // W_v v_l
  bool term_p = true;       // W_p p_l
  double gamma = 0.5;
};

ModelWiring apply_variant(const TrainConfig& cfg);

}  // namespace hvacf
