#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace hvacf::data {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

struct Interaction {
  UserId user = 0;
  ItemId item = 0;
  std::int64_t timestamp = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

// Sorted, duplicate-free positive item ids per dense user id.
using PositiveSets = std::vector<std::vector<ItemId>>;

PositiveSets positive_sets(std::size_t n_users, std::span<const Interaction> interactions);
bool contains(const std::vector<ItemId>& sorted, ItemId item);

// Maps external string ids to dense ids assigned in first-appearance order.
class IdIndex {
 public:
  std::uint32_t intern(const std::string& external);
  std::uint32_t at(const std::string& external) const;  // throws InvalidInput
  bool contains(const std::string& external) const { return index_.count(external) != 0; }
  const std::string& external(std::uint32_t dense) const { return names_.at(dense); }
  std::size_t size() const { return names_.size(); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct InteractionDataset {
  IdIndex users;
  IdIndex items;
  std::vector<Interaction> interactions;

  std::size_t n_users() const { return users.size(); }
  std::size_t n_items() const { return items.size(); }
};

struct SplitDataset {
  std::vector<Interaction> train;
  std::vector<Interaction> valid;
  std::vector<Interaction> test;
};

struct SplitRatios {
  double train = 0.7;
  double valid = 0.1;
  double test = 0.2;
};

// Reads a `user_id,item_id,timestamp` CSV (columns in any order). Exact
// duplicate rows are dropped. Throws ParseError naming the offending line.
InteractionDataset load_interactions(const std::filesystem::path& path);
InteractionDataset parse_interactions(std::istream& in, const std::string& source);
void write_interactions(const InteractionDataset& ds, const std::filesystem::path& path);

// Global chronological split ordered by (timestamp, user, item).
SplitDataset chrono_split(const InteractionDataset& ds, SplitRatios ratios = {});

// Frozen per-item visual features, rows in dense item id order.
class VisualFeatureStore {
 public:
  VisualFeatureStore() = default;
  VisualFeatureStore(std::size_t count, std::size_t dim, std::vector<float> rows);

  std::size_t count() const { return count_; }
  std::size_t dim() const { return dim_; }
  std::span<const float> row(std::size_t item) const;
  // True for rows that are entirely zero (no image available).
  bool missing(std::size_t item) const { return missing_.at(item); }
  const std::vector<float>& data() const { return rows_; }

  // Copy with exactly n rows; extra rows are zero-filled and flagged missing.
  VisualFeatureStore resized(std::size_t n) const;

 private:
  std::size_t count_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> rows_;
  std::vector<bool> missing_;
};

inline constexpr char kFeatureMagic[8] = {'H', 'V', 'F', 'E', 'A', 'T', '0', '1'};

// `HVFEAT01` | u32 count | u32 dim | count*dim f32, all little-endian.
VisualFeatureStore load_features(const std::filesystem::path& path);
VisualFeatureStore decode_features(std::span<const unsigned char> bytes);
std::vector<unsigned char> encode_features(const VisualFeatureStore& store);
void write_features(const VisualFeatureStore& store, const std::filesystem::path& path);

struct SynthParams {
  std::size_t users = 200;
  std::size_t items = 500;
  std::size_t interactions = 10000;
  double skew = 1.0;  // Zipf exponent of item popularity
  std::uint64_t seed = 1;
  std::size_t feature_dim = 16;
  std::size_t top_categories = 4;
  std::size_t sub_categories = 4;  // per top category
};

struct SynthData {
  InteractionDataset dataset;
  VisualFeatureStore features;
  std::vector<std::uint32_t> item_category;  // leaf category per dense item
};

SynthData synth_generate(const SynthParams& params);

}  // namespace hvacf::data
