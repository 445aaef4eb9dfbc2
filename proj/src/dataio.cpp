#include "hvacf/dataio.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

#include "hvacf/errors.hpp"

namespace hvacf::data {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

PositiveSets positive_sets(std::size_t n_users, std::span<const Interaction> interactions) {
  PositiveSets sets(n_users);
  for (const auto& x : interactions) sets.at(x.user).push_back(x.item);
  for (auto& s : sets) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
  }
  return sets;
}

bool contains(const std::vector<ItemId>& sorted, ItemId item) {
  return std::binary_search(sorted.begin(), sorted.end(), item);
}

std::uint32_t IdIndex::intern(const std::string& external) {
  auto [it, inserted] = index_.try_emplace(external, static_cast<std::uint32_t>(names_.size()));
  if (inserted) names_.push_back(external);
  return it->second;
}

std::uint32_t IdIndex::at(const std::string& external) const {
  auto it = index_.find(external);
  if (it == index_.end()) throw InvalidInput("unknown id '" + external + "'");
  return it->second;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

struct TripleHash {
  std::size_t operator()(const Interaction& x) const {
    std::size_t h = std::hash<std::uint64_t>{}((std::uint64_t(x.user) << 32) | x.item);
    return h ^ (std::hash<std::int64_t>{}(x.timestamp) + 0x9e3779b97f4a7c15ULL + (h << 6) +
                (h >> 2));
  }
};

}  // namespace

InteractionDataset parse_interactions(std::istream& in, const std::string& source) {
  auto fail = [&](std::size_t line, const std::string& msg) -> ParseError {
    return ParseError(source + ":" + std::to_string(line) + ": " + msg);
  };

  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw ParseError(source + ": empty file");
  std::string_view header = trim(line);
  if (header.size() >= 3 && header.substr(0, 3) == "\xEF\xBB\xBF") header.remove_prefix(3);

  const auto columns = split_fields(header);
  int col_user = -1, col_item = -1, col_ts = -1;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == "user_id") col_user = static_cast<int>(i);
    else if (columns[i] == "item_id") col_item = static_cast<int>(i);
    else if (columns[i] == "timestamp") col_ts = static_cast<int>(i);
  }
  if (col_user < 0) throw fail(1, "missing column 'user_id'");
  if (col_item < 0) throw fail(1, "missing column 'item_id'");
  if (col_ts < 0) throw fail(1, "missing column 'timestamp'");

  InteractionDataset ds;
  std::unordered_set<Interaction, TripleHash> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != columns.size())
      throw fail(lineno, "expected " + std::to_string(columns.size()) + " fields, got " +
                             std::to_string(fields.size()));
    const auto user = fields[col_user];
    const auto item = fields[col_item];
    const auto ts = fields[col_ts];
    if (user.empty()) throw fail(lineno, "missing user_id");
    if (item.empty()) throw fail(lineno, "missing item_id");
    if (ts.empty()) throw fail(lineno, "missing timestamp");

    std::int64_t t = 0;
    auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), t);
    if (ec != std::errc() || ptr != ts.data() + ts.size())
      throw fail(lineno, "timestamp '" + std::string(ts) + "' is not an integer");

    Interaction x{ds.users.intern(std::string(user)), ds.items.intern(std::string(item)), t};
    if (seen.insert(x).second) ds.interactions.push_back(x);
  }
  return ds;
}

InteractionDataset load_interactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  return parse_interactions(in, path.string());
}

void write_interactions(const InteractionDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "user_id,item_id,timestamp\n";
  for (const auto& x : ds.interactions)
    out << ds.users.external(x.user) << ',' << ds.items.external(x.item) << ',' << x.timestamp
        << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

SplitDataset chrono_split(const InteractionDataset& ds, SplitRatios ratios) {
  if (!(ratios.train > 0 && ratios.valid > 0 && ratios.test > 0) ||
      std::fabs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9)
    throw InvalidInput("chrono_split: ratios must be positive and sum to 1");

  std::vector<Interaction> sorted = ds.interactions;
  std::stable_sort(sorted.begin(), sorted.end(), [](const Interaction& a, const Interaction& b) {
    return std::tie(a.timestamp, a.user, a.item) < std::tie(b.timestamp, b.user, b.item);
  });

  const std::size_t n = sorted.size();
  // The epsilon keeps products such as 0.7 * 30 from flooring one short.
  const auto n_train = static_cast<std::size_t>(std::floor(ratios.train * n + 1e-9));
  const auto n_valid = static_cast<std::size_t>(std::floor(ratios.valid * n + 1e-9));

  SplitDataset split;
  split.train.assign(sorted.begin(), sorted.begin() + n_train);
  split.valid.assign(sorted.begin() + n_train, sorted.begin() + n_train + n_valid);
  split.test.assign(sorted.begin() + n_train + n_valid, sorted.end());
  return split;
}

VisualFeatureStore::VisualFeatureStore(std::size_t count, std::size_t dim, std::vector<float> rows)
    : count_(count), dim_(dim), rows_(std::move(rows)), missing_(count, false) {
  if (dim == 0) throw InvalidInput("feature store: dim must be positive");
  if (rows_.size() != count * dim) throw InvalidInput("feature store: row data size mismatch");
  for (std::size_t i = 0; i < count; ++i) {
    auto r = row(i);
    missing_[i] = std::all_of(r.begin(), r.end(), [](float v) { return v == 0.0f; });
  }
}

std::span<const float> VisualFeatureStore::row(std::size_t item) const {
  if (item >= count_) throw InvalidInput("feature store: item out of range");
  return {rows_.data() + item * dim_, dim_};
}

VisualFeatureStore VisualFeatureStore::resized(std::size_t n) const {
  std::vector<float> rows(n * dim_, 0.0f);
  std::copy_n(rows_.begin(), std::min(n, count_) * dim_, rows.begin());
  return VisualFeatureStore(n, dim_, std::move(rows));
}

std::vector<unsigned char> encode_features(const VisualFeatureStore& store) {
  std::vector<unsigned char> out(16 + store.data().size() * 4);
  std::memcpy(out.data(), kFeatureMagic, 8);
  const auto count = static_cast<std::uint32_t>(store.count());
  const auto dim = static_cast<std::uint32_t>(store.dim());
  std::memcpy(out.data() + 8, &count, 4);
  std::memcpy(out.data() + 12, &dim, 4);
  std::memcpy(out.data() + 16, store.data().data(), store.data().size() * 4);
  return out;
}

VisualFeatureStore decode_features(std::span<const unsigned char> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kFeatureMagic, 8) != 0)
    throw FormatError("feature file: bad magic (expected HVFEAT01)");
  std::uint32_t count = 0, dim = 0;
  std::memcpy(&count, bytes.data() + 8, 4);
  std::memcpy(&dim, bytes.data() + 12, 4);
  if (dim == 0) throw FormatError("feature file: dim must be positive");
  const std::uint64_t expected = std::uint64_t(count) * dim * 4;
  if (bytes.size() - 16 != expected)
    throw FormatError("feature file: payload is " + std::to_string(bytes.size() - 16) +
                      " bytes, expected " + std::to_string(expected) +
                      (bytes.size() - 16 < expected ? " (truncated)" : " (trailing data)"));
  std::vector<float> rows(std::size_t(count) * dim);
  std::memcpy(rows.data(), bytes.data() + 16, expected);
  return VisualFeatureStore(count, dim, std::move(rows));
}

VisualFeatureStore load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open feature file");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return decode_features(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_features(const VisualFeatureStore& store, const std::filesystem::path& path) {
  const auto bytes = encode_features(store);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

SynthData synth_generate(const SynthParams& p) {
  if (p.users == 0 || p.items == 0 || p.interactions == 0)
    throw InvalidInput("synth_generate: users, items and interactions must be positive");
  if (!(p.skew >= 0.0)) throw InvalidInput("synth_generate: skew must be >= 0");
  if (p.top_categories == 0 || p.sub_categories == 0 || p.feature_dim == 0)
    throw InvalidInput("synth_generate: category counts and feature_dim must be positive");

  std::mt19937_64 rng(p.seed);
  const std::size_t n_leaf = p.top_categories * p.sub_categories;

  // Popularity: item ranks are a random permutation, weight 1 / rank^skew.
  std::vector<std::size_t> rank(p.items);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::shuffle(rank.begin(), rank.end(), rng);
  std::vector<double> weight(p.items);
  for (std::size_t i = 0; i < p.items; ++i) weight[i] = std::pow(double(rank[i] + 1), -p.skew);

  std::uniform_int_distribution<std::size_t> pick_leaf(0, n_leaf - 1);
  std::vector<std::uint32_t> leaf_of(p.items);
  for (auto& c : leaf_of) c = static_cast<std::uint32_t>(pick_leaf(rng));

  // Users like 1-3 leaf categories; fans are indexed per leaf and per top.
  std::vector<std::vector<std::uint32_t>> leaf_fans(n_leaf), top_fans(p.top_categories);
  std::uniform_int_distribution<int> pick_count(1, 3);
  for (std::size_t u = 0; u < p.users; ++u) {
    const int k = std::min<int>(pick_count(rng), static_cast<int>(n_leaf));
    std::vector<std::size_t> liked;
    while (liked.size() < static_cast<std::size_t>(k)) {
      const std::size_t c = pick_leaf(rng);
      if (std::find(liked.begin(), liked.end(), c) == liked.end()) liked.push_back(c);
    }
    for (std::size_t c : liked) {
      leaf_fans[c].push_back(static_cast<std::uint32_t>(u));
      auto& top = top_fans[c / p.sub_categories];
      if (top.empty() || top.back() != u) top.push_back(static_cast<std::uint32_t>(u));
    }
  }

  // The item is drawn first so its marginal frequency is exactly the
  // popularity distribution; the buyer then comes from the item's fans.
  std::discrete_distribution<std::size_t> pick_item(weight.begin(), weight.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_user(0, p.users - 1);
  auto pick_from = [&](const std::vector<std::uint32_t>& pool) {
    return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
  };

  std::vector<std::pair<std::uint32_t, std::uint32_t>> raw(p.interactions);
  for (auto& [u, i] : raw) {
    i = static_cast<std::uint32_t>(pick_item(rng));
    const double r = unit(rng);
    const auto& leaf = leaf_fans[leaf_of[i]];
    const auto& top = top_fans[leaf_of[i] / p.sub_categories];
    if (r < 0.75 && !leaf.empty()) u = pick_from(leaf);
    else if (r < 0.90 && !top.empty()) u = pick_from(top);
    else u = static_cast<std::uint32_t>(pick_user(rng));
  }

  std::vector<std::int64_t> times(p.interactions);
  std::uniform_int_distribution<std::int64_t> pick_time(0, 365LL * 24 * 3600);
  for (auto& t : times) t = 1'600'000'000LL + pick_time(rng);
  std::sort(times.begin(), times.end());

  // Feature centroids: top-level centroid plus a leaf offset, then per-item noise.
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> centroid(n_leaf, std::vector<double>(p.feature_dim));
  std::vector<std::vector<double>> top_centroid(p.top_categories,
                                                std::vector<double>(p.feature_dim));
  for (auto& c : top_centroid)
    for (auto& v : c) v = gauss(rng);
  for (std::size_t c = 0; c < n_leaf; ++c)
    for (std::size_t d = 0; d < p.feature_dim; ++d)
      centroid[c][d] = top_centroid[c / p.sub_categories][d] + 0.5 * gauss(rng);
  std::vector<std::vector<float>> item_feature(p.items, std::vector<float>(p.feature_dim));
  for (std::size_t i = 0; i < p.items; ++i)
    for (std::size_t d = 0; d < p.feature_dim; ++d)
      item_feature[i][d] = static_cast<float>(centroid[leaf_of[i]][d] + 0.1 * gauss(rng));

  SynthData out;
  auto& ds = out.dataset;
  std::vector<std::size_t> generator_item;  // dense id -> generator index
  for (std::size_t k = 0; k < raw.size(); ++k) {
    const auto [u, i] = raw[k];
    const UserId du = ds.users.intern("u" + std::to_string(u));
    const std::size_t before = ds.items.size();
    const ItemId di = ds.items.intern("i" + std::to_string(i));
    if (ds.items.size() != before) generator_item.push_back(i);
    ds.interactions.push_back({du, di, times[k]});
  }

  std::vector<float> rows;
  rows.reserve(generator_item.size() * p.feature_dim);
  for (std::size_t g : generator_item) {
    rows.insert(rows.end(), item_feature[g].begin(), item_feature[g].end());
    out.item_category.push_back(leaf_of[g]);
  }
  out.features = VisualFeatureStore(generator_item.size(), p.feature_dim, std::move(rows));
  return out;
}

}  // namespace hvacf::data
