#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "hvacf/dataio.hpp"
#include "hvacf/errors.hpp"

using namespace hvacf;
using namespace hvacf::data;

namespace {

InteractionDataset parse(const std::string& text) {
  std::istringstream in(text);
  return parse_interactions(in, "mem.csv");
}

InteractionDataset sequential(std::size_t n, std::int64_t ts_step = 1) {
  std::string text = "user_id,item_id,timestamp\n";
  for (std::size_t i = 0; i < n; ++i)
    text += "u" + std::to_string(i % 3) + ",i" + std::to_string(i) + "," +
            std::to_string(100 + std::int64_t(i) * ts_step) + "\n";
  return parse(text);
}

// scipy.stats.chi2.ppf(0.99, df)
constexpr double kChi2Crit499 = 575.4191950454931;

}  // namespace

TEST(LoadInteractions, WellFormed) {
  const auto ds = parse("user_id,item_id,timestamp\nalice,x,10\nbob,y,11\nalice,y,12\n");
  ASSERT_EQ(ds.interactions.size(), 3u);
  EXPECT_EQ(ds.n_users(), 2u);
  EXPECT_EQ(ds.n_items(), 2u);
  EXPECT_EQ(ds.users.at("alice"), 0u);
  EXPECT_EQ(ds.users.at("bob"), 1u);
  EXPECT_EQ(ds.items.at("y"), 1u);
  EXPECT_EQ(ds.interactions[2], (Interaction{0, 1, 12}));
  EXPECT_EQ(ds.users.external(ds.users.at("bob")), "bob");
}

TEST(LoadInteractions, ColumnOrderAndDuplicates) {
  const auto ds = parse("timestamp,item_id,user_id\n5,a,u\n5,a,u\n6,a,u\n");
  ASSERT_EQ(ds.interactions.size(), 2u);
  EXPECT_EQ(ds.interactions[1].timestamp, 6);
  const auto pos = positive_sets(ds.n_users(), ds.interactions);
  EXPECT_EQ(pos[0].size(), 1u);
}

TEST(LoadInteractions, MissingItemNamesLine2) {
  try {
    parse("user_id,item_id,timestamp\nalice,,10\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("mem.csv:2"), std::string::npos) << e.what();
  }
}

TEST(LoadInteractions, Errors) {
  EXPECT_THROW(parse(""), ParseError);
  EXPECT_THROW(parse("user_id,timestamp\na,1\n"), ParseError);
  EXPECT_THROW(parse("user_id,item_id,timestamp\na,b,1.5\n"), ParseError);
  EXPECT_THROW(parse("user_id,item_id,timestamp\na,b\n"), ParseError);
  EXPECT_THROW(load_interactions("/nonexistent/path.csv"), std::exception);
}

TEST(LoadInteractions, CapacityRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "hvacf_dataio_cap";
  std::filesystem::create_directories(dir);
  const auto path = dir / "big.csv";
  {
    std::ofstream out(path);
    out << "user_id,item_id,timestamp\n";
    for (int i = 0; i < 84980; ++i) out << "u" << i % 977 << ",i" << i % 1601 << "," << i << "\n";
  }
  const auto ds = load_interactions(path);
  EXPECT_EQ(ds.interactions.size(), 84980u);
  write_interactions(ds, dir / "again.csv");
  const auto ds2 = load_interactions(dir / "again.csv");
  EXPECT_EQ(ds2.interactions, ds.interactions);
  std::filesystem::remove_all(dir);
}

TEST(ChronoSplit, Sizes) {
  auto s = chrono_split(sequential(10));
  EXPECT_EQ(s.train.size(), 7u);
  EXPECT_EQ(s.valid.size(), 1u);
  EXPECT_EQ(s.test.size(), 2u);
  s = chrono_split(sequential(9));
  EXPECT_EQ(s.train.size(), 6u);
  EXPECT_EQ(s.valid.size(), 0u);
  EXPECT_EQ(s.test.size(), 3u);
}

TEST(ChronoSplit, OrderedAndPartition) {
  std::mt19937_64 rng(5);
  std::string text = "user_id,item_id,timestamp\n";
  for (int i = 0; i < 200; ++i)
    text += "u" + std::to_string(rng() % 20) + ",i" + std::to_string(rng() % 50) + "," +
            std::to_string(rng() % 30) + "\n";
  const auto ds = parse(text);
  const auto s = chrono_split(ds);
  EXPECT_EQ(s.train.size() + s.valid.size() + s.test.size(), ds.interactions.size());
  const auto key = [](const Interaction& x) { return std::tuple(x.timestamp, x.user, x.item); };
  std::vector<Interaction> all = s.train;
  all.insert(all.end(), s.valid.begin(), s.valid.end());
  all.insert(all.end(), s.test.begin(), s.test.end());
  EXPECT_TRUE(std::is_sorted(all.begin(), all.end(),
                             [&](const auto& a, const auto& b) { return key(a) < key(b); }));
  auto sorted_input = ds.interactions;
  std::sort(sorted_input.begin(), sorted_input.end(),
            [&](const auto& a, const auto& b) { return key(a) < key(b); });
  EXPECT_EQ(all, sorted_input);
  const auto again = chrono_split(ds);
  EXPECT_EQ(again.train, s.train);
  EXPECT_EQ(again.test, s.test);
}

TEST(ChronoSplit, TieBreakOnEqualTimestamps) {
  const auto ds = parse("user_id,item_id,timestamp\nb,x,1\na,y,1\na,x,1\nb,y,1\nc,x,1\n"
                        "c,y,1\na,z,1\nb,z,1\nc,z,1\nd,x,1\n");
  const auto s = chrono_split(ds);
  // dense users: b=0 a=1 c=2 d=3; items: x=0 y=1 z=2
  ASSERT_EQ(s.train.size(), 7u);
  EXPECT_EQ(s.train[0], (Interaction{0, 0, 1}));
  EXPECT_EQ(s.train[2], (Interaction{0, 2, 1}));
  EXPECT_EQ(s.valid[0], (Interaction{2, 1, 1}));
  EXPECT_EQ(s.test[1], (Interaction{3, 0, 1}));
}

TEST(Features, ValidStoreAndTruncation) {
  std::vector<unsigned char> bytes(kFeatureMagic, kFeatureMagic + 8);
  for (std::uint32_t v : {2u, 3u})
    for (int b = 0; b < 4; ++b) bytes.push_back((v >> (8 * b)) & 0xff);
  std::vector<unsigned char> payload(24, 0);
  const float one = 1.0f;
  std::memcpy(payload.data() + 4, &one, 4);
  auto full = bytes;
  full.insert(full.end(), payload.begin(), payload.end());
  const auto store = decode_features(full);
  EXPECT_EQ(store.count(), 2u);
  EXPECT_EQ(store.dim(), 3u);
  EXPECT_EQ(store.row(0)[1], 1.0f);
  EXPECT_FALSE(store.missing(0));
  EXPECT_TRUE(store.missing(1));
  full.pop_back();
  EXPECT_THROW(decode_features(full), FormatError);
  auto bad = bytes;
  bad[0] = 'X';
  bad.insert(bad.end(), payload.begin(), payload.end());
  EXPECT_THROW(decode_features(bad), FormatError);
}

TEST(Features, RoundTripBitIdentical) {
  std::mt19937_64 rng(6);
  std::normal_distribution<float> g(0.0f, 3.0f);
  std::vector<float> rows(37 * 11);
  for (auto& x : rows) x = g(rng);
  rows[5] = -0.0f;
  const VisualFeatureStore store(37, 11, rows);
  const auto path = std::filesystem::temp_directory_path() / "hvacf_feat_rt.hvfeat";
  write_features(store, path);
  const auto back = load_features(path);
  EXPECT_EQ(back.count(), 37u);
  EXPECT_EQ(back.dim(), 11u);
  EXPECT_EQ(std::memcmp(back.data().data(), rows.data(), rows.size() * sizeof(float)), 0);
  EXPECT_EQ(encode_features(back), encode_features(store));
  std::filesystem::remove(path);
}

TEST(Features, Resized) {
  const VisualFeatureStore store(1, 2, {1.0f, 2.0f});
  const auto r = store.resized(3);
  EXPECT_EQ(r.count(), 3u);
  EXPECT_TRUE(r.missing(2));
  EXPECT_EQ(r.row(0)[1], 2.0f);
}

TEST(Synth, Deterministic) {
  SynthParams p;
  p.interactions = 2000;
  const auto a = synth_generate(p);
  const auto b = synth_generate(p);
  EXPECT_EQ(a.dataset.interactions, b.dataset.interactions);
  EXPECT_EQ(encode_features(a.features), encode_features(b.features));
  p.seed = 2;
  EXPECT_NE(synth_generate(p).dataset.interactions, a.dataset.interactions);
}

TEST(Synth, ShapeAndTimestamps) {
  const auto s = synth_generate({});
  EXPECT_EQ(s.dataset.interactions.size(), 10000u);
  EXPECT_LE(s.dataset.n_users(), 200u);
  EXPECT_LE(s.dataset.n_items(), 500u);
  EXPECT_EQ(s.features.count(), s.dataset.n_items());
  EXPECT_EQ(s.features.dim(), 16u);
  EXPECT_EQ(s.item_category.size(), s.dataset.n_items());
  for (std::size_t i = 1; i < s.dataset.interactions.size(); ++i)
    ASSERT_GE(s.dataset.interactions[i].timestamp, s.dataset.interactions[i - 1].timestamp);
}

TEST(Synth, FeaturesClusterByCategory) {
  const auto s = synth_generate({});
  // same-leaf items must be closer on average than cross-leaf items
  double same = 0, cross = 0;
  std::size_t ns = 0, nc = 0;
  for (std::size_t a = 0; a < 60; ++a)
    for (std::size_t b = a + 1; b < 60; ++b) {
      double d = 0;
      for (std::size_t k = 0; k < 16; ++k) {
        const double e = s.features.row(a)[k] - s.features.row(b)[k];
        d += e * e;
      }
      if (s.item_category[a] == s.item_category[b]) same += d, ++ns;
      else cross += d, ++nc;
    }
  ASSERT_GT(ns, 0u);
  EXPECT_LT(same / double(ns), cross / double(nc));
}

TEST(Synth, ZeroSkewIsUniform) {
  SynthParams p;
  p.skew = 0.0;
  const auto s = synth_generate(p);
  std::vector<double> counts(p.items, 0.0);
  for (const auto& x : s.dataset.interactions) counts[x.item] += 1.0;
  const double expected = double(p.interactions) / double(p.items);
  double chi2 = 0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, kChi2Crit499);
}

TEST(Synth, ZipfTopTenMass) {
  const auto s = synth_generate({});
  std::vector<std::size_t> counts(s.dataset.n_items(), 0);
  for (const auto& x : s.dataset.interactions) ++counts[x.item];
  std::sort(counts.rbegin(), counts.rend());
  std::size_t top = 0;
  for (int i = 0; i < 10; ++i) top += counts[i];
  EXPECT_GE(double(top) / 10000.0, 0.15);
}
