#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "ecpricing/environment.hpp"

using namespace ecpricing;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ecpricing_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string hourly(const std::string& date, int hours, const std::string& value, int skip = -1) {
  std::string s;
  for (int h = 0; h < hours + (skip >= 0); ++h) {
    if (h == skip) continue;
    char buf[8];
    std::snprintf(buf, sizeof buf, "%02d:00", h);
    s += date + "T" + buf + "," + value + "\n";
  }
  return s;
}

}  // namespace

TEST(Data, SyntheticYearIsDeterministicAndValid) {
  const auto a = synth_exogenous(30, 3, 42), b = synth_exogenous(30, 3, 42), c = synth_exogenous(30, 3, 43);
  ASSERT_EQ(a.size(), 30u);
  EXPECT_EQ(a[0].date, "2023-01-01");
  EXPECT_EQ(a[29].date, "2023-01-30");
  EXPECT_EQ(a[5].spot_price, b[5].spot_price);
  EXPECT_NE(a[5].spot_price, c[5].spot_price);
  for (const auto& d : a) {
    EXPECT_NO_THROW(d.validate());
    EXPECT_EQ(d.baseload.size(), 3u);
    EXPECT_EQ(d.pv_reference[0], 0.0);  // no sun at midnight
  }
  EXPECT_EQ(synth_exogenous(60, 1, 1, 2024)[59].date, "2024-02-29");
}

TEST(Data, CsvRoundTrip) {
  const auto dir = scratch("csv_roundtrip");
  const auto days = synth_exogenous(3, 2, 5);
  const auto p = (dir / "p.csv").string(), t = (dir / "t.csv").string(), v = (dir / "v.csv").string(),
             b = (dir / "b.csv").string();
  write_exogenous(days, p, t, v, b);
  const auto back = load_exogenous(p, t, v, b);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t d = 0; d < 3; ++d) {
    EXPECT_EQ(back[d].date, days[d].date);
    EXPECT_EQ(back[d].spot_price, days[d].spot_price);
    EXPECT_EQ(back[d].outdoor_temp, days[d].outdoor_temp);
    EXPECT_EQ(back[d].pv_reference, days[d].pv_reference);
    EXPECT_EQ(back[d].baseload, days[0].baseload);
  }
}

TEST(Data, NegativePricesAreFloored) {
  const auto dir = scratch("csv_negative");
  write_file(dir / "p.csv", "timestamp,price_dkk_per_kwh\n" + hourly("2023-03-01", 24, "-0.5"));
  write_file(dir / "t.csv", "timestamp,temp_c\n" + hourly("2023-03-01", 24, "4.0"));
  write_file(dir / "v.csv", "timestamp,pv_kwh_per_kw\n" + hourly("2023-03-01", 24, "0.1"));
  write_file(dir / "b.csv", "timestamp,a\n" + hourly("2023-03-01", 24, "0.3"));
  const auto days = load_exogenous((dir / "p.csv").string(), (dir / "t.csv").string(), (dir / "v.csv").string(),
                                   (dir / "b.csv").string());
  ASSERT_EQ(days.size(), 1u);
  for (double x : days[0].spot_price) EXPECT_EQ(x, 0.0);
}

TEST(Data, ShortDayIsRejected) {
  // A 23-hour day (clock change) is not a complete day.
  const auto dir = scratch("csv_short");
  write_file(dir / "p.csv", "timestamp,price_dkk_per_kwh\n" + hourly("2023-03-26", 23, "1.0", 2));
  write_file(dir / "t.csv", "timestamp,temp_c\n" + hourly("2023-03-26", 24, "4.0"));
  write_file(dir / "v.csv", "timestamp,pv_kwh_per_kw\n" + hourly("2023-03-26", 24, "0.1"));
  write_file(dir / "b.csv", "timestamp,a\n" + hourly("2023-03-26", 24, "0.3"));
  EXPECT_THROW(load_exogenous((dir / "p.csv").string(), (dir / "t.csv").string(), (dir / "v.csv").string(),
                              (dir / "b.csv").string()),
               SchemaError);
}

TEST(Data, SchemaErrors) {
  const auto dir = scratch("csv_schema");
  const auto ok_t = "timestamp,temp_c\n" + hourly("2023-03-01", 24, "4.0");
  const auto ok_v = "timestamp,pv_kwh_per_kw\n" + hourly("2023-03-01", 24, "0.1");
  const auto ok_b = "timestamp,a\n" + hourly("2023-03-01", 24, "0.3");
  write_file(dir / "t.csv", ok_t);
  write_file(dir / "v.csv", ok_v);
  write_file(dir / "b.csv", ok_b);
  auto load = [&] {
    return load_exogenous((dir / "p.csv").string(), (dir / "t.csv").string(), (dir / "v.csv").string(),
                          (dir / "b.csv").string());
  };
  write_file(dir / "p.csv", "timestamp,price\n" + hourly("2023-03-01", 24, "1.0"));
  EXPECT_THROW(load(), SchemaError);  // wrong column name
  write_file(dir / "p.csv", "timestamp,price_dkk_per_kwh\n" + hourly("2023-03-01", 24, "abc"));
  EXPECT_THROW(load(), SchemaError);
  write_file(dir / "p.csv", "timestamp,price_dkk_per_kwh\n" + hourly("2023-03-02", 24, "1.0"));
  EXPECT_THROW(load(), SchemaError);  // dates differ between files
  write_file(dir / "p.csv", "timestamp,price_dkk_per_kwh\n" + hourly("2023-03-01", 24, "1.0"));
  write_file(dir / "v.csv", "timestamp,pv_kwh_per_kw\n" + hourly("2023-03-01", 24, "-0.1"));
  EXPECT_THROW(load(), SchemaError);
  write_file(dir / "v.csv", ok_v);
  EXPECT_NO_THROW(load());
  EXPECT_THROW(load_exogenous((dir / "missing.csv").string(), "", "", ""), SchemaError);
}

TEST(Catalogue, TenFeasibleBlocks) {
  const auto day = synth_exogenous(1, 1, 3)[0];
  const auto blocks = build_catalogue(CatalogueConfig{}, day.baseload[0], day);
  ASSERT_EQ(blocks.size(), kCatalogueSize);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    EXPECT_EQ(blocks[k].id, signature_names()[k]);
    EXPECT_EQ(blocks[k].horizon(), 24u);
    EXPECT_NO_THROW(solve_signature_lp(blocks[k], day.spot_price)) << blocks[k].id;
  }
}

TEST(Community, DrawsRespectStructure) {
  const auto base = synth_baseload(40, 1);
  const auto c = make_community(40, 9, CommunityConfig{}, base);
  EXPECT_NO_THROW(c.validate());
  int pv = 0, ev = 0;
  for (const auto& w : c.weights) {
    pv += w[kPvSignature] > 0.0;
    for (auto k : kEvSignatures) ev += w[k] == 1.0;
  }
  EXPECT_GT(pv, 10);
  EXPECT_LT(pv, 40);
  EXPECT_GT(ev, 15);
  const auto again = make_community(40, 9, CommunityConfig{}, base);
  EXPECT_EQ(again.weights, c.weights);
}

TEST(Community, DisabledSignaturesAreZero) {
  std::vector<bool> enabled(kCatalogueSize, true);
  enabled[kBatterySignature] = false;
  enabled[kEvSignatures[0]] = false;
  const auto c = make_community(20, 3, CommunityConfig{1.0, 0.7, 1.0}, synth_baseload(20, 2), enabled);
  for (const auto& w : c.weights) {
    EXPECT_EQ(w[kBatterySignature], 0.0);
    EXPECT_EQ(w[kEvSignatures[0]], 0.0);
  }
}

TEST(Community, FlipMovesOneHotPositions) {
  auto c = make_community(10, 4, CommunityConfig{0.5, 1.0, 1.0}, synth_baseload(10, 2));
  const auto before = c.weights;
  const auto flipped = flip_weights(c, 0.4, 99);
  ASSERT_EQ(flipped.size(), 4u);
  for (std::size_t n = 0; n < 10; ++n) {
    const bool in = std::find(flipped.begin(), flipped.end(), n) != flipped.end();
    if (!in) {
      EXPECT_EQ(c.weights[n], before[n]);
      continue;
    }
    for (auto k : kEvSignatures)
      if (before[n][k] == 1.0) EXPECT_EQ(c.weights[n][k], 0.0);
    EXPECT_EQ(c.weights[n][kPvSignature], before[n][kPvSignature]);
  }
  EXPECT_THROW(flip_weights(c, 1.5, 1), InvalidArgument);
}

TEST(Community, JsonRoundTrip) {
  const auto c = make_community(3, 5, CommunityConfig{}, synth_baseload(3, 5));
  const auto back = community_from_json(to_json(c));
  EXPECT_EQ(back.weights, c.weights);
  EXPECT_EQ(back.noise_std, c.noise_std);
  auto bad = to_json(c);
  bad["weights"][0][kBatterySignature] = 0.5;
  EXPECT_THROW(community_from_json(bad), InvalidArgument);
}

TEST(Response, TieBreakFollowsRecommendation) {
  const TimeGrid g{2, 1.0};
  const std::vector<ConstraintBlock> blocks{build_flex_baseload({{1.0, 1.0}, {0, 1}, 0.0, 2.0}, g)};
  const std::vector<double> flat{1.0, 1.0};
  // every split is optimal at flat prices: the recommended one is followed
  const std::vector<std::vector<double>> rec{{0.5, 1.5}};
  EXPECT_EQ(realized_profiles(blocks, flat, rec)[0], rec[0]);
  // a strictly worse recommendation is ignored
  const std::vector<double> skew{1.0, 2.0};
  const auto p = realized_profiles(blocks, skew, rec)[0];
  EXPECT_NEAR(p[0], 2.0, 1e-9);
  EXPECT_NEAR(p[1], 0.0, 1e-9);
}

TEST(Response, ExpectedAndNoisy) {
  const std::vector<std::vector<double>> P{{1.0, 2.0}, {0.0, -1.0}};
  const std::vector<double> w{2.0, 0.5};
  EXPECT_EQ(expected_response(P, w), (std::vector<double>{2.0, 3.5}));
  std::mt19937_64 rng(1);
  EXPECT_EQ(true_response(P, w, 0.0, rng), expected_response(P, w));
  std::mt19937_64 r1(3), r2(3);
  EXPECT_EQ(true_response(P, w, 0.1, r1), true_response(P, w, 0.1, r2));
  EXPECT_THROW(expected_response(P, std::vector<double>{1.0}), InvalidArgument);
}
