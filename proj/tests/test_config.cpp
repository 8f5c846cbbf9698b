#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "nudge2d/config.hpp"

using namespace nudge2d;

TEST(Expression, Arithmetic) {
  EXPECT_EQ(parse_number("2*pi"), 2 * std::numbers::pi);
  EXPECT_EQ(parse_number("1/1024"), 1.0 / 1024);
  EXPECT_EQ(parse_number("1e-4"), 1e-4);
  EXPECT_EQ(parse_number("2.5e6"), 2.5e6);
  EXPECT_EQ(parse_number(" -(3 + 4) * 2 "), -14.0);
  EXPECT_EQ(parse_number("2/3*3"), 2.0);
  EXPECT_TRUE(std::isinf(parse_number("inf")));
  for (const char* bad : {"", "2*", "pie", "(1", "1)", "1 2", "abc"})
    EXPECT_THROW(parse_number(bad), ConfigError) << bad;
}

TEST(Expression, IntegersAndBooleans) {
  EXPECT_EQ(parse_integer("128"), 128);
  EXPECT_EQ(parse_integer("2*64"), 128);
  EXPECT_THROW(parse_integer("1.5"), ConfigError);
  EXPECT_TRUE(parse_bool("true"));
  EXPECT_FALSE(parse_bool("no"));
  EXPECT_THROW(parse_bool("maybe"), ConfigError);
}

TEST(Config, ParsesSectionsListsAndComments) {
  const RunConfig c = parse_config_string(R"(
# desk run
[grid]
n = 64
length = 2*pi

[physics]
nu = 1e-3   # viscosity
dt = 1/512

[assimilation]
mu = 0, 0.5, 1, 2
K = 8, 16
eta = 0, 0.7
T = 100
T0 = 50
kind = nodal_smoothed
)");
  EXPECT_EQ(c.n, 64);
  EXPECT_EQ(c.length, 2 * std::numbers::pi);
  EXPECT_EQ(c.dt, 1.0 / 512);
  EXPECT_EQ(c.mu, (std::vector<double>{0, 0.5, 1, 2}));
  EXPECT_EQ(c.K, (std::vector<int>{8, 16}));
  EXPECT_EQ(c.eta, (std::vector<double>{0, 0.7}));
  EXPECT_EQ(c.T0_effective(), 50.0);
  EXPECT_EQ(c.kind, ObservationKind::nodal_smoothed);
  EXPECT_EQ(c.band_lo, 10);  // untouched keys keep defaults
}

TEST(Config, DefaultsMatchDocumentedValues) {
  const RunConfig c;
  EXPECT_EQ(c.eps, 1e-10);
  EXPECT_EQ(c.T0_effective(), 2.0 * c.T / 3.0);
  EXPECT_EQ(c.sample_stride, 64);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, RejectsUnknownDuplicateAndStrayKeys) {
  EXPECT_THROW(parse_config_string("[grid]\nsize = 64\n"), ConfigError);
  EXPECT_THROW(parse_config_string("[grids]\nn = 64\n"), ConfigError);
  EXPECT_THROW(parse_config_string("[grid]\nn = 64\nn = 128\n"), ConfigError);
  EXPECT_THROW(parse_config_string("n = 64\n"), ConfigError);
  EXPECT_THROW(parse_config_string("[grid\nn = 64\n"), ConfigError);
  EXPECT_THROW(parse_config_string("[grid]\nn 64\n"), ConfigError);
  EXPECT_THROW(parse_config_string("[assimilation]\nkind = magic\n"), ConfigError);
  EXPECT_THROW(parse_config_string("[assimilation]\nK = 4,,8\n"), ConfigError);
  try {
    parse_config_string("[grid]\nn = 64\n[physics]\nnu = x\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(":4:"), std::string::npos) << e.what();
  }
}

TEST(Config, DumpParsesBackIdentically) {
  RunConfig c;
  c.n = 256;
  c.length = 3.7;
  c.nu = 1.0 / 3.0;
  c.mu = {0.1, 1.0 / 3.0, 16};
  c.K = {2, 9};
  c.eta = {0.0, 0.7};
  c.T0 = 12.5;
  c.kind = ObservationKind::modal;
  c.modal_radius = 4;
  c.spinup_checkpoint = "cache/u0.ckpt";
  c.record_wall_time = false;
  const std::string text = dump_config(c);
  const RunConfig back = parse_config_string(text);
  EXPECT_EQ(dump_config(back), text);
  EXPECT_EQ(back.nu, c.nu);
  EXPECT_EQ(back.mu, c.mu);
  EXPECT_EQ(back.hash(), c.hash());
  EXPECT_EQ(back.T0, c.T0);
  RunConfig automatic;
  EXPECT_FALSE(parse_config_string(dump_config(automatic)).T0.has_value());
}

TEST(Config, EveryKeyIsDumped) {
  std::set<std::string> names;
  for (const auto& k : config_keys()) {
    EXPECT_EQ(std::count(k.name.begin(), k.name.end(), '.'), 1) << k.name;
    EXPECT_TRUE(names.insert(k.name).second) << k.name;
    EXPECT_FALSE(k.help.empty()) << k.name;
  }
  const std::string text = dump_config(RunConfig{});
  for (const auto& name : names) EXPECT_NE(text.find(name.substr(name.find('.') + 1) + " = "), std::string::npos);
}

TEST(Config, ValidationCatchesBadValues) {
  auto invalid = [](auto mutate) {
    RunConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  invalid([](RunConfig& c) { c.n = 96; });
  invalid([](RunConfig& c) { c.nu = 0; });
  invalid([](RunConfig& c) { c.dt = -1; });
  invalid([](RunConfig& c) { c.band_lo = 13; });
  invalid([](RunConfig& c) { c.T0 = c.T; });
  invalid([](RunConfig& c) { c.eps = 0; });
  invalid([](RunConfig& c) { c.mu = {1, -1}; });
  invalid([](RunConfig& c) { c.K = {0}; });
  invalid([](RunConfig& c) { c.sample_stride = 0; });
  invalid([](RunConfig& c) { c.workers = 0; });
}

TEST(Config, HashTracksReferenceTrajectoryOnly) {
  RunConfig a, b;
  b.mu = {3};
  b.K = {4};
  b.T = 10;
  EXPECT_EQ(a.hash(), b.hash());
  b.seed = 2;
  EXPECT_NE(a.hash(), b.hash());
  RunConfig c;
  c.dt = 1.0 / 2048;
  EXPECT_NE(a.hash(), c.hash());
}

TEST(Config, ObservationSpecs) {
  RunConfig c;
  EXPECT_EQ(c.observation(8, 0.0).kind, ObservationKind::nodal);
  EXPECT_EQ(c.observation(8, 0.7).kind, ObservationKind::nodal_smoothed);
  c.kind = ObservationKind::nodal_smoothed;
  EXPECT_THROW(c.observation(8, 0.0), ConfigError);
  c.kind = ObservationKind::modal;
  c.modal_radius = 3;
  EXPECT_EQ(c.observation(8, 0.0).kind, ObservationKind::modal);
}
