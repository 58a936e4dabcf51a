#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

#include "nvlev/config.hpp"

using namespace nvlev;
using namespace nvlev::config;

namespace {

std::vector<KeySpec> schema() {
  return {
      {"B_static", Dim::magnetic_field, "0 T"},
      {"pressure", Dim::pressure, "1 Torr"},
      {"theta", Dim::angle, "20.7 deg"},
      {"rate", Dim::angular_frequency, "1 MHz"},
      {"points", Dim::integer, "10"},
      {"contrast", Dim::dimensionless, "0.02"},
      {"sense", Dim::choice, "clockwise", {"clockwise", "counterclockwise"}},
      {"input", Dim::path, "none"},
  };
}

Errc code_of(auto&& fn, std::string* key = nullptr) {
  try {
    fn();
  } catch (const Error& e) {
    if (key) *key = e.key();
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::InvalidArgument;
}

std::string temp_file(const std::string& name, const std::string& body) {
  const std::string path = ::testing::TempDir() + name;
  std::ofstream(path) << body;
  return path;
}

}  // namespace

TEST(Config, GaussToTesla) {
  const auto rc = parse_config("t", schema(), {}, {"B_static=\"100 G\""});
  EXPECT_DOUBLE_EQ(rc.get("B_static"), 0.01);
  EXPECT_EQ(rc.raw("B_static"), "100 G");
}

TEST(Config, TorrToPascal) {
  const auto rc = parse_config("t", schema(), {}, {"pressure=6.9e-6 Torr"});
  EXPECT_NEAR(rc.get("pressure"), 9.199218e-4, 1e-9);
}

TEST(Config, AngularUnits) {
  const auto rc = parse_config("t", schema(), {}, {"theta=90 deg", "rate=2 kHz"});
  EXPECT_DOUBLE_EQ(rc.get("theta"), kPi / 2.0);
  EXPECT_DOUBLE_EQ(rc.get("rate"), kTwoPi * 2e3);
}

TEST(Config, DefaultsApply) {
  const auto rc = parse_config("t", schema(), {});
  EXPECT_EQ(rc.get_int("points"), 10);
  EXPECT_EQ(rc.get_text("sense"), "clockwise");
  EXPECT_NEAR(rc.get("pressure"), 133.322, 1e-3);
}

TEST(Config, MissingUnitNamesKey) {
  std::string key;
  EXPECT_EQ(code_of([] { parse_config("t", schema(), {}, {"B_static=100"}); }, &key), Errc::MissingUnit);
  EXPECT_EQ(key, "B_static");
}

TEST(Config, UnknownKeyNamesKey) {
  std::string key;
  EXPECT_EQ(code_of([] { parse_config("t", schema(), {}, {"b_statik=1 T"}); }, &key), Errc::UnknownKey);
  EXPECT_EQ(key, "b_statik");
}

TEST(Config, BadValues) {
  std::string key;
  EXPECT_EQ(code_of([] { parse_config("t", schema(), {}, {"pressure=fast Torr"}); }, &key), Errc::BadValue);
  EXPECT_EQ(key, "pressure");
  EXPECT_EQ(code_of([] { parse_config("t", schema(), {}, {"pressure=1 furlong"}); }, &key), Errc::BadValue);
  EXPECT_EQ(code_of([] { parse_config("t", schema(), {}, {"points=2.5"}); }, &key), Errc::BadValue);
  EXPECT_EQ(key, "points");
  EXPECT_EQ(code_of([] { parse_config("t", schema(), {}, {"contrast=0.1 T"}); }, &key), Errc::BadValue);
  EXPECT_EQ(code_of([] { parse_config("t", schema(), {}, {"sense=sideways"}); }, &key), Errc::BadValue);
  EXPECT_EQ(key, "sense");
  EXPECT_EQ(code_of([] { parse_config("t", schema(), {}, {"novalue"}); }), Errc::BadValue);
}

TEST(Config, RequiredKey) {
  auto s = schema();
  s.push_back({"radius", Dim::length, ""});
  std::string key;
  EXPECT_EQ(code_of([&] { parse_config("t", s, {}); }, &key), Errc::BadValue);
  EXPECT_EQ(key, "radius");
}

TEST(Config, FlatAndJsonAgree) {
  const auto flat = temp_file("cfg_flat.txt",
                              "# comment\nB_static = 100 G\npressure = \"6.9e-6 Torr\"\npoints = 7  # trailing\n");
  const auto json = temp_file("cfg.json", R"({"B_static": "100 G", "pressure": "6.9e-6 Torr", "points": 7})");
  const auto a = parse_config("t", schema(), flat);
  const auto b = parse_config("t", schema(), json);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(b.get_int("points"), 7);
}

TEST(Config, OverridesBeatFile) {
  const auto flat = temp_file("cfg_over.txt", "points = 7\n");
  EXPECT_EQ(parse_config("t", schema(), flat, {"points=9"}).get_int("points"), 9);
}

TEST(Config, RunRecordRoundTrip) {
  const auto rc = parse_config("t", schema(), {}, {"theta=45 deg", "sense=counterclockwise"});
  nlohmann::ordered_json rec;
  rec["tool"] = "nvlev";
  rec["config"] = rc.to_json();
  rec["results"] = {{"x", 1.0}};
  const auto path = temp_file("record.json", rec.dump(2));
  const auto back = parse_config("t", schema(), path);
  EXPECT_EQ(back.to_json(), rc.to_json());
  EXPECT_DOUBLE_EQ(back.get("theta"), rc.get("theta"));
}

TEST(Config, OrderFollowsSchema) {
  const auto rc = parse_config("t", schema(), {}, {"sense=clockwise", "B_static=1 mT"});
  const auto j = rc.to_json();
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  ASSERT_EQ(keys.size(), schema().size());
  EXPECT_EQ(keys.front(), "B_static");
  EXPECT_EQ(keys.back(), "input");
}
