#include "tinybird/energy.h"

#include <sstream>

#include <gtest/gtest.h>

#include "tinybird/error.h"

namespace tinybird::energy {
namespace {

const std::filesystem::path kDataDir = TINYBIRD_DATA_DIR;

struct PublishedRow {
  const char* name;
  double kbps;
  double overhead;
  double ble;
};

// Streaming currents per codec (mA at 3 V), copied from the measurement table.
constexpr PublishedRow kPublished[] = {
    {"raw", 32, 0.0, 0.82},       {"adpcm", 8, 0.05, 0.19},     {"sbc_high", 8, 0.11, 0.20},
    {"opus_high", 8, 1.12, 0.20}, {"dm", 2, 0.0, 0.06},         {"cfdm", 2, 0.07, 0.08},
    {"sbc_low", 2, 0.07, 0.07},   {"opus_low", 2, 0.87, 0.09},
};

TEST(EnergyTest, TableReadBack) {
  const auto table = LoadCurrentTable(kDataDir / "current_profile.ini");
  EXPECT_EQ(table.version, 1);
  ASSERT_EQ(table.rows.size(), std::size(kPublished));
  for (const auto& p : kPublished) {
    const auto& row = table.Row(p.name);
    EXPECT_EQ(row.bitrate_kbps, p.kbps) << p.name;
    EXPECT_EQ(row.overhead_ma, p.overhead) << p.name;
    EXPECT_EQ(row.ble_ma, p.ble) << p.name;
    // At voicing 1.0 the streaming share is exactly the table entry.
    auto profile = table.ProfileFor(p.name);
    EXPECT_NEAR(AverageCurrentMa(profile, 1.0), 0.589 + p.ble + p.overhead, 1e-12) << p.name;
    EXPECT_EQ(AverageCurrentMa(profile, 0.0), 0.589);
    profile.baseline_ma = 0.0;
    EXPECT_EQ(AverageCurrentMa(profile, 1.0), p.ble + p.overhead) << p.name;
  }
  EXPECT_EQ(table.Find("mp3"), nullptr);
  EXPECT_THROW(table.Row("mp3"), Error);
  EXPECT_EQ(table.ProfileFor(codecs::CodecId::kAdpcm).ble_ma, 0.19);
}

TEST(EnergyTest, ClassifierModePower) {
  const auto table = LoadCurrentTable(kDataDir / "current_profile.ini");
  const auto profile = table.ProfileFor("adpcm");
  EXPECT_NEAR(ClassifierModePowerMw(profile), 5.73, 1e-12);
  EXPECT_NEAR(ClassifierModePowerMw(profile, false), 5.25, 1e-12);
}

TEST(EnergyTest, AdpcmOutlivesRawBySeventyPercent) {
  const auto table = LoadCurrentTable(kDataDir / "current_profile.ini");
  const auto battery = LoadBattery(kDataDir / "battery_a13.ini");
  const double raw = LifetimeHours(battery, AverageCurrentMa(table.ProfileFor("raw"), 1.0));
  const double adpcm = LifetimeHours(battery, AverageCurrentMa(table.ProfileFor("adpcm"), 1.0));
  // (0.589 + 0.82) / (0.589 + 0.19 + 0.05)
  EXPECT_NEAR(adpcm / raw, 1.409 / 0.829, 1e-9);
  EXPECT_NEAR(adpcm / raw, 1.70, 0.01);
}

TEST(EnergyTest, LifetimeFromBatteryDraw) {
  const auto battery = LoadBattery(kDataDir / "battery_a13.ini");
  EXPECT_EQ(battery.capacity_mah, 280.0);
  EXPECT_NEAR(LifetimeFromBatteryCurrent(battery, 11.2), 25.0, 1e-9);
  // Rail current through the boost converter.
  EXPECT_NEAR(BatteryCurrentMa(battery, 1.0), 3.0 / (1.45 * 0.9), 1e-12);
  EXPECT_NEAR(LifetimeHours(battery, 1.0), 280.0 * 1.45 * 0.9 / 3.0, 1e-9);
}

TEST(EnergyTest, LifetimeFallsWithVoicingProperty) {
  const auto table = LoadCurrentTable(kDataDir / "current_profile.ini");
  const BatteryModel battery;
  for (const auto& row : table.rows) {
    const auto profile = table.ProfileFor(row.name);
    double prev = LifetimeHours(battery, AverageCurrentMa(profile, 0.0));
    for (int i = 1; i <= 10; ++i) {
      const double h = LifetimeHours(battery, AverageCurrentMa(profile, i / 10.0));
      EXPECT_LE(h, prev) << row.name;
      prev = h;
    }
  }
}

TEST(EnergyTest, ConstantTermsAreOptIn) {
  CurrentProfile p;
  p.ble_ma = 0.19;
  const double base = AverageCurrentMa(p, 0.5);
  p.count_mic = true;
  EXPECT_NEAR(AverageCurrentMa(p, 0.5) - base, 5.25 / 3.0, 1e-12);
  p.classifier_enabled = true;
  EXPECT_NEAR(AverageCurrentMa(p, 0.5) - base, 5.73 / 3.0, 1e-12);
  EXPECT_NEAR(StreamingModePowerMw(CurrentProfile{}, 0.0), 5.25 + 3.0 * 0.589, 1e-12);
}

TEST(EnergyTest, RejectsBadInputs) {
  const CurrentProfile p;
  EXPECT_THROW(AverageCurrentMa(p, 1.5), Error);
  EXPECT_THROW(AverageCurrentMa(p, -0.1), Error);
  EXPECT_THROW(AverageCurrentMa(p, 0.5, 0.0), Error);
  CurrentProfile neg;
  neg.ble_ma = -1.0;
  EXPECT_THROW(AverageCurrentMa(neg, 0.5), Error);
  BatteryModel b;
  EXPECT_THROW(LifetimeHours(b, 0.0), Error);
  b.converter_efficiency = 1.5;
  EXPECT_THROW(Validate(b), Error);
  b = {};
  b.capacity_mah = 0.0;
  EXPECT_THROW(Validate(b), Error);
}

TEST(EnergyTest, ParseErrorsNameTheKey) {
  auto parse_error = [](const std::string& text) -> std::string {
    std::istringstream in(text);
    try {
      ParseCurrentTable(in);
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), Error::Kind::kConfig);
      return e.what();
    }
    return "";
  };
  const std::string head = "version = 1\nbaseline_ma = 0.5\nmic_mw = 5\nclassifier_mw = 0.5\n";
  EXPECT_NE(parse_error("version = 2\n").find("version"), std::string::npos);
  EXPECT_NE(parse_error(head).find("no codec rows"), std::string::npos);
  EXPECT_NE(parse_error(head + "[raw]\nbitrate_kbps = 32\noverhead_ma = x\nble_ma = 1\n")
                .find("overhead_ma"),
            std::string::npos);
  EXPECT_NE(parse_error(head + "[raw]\nbitrate_kbps = 32\noverhead_ma = 0\n").find("ble_ma"),
            std::string::npos);
  EXPECT_NE(parse_error("version = 1\n").find("baseline_ma"), std::string::npos);

  std::istringstream bat("capacity_mah = -3\ncell_voltage = 1.45\nrail_voltage = 3\n"
                         "converter_efficiency = 0.9\n");
  EXPECT_THROW(ParseBattery(bat), Error);
  EXPECT_THROW(LoadBattery("/nonexistent/battery.ini"), Error);
}

}  // namespace
}  // namespace tinybird::energy
