#include "tinybird/energy.h"

#include <cmath>
#include <fstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "tinybird/error.h"

namespace tinybird::energy {
namespace {

constexpr const char* kModule = "energy";

namespace pt = boost::property_tree;

pt::ptree ReadIni(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(kModule, e.what());
  }
  return tree;
}

double GetNumber(const pt::ptree& tree, const std::string& key) {
  const auto value = tree.get_optional<std::string>(key);
  if (!value) throw ConfigError(kModule, "missing key '" + key + "'");
  if (*value == "-") return 0.0;
  try {
    std::size_t used = 0;
    const double v = std::stod(*value, &used);
    if (used != value->size()) throw std::invalid_argument(*value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(kModule, "key '" + key + "' is not a number: " + *value);
  }
}

void RequireNonNegative(double v, const std::string& what) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw ConfigError(kModule, what + " must be a non-negative number");
  }
}

std::ifstream OpenOrThrow(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(kModule, "cannot open " + path.string());
  return in;
}

}  // namespace

const CodecCurrentRow* CurrentTable::Find(std::string_view name) const {
  for (const auto& r : rows) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

const CodecCurrentRow& CurrentTable::Row(std::string_view name) const {
  if (const auto* r = Find(name)) return *r;
  throw ConfigError(kModule, "profile has no row for codec '" + std::string(name) + "'");
}

CurrentProfile CurrentTable::ProfileFor(std::string_view name) const {
  const auto& row = Row(name);
  CurrentProfile p;
  p.baseline_ma = baseline_ma;
  p.ble_ma = row.ble_ma;
  p.codec_overhead_ma = row.overhead_ma;
  p.mic_mw = mic_mw;
  p.classifier_mw = classifier_mw;
  return p;
}

CurrentProfile CurrentTable::ProfileFor(codecs::CodecId codec) const {
  return ProfileFor(codecs::CodecName(codec));
}

CurrentTable ParseCurrentTable(std::istream& in) {
  const auto tree = ReadIni(in);
  CurrentTable table;
  table.version = static_cast<int>(GetNumber(tree, "version"));
  if (table.version != 1) {
    throw ConfigError(kModule, "unsupported profile version " + std::to_string(table.version));
  }
  table.baseline_ma = GetNumber(tree, "baseline_ma");
  table.mic_mw = GetNumber(tree, "mic_mw");
  table.classifier_mw = GetNumber(tree, "classifier_mw");
  RequireNonNegative(table.baseline_ma, "baseline_ma");
  RequireNonNegative(table.mic_mw, "mic_mw");
  RequireNonNegative(table.classifier_mw, "classifier_mw");
  for (const auto& [name, section] : tree) {
    if (section.empty()) continue;
    CodecCurrentRow row;
    row.name = name;
    row.bitrate_kbps = GetNumber(section, "bitrate_kbps");
    row.overhead_ma = GetNumber(section, "overhead_ma");
    row.ble_ma = GetNumber(section, "ble_ma");
    row.ram_kb = section.get<std::string>("ram_kb", "-");
    row.flash_kb = section.get<std::string>("flash_kb", "-");
    RequireNonNegative(row.overhead_ma, name + ".overhead_ma");
    RequireNonNegative(row.ble_ma, name + ".ble_ma");
    table.rows.push_back(std::move(row));
  }
  if (table.rows.empty()) throw ConfigError(kModule, "profile lists no codec rows");
  return table;
}

CurrentTable LoadCurrentTable(const std::filesystem::path& path) {
  auto in = OpenOrThrow(path);
  return ParseCurrentTable(in);
}

BatteryModel ParseBattery(std::istream& in) {
  const auto tree = ReadIni(in);
  BatteryModel b;
  b.capacity_mah = GetNumber(tree, "capacity_mah");
  b.cell_voltage = GetNumber(tree, "cell_voltage");
  b.rail_voltage = GetNumber(tree, "rail_voltage");
  b.converter_efficiency = GetNumber(tree, "converter_efficiency");
  Validate(b);
  return b;
}

BatteryModel LoadBattery(const std::filesystem::path& path) {
  auto in = OpenOrThrow(path);
  return ParseBattery(in);
}

void Validate(const BatteryModel& b) {
  if (!(b.capacity_mah > 0.0)) throw ConfigError(kModule, "capacity_mah must be positive");
  if (!(b.cell_voltage > 0.0) || !(b.rail_voltage > 0.0)) {
    throw ConfigError(kModule, "voltages must be positive");
  }
  if (!(b.converter_efficiency > 0.0 && b.converter_efficiency <= 1.0)) {
    throw ConfigError(kModule, "converter_efficiency must be in (0, 1]");
  }
}

void Validate(const CurrentProfile& p) {
  RequireNonNegative(p.baseline_ma, "baseline_ma");
  RequireNonNegative(p.ble_ma, "ble_ma");
  RequireNonNegative(p.codec_overhead_ma, "codec_overhead_ma");
  RequireNonNegative(p.mic_mw, "mic_mw");
  RequireNonNegative(p.classifier_mw, "classifier_mw");
}

double AverageCurrentMa(const CurrentProfile& profile, double voicing_fraction,
                        double rail_voltage) {
  Validate(profile);
  if (!(voicing_fraction >= 0.0 && voicing_fraction <= 1.0)) {
    throw ValueError(kModule, "voicing fraction must be in [0, 1]");
  }
  if (!(rail_voltage > 0.0)) throw ValueError(kModule, "rail voltage must be positive");
  double constant_mw = 0.0;
  if (profile.count_mic) constant_mw += profile.mic_mw;
  if (profile.classifier_enabled) constant_mw += profile.classifier_mw;
  return profile.baseline_ma +
         voicing_fraction * (profile.ble_ma + profile.codec_overhead_ma) +
         constant_mw / rail_voltage;
}

double BatteryCurrentMa(const BatteryModel& battery, double rail_current_ma) {
  Validate(battery);
  return rail_current_ma * battery.rail_voltage /
         (battery.cell_voltage * battery.converter_efficiency);
}

double LifetimeHours(const BatteryModel& battery, double rail_current_ma) {
  if (!(rail_current_ma > 0.0)) throw ValueError(kModule, "average current must be positive");
  return battery.capacity_mah / BatteryCurrentMa(battery, rail_current_ma);
}

double LifetimeFromBatteryCurrent(const BatteryModel& battery, double battery_current_ma) {
  Validate(battery);
  if (!(battery_current_ma > 0.0)) throw ValueError(kModule, "battery current must be positive");
  return battery.capacity_mah / battery_current_ma;
}

double ClassifierModePowerMw(const CurrentProfile& profile, bool classifier_enabled) {
  Validate(profile);
  return profile.mic_mw + (classifier_enabled ? profile.classifier_mw : 0.0);
}

double StreamingModePowerMw(const CurrentProfile& profile, double voicing_fraction,
                            double rail_voltage) {
  CurrentProfile p = profile;
  p.count_mic = false;
  p.classifier_enabled = false;
  return profile.mic_mw + rail_voltage * AverageCurrentMa(p, voicing_fraction, rail_voltage);
}

}  // namespace tinybird::energy
