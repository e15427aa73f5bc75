#ifndef TINYBIRD_ENERGY_H_
#define TINYBIRD_ENERGY_H_

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tinybird/codecs.h"

namespace tinybird::energy {

// Currents at the 3 V rail. Only the currents drive the model; the memory
// columns are carried for reporting.
struct CodecCurrentRow {
  std::string name;
  double bitrate_kbps = 0.0;
  double overhead_ma = 0.0;
  double ble_ma = 0.0;
  std::string ram_kb;
  std::string flash_kb;

  double streaming_ma() const { return ble_ma + overhead_ma; }
};

struct CurrentProfile {
  // Node current excluding BLE streaming and codec compute.
  double baseline_ma = 0.589;
  double ble_ma = 0.0;
  double codec_overhead_ma = 0.0;
  double mic_mw = 5.25;
  double classifier_mw = 0.48;
  // Constant mW terms added to the rail current. The calibrated baseline
  // already covers the streaming node, so both default to off.
  bool count_mic = false;
  bool classifier_enabled = false;
};

// The versioned current table shipped as data/current_profile.ini.
struct CurrentTable {
  int version = 1;
  double baseline_ma = 0.589;
  double mic_mw = 5.25;
  double classifier_mw = 0.48;
  std::vector<CodecCurrentRow> rows;

  const CodecCurrentRow* Find(std::string_view name) const;
  const CodecCurrentRow& Row(std::string_view name) const;
  CurrentProfile ProfileFor(std::string_view name) const;
  CurrentProfile ProfileFor(codecs::CodecId codec) const;
};

CurrentTable ParseCurrentTable(std::istream& in);
CurrentTable LoadCurrentTable(const std::filesystem::path& path);

struct BatteryModel {
  // A13 zinc-air capacity from cell datasheets, not from measurements here.
  double capacity_mah = 280.0;
  double cell_voltage = 1.45;
  double rail_voltage = 3.0;
  double converter_efficiency = 0.90;
};

BatteryModel ParseBattery(std::istream& in);
BatteryModel LoadBattery(const std::filesystem::path& path);
void Validate(const BatteryModel& battery);
void Validate(const CurrentProfile& profile);

// baseline + voicing * (ble + overhead) + enabled constant mW terms / rail.
double AverageCurrentMa(const CurrentProfile& profile, double voicing_fraction,
                        double rail_voltage = 3.0);

// Rail current seen at the cell through the boost converter.
double BatteryCurrentMa(const BatteryModel& battery, double rail_current_ma);
double LifetimeHours(const BatteryModel& battery, double rail_current_ma);
double LifetimeFromBatteryCurrent(const BatteryModel& battery, double battery_current_ma);

// Microphone plus on-device classifier power.
double ClassifierModePowerMw(const CurrentProfile& profile, bool classifier_enabled = true);
// Streaming node power with the microphone always on: mic + rail * current.
double StreamingModePowerMw(const CurrentProfile& profile, double voicing_fraction,
                            double rail_voltage = 3.0);

}  // namespace tinybird::energy

#endif  // TINYBIRD_ENERGY_H_
