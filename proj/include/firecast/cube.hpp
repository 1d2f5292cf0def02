#pragma once
// Portable datacube container: named float32 variables on a
// (time x lat x lon) grid with an 8-day-period time axis and a land mask.
// On disk a cube is a directory holding header.json, one raw little-endian
// <var>.f32 array per variable, and mask.u8.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "firecast/common.hpp"

namespace firecast {

struct VariableSpec {
  std::string name;
  std::string fill_policy = "zero";  // "zero" | "none"
};

struct CubeHeader {
  int time_len = 0;
  int lat_len = 0;
  int lon_len = 0;
  std::vector<double> lat_values;  // strictly monotonic, degrees
  std::vector<double> lon_values;  // strictly monotonic, span <= 360 degrees
  int steps_per_year = 46;
  int t0_year = 2000;
  int t0_step = 0;  // in [0, steps_per_year)
  std::vector<VariableSpec> variables;
  std::string mask_variable;  // empty = absent

  long long plane() const { return static_cast<long long>(lat_len) * lon_len; }
  long long volume() const { return static_cast<long long>(time_len) * plane(); }
  int var_index(const std::string& name) const;  // -1 if absent
  bool lon_wraps() const;
  void validate() const;
};

// Absolute-period arithmetic: period = (t0_step + t) mod steps_per_year,
// year = t0_year + (t0_step + t) div steps_per_year.
int time_to_year(const CubeHeader& h, int t);
int time_to_period(const CubeHeader& h, int t);
// Time index of (year, period); -1 when outside the cube.
int year_period_to_time(const CubeHeader& h, int year, int period);

struct CellTime {
  int lat_idx = 0;
  int lon_idx = 0;
  int t_idx = 0;
};

struct Datacube {
  CubeHeader header;
  std::vector<std::vector<float>> data;  // per variable, row-major [t][lat][lon]
  std::vector<uint8_t> mask;             // row-major [lat][lon], 1 = valid cell

  float at(int var, int t, int lat, int lon) const {
    return data[static_cast<size_t>(var)]
               [(static_cast<long long>(t) * header.lat_len + lat) * header.lon_len + lon];
  }
  float& at(int var, int t, int lat, int lon) {
    return data[static_cast<size_t>(var)]
               [(static_cast<long long>(t) * header.lat_len + lat) * header.lon_len + lon];
  }
  uint8_t mask_at(int lat, int lon) const {
    return mask[static_cast<size_t>(lat) * header.lon_len + lon];
  }
  void validate() const;
};

void write_cube(const Datacube& cube, const std::filesystem::path& dir);
Datacube read_cube(const std::filesystem::path& dir);

// ---- synthetic cube generation ----

struct SyntheticConfig {
  int lat_len = 24;
  int lon_len = 48;
  int years = 6;
  int steps_per_year = 46;
  int t0_year = 2000;
  double land_fraction = 0.55;
  int mask_blur_passes = 4;
  int noise_blur_passes = 2;
  double noise_rho = 0.6;  // AR(1) persistence of driver anomalies
  double fire_bias = -3.0;
  double seasonal_strength = 1.6;
  // One weight and lag per driver, applied to the unit-scaled anomaly
  // (value - base) / anomaly_scale with non-finite values contributing 0.
  std::vector<double> driver_weights = {0.0, 0.0, 1.2, 0.0, 0.7, 0.0, -0.9, 0.0, 0.0, 0.0};
  std::vector<int> driver_lags = {1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
  std::string target_var = "burned_area";
};

SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);
nlohmann::json synthetic_config_to_json(const SyntheticConfig& cfg);

struct SyntheticCube {
  Datacube cube;
  nlohmann::json oracle;  // generating coefficients, for independent checks
};

// Deterministic in (config, seed): 10 drivers with annual cycles plus
// spatially correlated AR(1) noise, a land mask, and a binary burned-area
// target drawn from a logistic model of lagged drivers with seasonal
// modulation.
SyntheticCube generate_synthetic_cube(const SyntheticConfig& cfg, uint64_t seed);

// Names of the ten synthetic driver variables, in cube order.
const std::vector<std::string>& synthetic_driver_names();

// ---- standardization / target / positional encodings ----

struct VarStats {
  double mean = 0.0;
  double std = 1.0;
};

struct StandardizationStats {
  std::map<std::string, VarStats> by_var;
  int t_begin = 0;  // train range [t_begin, t_end)
  int t_end = 0;
};

// Degenerate (constant) variables get std clamped to this value.
inline constexpr double kStdClampEpsilon = 1e-8;

// Mean/std per variable over masked cells within [t_begin, t_end), ignoring
// non-finite values. Throws DataError for a variable with zero valid values.
StandardizationStats compute_standardization(const Datacube& cube, int t_begin, int t_end,
                                             const std::vector<std::string>& variables);

// x -> (x - mean) / std for each listed variable; non-finite values become 0
// after standardization. Unlisted variables are copied untouched. Throws
// DataError when stats are missing for a listed variable.
Datacube standardize(const Datacube& cube, const StandardizationStats& stats,
                     const std::vector<std::string>& variables);

// 1 where the target is finite and > 0, else 0. Row-major [t][lat][lon].
std::vector<uint8_t> binarize_target(const Datacube& cube, const std::string& target_var);

// (sin lat, cos lat, sin lon, cos lon) in radians from the header coordinates.
std::array<double, 4> positional_encoding(const CubeHeader& h, int lat_idx, int lon_idx);

nlohmann::json header_to_json(const CubeHeader& h);
CubeHeader header_from_json(const nlohmann::json& j);

}  // namespace firecast
