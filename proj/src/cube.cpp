#include "firecast/cube.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace firecast {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// header
// ---------------------------------------------------------------------------

int CubeHeader::var_index(const std::string& name) const {
  for (size_t i = 0; i < variables.size(); ++i) {
    if (variables[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

static bool strictly_monotonic(const std::vector<double>& v) {
  if (v.size() < 2) return true;
  const bool inc = v[1] > v[0];
  for (size_t i = 1; i < v.size(); ++i) {
    if (inc ? (v[i] <= v[i - 1]) : (v[i] >= v[i - 1])) return false;
  }
  return true;
}

bool CubeHeader::lon_wraps() const {
  if (lon_len < 2) return false;
  const double step = std::abs(lon_values[1] - lon_values[0]);
  // Uniform spacing covering the full circle means the grid wraps.
  for (int i = 1; i < lon_len; ++i) {
    if (std::abs(std::abs(lon_values[i] - lon_values[i - 1]) - step) > 1e-9 * (1.0 + step)) {
      return false;
    }
  }
  return std::abs(step * lon_len - 360.0) < 1e-6;
}

void CubeHeader::validate() const {
  if (time_len < 0 || lat_len <= 0 || lon_len <= 0) throw DataError("header: empty grid");
  if (steps_per_year < 1) throw DataError("header: steps_per_year must be >= 1");
  if (t0_step < 0 || t0_step >= steps_per_year) throw DataError("header: t0_step out of range");
  if (static_cast<int>(lat_values.size()) != lat_len ||
      static_cast<int>(lon_values.size()) != lon_len) {
    throw DataError("header: coordinate array length mismatch");
  }
  if (!strictly_monotonic(lat_values)) throw DataError("header: lat_values not strictly monotonic");
  if (!strictly_monotonic(lon_values)) throw DataError("header: lon_values not strictly monotonic");
  if (lon_len >= 2) {
    const double span = std::abs(lon_values.back() - lon_values.front());
    if (span > 360.0 + 1e-9) throw DataError("header: lon span exceeds 360 degrees");
  }
  std::set<std::string> names;
  for (const auto& v : variables) {
    if (v.name.empty()) throw DataError("header: empty variable name");
    if (!names.insert(v.name).second) throw DataError("header: duplicate variable " + v.name);
    if (v.fill_policy != "zero" && v.fill_policy != "none") {
      throw DataError("header: unknown fill_policy " + v.fill_policy);
    }
  }
}

int time_to_year(const CubeHeader& h, int t) {
  return h.t0_year + (h.t0_step + t) / h.steps_per_year;
}

int time_to_period(const CubeHeader& h, int t) { return (h.t0_step + t) % h.steps_per_year; }

int year_period_to_time(const CubeHeader& h, int year, int period) {
  const long long abs_step =
      static_cast<long long>(year - h.t0_year) * h.steps_per_year + period;
  const long long t = abs_step - h.t0_step;
  if (t < 0 || t >= h.time_len) return -1;
  return static_cast<int>(t);
}

void Datacube::validate() const {
  header.validate();
  if (data.size() != header.variables.size()) throw DataError("cube: variable count mismatch");
  for (size_t i = 0; i < data.size(); ++i) {
    if (static_cast<long long>(data[i].size()) != header.volume()) {
      throw DataError("cube: array size mismatch for " + header.variables[i].name);
    }
  }
  if (static_cast<long long>(mask.size()) != header.plane()) {
    throw DataError("cube: mask size mismatch");
  }
  for (uint8_t m : mask) {
    if (m > 1) throw DataError("cube: mask values must be 0 or 1");
  }
}

// ---------------------------------------------------------------------------
// json header codec
// ---------------------------------------------------------------------------

json header_to_json(const CubeHeader& h) {
  json j;
  j["time_len"] = h.time_len;
  j["lat_len"] = h.lat_len;
  j["lon_len"] = h.lon_len;
  j["lat_values"] = h.lat_values;
  j["lon_values"] = h.lon_values;
  j["steps_per_year"] = h.steps_per_year;
  j["t0_year"] = h.t0_year;
  j["t0_step"] = h.t0_step;
  j["variables"] = json::array();
  for (const auto& v : h.variables) {
    j["variables"].push_back({{"name", v.name}, {"fill_policy", v.fill_policy}});
  }
  if (!h.mask_variable.empty()) j["mask_variable"] = h.mask_variable;
  return j;
}

CubeHeader header_from_json(const json& j) {
  CubeHeader h;
  try {
    h.time_len = j.at("time_len").get<int>();
    h.lat_len = j.at("lat_len").get<int>();
    h.lon_len = j.at("lon_len").get<int>();
    h.lat_values = j.at("lat_values").get<std::vector<double>>();
    h.lon_values = j.at("lon_values").get<std::vector<double>>();
    h.steps_per_year = j.at("steps_per_year").get<int>();
    h.t0_year = j.at("t0_year").get<int>();
    h.t0_step = j.at("t0_step").get<int>();
    for (const auto& v : j.at("variables")) {
      VariableSpec spec;
      spec.name = v.at("name").get<std::string>();
      spec.fill_policy = v.at("fill_policy").get<std::string>();
      h.variables.push_back(std::move(spec));
    }
    if (j.contains("mask_variable") && !j["mask_variable"].is_null()) {
      h.mask_variable = j["mask_variable"].get<std::string>();
    }
  } catch (const json::exception& e) {
    throw DataError("malformed cube header: " + std::string(e.what()));
  }
  h.validate();
  return h;
}

// ---------------------------------------------------------------------------
// disk format
// ---------------------------------------------------------------------------

void write_cube(const Datacube& cube, const fs::path& dir) {
  cube.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create cube directory: " + dir.string());

  write_text(dir / "header.json", header_to_json(cube.header).dump(2) + "\n");

  for (size_t v = 0; v < cube.header.variables.size(); ++v) {
    const auto& values = cube.data[v];
    std::vector<uint8_t> bytes(values.size() * 4);
    for (size_t i = 0; i < values.size(); ++i) store_f32_le(bytes.data() + i * 4, values[i]);
    write_bytes(dir / (cube.header.variables[v].name + ".f32"), bytes);
  }
  write_bytes(dir / "mask.u8", cube.mask);
}

Datacube read_cube(const fs::path& dir) {
  const fs::path header_path = dir / "header.json";
  if (!fs::exists(header_path)) throw DataError("missing header.json in " + dir.string());
  json j;
  try {
    j = json::parse(read_text(header_path));
  } catch (const json::exception& e) {
    throw DataError("malformed header.json: " + std::string(e.what()));
  }

  Datacube cube;
  cube.header = header_from_json(j);

  for (const auto& var : cube.header.variables) {
    const fs::path p = dir / (var.name + ".f32");
    if (!fs::exists(p)) throw DataError("missing variable file: " + p.string());
    const auto bytes = read_bytes(p);
    const auto expected = static_cast<size_t>(cube.header.volume()) * 4;
    if (bytes.size() != expected) {
      throw DataError("size mismatch for " + var.name + ": expected " + std::to_string(expected) +
                      " bytes, found " + std::to_string(bytes.size()));
    }
    std::vector<float> values(static_cast<size_t>(cube.header.volume()));
    for (size_t i = 0; i < values.size(); ++i) values[i] = load_f32_le(bytes.data() + i * 4);
    cube.data.push_back(std::move(values));
  }

  const fs::path mask_path = dir / "mask.u8";
  if (!fs::exists(mask_path)) throw DataError("missing mask.u8 in " + dir.string());
  cube.mask = read_bytes(mask_path);
  if (static_cast<long long>(cube.mask.size()) != cube.header.plane()) {
    throw DataError("mask.u8 size mismatch");
  }
  cube.validate();
  return cube;
}

// ---------------------------------------------------------------------------
// synthetic generator
// ---------------------------------------------------------------------------

namespace {

struct DriverSpec {
  std::string name;
  double base;
  double seasonal_amp;
  double noise_amp;
  // "none": defined everywhere; "ocean": NaN over ocean; "interior_land":
  // NaN on land cells with no ocean neighbor.
  std::string nan_policy;
  bool is_static = false;  // no seasonality, no temporal evolution
};

const std::vector<DriverSpec>& driver_table() {
  static const std::vector<DriverSpec> table = {
      {"mslp", 1013.0, 4.0, 3.0, "none", false},
      {"tp", 2.0, 1.0, 1.2, "none", false},
      {"vpd", 1.2, 0.8, 0.6, "none", false},
      {"sst", 18.0, 4.0, 1.5, "interior_land", false},
      {"t2m_mean", 15.0, 8.0, 3.0, "none", false},
      {"ssrd", 180.0, 60.0, 25.0, "none", false},
      {"swvl1", 0.3, 0.1, 0.08, "none", false},
      {"lst_day", 20.0, 9.0, 4.0, "ocean", false},
      {"ndvi", 0.5, 0.2, 0.1, "none", false},
      {"pop_dens", 50.0, 0.0, 40.0, "none", true},
  };
  return table;
}

// 3x3 box blur with longitude wrap and latitude clamp.
void box_blur(std::vector<double>& field, int lat_len, int lon_len, int passes) {
  std::vector<double> tmp(field.size());
  for (int pass = 0; pass < passes; ++pass) {
    for (int y = 0; y < lat_len; ++y) {
      for (int x = 0; x < lon_len; ++x) {
        double acc = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          const int yy = std::clamp(y + dy, 0, lat_len - 1);
          for (int dx = -1; dx <= 1; ++dx) {
            const int xx = (x + dx + lon_len) % lon_len;
            acc += field[static_cast<size_t>(yy) * lon_len + xx];
          }
        }
        tmp[static_cast<size_t>(y) * lon_len + x] = acc / 9.0;
      }
    }
    field.swap(tmp);
  }
}

std::vector<double> white_field(Rng& rng, long long n) {
  std::vector<double> f(static_cast<size_t>(n));
  const double half_width = std::sqrt(3.0);  // unit variance
  for (auto& v : f) v = rng.uniform(-half_width, half_width);
  return f;
}

double field_std(const std::vector<double>& f) {
  double mean = 0.0;
  for (double v : f) mean += v;
  mean /= static_cast<double>(f.size());
  double var = 0.0;
  for (double v : f) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(f.size()));
}

double seasonal_signal(int period, int steps_per_year, double lat_deg) {
  const double phase = lat_deg < 0.0 ? std::numbers::pi : 0.0;
  return std::sin(2.0 * std::numbers::pi * period / steps_per_year + phase);
}

}  // namespace

const std::vector<std::string>& synthetic_driver_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& d : driver_table()) out.push_back(d.name);
    return out;
  }();
  return names;
}

SyntheticConfig synthetic_config_from_json(const json& j) {
  SyntheticConfig cfg;
  if (j.contains("lat_len")) cfg.lat_len = j["lat_len"].get<int>();
  if (j.contains("lon_len")) cfg.lon_len = j["lon_len"].get<int>();
  if (j.contains("years")) cfg.years = j["years"].get<int>();
  if (j.contains("steps_per_year")) cfg.steps_per_year = j["steps_per_year"].get<int>();
  if (j.contains("t0_year")) cfg.t0_year = j["t0_year"].get<int>();
  if (j.contains("land_fraction")) cfg.land_fraction = j["land_fraction"].get<double>();
  if (j.contains("mask_blur_passes")) cfg.mask_blur_passes = j["mask_blur_passes"].get<int>();
  if (j.contains("noise_blur_passes")) cfg.noise_blur_passes = j["noise_blur_passes"].get<int>();
  if (j.contains("noise_rho")) cfg.noise_rho = j["noise_rho"].get<double>();
  if (j.contains("fire_bias")) cfg.fire_bias = j["fire_bias"].get<double>();
  if (j.contains("seasonal_strength")) cfg.seasonal_strength = j["seasonal_strength"].get<double>();
  if (j.contains("driver_weights")) cfg.driver_weights = j["driver_weights"].get<std::vector<double>>();
  if (j.contains("driver_lags")) cfg.driver_lags = j["driver_lags"].get<std::vector<int>>();
  if (j.contains("target_var")) cfg.target_var = j["target_var"].get<std::string>();
  return cfg;
}

json synthetic_config_to_json(const SyntheticConfig& cfg) {
  json j;
  j["lat_len"] = cfg.lat_len;
  j["lon_len"] = cfg.lon_len;
  j["years"] = cfg.years;
  j["steps_per_year"] = cfg.steps_per_year;
  j["t0_year"] = cfg.t0_year;
  j["land_fraction"] = cfg.land_fraction;
  j["mask_blur_passes"] = cfg.mask_blur_passes;
  j["noise_blur_passes"] = cfg.noise_blur_passes;
  j["noise_rho"] = cfg.noise_rho;
  j["fire_bias"] = cfg.fire_bias;
  j["seasonal_strength"] = cfg.seasonal_strength;
  j["driver_weights"] = cfg.driver_weights;
  j["driver_lags"] = cfg.driver_lags;
  j["target_var"] = cfg.target_var;
  return j;
}

SyntheticCube generate_synthetic_cube(const SyntheticConfig& cfg, uint64_t seed) {
  const auto& drivers = driver_table();
  if (cfg.lat_len <= 0 || cfg.lon_len <= 0) throw DataError("synthetic: empty grid");
  if (cfg.years <= 0) throw DataError("synthetic: zero years");
  if (cfg.steps_per_year < 1) throw DataError("synthetic: steps_per_year must be >= 1");
  if (cfg.land_fraction <= 0.0 || cfg.land_fraction > 1.0) {
    throw DataError("synthetic: land_fraction must be in (0,1]");
  }
  if (cfg.driver_weights.size() != drivers.size() || cfg.driver_lags.size() != drivers.size()) {
    throw DataError("synthetic: need one weight and one lag per driver");
  }

  const int lat_len = cfg.lat_len, lon_len = cfg.lon_len;
  const int time_len = cfg.years * cfg.steps_per_year;
  const long long plane = static_cast<long long>(lat_len) * lon_len;

  Datacube cube;
  cube.header.time_len = time_len;
  cube.header.lat_len = lat_len;
  cube.header.lon_len = lon_len;
  cube.header.steps_per_year = cfg.steps_per_year;
  cube.header.t0_year = cfg.t0_year;
  cube.header.t0_step = 0;
  const double lat_step = 180.0 / lat_len;
  const double lon_step = 360.0 / lon_len;
  for (int y = 0; y < lat_len; ++y) cube.header.lat_values.push_back(-90.0 + lat_step * (y + 0.5));
  for (int x = 0; x < lon_len; ++x) cube.header.lon_values.push_back(-180.0 + lon_step * (x + 0.5));

  // Land mask: threshold a smoothed noise field at the requested quantile.
  Rng mask_rng = Rng::stream(seed, 1);
  std::vector<double> mask_field = white_field(mask_rng, plane);
  box_blur(mask_field, lat_len, lon_len, cfg.mask_blur_passes);
  std::vector<double> sorted = mask_field;
  std::sort(sorted.begin(), sorted.end());
  const auto cut = static_cast<size_t>(
      std::clamp((1.0 - cfg.land_fraction) * static_cast<double>(plane), 0.0,
                 static_cast<double>(plane - 1)));
  const double threshold = sorted[cut];
  cube.mask.resize(static_cast<size_t>(plane));
  long long land_cells = 0;
  for (long long i = 0; i < plane; ++i) {
    cube.mask[static_cast<size_t>(i)] = mask_field[static_cast<size_t>(i)] >= threshold ? 1 : 0;
    land_cells += cube.mask[static_cast<size_t>(i)];
  }
  if (land_cells == 0) throw DataError("synthetic: land mask came out empty");

  auto has_ocean_neighbor = [&](int y, int x) {
    for (int dy = -1; dy <= 1; ++dy) {
      const int yy = y + dy;
      if (yy < 0 || yy >= lat_len) continue;
      for (int dx = -1; dx <= 1; ++dx) {
        if (dy == 0 && dx == 0) continue;
        const int xx = (x + dx + lon_len) % lon_len;
        if (cube.mask[static_cast<size_t>(yy) * lon_len + xx] == 0) return true;
      }
    }
    return false;
  };

  // Driver fields. Anomalies share one structure: AR(1) over time of
  // box-blurred white noise, rescaled afterwards to unit standard deviation
  // so the oracle coefficients have a fixed meaning.
  const float nan_f = std::numeric_limits<float>::quiet_NaN();
  std::vector<std::vector<double>> anomalies(drivers.size());
  for (size_t d = 0; d < drivers.size(); ++d) {
    Rng rng = Rng::stream(seed, 10 + d);
    std::vector<double>& anom = anomalies[d];
    anom.resize(static_cast<size_t>(time_len) * plane);
    if (drivers[d].is_static) {
      std::vector<double> field = white_field(rng, plane);
      box_blur(field, lat_len, lon_len, cfg.noise_blur_passes);
      for (int t = 0; t < time_len; ++t) {
        std::copy(field.begin(), field.end(), anom.begin() + static_cast<size_t>(t) * plane);
      }
    } else {
      std::vector<double> state = white_field(rng, plane);
      box_blur(state, lat_len, lon_len, cfg.noise_blur_passes);
      const double innovation_scale = std::sqrt(1.0 - cfg.noise_rho * cfg.noise_rho);
      for (int t = 0; t < time_len; ++t) {
        if (t > 0) {
          std::vector<double> innov = white_field(rng, plane);
          box_blur(innov, lat_len, lon_len, cfg.noise_blur_passes);
          for (long long i = 0; i < plane; ++i) {
            state[static_cast<size_t>(i)] = cfg.noise_rho * state[static_cast<size_t>(i)] +
                                            innovation_scale * innov[static_cast<size_t>(i)];
          }
        }
        std::copy(state.begin(), state.end(), anom.begin() + static_cast<size_t>(t) * plane);
      }
    }
    const double sd = field_std(anom);
    if (sd > 0.0) {
      for (auto& v : anom) v /= sd;
    }
  }

  std::vector<double> anomaly_scales(drivers.size());
  cube.data.resize(drivers.size() + 1);
  for (size_t d = 0; d < drivers.size(); ++d) {
    const DriverSpec& spec = drivers[d];
    cube.header.variables.push_back({spec.name, "zero"});
    anomaly_scales[d] =
        std::sqrt(spec.seasonal_amp * spec.seasonal_amp / 2.0 + spec.noise_amp * spec.noise_amp);
    if (anomaly_scales[d] == 0.0) anomaly_scales[d] = 1.0;
    auto& out = cube.data[d];
    out.resize(static_cast<size_t>(time_len) * plane);
    for (int t = 0; t < time_len; ++t) {
      const int period = t % cfg.steps_per_year;
      for (int y = 0; y < lat_len; ++y) {
        const double season =
            spec.is_static ? 0.0
                           : spec.seasonal_amp *
                                 seasonal_signal(period, cfg.steps_per_year, cube.header.lat_values[y]);
        for (int x = 0; x < lon_len; ++x) {
          const size_t i = (static_cast<size_t>(t) * lat_len + y) * lon_len + x;
          const bool land = cube.mask[static_cast<size_t>(y) * lon_len + x] == 1;
          if (spec.nan_policy == "ocean" && !land) {
            out[i] = nan_f;
            continue;
          }
          if (spec.nan_policy == "interior_land" && land && !has_ocean_neighbor(y, x)) {
            out[i] = nan_f;
            continue;
          }
          const double v = spec.base + season +
                           spec.noise_amp * anomalies[d][(static_cast<size_t>(t) * plane) +
                                                         static_cast<size_t>(y) * lon_len + x];
          out[i] = static_cast<float>(v);
        }
      }
    }
  }

  // Fire process: Bernoulli(sigmoid(bias + sum_i w_i * anomaly_i(t - lag_i)
  // + s * seasonal(period, lat))) on land cells; anomalies read back from the
  // stored float32 drivers so an oracle can reproduce the probabilities.
  cube.header.variables.push_back({cfg.target_var, "zero"});
  auto& fire = cube.data[drivers.size()];
  fire.assign(static_cast<size_t>(time_len) * plane, 0.0f);
  Rng fire_rng = Rng::stream(seed, 99);
  long long fires = 0;
  for (int t = 0; t < time_len; ++t) {
    const int period = t % cfg.steps_per_year;
    for (int y = 0; y < lat_len; ++y) {
      for (int x = 0; x < lon_len; ++x) {
        if (cube.mask[static_cast<size_t>(y) * lon_len + x] == 0) continue;
        double logit = cfg.fire_bias +
                       cfg.seasonal_strength *
                           seasonal_signal(period, cfg.steps_per_year, cube.header.lat_values[y]);
        for (size_t d = 0; d < drivers.size(); ++d) {
          if (cfg.driver_weights[d] == 0.0) continue;
          const int tl = t - cfg.driver_lags[d];
          if (tl < 0) continue;
          const float v = cube.at(static_cast<int>(d), tl, y, x);
          if (!std::isfinite(v)) continue;
          logit += cfg.driver_weights[d] * (static_cast<double>(v) - drivers[d].base) /
                   anomaly_scales[d];
        }
        const double prob = 1.0 / (1.0 + std::exp(-logit));
        if (fire_rng.bernoulli(prob)) {
          fire[(static_cast<size_t>(t) * lat_len + y) * lon_len + x] = 1.0f;
          ++fires;
        }
      }
    }
  }

  SyntheticCube result;
  result.cube = std::move(cube);
  result.cube.validate();

  json oracle;
  oracle["bias"] = cfg.fire_bias;
  oracle["seasonal_strength"] = cfg.seasonal_strength;
  oracle["seasonal"] = "sin(2*pi*period/steps_per_year + pi*[lat<0])";
  oracle["steps_per_year"] = cfg.steps_per_year;
  oracle["noise_rho"] = cfg.noise_rho;
  oracle["land_cells"] = land_cells;
  oracle["fire_count"] = fires;
  oracle["drivers"] = json::array();
  for (size_t d = 0; d < drivers.size(); ++d) {
    oracle["drivers"].push_back({{"name", drivers[d].name},
                                 {"base", drivers[d].base},
                                 {"seasonal_amp", drivers[d].seasonal_amp},
                                 {"noise_amp", drivers[d].noise_amp},
                                 {"anomaly_scale", anomaly_scales[d]},
                                 {"weight", cfg.driver_weights[d]},
                                 {"lag", cfg.driver_lags[d]},
                                 {"nan_policy", drivers[d].nan_policy}});
  }
  result.oracle = std::move(oracle);
  return result;
}

// ---------------------------------------------------------------------------
// standardization, target, positional encodings
// ---------------------------------------------------------------------------

StandardizationStats compute_standardization(const Datacube& cube, int t_begin, int t_end,
                                             const std::vector<std::string>& variables) {
  if (t_begin < 0 || t_end > cube.header.time_len || t_begin >= t_end) {
    throw DataError("compute_standardization: empty or invalid train range");
  }
  StandardizationStats stats;
  stats.t_begin = t_begin;
  stats.t_end = t_end;
  for (const auto& name : variables) {
    const int v = cube.header.var_index(name);
    if (v < 0) throw DataError("compute_standardization: unknown variable " + name);
    double sum = 0.0;
    long long count = 0;
    for (int t = t_begin; t < t_end; ++t) {
      for (int y = 0; y < cube.header.lat_len; ++y) {
        for (int x = 0; x < cube.header.lon_len; ++x) {
          if (cube.mask_at(y, x) == 0) continue;
          const float val = cube.at(v, t, y, x);
          if (!std::isfinite(val)) continue;
          sum += static_cast<double>(val);
          ++count;
        }
      }
    }
    if (count == 0) throw DataError("compute_standardization: no valid values for " + name);
    const double mean = sum / static_cast<double>(count);
    double ssq = 0.0;
    for (int t = t_begin; t < t_end; ++t) {
      for (int y = 0; y < cube.header.lat_len; ++y) {
        for (int x = 0; x < cube.header.lon_len; ++x) {
          if (cube.mask_at(y, x) == 0) continue;
          const float val = cube.at(v, t, y, x);
          if (!std::isfinite(val)) continue;
          const double d = static_cast<double>(val) - mean;
          ssq += d * d;
        }
      }
    }
    double sd = std::sqrt(ssq / static_cast<double>(count));
    if (sd < kStdClampEpsilon) sd = kStdClampEpsilon;
    stats.by_var[name] = {mean, sd};
  }
  return stats;
}

Datacube standardize(const Datacube& cube, const StandardizationStats& stats,
                     const std::vector<std::string>& variables) {
  Datacube out = cube;
  for (const auto& name : variables) {
    const int v = cube.header.var_index(name);
    if (v < 0) throw DataError("standardize: unknown variable " + name);
    auto it = stats.by_var.find(name);
    if (it == stats.by_var.end()) throw DataError("standardize: missing stats for " + name);
    const double mean = it->second.mean;
    const double sd = it->second.std;
    for (auto& val : out.data[static_cast<size_t>(v)]) {
      if (std::isfinite(val)) {
        val = static_cast<float>((static_cast<double>(val) - mean) / sd);
      } else {
        val = 0.0f;
      }
    }
  }
  return out;
}

std::vector<uint8_t> binarize_target(const Datacube& cube, const std::string& target_var) {
  const int v = cube.header.var_index(target_var);
  if (v < 0) throw DataError("binarize_target: unknown variable " + target_var);
  const auto& values = cube.data[static_cast<size_t>(v)];
  std::vector<uint8_t> out(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    out[i] = (std::isfinite(values[i]) && values[i] > 0.0f) ? 1 : 0;
  }
  return out;
}

std::array<double, 4> positional_encoding(const CubeHeader& h, int lat_idx, int lon_idx) {
  if (lat_idx < 0 || lat_idx >= h.lat_len || lon_idx < 0 || lon_idx >= h.lon_len) {
    throw DataError("positional_encoding: index out of range");
  }
  const double deg = std::numbers::pi / 180.0;
  const double phi = h.lat_values[static_cast<size_t>(lat_idx)] * deg;
  const double lam = h.lon_values[static_cast<size_t>(lon_idx)] * deg;
  return {std::sin(phi), std::cos(phi), std::sin(lam), std::cos(lam)};
}

}  // namespace firecast
