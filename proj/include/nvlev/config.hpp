#pragma once

// Unit-aware run configuration. Every physical quantity carries an explicit
// unit suffix ("100 G", "6.9e-6 Torr") and is converted to SI / rad/s here.
// Two input syntaxes are accepted: flat `key = "value unit"` text and a JSON
// object (optionally a whole run record with a "config" member).

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nvlev/constants.hpp"
#include "nvlev/error.hpp"

namespace nvlev::config {

enum class Dim {
  dimensionless,
  integer,
  choice,
  path,
  magnetic_field,     // T
  pressure,           // Pa
  intensity,          // W/m^2
  absorption,         // 1/m
  length,             // m
  angle,              // rad
  angular_frequency,  // rad/s
  frequency,          // Hz
  rate,               // 1/s
  temperature,        // K
  voltage,            // V
  electric_field,     // V/m
  charge,             // C
  dipole,             // C m
  density,            // kg/m^3
  time,               // s
  gas_coefficient,    // m^3 / (s K)
  displacement_psd,   // m^2/Hz
};

struct Unit {
  std::string_view name;
  double scale;  // SI value = number * scale
};

/// Accepted unit spellings per dimension.
inline std::vector<Unit> units_for(Dim d) {
  switch (d) {
    case Dim::magnetic_field: return {{"T", 1.0}, {"mT", 1e-3}, {"uT", 1e-6}, {"µT", 1e-6}, {"G", kTeslaPerGauss}};
    case Dim::pressure:
      return {{"Pa", 1.0}, {"kPa", 1e3}, {"mbar", 100.0}, {"bar", kPascalPerBar},
              {"Torr", kPascalPerTorr}, {"mTorr", 1e-3 * kPascalPerTorr}};
    case Dim::intensity:
      return {{"W/m^2", 1.0}, {"W/cm^2", 1e4}, {"W/mm^2", kWattPerM2PerWattPerMm2}, {"mW/mm^2", 1e3}};
    case Dim::absorption: return {{"1/m", 1.0}, {"m^-1", 1.0}, {"1/cm", kPerMeterPerPerCm}, {"cm^-1", kPerMeterPerPerCm}};
    case Dim::length:
      return {{"m", 1.0}, {"cm", 1e-2}, {"mm", 1e-3}, {"um", 1e-6}, {"µm", 1e-6}, {"nm", 1e-9}};
    case Dim::angle: return {{"deg", kPi / 180.0}, {"rad", 1.0}};
    case Dim::angular_frequency:
      return {{"Hz", kTwoPi}, {"kHz", kTwoPi * 1e3}, {"MHz", kTwoPi * 1e6}, {"GHz", kTwoPi * 1e9}, {"rad/s", 1.0}};
    case Dim::frequency:
      return {{"Hz", 1.0}, {"kHz", 1e3}, {"MHz", 1e6}, {"GHz", 1e9}, {"rad/s", 1.0 / kTwoPi}};
    case Dim::rate: return {{"1/s", 1.0}, {"s^-1", 1.0}};
    case Dim::temperature: return {{"K", 1.0}};
    case Dim::voltage: return {{"V", 1.0}, {"mV", 1e-3}, {"kV", 1e3}};
    case Dim::electric_field: return {{"V/m", 1.0}, {"kV/m", 1e3}, {"V/cm", 100.0}, {"V/mm", 1e3}};
    case Dim::charge: return {{"C", 1.0}, {"e", kElementaryCharge}};
    case Dim::dipole: return {{"C*m", 1.0}, {"C·m", 1.0}, {"C m", 1.0}, {"D", 3.33564e-30}};
    case Dim::density: return {{"kg/m^3", 1.0}, {"g/cm^3", 1e3}};
    case Dim::time: return {{"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"µs", 1e-6}, {"ns", 1e-9}};
    case Dim::gas_coefficient: return {{"m^3/s/K", 1.0}, {"m^3/(s*K)", 1.0}};
    case Dim::displacement_psd: return {{"m^2/Hz", 1.0}};
    default: return {};
  }
}

struct KeySpec {
  std::string name;
  Dim dim;
  std::string default_value;  // raw text; empty = required
  std::vector<std::string> choices = {};
  std::string help = {};
};

struct Quantity {
  std::string raw;      // text as given (or the default)
  double value = 0.0;   // SI / rad/s
  std::string text;     // choice/path payload
};

/// Parsed configuration: SI values keyed by name, plus the raw strings for
/// provenance. Iteration order follows the schema.
class RunConfig {
 public:
  std::string subcommand;
  std::vector<std::string> order;
  std::map<std::string, Quantity> values;

  double get(const std::string& key) const { return at(key).value; }
  long long get_int(const std::string& key) const { return static_cast<long long>(at(key).value); }
  const std::string& get_text(const std::string& key) const { return at(key).text; }
  const std::string& raw(const std::string& key) const { return at(key).raw; }

  /// Resolved config as key -> raw string, in schema order.
  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& k : order) j[k] = values.at(k).raw;
    return j;
  }

 private:
  const Quantity& at(const std::string& key) const {
    const auto it = values.find(key);
    if (it == values.end()) throw Error(Errc::UnknownKey, "no such key in the resolved config", key);
    return it->second;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

inline std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}

// Leading number and the rest of the string.
inline std::optional<std::pair<double, std::string>> split_number(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto r = std::from_chars(first, last, v);
  if (r.ec != std::errc()) return std::nullopt;
  return std::make_pair(v, trim(std::string_view(r.ptr, std::size_t(last - r.ptr))));
}

}  // namespace detail

/// Converts one raw value according to its key spec.
inline Quantity convert(const KeySpec& spec, const std::string& raw_in) {
  const std::string raw = detail::trim(raw_in);
  Quantity q;
  q.raw = raw;
  const auto& key = spec.name;
  switch (spec.dim) {
    case Dim::choice: {
      if (std::find(spec.choices.begin(), spec.choices.end(), raw) == spec.choices.end())
        throw Error(Errc::BadValue, "'" + raw + "' is not one of the allowed values", key);
      q.text = raw;
      return q;
    }
    case Dim::path: {
      if (raw.empty()) throw Error(Errc::BadValue, "empty path", key);
      q.text = raw;
      return q;
    }
    default: break;
  }
  const auto num = detail::split_number(raw);
  if (!num) throw Error(Errc::BadValue, "'" + raw + "' does not start with a number", key);
  const auto& [v, unit] = *num;
  if (!std::isfinite(v)) throw Error(Errc::BadValue, "value is not finite", key);
  if (spec.dim == Dim::dimensionless || spec.dim == Dim::integer) {
    if (!unit.empty()) throw Error(Errc::BadValue, "unexpected unit '" + unit + "' on a dimensionless value", key);
    if (spec.dim == Dim::integer && (v != std::floor(v) || std::abs(v) > 9.0e15))
      throw Error(Errc::BadValue, "expected an integer", key);
    q.value = v;
    return q;
  }
  if (unit.empty()) throw Error(Errc::MissingUnit, "'" + raw + "' has no unit suffix", key);
  for (const auto& u : units_for(spec.dim))
    if (unit == u.name) {
      q.value = v * u.scale;
      return q;
    }
  throw Error(Errc::BadValue, "unit '" + unit + "' not accepted here", key);
}

/// Flat `key = value` text: one entry per line, '#' comments, values
/// optionally quoted.
inline std::vector<std::pair<std::string, std::string>> read_flat(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // Strip comments outside quotes.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(Errc::BadValue, "line " + std::to_string(lineno) + ": expected key = value", t);
    const std::string key = detail::trim(std::string_view(t).substr(0, eq));
    const std::string val = detail::unquote(detail::trim(std::string_view(t).substr(eq + 1)));
    if (key.empty()) throw Error(Errc::BadValue, "line " + std::to_string(lineno) + ": empty key", t);
    out.emplace_back(key, val);
  }
  return out;
}

/// JSON object of key -> string (numbers allowed for unitless keys). A run
/// record is unwrapped to its "config" member.
inline std::vector<std::pair<std::string, std::string>> read_json(const nlohmann::ordered_json& j_in) {
  const nlohmann::ordered_json* j = &j_in;
  if (j_in.is_object() && j_in.contains("config") && j_in["config"].is_object()) j = &j_in["config"];
  if (!j->is_object()) throw Error(Errc::BadValue, "JSON config must be an object", "<root>");
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, v] : j->items()) {
    if (v.is_string()) {
      out.emplace_back(k, v.get<std::string>());
    } else if (v.is_number()) {
      out.emplace_back(k, v.dump());
    } else {
      throw Error(Errc::BadValue, "values must be strings or numbers", k);
    }
  }
  return out;
}

inline bool looks_like_json(std::string_view text) {
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) return c == '{';
  return false;
}

inline std::vector<std::pair<std::string, std::string>> read_any(std::string_view text) {
  if (looks_like_json(text)) {
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::BadValue, std::string("malformed JSON: ") + e.what(), "<root>");
    }
    return read_json(j);
  }
  return read_flat(text);
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::BadValue, "cannot open config file", path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Applies entries (later ones override earlier ones only when
/// allow_override) on top of schema defaults. Unknown keys are errors.
inline RunConfig resolve(const std::string& subcommand, const std::vector<KeySpec>& schema,
                         const std::vector<std::vector<std::pair<std::string, std::string>>>& layers) {
  std::map<std::string, std::string> given;
  for (const auto& layer : layers) {
    std::map<std::string, int> seen;
    for (const auto& [k, v] : layer) {
      const bool known = std::any_of(schema.begin(), schema.end(), [&](const KeySpec& s) { return s.name == k; });
      if (!known) throw Error(Errc::UnknownKey, "not a parameter of '" + subcommand + "'", k);
      if (++seen[k] > 1) throw Error(Errc::BadValue, "key given twice", k);
      given[k] = v;
    }
  }
  RunConfig rc;
  rc.subcommand = subcommand;
  for (const auto& spec : schema) {
    const auto it = given.find(spec.name);
    std::string raw = it != given.end() ? it->second : spec.default_value;
    if (it == given.end() && spec.default_value.empty())
      throw Error(Errc::BadValue, "required parameter missing", spec.name);
    rc.order.push_back(spec.name);
    rc.values[spec.name] = convert(spec, raw);
  }
  return rc;
}

/// Parses a config file (flat text or JSON) plus `key=value` overrides.
inline RunConfig parse_config(const std::string& subcommand, const std::vector<KeySpec>& schema,
                              const std::optional<std::string>& path,
                              const std::vector<std::string>& overrides = {}) {
  std::vector<std::vector<std::pair<std::string, std::string>>> layers;
  if (path) layers.push_back(read_any(read_file(*path)));
  std::vector<std::pair<std::string, std::string>> ov;
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw Error(Errc::BadValue, "override must be key=value", o);
    ov.emplace_back(detail::trim(std::string_view(o).substr(0, eq)),
                    detail::unquote(detail::trim(std::string_view(o).substr(eq + 1))));
  }
  layers.push_back(ov);
  return resolve(subcommand, schema, layers);
}

}  // namespace nvlev::config
