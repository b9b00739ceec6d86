#pragma once

// JSON documents for profiles, channels and run configuration.

#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"

#include "svs/channel.hpp"
#include "svs/error.hpp"
#include "svs/stream.hpp"

namespace svs {

using Json = nlohmann::json;

inline constexpr int kChannelSchemaVersion = 1;

inline Json read_json(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "io", "cannot open " + path);
  try {
    return Json::parse(in, nullptr, true, true);
  } catch (const Json::exception& e) {
    throw Error("config", path + ": " + e.what());
  }
}

inline void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "io", "cannot write " + path);
  out << j.dump(2) << '\n';
}

template <class T>
T json_get(const Json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw Error("config", std::string("field '") + key + "': " + e.what());
  }
}

// Profile section: either {"bundled": name, "d_loss": x} or an explicit
// table with one row of byte sizes per quality layer (columns I, P, B1..BT).
inline StreamProfile profile_from_json(const Json& j) {
  if (j.contains("bundled")) return bundled_profile(j.at("bundled").get<std::string>(), json_get(j, "d_loss", -1.0));
  try {
    const auto rows = j.at("sizes_bytes").get<std::vector<std::vector<long long>>>();
    auto mse = j.at("mse").get<std::vector<double>>();
    const double d_loss = json_get(j, "d_loss", 4.0 * mse.at(0));
    return profile_from_bytes(json_get<std::string>(j, "name", "custom"), j.at("f_intra").get<int>(),
                              j.at("f_gop").get<int>(), json_get(j, "frame_rate", 30.0), rows, std::move(mse),
                              d_loss);
  } catch (const Json::exception& e) {
    throw Error("config", std::string("stream section: ") + e.what());
  }
}

inline Json profile_to_json(const StreamProfile& p) {
  Json rows = Json::array();
  for (int l = 0; l < p.quality_layers(); ++l) {
    Json row = Json::array();
    for (int k = 0; k < p.num_frame_types(); ++k) {
      const Bits b = p.unit_bits(FrameType::from_index(k), l);
      row.push_back(b % 8 == 0 ? Json(b / 8) : Json(static_cast<double>(b) / 8.0));
    }
    rows.push_back(row);
  }
  return {{"name", p.name()},   {"f_intra", p.f_intra()}, {"f_gop", p.f_gop()},     {"frame_rate", p.frame_rate()},
          {"num_layers", p.num_layers()}, {"d_loss", p.d_loss()},   {"mse", p.distortions()}, {"sizes_bytes", rows}};
}

inline FsmcParams fsmc_params_from_json(const Json& j) {
  FsmcParams f;
  f.doppler_hz = json_get(j, "f_d_hz", f.doppler_hz);
  f.snr_avg_db = json_get(j, "snr_avg_db", f.snr_avg_db);
  f.num_states = json_get(j, "num_states", f.num_states);
  f.frame_rate = json_get(j, "frame_rate", f.frame_rate);
  f.max_modulation_bits = json_get(j, "max_modulation", f.max_modulation_bits);
  f.partition = parse_partition(json_get<std::string>(j, "partition", to_string(f.partition)));
  return f;
}

inline Json channel_to_json(const ChannelModel& c) {
  Json states = Json::array();
  for (const auto& s : c.states())
    states.push_back({{"snr", s.snr},
                      {"modulation_bits", s.modulation_bits},
                      {"packet_bits", s.packet_bits},
                      {"packets", s.packets},
                      {"bits_per_slot", s.bits_per_slot},
                      {"packet_error", s.packet_error}});
  Json th = Json::array();
  for (double t : c.thresholds()) th.push_back(std::isfinite(t) ? Json(t) : Json("inf"));
  return {{"schema_version", kChannelSchemaVersion},
          {"type", "custom"},
          {"slot_seconds", c.slot_seconds()},
          {"states", states},
          {"transition", c.transition()},
          {"thresholds", th},
          {"stationary", c.stationary()},
          {"mean_throughput", c.mean_throughput()}};
}

inline ChannelModel channel_from_custom_json(const Json& j) {
  try {
    std::vector<ChannelState> states;
    for (const auto& s : j.at("states")) {
      ChannelState c;
      c.packet_bits = s.at("packet_bits").get<Bits>();
      c.packets = s.at("packets").get<int>();
      c.packet_error = s.at("packet_error").get<double>();
      c.modulation_bits = json_get(s, "modulation_bits", 1);
      c.snr = json_get(s, "snr", 0.0);
      c.bits_per_slot = json_get(s, "bits_per_slot", static_cast<double>(c.packet_bits * c.packets));
      states.push_back(c);
    }
    std::vector<double> th;
    if (j.contains("thresholds"))
      for (const auto& t : j.at("thresholds"))
        th.push_back(t.is_string() ? std::numeric_limits<double>::infinity() : t.get<double>());
    return ChannelModel(std::move(states), j.at("transition").get<std::vector<std::vector<double>>>(),
                        json_get(j, "slot_seconds", 1.0 / 30.0), std::move(th));
  } catch (const Json::exception& e) {
    throw Error("config", std::string("channel section: ") + e.what());
  }
}

// Channel section: {"type": "fsmc", ...}, {"type": "custom", ...} or
// {"file": path} pointing at an exported channel document.
inline ChannelModel channel_from_json(const Json& j) {
  if (j.contains("file")) return channel_from_custom_json(read_json(j.at("file").get<std::string>()));
  const std::string type = json_get<std::string>(j, "type", "fsmc");
  if (type == "custom") return channel_from_custom_json(j);
  require(type == "fsmc", "config", "unknown channel type '" + type + "'");
  return build_fsmc(fsmc_params_from_json(j));
}

// Applies "a.b.c=value"; the value is parsed as JSON when possible.
inline void apply_override(Json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, "config", "override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::exception&) {
    value = raw;
  }
  Json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    require(!key.empty(), "config", "empty key in override " + assignment);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    if (!node->contains(key) || !(*node)[key].is_object()) (*node)[key] = Json::object();
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace svs
