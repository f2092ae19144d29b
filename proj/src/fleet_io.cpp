#include "hwfp/fleet_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hwfp/error.hpp"

namespace hwfp {

using nlohmann::json;

namespace {

json sim_to_json(const SimParams& s) {
  return {{"noise_sigma", s.noise_sigma},
          {"inter_ratio", s.inter_ratio},
          {"sram_flip_prob", s.sram_flip_prob},
          {"soft_fpu_noise", s.soft_fpu_noise}};
}

SimParams sim_from_json(const json& j) {
  SimParams s;
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.inter_ratio = j.value("inter_ratio", s.inter_ratio);
  s.sram_flip_prob = j.value("sram_flip_prob", s.sram_flip_prob);
  s.soft_fpu_noise = j.value("soft_fpu_noise", s.soft_fpu_noise);
  return s;
}

json device_to_json(const DeviceProfile& p) {
  return {
      {"device_id", p.device_id},
      {"secret_seed", p.secret_seed},
      {"dacadc", {{"gain_dev", p.dacadc.gain_dev}, {"poly", p.dacadc.poly},
                  {"pin_dev", p.dacadc.pin_dev}, {"vdd_dev", p.dacadc.vdd_dev}}},
      {"fpu", {{"perf_dev", p.fpu.perf_dev}, {"mode_dev", p.fpu.mode_dev},
               {"x_slope", p.fpu.x_slope}, {"y_slope", p.fpu.y_slope}}},
      {"pwm", {{"duty_err", p.pwm.duty_err}, {"volt_err", p.pwm.volt_err},
               {"clock_dev", p.pwm.clock_dev}, {"freq_slope", p.pwm.freq_slope}}},
      {"rtcfre", {{"skew", p.rtcfre.skew}, {"source_skew", p.rtcfre.source_skew},
                  {"div_slope", p.rtcfre.div_slope}, {"adj_slope", p.rtcfre.adj_slope}}},
      {"rtcpha", {{"phase_off", p.rtcpha.phase_off},
                  {"source_phase", p.rtcpha.source_phase}, {"drift", p.rtcpha.drift}}},
      {"sram", {{"flip_prob", p.sram.flip_prob}}},
  };
}

DeviceProfile device_from_json(const json& j, Model model, const SimParams& sim) {
  DeviceProfile p;
  p.model = model;
  p.sim = sim;
  p.device_id = j.at("device_id").get<std::uint16_t>();
  p.secret_seed = j.at("secret_seed").get<std::uint64_t>();
  const auto& d = j.at("dacadc");
  p.dacadc.gain_dev = d.at("gain_dev");
  p.dacadc.poly = d.at("poly");
  p.dacadc.pin_dev = d.at("pin_dev");
  p.dacadc.vdd_dev = d.at("vdd_dev");
  const auto& f = j.at("fpu");
  p.fpu.perf_dev = f.at("perf_dev");
  p.fpu.mode_dev = f.at("mode_dev");
  p.fpu.x_slope = f.at("x_slope");
  p.fpu.y_slope = f.at("y_slope");
  const auto& w = j.at("pwm");
  p.pwm.duty_err = w.at("duty_err");
  p.pwm.volt_err = w.at("volt_err");
  p.pwm.clock_dev = w.at("clock_dev");
  p.pwm.freq_slope = w.at("freq_slope");
  const auto& r = j.at("rtcfre");
  p.rtcfre.skew = r.at("skew");
  p.rtcfre.source_skew = r.at("source_skew");
  p.rtcfre.div_slope = r.at("div_slope");
  p.rtcfre.adj_slope = r.at("adj_slope");
  const auto& ph = j.at("rtcpha");
  p.rtcpha.phase_off = ph.at("phase_off");
  p.rtcpha.source_phase = ph.at("source_phase");
  p.rtcpha.drift = ph.at("drift");
  p.sram.flip_prob = j.at("sram").at("flip_prob");
  return p;
}

}  // namespace

Fleet make_fleet(Model model, std::uint32_t count, std::uint64_t seed,
                 const SimParams& sim) {
  return Fleet{model, count, seed, sim, spawn_fleet(model, count, seed, sim)};
}

std::string fleet_to_json(const Fleet& fleet) {
  json devices = json::array();
  for (const auto& p : fleet.devices) devices.push_back(device_to_json(p));
  json doc = {{"format", "hwfp-fleet"},
              {"version", kFleetFormatVersion},
              {"model", std::string(model_name(fleet.model))},
              {"count", fleet.count},
              {"seed", fleet.seed},
              {"sim", sim_to_json(fleet.sim)},
              {"devices", devices}};
  return doc.dump(2);
}

Fleet fleet_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.value("version", 0) != kFleetFormatVersion) {
      throw Error(ErrorCode::Malformed, "unsupported fleet format version");
    }
    Fleet fleet;
    fleet.model = parse_model(doc.at("model").get<std::string>());
    fleet.count = doc.at("count");
    fleet.seed = doc.at("seed");
    fleet.sim = sim_from_json(doc.at("sim"));
    for (const auto& d : doc.at("devices")) {
      fleet.devices.push_back(device_from_json(d, fleet.model, fleet.sim));
    }
    if (fleet.devices.size() != fleet.count) {
      throw Error(ErrorCode::Malformed, "fleet count does not match device list");
    }
    return fleet;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Malformed, std::string("fleet json: ") + e.what());
  }
}

void save_fleet(const Fleet& fleet, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << fleet_to_json(fleet) << '\n';
}

Fleet load_fleet(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return fleet_from_json(ss.str());
}

}  // namespace hwfp
