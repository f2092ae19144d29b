#include "hwfp/config_io.hpp"

#include <fstream>

#include "hwfp/error.hpp"

namespace hwfp {

using nlohmann::json;

json auth_to_json(const AuthConfig& c) {
  return {{"total_num", c.total_num}, {"used_num", c.used_num},
          {"accept_num", c.accept_num}, {"noise_lo", c.noise_lo},
          {"noise_hi", c.noise_hi},   {"c", c.c}};
}

// Missing keys keep their defaults so config files can be partial.
AuthConfig auth_from_json(const json& j) {
  AuthConfig c;
  c.total_num = j.value("total_num", c.total_num);
  c.used_num = j.value("used_num", c.used_num);
  c.accept_num = j.value("accept_num", c.accept_num);
  c.noise_lo = j.value("noise_lo", c.noise_lo);
  c.noise_hi = j.value("noise_hi", c.noise_hi);
  c.c = j.value("c", c.c);
  c.validate();
  return c;
}

json mapping_to_json(const MappingConfig& c) {
  json specs = json::array();
  for (const auto& s : c.enabled_specs) {
    specs.push_back({{"feature", feature_name(s.feature)}, {"radices", s.arg_radices}});
  }
  return {{"total_num", c.total_num}, {"variant", variant_name(c.variant)}, {"specs", specs}};
}

MappingConfig mapping_from_json(const json& j) {
  MappingConfig c;
  c.total_num = j.value("total_num", c.total_num);
  c.variant = parse_variant(j.value("variant", std::string("full")));
  if (j.contains("specs")) {
    c.enabled_specs.clear();
    for (const auto& js : j.at("specs")) {
      // A bare feature name means its default radices.
      if (js.is_string()) {
        c.enabled_specs.push_back(default_task_spec(parse_feature(js.get<std::string>())));
        continue;
      }
      const Feature f = parse_feature(js.at("feature").get<std::string>());
      TaskSpec s = default_task_spec(f);
      if (js.contains("radices")) s.arg_radices = js.at("radices").get<std::vector<std::uint32_t>>();
      c.enabled_specs.push_back(std::move(s));
    }
  }
  c.validate();
  return c;
}

json sim_to_json(const SimParams& s) {
  return {{"noise_sigma", s.noise_sigma}, {"inter_ratio", s.inter_ratio},
          {"sram_flip_prob", s.sram_flip_prob}, {"soft_fpu_noise", s.soft_fpu_noise}};
}

SimParams sim_from_json(const json& j) {
  SimParams s;
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.inter_ratio = j.value("inter_ratio", s.inter_ratio);
  s.sram_flip_prob = j.value("sram_flip_prob", s.sram_flip_prob);
  s.soft_fpu_noise = j.value("soft_fpu_noise", s.soft_fpu_noise);
  if (!(s.noise_sigma >= 0) || !(s.inter_ratio >= 0) || !(s.sram_flip_prob >= 0) ||
      !(s.sram_flip_prob < 0.5) || !(s.soft_fpu_noise >= 0)) {
    throw Error(ErrorCode::RangeError, "simulation parameter out of range");
  }
  return s;
}

json backend_options_to_json(const BackendOptions& o) {
  return {{"analog_predictor", predictor_kind_name(o.analog_predictor)},
          {"analog_verifier", verifier_kind_name(o.analog_verifier)},
          {"k", o.predictor.k},
          {"trees", o.predictor.trees},
          {"min_leaf", o.predictor.min_leaf},
          {"target_tpr", o.verifier.target_tpr},
          {"max_bits", o.verifier.max_bits},
          {"floor", o.verifier.floor},
          {"classifier_trees", o.verifier.classifier.trees},
          {"classifier_min_leaf", o.verifier.classifier.min_leaf},
          {"holdout", o.holdout},
          {"negative_devices", o.negative_devices},
          {"negative_pool", o.negative_pool},
          {"seed", o.seed}};
}

BackendOptions backend_options_from_json(const json& j) {
  BackendOptions o;
  o.analog_predictor = parse_predictor_kind(
      j.value("analog_predictor", std::string(predictor_kind_name(o.analog_predictor))));
  o.analog_verifier = parse_verifier_kind(
      j.value("analog_verifier", std::string(verifier_kind_name(o.analog_verifier))));
  o.predictor.k = j.value("k", o.predictor.k);
  o.predictor.trees = j.value("trees", o.predictor.trees);
  o.predictor.min_leaf = j.value("min_leaf", o.predictor.min_leaf);
  o.verifier.target_tpr = j.value("target_tpr", o.verifier.target_tpr);
  o.verifier.max_bits = j.value("max_bits", o.verifier.max_bits);
  o.verifier.floor = j.value("floor", o.verifier.floor);
  o.verifier.classifier.trees = j.value("classifier_trees", o.verifier.classifier.trees);
  o.verifier.classifier.min_leaf = j.value("classifier_min_leaf", o.verifier.classifier.min_leaf);
  o.holdout = j.value("holdout", o.holdout);
  o.negative_devices = j.value("negative_devices", o.negative_devices);
  o.negative_pool = j.value("negative_pool", o.negative_pool);
  o.seed = j.value("seed", o.seed);
  return o;
}

json pair_to_json(const TrainingPair& p) {
  json j = {{"feature", feature_name(p.task.feature)}, {"args", p.task.args}};
  if (p.fingerprint.is_analog()) {
    j["analog"] = p.fingerprint.analog();
  } else {
    j["bits"] = p.fingerprint.bits();
  }
  return j;
}

TrainingPair pair_from_json(const json& j) {
  TrainingPair p;
  p.task.feature = parse_feature(j.at("feature").get<std::string>());
  p.task.args = j.at("args").get<std::vector<std::uint32_t>>();
  if (j.contains("bits")) {
    p.fingerprint = FingerprintValue::bits32(j.at("bits").get<std::uint32_t>());
  } else {
    p.fingerprint = FingerprintValue::analog(j.at("analog").get<double>());
  }
  return p;
}

json testbed_to_json(const TestbedConfig& c) {
  return {{"version", kConfigVersion},
          {"model", model_name(c.model)},
          {"devices", c.devices},
          {"seed", c.seed},
          {"pairs_per_feature", c.pairs_per_feature},
          {"sim", sim_to_json(c.sim)},
          {"auth", auth_to_json(c.auth)},
          {"mapping", mapping_to_json(c.mapping)},
          {"backend", backend_options_to_json(c.backend)}};
}

TestbedConfig testbed_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::Malformed, "config must be a JSON object");
  if (!j.contains("version") || j.at("version") != kConfigVersion) {
    throw Error(ErrorCode::InvalidArgument,
                "config version must be " + std::to_string(kConfigVersion));
  }
  TestbedConfig c;
  if (j.contains("model")) c.model = parse_model(j.at("model").get<std::string>());
  c.devices = j.value("devices", c.devices);
  c.seed = j.value("seed", c.seed);
  c.pairs_per_feature = j.value("pairs_per_feature", c.pairs_per_feature);
  if (j.contains("sim")) c.sim = sim_from_json(j.at("sim"));
  if (j.contains("auth")) c.auth = auth_from_json(j.at("auth"));
  if (j.contains("mapping")) c.mapping = mapping_from_json(j.at("mapping"));
  if (j.contains("backend")) c.backend = backend_options_from_json(j.at("backend"));
  if (c.devices < 2) throw Error(ErrorCode::RangeError, "a testbed needs at least two devices");
  if (c.pairs_per_feature < 1) throw Error(ErrorCode::RangeError, "pairs_per_feature must be positive");
  return c;
}

TestbedConfig load_testbed_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config " + path);
  try {
    return testbed_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Malformed, "bad config " + path + ": " + e.what());
  }
}

}  // namespace hwfp
