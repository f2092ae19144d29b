#include "hwfp/mapping.hpp"

#include <sstream>

#include "hwfp/aphash.hpp"
#include "hwfp/error.hpp"

namespace hwfp {

namespace {

void put_be32(Bytes& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t hash_words(std::initializer_list<std::uint32_t> words) {
  std::uint8_t buf[16];
  std::size_t n = 0;
  for (auto w : words) {
    buf[n++] = static_cast<std::uint8_t>(w >> 24);
    buf[n++] = static_cast<std::uint8_t>(w >> 16);
    buf[n++] = static_cast<std::uint8_t>(w >> 8);
    buf[n++] = static_cast<std::uint8_t>(w);
  }
  return ap_hash(std::span<const std::uint8_t>(buf, n));
}

}  // namespace

std::string_view feature_name(Feature feature) {
  switch (feature) {
    case Feature::DacAdc: return "DacAdc";
    case Feature::Fpu: return "Fpu";
    case Feature::Pwm: return "Pwm";
    case Feature::RtcFre: return "RtcFre";
    case Feature::RtcPha: return "RtcPha";
    case Feature::Sram: return "Sram";
  }
  return "?";
}

Feature parse_feature(std::string_view name) {
  for (auto f : kAllFeatures) {
    if (feature_name(f) == name) return f;
  }
  throw Error(ErrorCode::UnknownFeature,
              "unknown feature '" + std::string(name) + "'");
}

std::size_t feature_arity(Feature feature) {
  switch (feature) {
    case Feature::DacAdc: return 4;
    case Feature::Fpu: return 3;
    case Feature::Pwm: return 5;
    case Feature::RtcFre: return 4;
    case Feature::RtcPha: return 3;
    case Feature::Sram: return 1;
  }
  throw Error(ErrorCode::UnknownFeature, "unknown feature id");
}

std::uint64_t TaskSpec::size() const {
  std::uint64_t n = 1;
  for (auto r : arg_radices) n *= r;
  return n;
}

void TaskSpec::validate() const {
  if (arg_radices.size() != feature_arity(feature)) {
    throw Error(ErrorCode::InvalidArgument,
                std::string(feature_name(feature)) + " takes " +
                    std::to_string(feature_arity(feature)) + " arguments");
  }
  for (auto r : arg_radices) {
    if (r == 0) throw Error(ErrorCode::InvalidArgument, "zero radix");
  }
  if (size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "task space must have >= 2 values");
  }
}

TaskSpec default_task_spec(Feature feature) {
  switch (feature) {
    case Feature::DacAdc: return {feature, {256, 2, 2, 4}};
    case Feature::Fpu: return {feature, {2, 32, 32}};
    case Feature::Pwm: return {feature, {4, 8, 16, 2, 2}};
    case Feature::RtcFre: return {feature, {4, 8, 16, 8}};
    case Feature::RtcPha: return {feature, {4, 8, 64}};
    case Feature::Sram: return {feature, {1024}};
  }
  throw Error(ErrorCode::UnknownFeature, "unknown feature id");
}

std::vector<TaskSpec> default_task_specs() {
  std::vector<TaskSpec> specs;
  for (auto f : kAllFeatures) specs.push_back(default_task_spec(f));
  return specs;
}

std::string format_task(const HardwareTask& task) {
  std::ostringstream os;
  os << feature_name(task.feature) << ':';
  for (std::size_t i = 0; i < task.args.size(); ++i) {
    if (i) os << '.';
    os << task.args[i];
  }
  return os.str();
}

void Request::validate() const {
  if (payloads.empty()) {
    throw Error(ErrorCode::EmptyPayloads, "request has no payloads");
  }
  if (operation.size() > kMaxOperation) {
    throw Error(ErrorCode::InvalidArgument, "operation longer than 64 bytes");
  }
  if (payloads.size() > kMaxPayloads) {
    throw Error(ErrorCode::InvalidArgument, "more than 16 payloads");
  }
  for (const auto& p : payloads) {
    if (p.size() > kMaxPayloadBytes) {
      throw Error(ErrorCode::InvalidArgument, "payload longer than 256 bytes");
    }
  }
}

std::string_view variant_name(MappingVariant variant) {
  switch (variant) {
    case MappingVariant::Full: return "full";
    case MappingVariant::H1Only: return "h1";
    case MappingVariant::H3Only: return "h3";
    case MappingVariant::H1H2: return "h1h2";
  }
  return "?";
}

MappingVariant parse_variant(std::string_view name) {
  for (auto v : {MappingVariant::Full, MappingVariant::H1Only,
                 MappingVariant::H3Only, MappingVariant::H1H2}) {
    if (variant_name(v) == name) return v;
  }
  throw Error(ErrorCode::InvalidArgument,
              "unknown mapping variant '" + std::string(name) + "'");
}

void MappingConfig::validate() const {
  if (total_num < 1 || total_num > 255) {
    throw Error(ErrorCode::InvalidArgument, "totalNum must be in [1, 255]");
  }
  if (enabled_specs.empty()) {
    throw Error(ErrorCode::InvalidArgument, "no enabled task specs");
  }
  for (const auto& s : enabled_specs) s.validate();
}

int MappingConfig::spec_index(Feature feature) const {
  for (std::size_t i = 0; i < enabled_specs.size(); ++i) {
    if (enabled_specs[i].feature == feature) return static_cast<int>(i);
  }
  return -1;
}

MappingConfig mapping_for(std::initializer_list<Feature> features,
                          std::uint32_t total_num) {
  MappingConfig cfg;
  cfg.total_num = total_num;
  cfg.enabled_specs.clear();
  for (auto f : features) cfg.enabled_specs.push_back(default_task_spec(f));
  return cfg;
}

std::vector<std::uint32_t> map_message_digests(const Request& request,
                                               const MappingConfig& config) {
  request.validate();
  const auto payload_count = static_cast<std::int64_t>(request.payloads.size());
  std::vector<std::uint32_t> digests;
  digests.reserve(config.total_num);

  Bytes h1_input;
  Bytes payload_input;
  std::uint32_t digest = 0;
  for (std::uint32_t i = 0; i < config.total_num; ++i) {
    h1_input.assign(request.operation.begin(), request.operation.end());
    put_be32(h1_input, request.nonce);
    put_be32(h1_input, digest);
    const std::uint32_t h1 = ap_hash(h1_input);

    const auto fwd = static_cast<std::size_t>(i % payload_count);
    const auto bwd = static_cast<std::size_t>(
        (((payload_count - 1 - static_cast<std::int64_t>(i)) % payload_count) +
         payload_count) %
        payload_count);

    auto payload_hash = [&](std::size_t index) {
      payload_input.clear();
      put_be32(payload_input, request.nonce);
      const auto& p = request.payloads[index];
      payload_input.insert(payload_input.end(), p.begin(), p.end());
      return ap_hash(payload_input);
    };

    switch (config.variant) {
      case MappingVariant::Full: {
        const std::uint32_t h2 = payload_hash(fwd);
        const std::uint32_t h3 = payload_hash(bwd);
        digest = hash_words({h1, h2, h3});
        break;
      }
      case MappingVariant::H1Only:
        digest = h1;
        break;
      case MappingVariant::H3Only:
        digest = payload_hash(bwd);
        break;
      case MappingVariant::H1H2:
        digest = hash_words({h1, payload_hash(fwd)});
        break;
    }
    digests.push_back(digest);
  }
  return digests;
}

std::vector<HardwareTask> map_message(const Request& request,
                                      const MappingConfig& config) {
  std::vector<HardwareTask> tasks;
  tasks.reserve(config.total_num);
  for (auto digest : map_message_digests(request, config)) {
    tasks.push_back(divide_arguments(digest, config));
  }
  return tasks;
}

HardwareTask divide_arguments(std::uint32_t digest, const MappingConfig& config) {
  const auto& specs = config.enabled_specs;
  if (specs.empty()) {
    throw Error(ErrorCode::InvalidArgument, "no enabled task specs");
  }
  std::uint64_t quotient = digest;
  std::uint32_t counter = 0;

  std::size_t which = 0;
  if (specs.size() > 1) {
    which = static_cast<std::size_t>(quotient % specs.size());
    quotient /= specs.size();
  }
  const TaskSpec& spec = specs[which];

  HardwareTask task;
  task.feature = spec.feature;
  task.args.reserve(spec.arg_radices.size());
  for (auto radix : spec.arg_radices) {
    if (quotient < radix) {
      // Fold in the next counter-mode extension word.
      quotient = (quotient << 32) | hash_words({digest, counter});
      ++counter;
    }
    task.args.push_back(static_cast<std::uint32_t>(quotient % radix));
    quotient /= radix;
  }
  return task;
}

std::uint64_t task_space_size(const MappingConfig& config) {
  std::uint64_t d = 0;
  for (const auto& s : config.enabled_specs) d += s.size();
  return d;
}

std::uint64_t task_ordinal(const HardwareTask& task, const TaskSpec& spec) {
  std::uint64_t ordinal = 0;
  std::uint64_t weight = 1;
  for (std::size_t k = 0; k < spec.arg_radices.size(); ++k) {
    ordinal += weight * task.args.at(k);
    weight *= spec.arg_radices[k];
  }
  return ordinal;
}

HardwareTask task_from_ordinal(std::uint64_t ordinal, const TaskSpec& spec) {
  HardwareTask task;
  task.feature = spec.feature;
  for (auto radix : spec.arg_radices) {
    task.args.push_back(static_cast<std::uint32_t>(ordinal % radix));
    ordinal /= radix;
  }
  return task;
}

}  // namespace hwfp
