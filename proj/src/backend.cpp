#include "hwfp/backend.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hwfp/config_io.hpp"
#include "hwfp/error.hpp"

namespace hwfp {

using nlohmann::json;

std::string_view decision_name(Decision d) {
  return d == Decision::Accept ? "Accept" : "Reject";
}

std::string_view reason_name(Reason r) {
  switch (r) {
    case Reason::Ok: return "Ok";
    case Reason::BelowThreshold: return "BelowThreshold";
    case Reason::ReplayDetected: return "ReplayDetected";
    case Reason::UnknownDevice: return "UnknownDevice";
    case Reason::MalformedToken: return "MalformedToken";
  }
  return "?";
}

std::pair<double, double> fit_linear_least_squares(
    std::span<const std::pair<double, double>> points) {
  const double n = static_cast<double>(points.size());
  if (points.size() < 2) throw Error(ErrorCode::DegenerateInput, "need two points");
  double mx = 0, my = 0;
  for (auto [x, y] : points) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (auto [x, y] : points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (sxx == 0) throw Error(ErrorCode::DegenerateInput, "all x values are equal");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

namespace {

constexpr std::uint64_t kSplitStream = 0x73706c6974;
constexpr std::uint64_t kNegativeStream = 0x6e6567;

struct Split {
  std::vector<TrainingPair> train, calibrate;
};

Split split_pairs(const std::vector<TrainingPair>& pairs, const TaskSpec& spec,
                  double holdout, Rng& rng) {
  Split s;
  if (spec.feature == Feature::Sram) {
    // Keep two reads of every address for the table; later reads calibrate.
    std::map<std::uint64_t, int> seen;
    for (const auto& p : pairs) {
      if (seen[task_ordinal(p.task, spec)]++ < 2) {
        s.train.push_back(p);
      } else {
        s.calibrate.push_back(p);
      }
    }
  } else {
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto hold = static_cast<std::size_t>(std::round(holdout * pairs.size()));
    for (std::size_t i = 0; i < order.size(); ++i) {
      (i < hold ? s.calibrate : s.train).push_back(pairs[order[i]]);
    }
  }
  // Too little data to hold anything out: calibrate in-sample.
  if (s.calibrate.empty() || s.train.empty()) {
    s.train = pairs;
    s.calibrate = pairs;
  }
  return s;
}

}  // namespace

Backend::Backend(AuthConfig auth, MappingConfig mapping, BackendOptions options)
    : auth_(auth), mapping_(std::move(mapping)), options_(options) {
  auth_.validate();
  mapping_.validate();
  if (mapping_.variant != MappingVariant::Full) {
    throw Error(ErrorCode::InvalidArgument, "backend only runs the full mapping");
  }
  if (mapping_.total_num != auth_.total_num) {
    throw Error(ErrorCode::InvalidArgument, "mapping and auth totalNum differ");
  }
  if (options_.analog_predictor == PredictorKind::ExactTable ||
      options_.analog_verifier == VerifierKind::HammingThreshold) {
    throw Error(ErrorCode::InvalidArgument, "analog features need an analog model");
  }
  if (!(options_.holdout >= 0 && options_.holdout < 1)) {
    throw Error(ErrorCode::RangeError, "holdout must be in [0, 1)");
  }
}

void Backend::begin_enrollment(std::uint16_t device_id, Model model) {
  std::unique_lock lock(mu_);
  if (devices_.contains(device_id)) {
    throw Error(ErrorCode::SealedDevice, "device " + std::to_string(device_id) + " is sealed");
  }
  if (pending_.contains(device_id)) {
    throw Error(ErrorCode::ProtocolOrder,
                "enrollment already open for device " + std::to_string(device_id));
  }
  pending_[device_id] = Pending{model, {}};
}

void Backend::add_pairs(std::uint16_t device_id, std::span<const TrainingPair> pairs) {
  std::unique_lock lock(mu_);
  if (devices_.contains(device_id)) {
    throw Error(ErrorCode::SealedDevice, "device " + std::to_string(device_id) + " is sealed");
  }
  auto it = pending_.find(device_id);
  if (it == pending_.end()) {
    throw Error(ErrorCode::ProtocolOrder,
                "no open enrollment for device " + std::to_string(device_id));
  }
  // Validate the whole batch before keeping any of it.
  for (const auto& p : pairs) {
    const int idx = mapping_.spec_index(p.task.feature);
    if (idx < 0) throw Error(ErrorCode::UnknownFeature, "feature not enabled");
    const auto& spec = mapping_.enabled_specs[static_cast<std::size_t>(idx)];
    if (p.task.args.size() != spec.arg_radices.size()) {
      throw Error(ErrorCode::Malformed, "wrong argument count");
    }
    for (std::size_t k = 0; k < p.task.args.size(); ++k) {
      if (p.task.args[k] >= spec.arg_radices[k]) {
        throw Error(ErrorCode::DomainError, "argument out of range");
      }
    }
    if (p.fingerprint.is_analog() == (p.task.feature == Feature::Sram)) {
      throw Error(ErrorCode::TagMismatch, "fingerprint tag does not match feature");
    }
    if (p.fingerprint.is_analog() && !std::isfinite(p.fingerprint.analog())) {
      throw Error(ErrorCode::Malformed, "non-finite fingerprint");
    }
  }
  for (const auto& p : pairs) it->second.pairs[p.task.feature].push_back(p);
}

void Backend::commit_enrollment(std::uint16_t device_id) {
  Pending pending;
  // feature -> negatives drawn from other devices
  std::map<Feature, std::vector<TrainingPair>> negatives;
  {
    std::shared_lock lock(mu_);
    if (devices_.contains(device_id)) {
      throw Error(ErrorCode::SealedDevice, "device " + std::to_string(device_id) + " is sealed");
    }
    auto it = pending_.find(device_id);
    if (it == pending_.end()) {
      throw Error(ErrorCode::ProtocolOrder,
                  "no open enrollment for device " + std::to_string(device_id));
    }
    pending = it->second;

    std::vector<std::uint16_t> others;
    for (const auto& [id, _] : pending_) {
      if (id != device_id) others.push_back(id);
    }
    for (const auto& [id, _] : negative_pool_) {
      if (id != device_id && !pending_.contains(id)) others.push_back(id);
    }
    std::sort(others.begin(), others.end());
    Rng rng = make_rng(options_.seed, kNegativeStream, device_id);
    std::shuffle(others.begin(), others.end(), rng);
    if (others.size() > options_.negative_devices) others.resize(options_.negative_devices);

    for (auto id : others) {
      const auto& source = pending_.contains(id) ? pending_.at(id).pairs : negative_pool_.at(id);
      for (const auto& [feature, list] : source) {
        const auto take = std::min(list.size(), options_.negative_pool);
        auto& dst = negatives[feature];
        dst.insert(dst.end(), list.begin(), list.begin() + static_cast<std::ptrdiff_t>(take));
      }
    }
  }

  auto device = std::make_unique<Device>();
  device->model = pending.model;
  for (std::size_t s = 0; s < mapping_.enabled_specs.size(); ++s) {
    const TaskSpec& spec = mapping_.enabled_specs[s];
    const auto found = pending.pairs.find(spec.feature);
    if (found == pending.pairs.end() || found->second.empty()) {
      throw Error(ErrorCode::IncompleteCoverage,
                  "no enrollment pairs for " + std::string(feature_name(spec.feature)));
    }
    const auto& neg = negatives[spec.feature];
    if (neg.empty()) {
      throw Error(ErrorCode::NoNegatives,
                  "no other device supplies negatives for " +
                      std::string(feature_name(spec.feature)));
    }
    const bool sram = spec.feature == Feature::Sram;
    const PredictorKind pk = sram ? PredictorKind::ExactTable : options_.analog_predictor;
    const VerifierKind vk = sram ? VerifierKind::HammingThreshold : options_.analog_verifier;

    PredictorOptions popt = options_.predictor;
    popt.seed = derive_seed(options_.seed, device_id, s);
    VerifierOptions vopt = options_.verifier;
    vopt.classifier.seed = derive_seed(options_.seed, device_id, 100 + s);

    Rng rng = make_rng(options_.seed, kSplitStream, (std::uint64_t{device_id} << 8) | s);
    const Split split = split_pairs(found->second, spec, options_.holdout, rng);
    const Predictor partial = train_predictor(split.train, spec, pk, popt);
    Verifier verifier = calibrate_verifier(partial, split.calibrate, neg, vk, vopt);
    // Thresholds come from held-out data; the stored model uses every pair.
    device->models.push_back({train_predictor(found->second, spec, pk, popt), std::move(verifier)});
  }

  std::unique_lock lock(mu_);
  if (devices_.contains(device_id) || !pending_.contains(device_id)) {
    throw Error(ErrorCode::ProtocolOrder, "enrollment changed during commit");
  }
  auto& pool = negative_pool_[device_id];
  for (const auto& [feature, list] : pending_.at(device_id).pairs) {
    const auto take = std::min(list.size(), options_.negative_pool);
    pool[feature].assign(list.begin(), list.begin() + static_cast<std::ptrdiff_t>(take));
  }
  pending_.erase(device_id);
  devices_[device_id] = std::move(device);
}

bool Backend::is_enrolled(std::uint16_t device_id) const {
  std::shared_lock lock(mu_);
  return devices_.contains(device_id);
}

bool Backend::is_pending(std::uint16_t device_id) const {
  std::shared_lock lock(mu_);
  return pending_.contains(device_id);
}

std::vector<std::uint16_t> Backend::devices() const {
  std::shared_lock lock(mu_);
  std::vector<std::uint16_t> ids;
  for (const auto& [id, _] : devices_) ids.push_back(id);
  return ids;
}

const Backend::Device* Backend::find(std::uint16_t device_id) const {
  std::shared_lock lock(mu_);
  const auto it = devices_.find(device_id);
  // Device records are never removed, so the pointer outlives the lock.
  return it == devices_.end() ? nullptr : it->second.get();
}

AuthResult Backend::score_device(const Device& device, const Request& request,
                                 const Token& token) const {
  const AuthResult malformed{Decision::Reject, 0, Reason::MalformedToken};
  if (token.nonce != request.nonce || token.entries.size() != mapping_.total_num) {
    return malformed;
  }
  std::vector<HardwareTask> tasks;
  try {
    tasks = map_message(request, mapping_);
  } catch (const Error&) {
    return malformed;
  }
  std::uint32_t matched = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& entry = token.entries[i];
    if (entry.task_index != i) return malformed;
    const auto& model =
        device.models[static_cast<std::size_t>(mapping_.spec_index(tasks[i].feature))];
    if (entry.fingerprint.is_analog() == (tasks[i].feature == Feature::Sram)) return malformed;
    if (entry.fingerprint.is_analog() && !std::isfinite(entry.fingerprint.analog())) {
      return malformed;
    }
    try {
      if (model.verifier.verify(model.predictor.predict(tasks[i]), entry.fingerprint)) ++matched;
    } catch (const Error&) {
      return malformed;
    }
  }
  if (matched >= auth_.accept_num) return {Decision::Accept, matched, Reason::Ok};
  return {Decision::Reject, matched, Reason::BelowThreshold};
}

AuthResult Backend::score(std::uint16_t device_id, const Request& request,
                          const Token& token) const {
  const Device* device = find(device_id);
  if (!device) return {Decision::Reject, 0, Reason::UnknownDevice};
  return score_device(*device, request, token);
}

AuthResult Backend::authenticate(std::uint16_t device_id, const Request& request,
                                 const Token& token) {
  const Device* device = find(device_id);
  if (!device) return {Decision::Reject, 0, Reason::UnknownDevice};
  std::lock_guard lock(device->mu);
  if (static_cast<std::int64_t>(request.nonce) <= device->last_seen) {
    return {Decision::Reject, 0, Reason::ReplayDetected};
  }
  const AuthResult result = score_device(*device, request, token);
  if (result.accepted()) {
    const_cast<Device*>(device)->last_seen = request.nonce;
  }
  return result;
}

std::int64_t Backend::last_seen_nonce(std::uint16_t device_id) const {
  const Device* device = find(device_id);
  if (!device) throw Error(ErrorCode::UnknownDevice, "unknown device");
  std::lock_guard lock(device->mu);
  return device->last_seen;
}

const FeatureModel& Backend::feature_model(std::uint16_t device_id, Feature feature) const {
  const Device* device = find(device_id);
  if (!device) throw Error(ErrorCode::UnknownDevice, "unknown device");
  const int idx = mapping_.spec_index(feature);
  if (idx < 0) throw Error(ErrorCode::UnknownFeature, "feature not enabled");
  return device->models[static_cast<std::size_t>(idx)];
}

json Backend::to_json() const {
  std::shared_lock lock(mu_);
  json devices = json::array();
  for (const auto& [id, dev] : devices_) {
    json models = json::array();
    for (const auto& m : dev->models) {
      models.push_back({{"predictor", m.predictor.to_json()}, {"verifier", m.verifier.to_json()}});
    }
    std::int64_t last;
    {
      std::lock_guard dl(dev->mu);
      last = dev->last_seen;
    }
    devices.push_back({{"id", id},
                       {"model", model_name(dev->model)},
                       {"last_seen_nonce", last},
                       {"models", models}});
  }
  json pool = json::array();
  for (const auto& [id, features] : negative_pool_) {
    json pairs = json::array();
    for (const auto& [_, list] : features) {
      for (const auto& p : list) pairs.push_back(pair_to_json(p));
    }
    pool.push_back({{"id", id}, {"pairs", pairs}});
  }
  return {{"format", "hwfp-backend"},
          {"version", 1},
          {"auth", auth_to_json(auth_)},
          {"mapping", mapping_to_json(mapping_)},
          {"options", backend_options_to_json(options_)},
          {"devices", devices},
          {"negative_pool", pool}};
}

std::unique_ptr<Backend> Backend::from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "hwfp-backend" || j.at("version").get<int>() != 1) {
      throw Error(ErrorCode::Malformed, "not a version 1 backend snapshot");
    }
    auto backend = std::make_unique<Backend>(auth_from_json(j.at("auth")),
                                             mapping_from_json(j.at("mapping")),
                                             backend_options_from_json(j.at("options")));
    const auto& specs = backend->mapping_.enabled_specs;
    for (const auto& jd : j.at("devices")) {
      auto dev = std::make_unique<Device>();
      dev->model = parse_model(jd.at("model").get<std::string>());
      dev->last_seen = jd.at("last_seen_nonce").get<std::int64_t>();
      const auto& jm = jd.at("models");
      if (jm.size() != specs.size()) throw Error(ErrorCode::Malformed, "model count mismatch");
      for (std::size_t s = 0; s < specs.size(); ++s) {
        FeatureModel m{Predictor::from_json(jm[s].at("predictor")),
                       Verifier::from_json(jm[s].at("verifier"))};
        if (!(m.predictor.spec() == specs[s])) {
          throw Error(ErrorCode::Malformed, "predictor spec does not match mapping");
        }
        dev->models.push_back(std::move(m));
      }
      backend->devices_[jd.at("id").get<std::uint16_t>()] = std::move(dev);
    }
    for (const auto& jp : j.at("negative_pool")) {
      auto& pool = backend->negative_pool_[jp.at("id").get<std::uint16_t>()];
      for (const auto& p : jp.at("pairs")) {
        TrainingPair pair = pair_from_json(p);
        pool[pair.task.feature].push_back(std::move(pair));
      }
    }
    return backend;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Malformed, std::string("backend snapshot: ") + e.what());
  }
}

}  // namespace hwfp
