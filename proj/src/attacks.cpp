#include "hwfp/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_set>

#include "hwfp/error.hpp"

namespace hwfp {

namespace {

constexpr std::uint64_t kTamperStream = 0x74616d70;
constexpr std::uint64_t kHwMimicStream = 0x68776d;
constexpr std::uint64_t kSwMimicStream = 0x73776d;

Bytes random_bytes(Rng& rng, std::size_t n) {
  Bytes out(n);
  for (auto& b : out) b = static_cast<std::uint8_t>(rng());
  return out;
}

std::string candidate_key(const Request& r) {
  std::string key = r.operation;
  key.push_back('\0');
  for (const auto& p : r.payloads) {
    key.push_back(static_cast<char>(p.size() >> 8));
    key.push_back(static_cast<char>(p.size()));
    key.append(p.begin(), p.end());
  }
  return key;
}

}  // namespace

std::vector<std::string> operation_vocabulary(std::size_t n) {
  std::vector<std::string> ops;
  ops.reserve(n);
  char buf[32];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "OP%03zu", i);
    ops.emplace_back(buf);
  }
  return ops;
}

Request random_request(Rng& rng, std::uint32_t nonce, std::size_t payloads,
                       std::size_t vocabulary) {
  if (payloads < 1 || vocabulary < 1) throw Error(ErrorCode::InvalidArgument, "empty request shape");
  Request r;
  char buf[32];
  std::snprintf(buf, sizeof buf, "OP%03zu",
                std::uniform_int_distribution<std::size_t>(0, vocabulary - 1)(rng));
  r.operation = buf;
  r.nonce = nonce;
  for (std::size_t i = 0; i < payloads; ++i) r.payloads.push_back(random_bytes(rng, 4));
  return r;
}

double closed_form_tamper_prob(std::uint64_t d, std::uint64_t n) {
  if (d < 1) throw Error(ErrorCode::RangeError, "output space must be non-empty");
  if (n == 0) return 0.0;
  if (d == 1) return 1.0;
  const double dd = static_cast<double>(d);
  return -std::expm1(static_cast<double>(n) * std::log1p(-1.0 / (dd * dd)));
}

double RateEstimate::std_error() const {
  if (trials == 0) return 0.0;
  const double p = rate();
  return std::sqrt(p * (1 - p) / static_cast<double>(trials));
}

TamperOutcome run_tamper_attack(const Request& original, const MappingConfig& mapping,
                                std::uint64_t budget, Rng& rng, std::size_t vocabulary) {
  if (budget < 1) throw Error(ErrorCode::RangeError, "budget must be at least 1");
  if (vocabulary < 2) throw Error(ErrorCode::InvalidArgument, "vocabulary too small");
  const auto target = map_message(original, mapping);
  const std::size_t fields = original.payloads.size() + 1;

  std::unordered_set<std::string> tried{candidate_key(original)};
  std::uniform_int_distribution<std::size_t> pick_op(0, vocabulary - 1);
  char buf[32];

  TamperOutcome out;
  out.variant = mapping.variant;
  Request cand;
  for (std::uint64_t attempt = 1; attempt <= budget; ++attempt) {
    // Redraw duplicates without charging the budget; give up after a while
    // so a tiny candidate space cannot spin forever.
    for (int redraw = 0; redraw < 1000; ++redraw) {
      cand = original;
      std::uint64_t mask = 0;
      while (mask == 0) {
        for (std::size_t f = 0; f < fields; ++f) mask |= (rng() & 1u) << f;
      }
      if (mask & 1u) {
        do {
          std::snprintf(buf, sizeof buf, "OP%03zu", pick_op(rng));
        } while (original.operation == buf);
        cand.operation = buf;
      }
      for (std::size_t p = 0; p < original.payloads.size(); ++p) {
        if (!(mask >> (p + 1) & 1u) || original.payloads[p].empty()) continue;
        do {
          cand.payloads[p] = random_bytes(rng, original.payloads[p].size());
        } while (cand.payloads[p] == original.payloads[p]);
      }
      if (tried.insert(candidate_key(cand)).second) break;
    }
    out.attempts_used = attempt;
    if (map_message(cand, mapping) == target) {
      out.succeeded = true;
      return out;
    }
  }
  return out;
}

RateEstimate tamper_success(const MappingConfig& mapping, std::uint64_t budget,
                            std::size_t trials, std::size_t payloads, std::uint64_t seed,
                            Exec exec) {
  mapping.validate();
  RateEstimate est;
  est.trials = trials;
  est.successes = count_trials(trials, exec, [&](std::size_t i) {
    Rng rng = make_rng(seed, kTamperStream, i);
    const auto nonce = static_cast<std::uint32_t>(rng() & 0xFFFFu);
    const Request original = random_request(rng, nonce, payloads);
    return run_tamper_attack(original, mapping, budget, rng).succeeded;
  });
  return est;
}

ReplayReport run_replay_attack(Backend& backend, Client& client, std::size_t rounds, Rng& rng) {
  const std::uint16_t id = client.profile().device_id;
  ReplayReport rep;
  std::vector<std::pair<Request, Token>> captured;
  for (std::size_t round = 0; round < rounds; ++round) {
    Request fresh = random_request(rng, 0);
    fresh = client.next_request(fresh.operation, fresh.payloads);
    const IssuedToken issued = client.generate_token(fresh, rng);
    const AuthResult r = backend.authenticate(id, fresh, issued.token);
    ++rep.fresh;
    if (r.reason == Reason::ReplayDetected) ++rep.false_replay_flags;
    if (r.accepted()) {
      ++rep.fresh_accepted;
      captured.emplace_back(fresh, issued.token);
    }
    for (const auto& [req, tok] : captured) {
      ++rep.replays;
      if (backend.authenticate(id, req, tok).reason == Reason::ReplayDetected) {
        ++rep.replays_detected;
      }
    }
  }
  return rep;
}

RateEstimate run_hw_mimic(const DeviceProfile& attacker, std::uint16_t victim_id,
                          const Backend& backend, std::size_t trials, std::uint64_t seed,
                          Exec exec) {
  if (!backend.is_enrolled(victim_id)) {
    throw Error(ErrorCode::UnknownVictim, "victim " + std::to_string(victim_id) + " not enrolled");
  }
  const AuthConfig& auth = backend.auth();
  RateEstimate est;
  est.trials = trials;
  est.successes = count_trials(trials, exec, [&](std::size_t i) {
    Rng rng = make_rng(seed, kHwMimicStream, i);
    const Request req = random_request(rng, static_cast<std::uint32_t>(i + 1));
    const PoisonPlan plan{choose_poison_mask(auth.total_num, auth.used_num, rng), auth.noise_lo,
                          auth.noise_hi, auth.c};
    const IssuedToken issued = build_token(attacker, req, backend.mapping(), plan, rng);
    return backend.score(victim_id, req, issued.token).accepted();
  });
  return est;
}

std::string AttackStrategy::name() const {
  return std::string(filter_training ? "filter" : "all") + "+" +
         (correct_output ? "correct" : "raw");
}

std::array<AttackStrategy, 4> all_strategies() {
  return {AttackStrategy{false, false}, AttackStrategy{true, false}, AttackStrategy{false, true},
          AttackStrategy{true, true}};
}

Eavesdrop eavesdrop_traffic(const DeviceProfile& victim, const AuthConfig& auth,
                            const MappingConfig& mapping, std::size_t tokens, Rng& rng) {
  auth.validate();
  Eavesdrop out;
  for (std::size_t t = 0; t < tokens; ++t) {
    const Request req = random_request(rng, static_cast<std::uint32_t>(t + 1));
    const PoisonPlan plan{choose_poison_mask(auth.total_num, auth.used_num, rng), auth.noise_lo,
                          auth.noise_hi, auth.c};
    const IssuedToken issued = build_token(victim, req, mapping, plan, rng);
    for (std::size_t i = 0; i < issued.tasks.size(); ++i) {
      out.pairs.push_back({issued.tasks[i], issued.token.entries[i].fingerprint});
      out.poisoned.push_back(!issued.raw_mask[i]);
    }
  }
  return out;
}

SwMimicModel train_sw_mimic(std::span<const TrainingPair> eavesdropped, AttackStrategy strategy,
                            const AuthConfig& auth, const MappingConfig& mapping, Rng& rng,
                            const PredictorOptions& options) {
  auth.validate();
  SwMimicModel model;
  model.strategy_ = strategy;
  model.auth_ = auth;

  std::vector<std::size_t> keep(eavesdropped.size());
  std::iota(keep.begin(), keep.end(), 0);
  if (strategy.filter_training) {
    std::shuffle(keep.begin(), keep.end(), rng);
    const auto n = static_cast<std::size_t>(std::llround(
        static_cast<double>(eavesdropped.size()) * auth.used_num / auth.total_num));
    keep.resize(n);
    std::sort(keep.begin(), keep.end());
  }
  model.training_pairs_ = keep.size();

  std::map<Feature, std::vector<TrainingPair>> by_feature;
  for (auto i : keep) by_feature[eavesdropped[i].task.feature].push_back(eavesdropped[i]);

  for (const auto& spec : mapping.enabled_specs) {
    model.specs_[spec.feature] = spec;
    const auto it = by_feature.find(spec.feature);
    if (it == by_feature.end()) continue;
    if (spec.feature == Feature::Sram) {
      std::map<std::uint64_t, std::vector<std::uint32_t>> reads;
      for (const auto& p : it->second) reads[task_ordinal(p.task, spec)].push_back(p.fingerprint.bits());
      for (const auto& [addr, words] : reads) model.sram_seen_[addr] = majority_word(words);
      continue;
    }
    PredictorOptions opt = options;
    opt.seed = rng();
    model.regressors_.emplace(
        spec.feature,
        train_predictor(it->second, spec, PredictorKind::RandomizedTreeEnsemble, opt));
  }
  return model;
}

FingerprintValue SwMimicModel::forge(const HardwareTask& task, Rng& rng) const {
  const bool invert =
      strategy_.correct_output &&
      uniform01(rng) < 1.0 - static_cast<double>(auth_.used_num) / auth_.total_num;
  const double mean_noise = 0.5 * (auth_.noise_lo + auth_.noise_hi);
  const auto undo = [&](double v) { return (v - auth_.c) / (1.0 + mean_noise); };

  if (task.feature == Feature::Sram) {
    const auto spec = specs_.find(task.feature);
    if (spec != specs_.end()) {
      const auto hit = sram_seen_.find(task_ordinal(task, spec->second));
      if (hit != sram_seen_.end()) {
        std::uint32_t w = hit->second;
        if (invert) {
          w = static_cast<std::uint32_t>(static_cast<std::uint64_t>(std::llround(undo(w))) &
                                         0xFFFFFFFFu);
        }
        return FingerprintValue::bits32(w);
      }
    }
    return FingerprintValue::bits32(static_cast<std::uint32_t>(rng()));
  }
  const auto it = regressors_.find(task.feature);
  if (it == regressors_.end()) return FingerprintValue::analog(0.0);
  double v = it->second.predict(task).analog();
  if (invert) v = undo(v);
  return FingerprintValue::analog(v);
}

RateEstimate run_sw_mimic(const SwMimicModel& model, const Backend& backend,
                          std::uint16_t victim_id, std::size_t trials, std::uint64_t seed,
                          Exec exec) {
  if (!backend.is_enrolled(victim_id)) {
    throw Error(ErrorCode::UnknownVictim, "victim " + std::to_string(victim_id) + " not enrolled");
  }
  RateEstimate est;
  est.trials = trials;
  est.successes = count_trials(trials, exec, [&](std::size_t i) {
    Rng rng = make_rng(seed, kSwMimicStream, i);
    const Request req = random_request(rng, static_cast<std::uint32_t>(i + 1));
    Token token;
    token.nonce = req.nonce;
    const auto tasks = map_message(req, backend.mapping());
    for (std::size_t k = 0; k < tasks.size(); ++k) {
      token.entries.push_back({static_cast<std::uint8_t>(k), model.forge(tasks[k], rng)});
    }
    return backend.score(victim_id, req, token).accepted();
  });
  return est;
}

double identify_poison(std::span<const TrainingPair> pairs, const std::vector<bool>& poisoned,
                       IdentifyMethod method, const IdentifyContext& ctx, Rng& rng) {
  if (pairs.size() != poisoned.size()) {
    throw Error(ErrorCode::InvalidArgument, "labels do not match pairs");
  }
  std::vector<std::size_t> analog;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].fingerprint.is_analog()) analog.push_back(i);
  }
  if (analog.empty()) throw Error(ErrorCode::DegenerateSample, "no analog pairs to label");

  std::size_t scored = 0, correct = 0;
  const auto judge = [&](std::size_t i, double reference) {
    const double err = relative_error(reference, pairs[i].fingerprint.analog(), 1e-9,
                                      pairs[i].task.feature == Feature::RtcPha);
    ++scored;
    if ((err > ctx.threshold) == poisoned[i]) ++correct;
  };

  if (method == IdentifyMethod::ExtraDevice) {
    if (!ctx.oracle) throw Error(ErrorCode::InvalidArgument, "extra-device method needs an oracle");
    for (auto i : analog) judge(i, execute_task(*ctx.oracle, pairs[i].task, rng).analog());
  } else {
    if (!ctx.mapping) throw Error(ErrorCode::InvalidArgument, "supervised method needs a mapping");
    if (!(ctx.train_ratio > 0 && ctx.train_ratio < 1)) {
      throw Error(ErrorCode::RangeError, "train ratio must be in (0, 1)");
    }
    std::shuffle(analog.begin(), analog.end(), rng);
    const auto n_train = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(ctx.train_ratio * analog.size())));
    if (n_train >= analog.size()) throw Error(ErrorCode::DegenerateSample, "nothing left to score");
    std::map<Feature, std::vector<TrainingPair>> train;
    for (std::size_t k = 0; k < n_train; ++k) {
      train[pairs[analog[k]].task.feature].push_back(pairs[analog[k]]);
    }
    std::map<Feature, Predictor> models;
    for (const auto& [feature, list] : train) {
      const int idx = ctx.mapping->spec_index(feature);
      if (idx < 0) throw Error(ErrorCode::UnknownFeature, "feature not in mapping");
      PredictorOptions opt = ctx.predictor;
      opt.seed = rng();
      models.emplace(feature,
                     train_predictor(list, ctx.mapping->enabled_specs[static_cast<std::size_t>(idx)],
                                     PredictorKind::RandomizedTreeEnsemble, opt));
    }
    for (std::size_t k = n_train; k < analog.size(); ++k) {
      const auto i = analog[k];
      const auto m = models.find(pairs[i].task.feature);
      if (m == models.end()) continue;
      judge(i, m->second.predict(pairs[i].task).analog());
    }
  }
  if (scored == 0) throw Error(ErrorCode::DegenerateSample, "no pairs scored");
  return static_cast<double>(correct) / static_cast<double>(scored);
}

}  // namespace hwfp
