#include "hwfp/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "hwfp/error.hpp"
#include "hwfp/service.hpp"
#include "hwfp/wire.hpp"

namespace hwfp {

namespace {

constexpr std::uint64_t kEnrollStream = 0x656e726f6c6c;
constexpr std::uint64_t kAuthStream = 0x61757468;
constexpr std::uint64_t kNoiseStream = 0x6e6f697365;
constexpr std::uint64_t kEavesStream = 0x65617665;
constexpr std::size_t kPairsPerFrame = 4000;

void loopback(Backend& backend, FrameKind kind, const Bytes& body) {
  const Bytes reply = handle_frame_bytes(backend, encode_frame(kind, body));
  expect_reply(decode_frame(reply));
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

PoisonPlan plan_for(const AuthConfig& auth, Rng& rng) {
  return {choose_poison_mask(auth.total_num, auth.used_num, rng), auth.noise_lo, auth.noise_hi,
          auth.c};
}

}  // namespace

TprFpr compute_tpr_fpr(std::span<const std::pair<bool, bool>> outcomes) {
  std::size_t legit = 0, legit_ok = 0, bad = 0, bad_ok = 0;
  for (auto [is_legit, accepted] : outcomes) {
    if (is_legit) {
      ++legit;
      legit_ok += accepted;
    } else {
      ++bad;
      bad_ok += accepted;
    }
  }
  if (legit == 0 || bad == 0) {
    throw Error(ErrorCode::DegenerateSample, "need both legitimate and impostor outcomes");
  }
  return {static_cast<double>(legit_ok) / legit, static_cast<double>(bad_ok) / bad};
}

std::vector<TrainingPair> enrollment_pairs(const DeviceProfile& device,
                                           const MappingConfig& mapping,
                                           std::size_t per_feature, Rng& rng) {
  std::vector<TrainingPair> out;
  for (const auto& spec : mapping.enabled_specs) {
    std::size_t n = per_feature;
    if (spec.feature == Feature::Sram) n = std::max<std::size_t>(n, 3 * spec.size());
    auto pairs = collect_pairs(device, spec, n, rng);
    out.insert(out.end(), pairs.begin(), pairs.end());
  }
  return out;
}

void enroll_loopback(Backend& backend, std::span<const DeviceProfile> devices,
                     std::size_t per_feature, std::uint64_t seed) {
  std::vector<std::vector<TrainingPair>> sets(devices.size());
  for_each_index(devices.size(), Exec::Parallel, [&](std::size_t i) {
    Rng rng = make_rng(seed, kEnrollStream, devices[i].device_id);
    sets[i] = enrollment_pairs(devices[i], backend.mapping(), per_feature, rng);
  });
  for (std::size_t i = 0; i < devices.size(); ++i) {
    const auto id = devices[i].device_id;
    loopback(backend, FrameKind::EnrollBegin, encode_enroll_begin({id, devices[i].model}));
    const auto& pairs = sets[i];
    for (std::size_t at = 0; at < pairs.size(); at += kPairsPerFrame) {
      const auto end = std::min(pairs.size(), at + kPairsPerFrame);
      EnrollDataBody body{id, {pairs.begin() + static_cast<std::ptrdiff_t>(at),
                               pairs.begin() + static_cast<std::ptrdiff_t>(end)}};
      loopback(backend, FrameKind::EnrollData, encode_enroll_data(body));
    }
  }
  for (const auto& d : devices) {
    loopback(backend, FrameKind::EnrollCommit, encode_enroll_commit(d.device_id));
  }
}

std::unique_ptr<Testbed> Testbed::build(const TestbedConfig& config) {
  auto bed = std::unique_ptr<Testbed>(new Testbed());
  bed->config_ = config;
  bed->fleet_ = make_fleet(config.model, config.devices, config.seed, config.sim);
  BackendOptions opts = config.backend;
  opts.seed = derive_seed(config.seed, 0x6261636b);
  opts.predictor.exec = config.exec;
  opts.verifier.exec = config.exec;
  bed->backend_ = std::make_unique<Backend>(config.auth, config.mapping, opts);
  enroll_loopback(*bed->backend_, bed->fleet_.devices, config.pairs_per_feature, config.seed);
  return bed;
}

std::vector<AuthTrial> run_auth_trials(const Testbed& bed, const AuthConfig& client_auth,
                                       std::size_t trials, std::uint64_t seed) {
  client_auth.validate();
  const auto& devs = bed.devices();
  if (devs.size() < 2) throw Error(ErrorCode::DegenerateSample, "need two devices for impostors");
  const Backend& backend = bed.backend();
  std::vector<AuthTrial> out(trials);
  for_each_index(trials, bed.config().exec, [&](std::size_t i) {
    Rng rng = make_rng(seed, kAuthStream, i);
    const auto& victim = devs[i % devs.size()];
    const Request req = random_request(rng, static_cast<std::uint32_t>(i + 1));
    const IssuedToken legit =
        build_token(victim, req, backend.mapping(), plan_for(client_auth, rng), rng);
    auto other = std::uniform_int_distribution<std::size_t>(0, devs.size() - 2)(rng);
    if (other >= i % devs.size()) ++other;
    const IssuedToken fake =
        build_token(devs[other], req, backend.mapping(), plan_for(client_auth, rng), rng);
    out[i].legit_matched = backend.score(victim.device_id, req, legit.token).matched;
    out[i].impostor_matched = backend.score(victim.device_id, req, fake.token).matched;
  });
  return out;
}

TprFpr rates_at(std::span<const AuthTrial> trials, std::uint32_t accept_num) {
  std::vector<std::pair<bool, bool>> outcomes;
  outcomes.reserve(2 * trials.size());
  for (const auto& t : trials) {
    outcomes.emplace_back(true, t.legit_matched >= accept_num);
    outcomes.emplace_back(false, t.impostor_matched >= accept_num);
  }
  return compute_tpr_fpr(outcomes);
}

std::vector<NoisePoint> noise_curve(const Testbed& bed, std::span<const double> noises,
                                    std::size_t trials, std::uint64_t seed) {
  const Backend& backend = bed.backend();
  const auto& auth = backend.auth();
  const auto& devs = bed.devices();
  std::vector<NoisePoint> out;
  for (std::size_t n = 0; n < noises.size(); ++n) {
    const double noise = noises[n];
    std::vector<std::uint8_t> poisoned(trials), raw(trials);
    for_each_index(trials, bed.config().exec, [&](std::size_t i) {
      Rng rng = make_rng(seed, kNoiseStream, i);
      const auto& dev = devs[i % devs.size()];
      const Request req = random_request(rng, static_cast<std::uint32_t>(i + 1));
      Rng same = rng;
      const PoisonPlan all_poisoned{std::vector<bool>(auth.total_num, false), noise, noise,
                                    noise > 0 ? auth.c : 0.0};
      const PoisonPlan all_raw{std::vector<bool>(auth.total_num, true), noise, noise, auth.c};
      const auto p = build_token(dev, req, backend.mapping(), all_poisoned, rng);
      const auto r = build_token(dev, req, backend.mapping(), all_raw, same);
      poisoned[i] = backend.score(dev.device_id, req, p.token).accepted();
      raw[i] = backend.score(dev.device_id, req, r.token).accepted();
    });
    const auto count = [](const std::vector<std::uint8_t>& v) {
      return static_cast<double>(std::count(v.begin(), v.end(), 1));
    };
    out.push_back({noise, count(poisoned) / trials, count(raw) / trials});
  }
  return out;
}

double MimicComparison::best_poisoned() const {
  double best = 0;
  for (const auto& r : poisoned) best = std::max(best, r.rate());
  return best;
}

MimicComparison compare_sw_mimic(const Testbed& bed, std::uint16_t victim_index,
                                 std::size_t clean_tokens, std::size_t trials,
                                 std::uint64_t seed) {
  const Backend& backend = bed.backend();
  const DeviceProfile& victim = bed.devices().at(victim_index);
  const AuthConfig& auth = backend.auth();
  AuthConfig clean_auth = auth;
  clean_auth.used_num = auth.total_num;

  const std::size_t poisoned_tokens = clean_tokens * auth.total_num / auth.used_num;
  Rng rng_clean = make_rng(seed, kEavesStream, 0);
  Rng rng_poison = make_rng(seed, kEavesStream, 1);
  const Eavesdrop clean = eavesdrop_traffic(victim, clean_auth, backend.mapping(), clean_tokens, rng_clean);
  const Eavesdrop dirty =
      eavesdrop_traffic(victim, auth, backend.mapping(), poisoned_tokens, rng_poison);

  MimicComparison out;
  PredictorOptions opt;
  opt.exec = bed.config().exec;
  Rng train_rng = make_rng(seed, kEavesStream, 2);
  const SwMimicModel plain =
      train_sw_mimic(clean.pairs, AttackStrategy{}, clean_auth, backend.mapping(), train_rng, opt);
  out.clean = run_sw_mimic(plain, backend, victim.device_id, trials, seed, bed.config().exec);
  const auto strategies = all_strategies();
  for (std::size_t s = 0; s < strategies.size(); ++s) {
    Rng r = make_rng(seed, kEavesStream, 3 + s);
    const SwMimicModel m = train_sw_mimic(dirty.pairs, strategies[s], auth, backend.mapping(), r, opt);
    out.poisoned[s] = run_sw_mimic(m, backend, victim.device_id, trials, seed, bed.config().exec);
  }
  return out;
}

std::string_view axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Features: return "features";
    case SweepAxis::UsedNum: return "usednum";
    case SweepAxis::AcceptNum: return "acceptnum";
    case SweepAxis::Noise: return "noise";
    case SweepAxis::TamperD: return "d";
    case SweepAxis::Strategy: return "strategy";
  }
  return "?";
}

SweepAxis parse_axis(std::string_view name) {
  for (auto a : {SweepAxis::Features, SweepAxis::UsedNum, SweepAxis::AcceptNum, SweepAxis::Noise,
                 SweepAxis::TamperD, SweepAxis::Strategy}) {
    if (axis_name(a) == name) return a;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown sweep axis '" + std::string(name) + "'");
}

std::string csv_header() {
  return "schema_version,experiment,axis,series,axis_value,tpr,fpr,attack_rate,seed,trials\n";
}

std::string run_experiment(const ExperimentSpec& spec) {
  if (spec.trials < 1) throw Error(ErrorCode::RangeError, "trials must be positive");
  std::ostringstream csv;
  csv << csv_header();
  const auto seed = spec.testbed.seed;
  const auto row = [&](const std::string& series, const std::string& value,
                       const std::string& tpr, const std::string& fpr,
                       const std::string& attack) {
    csv << kCsvSchema << ',' << spec.name << ',' << axis_name(spec.axis) << ',' << series << ','
        << value << ',' << tpr << ',' << fpr << ',' << attack << ',' << seed << ','
        << spec.trials << '\n';
  };
  const auto values = [&](std::vector<double> fallback) {
    return spec.values.empty() ? fallback : spec.values;
  };
  const AuthConfig& auth = spec.testbed.auth;

  switch (spec.axis) {
    case SweepAxis::Features: {
      for (auto f : kAllFeatures) {
        TestbedConfig cfg = spec.testbed;
        cfg.mapping.enabled_specs = {default_task_spec(f)};
        const auto bed = Testbed::build(cfg);
        const auto trials = run_auth_trials(*bed, auth, spec.trials, seed);
        const auto r = rates_at(trials, auth.accept_num);
        row(std::string(feature_name(f)), "single", fmt(r.tpr), fmt(r.fpr), "");
      }
      const auto bed = Testbed::build(spec.testbed);
      const auto r = rates_at(run_auth_trials(*bed, auth, spec.trials, seed), auth.accept_num);
      row("ensemble", "ensemble", fmt(r.tpr), fmt(r.fpr), "");
      break;
    }
    case SweepAxis::UsedNum: {
      const auto bed = Testbed::build(spec.testbed);
      std::vector<double> fallback;
      for (std::uint32_t u = 1; u <= auth.total_num; ++u) fallback.push_back(u);
      for (double v : values(fallback)) {
        AuthConfig a = auth;
        a.used_num = static_cast<std::uint32_t>(v);
        a.accept_num = (a.used_num + 1) / 2;
        const auto r = rates_at(run_auth_trials(*bed, a, spec.trials, seed), a.accept_num);
        row("acceptnum=ceil(usednum/2)", std::to_string(a.used_num), fmt(r.tpr), fmt(r.fpr), "");
      }
      break;
    }
    case SweepAxis::AcceptNum: {
      const auto bed = Testbed::build(spec.testbed);
      const auto trials = run_auth_trials(*bed, auth, spec.trials, seed);
      std::vector<double> fallback;
      for (std::uint32_t a = 1; a <= auth.used_num; ++a) fallback.push_back(a);
      for (double v : values(fallback)) {
        const auto r = rates_at(trials, static_cast<std::uint32_t>(v));
        row("usednum=" + std::to_string(auth.used_num), std::to_string(static_cast<int>(v)),
            fmt(r.tpr), fmt(r.fpr), "");
      }
      break;
    }
    case SweepAxis::Noise: {
      const auto bed = Testbed::build(spec.testbed);
      const auto noises = values({0.0, 0.02, 0.04, 0.06, 0.08, 0.1, 0.12, 0.15, 0.2});
      for (const auto& p : noise_curve(*bed, noises, spec.trials, seed)) {
        row("all-poisoned", fmt(p.noise), fmt(p.raw_accept), "", fmt(p.poisoned_accept));
      }
      break;
    }
    case SweepAxis::TamperD: {
      for (double v : values({25, 50, 100, 200})) {
        for (auto variant : {MappingVariant::Full, MappingVariant::H1Only, MappingVariant::H3Only,
                             MappingVariant::H1H2}) {
          MappingConfig m;
          m.total_num = 2;
          m.variant = variant;
          m.enabled_specs = {TaskSpec{Feature::Sram, {static_cast<std::uint32_t>(v)}}};
          const auto est = tamper_success(m, spec.tamper_budget, spec.trials, 2, seed,
                                          spec.testbed.exec);
          row(std::string(variant_name(variant)), std::to_string(static_cast<int>(v)), "", "",
              fmt(est.rate()));
        }
      }
      break;
    }
    case SweepAxis::Strategy: {
      const auto bed = Testbed::build(spec.testbed);
      const auto cmp = compare_sw_mimic(*bed, 0, 300, spec.trials, seed);
      row("clean", AttackStrategy{}.name(), "", "", fmt(cmp.clean.rate()));
      const auto strategies = all_strategies();
      for (std::size_t s = 0; s < strategies.size(); ++s) {
        row("poisoned", strategies[s].name(), "", "", fmt(cmp.poisoned[s].rate()));
      }
      break;
    }
  }
  return csv.str();
}

}  // namespace hwfp
