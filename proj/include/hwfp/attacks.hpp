#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hwfp/backend.hpp"
#include "hwfp/client.hpp"
#include "hwfp/parallel.hpp"
#include "hwfp/predictor.hpp"

namespace hwfp {

/// "OP000" .. "OP<n-1>": the operation names an attacker may swap in.
std::vector<std::string> operation_vocabulary(std::size_t n = 200);

/// Random operation from the vocabulary with `payloads` random 4-byte payloads.
Request random_request(Rng& rng, std::uint32_t nonce, std::size_t payloads = 2,
                       std::size_t vocabulary = 200);

// ---- tampering ----------------------------------------------------------

/// 1 - ((d^2 - 1) / d^2)^n, evaluated through log1p/expm1.
double closed_form_tamper_prob(std::uint64_t d, std::uint64_t n);

struct TamperOutcome {
  bool succeeded = false;
  std::uint64_t attempts_used = 0;
  MappingVariant variant = MappingVariant::Full;
};

/// Each attempt replaces the operation (by another vocabulary entry) and/or
/// payloads (by fresh random bytes of the same length), at least one field,
/// never repeating a candidate. Success means the mapped task list is equal.
TamperOutcome run_tamper_attack(const Request& original, const MappingConfig& mapping,
                                std::uint64_t budget, Rng& rng,
                                std::size_t vocabulary = 200);

struct RateEstimate {
  std::size_t trials = 0;
  std::size_t successes = 0;
  double rate() const { return trials ? static_cast<double>(successes) / trials : 0.0; }
  double std_error() const;
};

/// Independent tamper searches against random requests with a 16-bit nonce.
RateEstimate tamper_success(const MappingConfig& mapping, std::uint64_t budget,
                            std::size_t trials, std::size_t payloads, std::uint64_t seed,
                            Exec exec = Exec::Parallel);

// ---- replay ---------------------------------------------------------------

struct ReplayReport {
  std::size_t fresh = 0;
  std::size_t fresh_accepted = 0;
  std::size_t false_replay_flags = 0;
  std::size_t replays = 0;
  std::size_t replays_detected = 0;
};

/// Alternates fresh requests from `client` with resubmissions of every
/// token captured so far that the backend once accepted.
ReplayReport run_replay_attack(Backend& backend, Client& client, std::size_t rounds,
                               Rng& rng);

// ---- hardware mimic -------------------------------------------------------

/// An honest client on the attacker's own silicon claims to be the victim.
/// Fresh nonces; scored without the replay guard. UnknownVictim if the
/// victim is not enrolled.
RateEstimate run_hw_mimic(const DeviceProfile& attacker, std::uint16_t victim_id,
                          const Backend& backend, std::size_t trials, std::uint64_t seed,
                          Exec exec = Exec::Parallel);

// ---- software mimic -------------------------------------------------------

struct AttackStrategy {
  bool filter_training = false;
  bool correct_output = false;

  std::string name() const;
};

std::array<AttackStrategy, 4> all_strategies();

struct Eavesdrop {
  std::vector<TrainingPair> pairs;
  /// Hidden ground truth, for scoring only.
  std::vector<bool> poisoned;
};

/// Traffic of `tokens` legitimate requests generated under `auth`.
Eavesdrop eavesdrop_traffic(const DeviceProfile& victim, const AuthConfig& auth,
                            const MappingConfig& mapping, std::size_t tokens, Rng& rng);

class SwMimicModel {
 public:
  /// Forged value for one task. Unseen SRAM addresses get a random word.
  FingerprintValue forge(const HardwareTask& task, Rng& rng) const;
  const AttackStrategy& strategy() const { return strategy_; }
  std::size_t training_pairs() const { return training_pairs_; }

 private:
  friend SwMimicModel train_sw_mimic(std::span<const TrainingPair>, AttackStrategy,
                                     const AuthConfig&, const MappingConfig&, Rng&,
                                     const PredictorOptions&);
  AttackStrategy strategy_;
  AuthConfig auth_;
  std::map<Feature, Predictor> regressors_;
  std::map<Feature, TaskSpec> specs_;
  std::map<std::uint64_t, std::uint32_t> sram_seen_;
  std::size_t training_pairs_ = 0;
};

SwMimicModel train_sw_mimic(std::span<const TrainingPair> eavesdropped, AttackStrategy strategy,
                            const AuthConfig& auth, const MappingConfig& mapping, Rng& rng,
                            const PredictorOptions& options = {});

RateEstimate run_sw_mimic(const SwMimicModel& model, const Backend& backend,
                          std::uint16_t victim_id, std::size_t trials, std::uint64_t seed,
                          Exec exec = Exec::Parallel);

// ---- poisoned-pair identification ----------------------------------------

enum class IdentifyMethod { Supervised, ExtraDevice };

struct IdentifyContext {
  const MappingConfig* mapping = nullptr;
  /// Relative error above which a pair is called poisoned.
  double threshold = 0.08;
  /// Supervised: share of pairs used for training (presumed normal).
  double train_ratio = 0.3;
  /// ExtraDevice: a second same-model device standing in for the model.
  const DeviceProfile* oracle = nullptr;
  PredictorOptions predictor{};
};

/// Accuracy of labelling pairs as poisoned or not, over the scored pairs
/// (Supervised scores the pairs it did not train on). Analog pairs only.
double identify_poison(std::span<const TrainingPair> pairs, const std::vector<bool>& poisoned,
                       IdentifyMethod method, const IdentifyContext& context, Rng& rng);

}  // namespace hwfp
