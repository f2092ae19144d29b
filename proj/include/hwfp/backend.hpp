#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hwfp/client.hpp"
#include "hwfp/predictor.hpp"

namespace hwfp {

enum class Decision : std::uint8_t { Accept = 0, Reject = 1 };
enum class Reason : std::uint8_t {
  Ok = 0,
  BelowThreshold,
  ReplayDetected,
  UnknownDevice,
  MalformedToken,
};

std::string_view decision_name(Decision d);
std::string_view reason_name(Reason r);

struct AuthResult {
  Decision decision = Decision::Reject;
  std::uint32_t matched = 0;
  Reason reason = Reason::MalformedToken;

  bool accepted() const { return decision == Decision::Accept; }
  friend bool operator==(const AuthResult&, const AuthResult&) = default;
};

struct BackendOptions {
  PredictorKind analog_predictor = PredictorKind::RandomizedTreeEnsemble;
  VerifierKind analog_verifier = VerifierKind::RelativeErrorThreshold;
  PredictorOptions predictor{};
  VerifierOptions verifier{};
  double holdout = 0.2;
  std::size_t negative_devices = 10;
  /// Pairs per (device, feature) retained as negatives for later enrollments.
  std::size_t negative_pool = 200;
  std::uint64_t seed = 0;
};

struct FeatureModel {
  Predictor predictor;
  Verifier verifier;
};

/// Ordinary least squares y = slope * x + intercept.
std::pair<double, double> fit_linear_least_squares(
    std::span<const std::pair<double, double>> points);

class Backend {
 public:
  /// Only the Full mapping variant is accepted here.
  Backend(AuthConfig auth, MappingConfig mapping, BackendOptions options = {});

  Backend(const Backend&) = delete;
  Backend& operator=(const Backend&) = delete;

  const AuthConfig& auth() const { return auth_; }
  const MappingConfig& mapping() const { return mapping_; }
  const BackendOptions& options() const { return options_; }

  // Enrollment: begin, add pairs any number of times, commit. Commit trains
  // and seals; a sealed device never accepts pairs again.
  void begin_enrollment(std::uint16_t device_id, Model model);
  void add_pairs(std::uint16_t device_id, std::span<const TrainingPair> pairs);
  void commit_enrollment(std::uint16_t device_id);

  bool is_enrolled(std::uint16_t device_id) const;
  bool is_pending(std::uint16_t device_id) const;
  std::vector<std::uint16_t> devices() const;

  /// Replay guard, then score; advances the nonce record only on Accept.
  AuthResult authenticate(std::uint16_t device_id, const Request& request,
                          const Token& token);

  /// Same decision rule without consulting or touching the nonce record.
  /// Used by experiments that evaluate many independent tokens in parallel.
  AuthResult score(std::uint16_t device_id, const Request& request, const Token& token) const;

  /// -1 until the first accepted request.
  std::int64_t last_seen_nonce(std::uint16_t device_id) const;
  const FeatureModel& feature_model(std::uint16_t device_id, Feature feature) const;

  nlohmann::json to_json() const;
  static std::unique_ptr<Backend> from_json(const nlohmann::json& j);

 private:
  struct Pending {
    Model model;
    std::map<Feature, std::vector<TrainingPair>> pairs;
  };
  struct Device {
    Model model = Model::A;
    std::vector<FeatureModel> models;  // parallel to mapping_.enabled_specs
    std::int64_t last_seen = -1;
    mutable std::mutex mu;
  };

  const Device* find(std::uint16_t device_id) const;
  AuthResult score_device(const Device& device, const Request& request,
                          const Token& token) const;

  AuthConfig auth_;
  MappingConfig mapping_;
  BackendOptions options_;

  mutable std::shared_mutex mu_;
  std::map<std::uint16_t, Pending> pending_;
  std::map<std::uint16_t, std::unique_ptr<Device>> devices_;
  std::map<std::uint16_t, std::map<Feature, std::vector<TrainingPair>>> negative_pool_;
};

}  // namespace hwfp
