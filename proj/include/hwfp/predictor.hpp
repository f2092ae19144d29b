#pragma once

#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "hwfp/forest.hpp"
#include "hwfp/hwsim.hpp"
#include "hwfp/mapping.hpp"

namespace hwfp {

enum class PredictorKind : std::uint8_t { NearestNeighbor = 0, RandomizedTreeEnsemble, ExactTable };
enum class VerifierKind : std::uint8_t { RelativeErrorThreshold = 0, HammingThreshold, LearnedClassifier };

std::string_view predictor_kind_name(PredictorKind kind);
PredictorKind parse_predictor_kind(std::string_view name);
std::string_view verifier_kind_name(VerifierKind kind);
VerifierKind parse_verifier_kind(std::string_view name);

struct PredictorOptions {
  int k = 5;
  int trees = 50;
  int min_leaf = 4;
  std::uint64_t seed = 0;
  Exec exec = Exec::Parallel;
};

/// Arguments scaled into [0, 1] by their radix.
std::vector<double> task_features(const HardwareTask& task, const TaskSpec& spec);

// Analog regressors learn fingerprint / task_scale(task) so that one model
// covers tasks whose magnitudes differ by orders of magnitude, in log space
// when every training target is positive.
class Predictor {
 public:
  PredictorKind kind() const { return kind_; }
  const TaskSpec& spec() const { return spec_; }

  /// UnseenAddress if an ExactTable has no entry for the task.
  FingerprintValue predict(const HardwareTask& task) const;

  nlohmann::json to_json() const;
  static Predictor from_json(const nlohmann::json& j);

 private:
  friend Predictor train_predictor(std::span<const TrainingPair>, const TaskSpec&,
                                   PredictorKind, const PredictorOptions&);

  PredictorKind kind_ = PredictorKind::RandomizedTreeEnsemble;
  TaskSpec spec_;
  std::optional<ExtraTrees> forest_;
  std::optional<KnnRegressor> knn_;
  std::vector<std::uint32_t> table_;
  bool log_target_ = false;
};

/// ExactTable is mandatory for Sram and only valid there; Sram pairs must
/// cover every address (IncompleteCoverage otherwise).
Predictor train_predictor(std::span<const TrainingPair> pairs, const TaskSpec& spec,
                          PredictorKind kind, const PredictorOptions& options = {});

/// Bitwise majority over repeated reads; a tied bit keeps the first read.
std::uint32_t majority_word(std::span<const std::uint32_t> reads);

struct Calibration {
  double tpr = 0;
  double fpr = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

struct VerifierOptions {
  double target_tpr = 0.97;
  std::uint32_t max_bits = 8;
  /// <= 0 derives the floor from positive residuals.
  double floor = 0;
  ForestParams classifier{};
  Exec exec = Exec::Parallel;
};

/// |obs - pred| / max(|pred|, floor); circular features use the shorter way
/// round the unit interval for the numerator.
double relative_error(double predicted, double observed, double floor,
                      bool circular = false);

class Verifier {
 public:
  static Verifier relative(double tau, double floor, bool circular = false);
  static Verifier hamming(std::uint32_t t);

  VerifierKind kind() const { return kind_; }
  double tau() const { return tau_; }
  double floor() const { return floor_; }
  std::uint32_t bits() const { return bits_; }
  bool circular() const { return circular_; }
  const Calibration& calibration() const { return calibration_; }

  /// TagMismatch unless both values carry the tag this verifier expects.
  bool verify(const FingerprintValue& predicted, const FingerprintValue& observed) const;

  nlohmann::json to_json() const;
  static Verifier from_json(const nlohmann::json& j);

 private:
  friend Verifier calibrate_verifier(const Predictor&, std::span<const TrainingPair>,
                                     std::span<const TrainingPair>, VerifierKind,
                                     const VerifierOptions&);

  VerifierKind kind_ = VerifierKind::RelativeErrorThreshold;
  double tau_ = 0;
  double floor_ = 0;
  std::uint32_t bits_ = 0;
  bool circular_ = false;
  std::optional<ExtraTrees> classifier_;
  Calibration calibration_;
};

Verifier calibrate_verifier(const Predictor& predictor,
                            std::span<const TrainingPair> positives,
                            std::span<const TrainingPair> negatives, VerifierKind kind,
                            const VerifierOptions& options = {});

inline bool verify_one(const Verifier& v, const FingerprintValue& predicted,
                       const FingerprintValue& observed) {
  return v.verify(predicted, observed);
}

}  // namespace hwfp
