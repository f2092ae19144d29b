#include "hwfp/predictor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include "hwfp/error.hpp"

namespace hwfp {

using nlohmann::json;

namespace {

bool is_circular(Feature f) { return f == Feature::RtcPha; }

double median(std::vector<double> v) {
  if (v.empty()) return 0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = (m + *std::max_element(v.begin(), mid)) / 2;
  return m;
}

void check_pair(const TrainingPair& p, const TaskSpec& spec) {
  if (p.task.feature != spec.feature || p.task.args.size() != spec.arg_radices.size()) {
    throw Error(ErrorCode::InvalidArgument, "training pair does not match task spec");
  }
  for (std::size_t k = 0; k < p.task.args.size(); ++k) {
    if (p.task.args[k] >= spec.arg_radices[k]) {
      throw Error(ErrorCode::DomainError, "training argument out of range");
    }
  }
  const bool want_bits = spec.feature == Feature::Sram;
  if (p.fingerprint.is_analog() == want_bits) {
    throw Error(ErrorCode::TagMismatch, "fingerprint tag does not match feature");
  }
}

double scaled_target(const TrainingPair& p) {
  return p.fingerprint.analog() / task_scale(p.task);
}

}  // namespace

std::string_view predictor_kind_name(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::NearestNeighbor: return "knn";
    case PredictorKind::RandomizedTreeEnsemble: return "extratrees";
    case PredictorKind::ExactTable: return "table";
  }
  return "?";
}

PredictorKind parse_predictor_kind(std::string_view name) {
  for (auto k : {PredictorKind::NearestNeighbor, PredictorKind::RandomizedTreeEnsemble,
                 PredictorKind::ExactTable}) {
    if (predictor_kind_name(k) == name) return k;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown predictor '" + std::string(name) + "'");
}

std::string_view verifier_kind_name(VerifierKind kind) {
  switch (kind) {
    case VerifierKind::RelativeErrorThreshold: return "relative";
    case VerifierKind::HammingThreshold: return "hamming";
    case VerifierKind::LearnedClassifier: return "classifier";
  }
  return "?";
}

VerifierKind parse_verifier_kind(std::string_view name) {
  for (auto k : {VerifierKind::RelativeErrorThreshold, VerifierKind::HammingThreshold,
                 VerifierKind::LearnedClassifier}) {
    if (verifier_kind_name(k) == name) return k;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown verifier '" + std::string(name) + "'");
}

std::vector<double> task_features(const HardwareTask& task, const TaskSpec& spec) {
  std::vector<double> out(spec.arg_radices.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto r = spec.arg_radices[k];
    out[k] = r > 1 ? static_cast<double>(task.args.at(k)) / (r - 1) : 0.0;
  }
  return out;
}

std::uint32_t majority_word(std::span<const std::uint32_t> reads) {
  if (reads.empty()) throw Error(ErrorCode::InvalidArgument, "no reads");
  std::uint32_t word = 0;
  for (int b = 0; b < 32; ++b) {
    std::size_t ones = 0;
    for (auto r : reads) ones += (r >> b) & 1u;
    const std::size_t zeros = reads.size() - ones;
    std::uint32_t bit;
    if (ones != zeros) {
      bit = ones > zeros ? 1u : 0u;
    } else {
      bit = (reads[0] >> b) & 1u;
    }
    word |= bit << b;
  }
  return word;
}

Predictor train_predictor(std::span<const TrainingPair> pairs, const TaskSpec& spec,
                          PredictorKind kind, const PredictorOptions& options) {
  if (pairs.empty()) throw Error(ErrorCode::InvalidArgument, "no training pairs");
  spec.validate();
  const bool sram = spec.feature == Feature::Sram;
  if (sram != (kind == PredictorKind::ExactTable)) {
    throw Error(ErrorCode::InvalidArgument,
                "ExactTable is required for Sram and only valid for Sram");
  }
  for (const auto& p : pairs) check_pair(p, spec);

  Predictor out;
  out.kind_ = kind;
  out.spec_ = spec;

  if (kind == PredictorKind::ExactTable) {
    const std::uint64_t space = spec.size();
    std::vector<std::vector<std::uint32_t>> reads(space);
    for (const auto& p : pairs) reads[task_ordinal(p.task, spec)].push_back(p.fingerprint.bits());
    out.table_.resize(space);
    for (std::uint64_t a = 0; a < space; ++a) {
      if (reads[a].empty()) {
        throw Error(ErrorCode::IncompleteCoverage,
                    "no enrollment read for address " + std::to_string(a));
      }
      out.table_[a] = majority_word(reads[a]);
    }
    return out;
  }

  out.log_target_ = std::all_of(pairs.begin(), pairs.end(),
                                [](const TrainingPair& p) { return scaled_target(p) > 0; });
  Dataset data;
  for (const auto& p : pairs) {
    const double y = scaled_target(p);
    data.add(task_features(p.task, spec), out.log_target_ ? std::log(y) : y);
  }
  if (kind == PredictorKind::NearestNeighbor) {
    out.knn_ = KnnRegressor::fit(std::move(data), {options.k});
  } else {
    out.forest_ = ExtraTrees::fit(data, {options.trees, options.min_leaf, options.seed},
                                  options.exec);
  }
  return out;
}

FingerprintValue Predictor::predict(const HardwareTask& task) const {
  if (task.feature != spec_.feature || task.args.size() != spec_.arg_radices.size()) {
    throw Error(ErrorCode::InvalidArgument, "task does not match predictor spec");
  }
  for (std::size_t k = 0; k < task.args.size(); ++k) {
    if (task.args[k] >= spec_.arg_radices[k]) {
      if (kind_ == PredictorKind::ExactTable) {
        throw Error(ErrorCode::UnseenAddress, "address outside enrolled table");
      }
      throw Error(ErrorCode::DomainError, "argument out of range");
    }
  }
  if (kind_ == PredictorKind::ExactTable) {
    const auto a = task_ordinal(task, spec_);
    if (a >= table_.size()) throw Error(ErrorCode::UnseenAddress, "address not enrolled");
    return FingerprintValue::bits32(table_[a]);
  }
  const auto x = task_features(task, spec_);
  double y = knn_ ? knn_->predict(x) : forest_->predict(x);
  if (log_target_) y = std::exp(y);
  return FingerprintValue::analog(y * task_scale(task));
}

json Predictor::to_json() const {
  json j = {{"kind", predictor_kind_name(kind_)},
            {"feature", feature_name(spec_.feature)},
            {"radices", spec_.arg_radices}};
  if (kind_ == PredictorKind::ExactTable) j["table"] = table_;
  if (kind_ != PredictorKind::ExactTable) j["log_target"] = log_target_;
  if (knn_) j["knn"] = knn_->to_json();
  if (forest_) j["forest"] = forest_->to_json();
  return j;
}

Predictor Predictor::from_json(const json& j) {
  Predictor p;
  p.kind_ = parse_predictor_kind(j.at("kind").get<std::string>());
  p.spec_.feature = parse_feature(j.at("feature").get<std::string>());
  p.spec_.arg_radices = j.at("radices").get<std::vector<std::uint32_t>>();
  p.spec_.validate();
  p.log_target_ = j.value("log_target", false);
  switch (p.kind_) {
    case PredictorKind::ExactTable:
      p.table_ = j.at("table").get<std::vector<std::uint32_t>>();
      if (p.table_.size() != p.spec_.size()) {
        throw Error(ErrorCode::Malformed, "table size does not match spec");
      }
      break;
    case PredictorKind::NearestNeighbor:
      p.knn_ = KnnRegressor::from_json(j.at("knn"));
      if (p.knn_->data().cols != p.spec_.arg_radices.size()) {
        throw Error(ErrorCode::Malformed, "neighbour width does not match spec");
      }
      break;
    case PredictorKind::RandomizedTreeEnsemble:
      p.forest_ = ExtraTrees::from_json(j.at("forest"));
      break;
  }
  return p;
}

double relative_error(double predicted, double observed, double floor, bool circular) {
  double diff = std::abs(observed - predicted);
  if (circular) {
    diff = std::fmod(diff, 1.0);
    diff = std::min(diff, 1.0 - diff);
  }
  return diff / std::max(std::abs(predicted), floor);
}

Verifier Verifier::relative(double tau, double floor, bool circular) {
  if (!(tau > 0)) throw Error(ErrorCode::RangeError, "tau must be positive");
  if (!(floor > 0)) throw Error(ErrorCode::RangeError, "floor must be positive");
  Verifier v;
  v.kind_ = VerifierKind::RelativeErrorThreshold;
  v.tau_ = tau;
  v.floor_ = floor;
  v.circular_ = circular;
  return v;
}

Verifier Verifier::hamming(std::uint32_t t) {
  if (t > 32) throw Error(ErrorCode::RangeError, "Hamming tolerance above 32 bits");
  Verifier v;
  v.kind_ = VerifierKind::HammingThreshold;
  v.bits_ = t;
  return v;
}

namespace {

std::array<double, 4> classifier_row(double pred, double obs, double floor, bool circular) {
  const double rel = relative_error(pred, obs, floor, circular);
  const double err = rel * std::max(std::abs(pred), floor);
  return {pred, obs, err, rel};
}

}  // namespace

bool Verifier::verify(const FingerprintValue& predicted,
                      const FingerprintValue& observed) const {
  const bool want_bits = kind_ == VerifierKind::HammingThreshold;
  if (predicted.is_analog() == want_bits || observed.is_analog() == want_bits) {
    throw Error(ErrorCode::TagMismatch, "fingerprint tag does not match verifier");
  }
  switch (kind_) {
    case VerifierKind::HammingThreshold:
      return static_cast<std::uint32_t>(std::popcount(predicted.bits() ^ observed.bits())) <=
             bits_;
    case VerifierKind::RelativeErrorThreshold:
      return relative_error(predicted.analog(), observed.analog(), floor_, circular_) <= tau_;
    case VerifierKind::LearnedClassifier: {
      const auto row = classifier_row(predicted.analog(), observed.analog(), floor_, circular_);
      return classifier_->predict(row) >= 0.5;
    }
  }
  return false;
}

Verifier calibrate_verifier(const Predictor& predictor,
                            std::span<const TrainingPair> positives,
                            std::span<const TrainingPair> negatives, VerifierKind kind,
                            const VerifierOptions& options) {
  if (positives.empty()) throw Error(ErrorCode::InvalidArgument, "no positive pairs");
  if (negatives.empty()) throw Error(ErrorCode::NoNegatives, "no negative pairs");
  const bool sram = predictor.spec().feature == Feature::Sram;
  if (sram != (kind == VerifierKind::HammingThreshold)) {
    throw Error(ErrorCode::InvalidArgument,
                "HammingThreshold is required for Sram and only valid for Sram");
  }

  std::vector<FingerprintValue> pos_pred, neg_pred;
  for (const auto& p : positives) pos_pred.push_back(predictor.predict(p.task));
  for (const auto& p : negatives) neg_pred.push_back(predictor.predict(p.task));

  Verifier v;
  v.kind_ = kind;
  v.circular_ = is_circular(predictor.spec().feature);

  if (kind == VerifierKind::HammingThreshold) {
    std::vector<std::uint32_t> dist;
    for (std::size_t i = 0; i < positives.size(); ++i) {
      dist.push_back(static_cast<std::uint32_t>(
          std::popcount(pos_pred[i].bits() ^ positives[i].fingerprint.bits())));
    }
    v.bits_ = options.max_bits;
    for (std::uint32_t t = 0; t <= options.max_bits; ++t) {
      const auto ok = std::count_if(dist.begin(), dist.end(), [&](auto d) { return d <= t; });
      if (static_cast<double>(ok) >= options.target_tpr * static_cast<double>(dist.size())) {
        v.bits_ = t;
        break;
      }
    }
  } else {
    if (options.floor > 0) {
      v.floor_ = options.floor;
    } else {
      // Noise scale where it matters: among the smallest predictions.
      std::vector<std::size_t> order(positives.size());
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](auto a, auto b) {
        return std::abs(pos_pred[a].analog()) < std::abs(pos_pred[b].analog());
      });
      order.resize(std::min(order.size(), std::max<std::size_t>(10, order.size() / 10)));
      std::vector<double> resid;
      for (auto i : order) {
        double r = positives[i].fingerprint.analog() - pos_pred[i].analog();
        if (v.circular_) r -= std::round(r);
        resid.push_back(r);
      }
      const double m = median(resid);
      for (auto& r : resid) r = std::abs(r - m);
      v.floor_ = std::max(10.0 * 1.4826 * median(resid), 1e-12);
    }
    if (kind == VerifierKind::RelativeErrorThreshold) {
      std::vector<double> errs;
      for (std::size_t i = 0; i < positives.size(); ++i) {
        errs.push_back(relative_error(pos_pred[i].analog(), positives[i].fingerprint.analog(),
                                      v.floor_, v.circular_));
      }
      std::sort(errs.begin(), errs.end());
      auto need = static_cast<std::size_t>(
          std::ceil(options.target_tpr * static_cast<double>(errs.size()) - 1e-9));
      need = std::clamp<std::size_t>(need, 1, errs.size());
      v.tau_ = std::max(errs[need - 1], 1e-12);
    } else {
      Dataset data;
      for (std::size_t i = 0; i < positives.size(); ++i) {
        data.add(classifier_row(pos_pred[i].analog(), positives[i].fingerprint.analog(),
                                v.floor_, v.circular_),
                 1.0);
      }
      for (std::size_t i = 0; i < negatives.size(); ++i) {
        data.add(classifier_row(neg_pred[i].analog(), negatives[i].fingerprint.analog(),
                                v.floor_, v.circular_),
                 0.0);
      }
      v.classifier_ = ExtraTrees::fit(data, options.classifier, options.exec);
    }
  }

  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    tp += v.verify(pos_pred[i], positives[i].fingerprint) ? 1 : 0;
  }
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    fp += v.verify(neg_pred[i], negatives[i].fingerprint) ? 1 : 0;
  }
  v.calibration_ = {static_cast<double>(tp) / positives.size(),
                    static_cast<double>(fp) / negatives.size(), positives.size(),
                    negatives.size()};
  return v;
}

json Verifier::to_json() const {
  json j = {{"kind", verifier_kind_name(kind_)},
            {"tau", tau_},
            {"floor", floor_},
            {"bits", bits_},
            {"circular", circular_},
            {"calibration",
             {{"tpr", calibration_.tpr},
              {"fpr", calibration_.fpr},
              {"positives", calibration_.positives},
              {"negatives", calibration_.negatives}}}};
  if (classifier_) j["classifier"] = classifier_->to_json();
  return j;
}

Verifier Verifier::from_json(const json& j) {
  Verifier v;
  v.kind_ = parse_verifier_kind(j.at("kind").get<std::string>());
  v.tau_ = j.at("tau").get<double>();
  v.floor_ = j.at("floor").get<double>();
  v.bits_ = j.at("bits").get<std::uint32_t>();
  v.circular_ = j.at("circular").get<bool>();
  const auto& c = j.at("calibration");
  v.calibration_ = {c.at("tpr").get<double>(), c.at("fpr").get<double>(),
                    c.at("positives").get<std::size_t>(), c.at("negatives").get<std::size_t>()};
  if (v.kind_ == VerifierKind::LearnedClassifier) {
    v.classifier_ = ExtraTrees::from_json(j.at("classifier"));
  }
  if (v.kind_ == VerifierKind::RelativeErrorThreshold && !(v.tau_ > 0 && v.floor_ > 0)) {
    throw Error(ErrorCode::Malformed, "verifier thresholds must be positive");
  }
  if (v.bits_ > 32) throw Error(ErrorCode::Malformed, "Hamming tolerance above 32 bits");
  return v;
}

}  // namespace hwfp
