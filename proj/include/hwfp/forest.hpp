#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "hwfp/parallel.hpp"

namespace hwfp {

// Dense row-major feature matrix.
struct Dataset {
  std::size_t cols = 0;
  std::vector<double> x;
  std::vector<double> y;

  std::size_t rows() const { return y.size(); }
  std::span<const double> row(std::size_t i) const {
    return {x.data() + i * cols, cols};
  }
  void add(std::span<const double> features, double target);
};

struct ForestParams {
  int trees = 50;
  int min_leaf = 4;
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0;
  int left = -1;
  int right = -1;
  double value = 0;
};

// Extremely randomized trees: one uniform threshold per feature per node,
// best variance reduction wins, no bootstrap. A classifier is the same model
// fitted on 0/1 labels.
class ExtraTrees {
 public:
  static ExtraTrees fit(const Dataset& data, const ForestParams& params,
                        Exec exec = Exec::Parallel);

  double predict(std::span<const double> features) const;
  std::size_t tree_count() const { return trees_.size(); }
  bool empty() const { return trees_.empty(); }

  friend bool operator==(const ExtraTrees&, const ExtraTrees&);

  nlohmann::json to_json() const;
  static ExtraTrees from_json(const nlohmann::json& j);

 private:
  std::size_t cols_ = 0;
  std::vector<std::vector<TreeNode>> trees_;
};

struct KnnParams {
  int k = 5;
};

// Inverse-distance weighted k nearest neighbours over features the caller
// has already normalised. Exact hits take the plain mean of the hits.
class KnnRegressor {
 public:
  static KnnRegressor fit(Dataset data, const KnnParams& params);

  double predict(std::span<const double> features) const;
  int k() const { return k_; }
  const Dataset& data() const { return data_; }

  nlohmann::json to_json() const;
  static KnnRegressor from_json(const nlohmann::json& j);

 private:
  Dataset data_;
  int k_ = 5;
};

}  // namespace hwfp
