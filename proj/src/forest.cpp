#include "hwfp/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hwfp/error.hpp"
#include "hwfp/rng.hpp"

namespace hwfp {

using nlohmann::json;

void Dataset::add(std::span<const double> features, double target) {
  if (cols == 0 && y.empty()) cols = features.size();
  if (features.size() != cols) {
    throw Error(ErrorCode::InvalidArgument, "feature width mismatch");
  }
  x.insert(x.end(), features.begin(), features.end());
  y.push_back(target);
}

namespace {

constexpr std::uint64_t kTreeStream = 0x74726565;

struct Span {
  std::size_t begin, end;
  int node;
};

std::vector<TreeNode> grow_tree(const Dataset& data, const ForestParams& params,
                                Rng& rng) {
  const std::size_t n = data.rows();
  const std::size_t min_leaf = static_cast<std::size_t>(std::max(1, params.min_leaf));
  std::vector<std::uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);

  std::vector<TreeNode> nodes;
  nodes.reserve(2 * n / min_leaf + 1);
  nodes.emplace_back();
  std::vector<Span> stack{{0, n, 0}};

  while (!stack.empty()) {
    const Span s = stack.back();
    stack.pop_back();
    const std::size_t count = s.end - s.begin;

    double sum = 0, sumsq = 0;
    for (std::size_t i = s.begin; i < s.end; ++i) {
      const double v = data.y[idx[i]];
      sum += v;
      sumsq += v * v;
    }
    const double mean = sum / static_cast<double>(count);
    nodes[s.node].value = mean;
    const double sse = sumsq - sum * mean;
    if (count < 2 * min_leaf || sse <= 1e-12 * std::max(1.0, sumsq)) continue;

    int best_feature = -1;
    double best_threshold = 0;
    double best_gain = 0;
    for (std::size_t f = 0; f < data.cols; ++f) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (std::size_t i = s.begin; i < s.end; ++i) {
        const double v = data.x[idx[i] * data.cols + f];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (!(hi > lo)) continue;
      const double thr = std::uniform_real_distribution<double>(lo, hi)(rng);
      std::size_t nl = 0;
      double sl = 0, ql = 0;
      for (std::size_t i = s.begin; i < s.end; ++i) {
        if (data.x[idx[i] * data.cols + f] <= thr) {
          const double v = data.y[idx[i]];
          ++nl;
          sl += v;
          ql += v * v;
        }
      }
      const std::size_t nr = count - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      const double sr = sum - sl;
      const double qr = sumsq - ql;
      const double child = (ql - sl * sl / nl) + (qr - sr * sr / nr);
      const double gain = sse - child;
      if (gain > best_gain) {
        best_gain = gain;
        best_feature = static_cast<int>(f);
        best_threshold = thr;
      }
    }
    if (best_feature < 0) continue;

    const auto mid = std::partition(
        idx.begin() + s.begin, idx.begin() + s.end, [&](std::uint32_t r) {
          return data.x[r * data.cols + best_feature] <= best_threshold;
        });
    const std::size_t split = static_cast<std::size_t>(mid - idx.begin());
    const int left = static_cast<int>(nodes.size());
    nodes.emplace_back();
    nodes.emplace_back();
    nodes[s.node].feature = best_feature;
    nodes[s.node].threshold = best_threshold;
    nodes[s.node].left = left;
    nodes[s.node].right = left + 1;
    stack.push_back({split, s.end, left + 1});
    stack.push_back({s.begin, split, left});
  }
  return nodes;
}

}  // namespace

ExtraTrees ExtraTrees::fit(const Dataset& data, const ForestParams& params, Exec exec) {
  if (data.rows() == 0) throw Error(ErrorCode::InvalidArgument, "empty training set");
  if (params.trees < 1) throw Error(ErrorCode::InvalidArgument, "need at least one tree");
  ExtraTrees model;
  model.cols_ = data.cols;
  model.trees_.resize(static_cast<std::size_t>(params.trees));
  for_each_index(model.trees_.size(), exec, [&](std::size_t t) {
    Rng rng = make_rng(params.seed, kTreeStream, t);
    model.trees_[t] = grow_tree(data, params, rng);
  });
  return model;
}

double ExtraTrees::predict(std::span<const double> features) const {
  if (features.size() != cols_) {
    throw Error(ErrorCode::InvalidArgument, "feature width mismatch");
  }
  double total = 0;
  for (const auto& tree : trees_) {
    int at = 0;
    while (tree[at].feature >= 0) {
      at = features[tree[at].feature] <= tree[at].threshold ? tree[at].left
                                                            : tree[at].right;
    }
    total += tree[at].value;
  }
  return total / static_cast<double>(trees_.size());
}

bool operator==(const ExtraTrees& a, const ExtraTrees& b) {
  if (a.cols_ != b.cols_ || a.trees_.size() != b.trees_.size()) return false;
  for (std::size_t t = 0; t < a.trees_.size(); ++t) {
    const auto& x = a.trees_[t];
    const auto& y = b.trees_[t];
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].feature != y[i].feature || x[i].threshold != y[i].threshold ||
          x[i].left != y[i].left || x[i].right != y[i].right ||
          x[i].value != y[i].value) {
        return false;
      }
    }
  }
  return true;
}

// Trees are stored column-wise to keep snapshots compact.
json ExtraTrees::to_json() const {
  json trees = json::array();
  for (const auto& tree : trees_) {
    json f = json::array(), t = json::array(), l = json::array(),
         r = json::array(), v = json::array();
    for (const auto& node : tree) {
      f.push_back(node.feature);
      t.push_back(node.threshold);
      l.push_back(node.left);
      r.push_back(node.right);
      v.push_back(node.value);
    }
    trees.push_back({{"feature", f}, {"threshold", t}, {"left", l}, {"right", r}, {"value", v}});
  }
  return {{"cols", cols_}, {"trees", trees}};
}

ExtraTrees ExtraTrees::from_json(const json& j) {
  ExtraTrees model;
  model.cols_ = j.at("cols").get<std::size_t>();
  for (const auto& jt : j.at("trees")) {
    const auto f = jt.at("feature").get<std::vector<int>>();
    const auto t = jt.at("threshold").get<std::vector<double>>();
    const auto l = jt.at("left").get<std::vector<int>>();
    const auto r = jt.at("right").get<std::vector<int>>();
    const auto v = jt.at("value").get<std::vector<double>>();
    const std::size_t n = f.size();
    if (n == 0 || t.size() != n || l.size() != n || r.size() != n || v.size() != n) {
      throw Error(ErrorCode::Malformed, "inconsistent tree arrays");
    }
    std::vector<TreeNode> tree(n);
    for (std::size_t i = 0; i < n; ++i) {
      tree[i] = {f[i], t[i], l[i], r[i], v[i]};
      if (f[i] >= 0) {
        // Children always follow their parent; this also rules out cycles.
        const auto ok = [&](int c) { return c > static_cast<int>(i) && c < static_cast<int>(n); };
        if (static_cast<std::size_t>(f[i]) >= model.cols_ || !ok(l[i]) || !ok(r[i])) {
          throw Error(ErrorCode::Malformed, "bad tree node");
        }
      }
    }
    model.trees_.push_back(std::move(tree));
  }
  if (model.trees_.empty()) throw Error(ErrorCode::Malformed, "forest without trees");
  return model;
}

KnnRegressor KnnRegressor::fit(Dataset data, const KnnParams& params) {
  if (data.rows() == 0) throw Error(ErrorCode::InvalidArgument, "empty training set");
  if (params.k < 1) throw Error(ErrorCode::InvalidArgument, "k must be positive");
  KnnRegressor model;
  model.data_ = std::move(data);
  model.k_ = params.k;
  return model;
}

double KnnRegressor::predict(std::span<const double> features) const {
  if (features.size() != data_.cols) {
    throw Error(ErrorCode::InvalidArgument, "feature width mismatch");
  }
  const std::size_t n = data_.rows();
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = data_.row(i);
    double d2 = 0;
    for (std::size_t c = 0; c < data_.cols; ++c) {
      const double diff = r[c] - features[c];
      d2 += diff * diff;
    }
    dist[i] = {d2, i};
  }
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(k_), n);
  std::partial_sort(dist.begin(), dist.begin() + k, dist.end());

  double exact_sum = 0;
  std::size_t exact = 0;
  double wsum = 0, vsum = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double y = data_.y[dist[i].second];
    if (dist[i].first == 0) {
      exact_sum += y;
      ++exact;
    } else {
      const double w = 1.0 / std::sqrt(dist[i].first);
      wsum += w;
      vsum += w * y;
    }
  }
  if (exact > 0) return exact_sum / static_cast<double>(exact);
  return vsum / wsum;
}

json KnnRegressor::to_json() const {
  return {{"k", k_}, {"cols", data_.cols}, {"x", data_.x}, {"y", data_.y}};
}

KnnRegressor KnnRegressor::from_json(const json& j) {
  KnnRegressor model;
  model.k_ = j.at("k").get<int>();
  model.data_.cols = j.at("cols").get<std::size_t>();
  model.data_.x = j.at("x").get<std::vector<double>>();
  model.data_.y = j.at("y").get<std::vector<double>>();
  if (model.k_ < 1 || model.data_.y.empty() ||
      model.data_.x.size() != model.data_.y.size() * model.data_.cols) {
    throw Error(ErrorCode::Malformed, "inconsistent neighbour table");
  }
  return model;
}

}  // namespace hwfp
