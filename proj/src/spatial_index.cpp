#include "tlsmon/spatial_index.hpp"

#include "tlsmon/error.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>

namespace tlsmon {
namespace {

constexpr std::uint32_t kLeafSize = 12;

struct Candidate {
  double d2;
  std::uint32_t index;
  bool operator<(const Candidate& o) const { return d2 < o.d2 || (d2 == o.d2 && index < o.index); }
};

// Bounded sorted list of the best k candidates.
class KBest {
 public:
  explicit KBest(std::size_t k) : k_(k) { items_.reserve(k + 1); }

  double worst() const { return items_.size() < k_ ? INFINITY : items_.back().d2; }

  void offer(Candidate c) {
    if (items_.size() == k_ && !(c < items_.back())) return;
    auto pos = std::upper_bound(items_.begin(), items_.end(), c);
    items_.insert(pos, c);
    if (items_.size() > k_) items_.pop_back();
  }

  const std::vector<Candidate>& items() const { return items_; }

 private:
  std::size_t k_;
  std::vector<Candidate> items_;
};

}  // namespace

SpatialIndex::SpatialIndex(std::vector<Point3> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<std::uint32_t>(points_.size()));
  }
}

int SpatialIndex::build(std::uint32_t begin, std::uint32_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= kLeafSize) return id;

  Point3 lo = points_[order_[begin]], hi = lo;
  for (auto i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all coincident: keep as leaf

  const auto mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[order_[mid]][axis];
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

std::vector<Neighbor> SpatialIndex::nearest(const Point3& query, std::size_t k) const {
  if (points_.empty()) throw Error(ErrorCode::EmptyInput, "nearest-neighbour query on empty cloud");
  if (k == 0) throw Error(ErrorCode::Parameter, "k must be at least 1");
  k = std::min(k, points_.size());
  KBest best(k);

  // Explicit stack; near child first so the bound tightens early.
  struct Item {
    int node;
    double bound;
  };
  std::vector<Item> stack;
  stack.reserve(64);
  stack.push_back({0, 0.0});
  while (!stack.empty()) {
    const auto [id, bound] = stack.back();
    stack.pop_back();
    if (bound > best.worst()) continue;
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (auto i = node.begin; i < node.end; ++i) {
        const auto idx = order_[i];
        best.offer({(points_[idx] - query).squaredNorm(), idx});
      }
      continue;
    }
    const double diff = query[node.axis] - node.split;
    const int near = diff < 0 ? node.left : node.right;
    const int far = diff < 0 ? node.right : node.left;
    stack.push_back({far, std::max(bound, diff * diff)});
    stack.push_back({near, bound});
  }

  std::vector<Neighbor> out;
  out.reserve(k);
  for (const auto& c : best.items()) out.push_back({c.index, std::sqrt(c.d2)});
  return out;
}

Neighbor SpatialIndex::nearest_one(const Point3& query) const { return nearest(query, 1).front(); }

std::optional<Neighbor> SpatialIndex::nearest_within(const Point3& query, double max_distance) const {
  if (points_.empty()) throw Error(ErrorCode::EmptyInput, "nearest-neighbour query on empty cloud");
  if (!(max_distance >= 0)) return std::nullopt;
  // Start from the cap so distant subtrees are never opened; the slack keeps
  // candidates whose rounded distance equals the cap.
  double best_d2 = max_distance * max_distance * (1.0 + 8 * std::numeric_limits<double>::epsilon());
  std::uint32_t best = std::numeric_limits<std::uint32_t>::max();
  struct Item {
    int node;
    double bound;
  };
  Item stack[128];
  int top = 0;
  stack[top++] = {0, 0.0};
  while (top > 0) {
    const auto [id, bound] = stack[--top];
    if (bound > best_d2) continue;
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (auto i = node.begin; i < node.end; ++i) {
        const auto idx = order_[i];
        const double d2 = (points_[idx] - query).squaredNorm();
        if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
          best_d2 = d2;
          best = idx;
        }
      }
      continue;
    }
    const double diff = query[node.axis] - node.split;
    const int near = diff < 0 ? node.left : node.right;
    const int far = diff < 0 ? node.right : node.left;
    stack[top++] = {far, std::max(bound, diff * diff)};
    stack[top++] = {near, bound};
  }
  if (best == std::numeric_limits<std::uint32_t>::max() || !(std::sqrt(best_d2) <= max_distance)) return std::nullopt;
  return Neighbor{best, std::sqrt(best_d2)};
}

std::vector<Neighbor> SpatialIndex::within_radius(const Point3& query, double radius) const {
  std::vector<Candidate> found;
  if (points_.empty()) return {};
  const double r2 = radius * radius;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (auto i = node.begin; i < node.end; ++i) {
        const auto idx = order_[i];
        const double d2 = (points_[idx] - query).squaredNorm();
        if (d2 <= r2) found.push_back({d2, idx});
      }
      continue;
    }
    const double diff = query[node.axis] - node.split;
    if (diff <= radius) stack.push_back(node.left);
    if (-diff <= radius) stack.push_back(node.right);
  }
  std::sort(found.begin(), found.end());
  std::vector<Neighbor> out;
  out.reserve(found.size());
  for (const auto& c : found) out.push_back({c.index, std::sqrt(c.d2)});
  return out;
}

void SpatialIndex::within_radius_unordered(const Point3& query, double radius, std::vector<std::uint32_t>& out) const {
  out.clear();
  if (points_.empty()) return;
  const double r2 = radius * radius;
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (node.axis < 0) {
      for (auto i = node.begin; i < node.end; ++i) {
        const auto idx = order_[i];
        if ((points_[idx] - query).squaredNorm() <= r2) out.push_back(idx);
      }
      continue;
    }
    const double diff = query[node.axis] - node.split;
    if (-diff <= radius) stack[top++] = node.right;
    if (diff <= radius) stack[top++] = node.left;
  }
}

std::vector<Neighbor> nearest_neighbors(const SpatialIndex& index, const Point3& query, std::size_t k) {
  return index.nearest(query, k);
}

}  // namespace tlsmon
