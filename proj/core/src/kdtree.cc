#include "rigkit/kdtree.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rigkit {
namespace {

constexpr std::size_t kLeafSize = 8;

}  // namespace

KdTree::KdTree(std::span<const Vec3> points)
    : points_(points.begin(), points.end()), order_(points.size()) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 1);
    Build(0, points_.size());
  }
}

int KdTree::Build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident: stay a leaf

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end, [&](std::size_t a, std::size_t b) {
                     return points_[a][axis] < points_[b][axis];
                   });
  const double split = points_[order_[mid]][axis];
  const int left = Build(begin, mid);
  const int right = Build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::Search(int node_id, const Vec3& query, std::size_t* best,
                    double* best_sq) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      const double d = (points_[idx] - query).squaredNorm();
      if (d < *best_sq || (d == *best_sq && idx < *best)) {
        *best_sq = d;
        *best = idx;
      }
    }
    return;
  }
  // Points left of `mid` have coordinate <= split and points right of it
  // have coordinate >= split, so the plane bound is valid on both sides.
  const double delta = query[node.axis] - node.split;
  const int near = delta < 0.0 ? node.left : node.right;
  const int far = delta < 0.0 ? node.right : node.left;
  Search(near, query, best, best_sq);
  if (delta * delta <= *best_sq) Search(far, query, best, best_sq);
}

KdTree::Neighbor KdTree::Nearest(const Vec3& query) const {
  RIGKIT_CHECK(!points_.empty(), ErrorCode::kInvalidInput,
               "nearest-neighbor query on an empty tree");
  std::size_t best = std::numeric_limits<std::size_t>::max();
  double best_sq = std::numeric_limits<double>::infinity();
  Search(0, query, &best, &best_sq);
  return {best, (points_[best] - query).norm()};
}

}  // namespace rigkit
