#pragma once

#include <span>
#include <vector>

#include "rigkit/geometry.h"

namespace rigkit {

// Exact nearest-neighbor index over a static 3D point set.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points);

  // Index of the nearest point and its Euclidean distance. Ties resolve to
  // the lowest index. The tree must be nonempty.
  struct Neighbor {
    std::size_t index;
    double distance;
  };
  Neighbor Nearest(const Vec3& query) const;

  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    int left = -1;
    int right = -1;
    std::size_t begin = 0;
    std::size_t end = 0;
  };

  int Build(std::size_t begin, std::size_t end);
  void Search(int node, const Vec3& query, std::size_t* best,
              double* best_sq) const;

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace rigkit
