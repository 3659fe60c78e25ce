#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace escobar {

enum class Topology { periodic, interval };

struct Axis {
  std::size_t nodes = 0;
  double length = 1.0;
  Topology topology = Topology::periodic;

  /// Periodic axes carry `nodes` cells, interval axes `nodes - 1`.
  double spacing() const;
};

/// One flat boundary face: the low or high end of an interval axis.
struct Face {
  std::size_t axis = 0;
  bool high = false;
  std::vector<std::size_t> nodes;
  std::vector<double> weights;  // trapezoidal area weights
  std::size_t offset = 0;       // position of this face inside a BoundaryField
};

/// Tensor-product grid on a flat box. The last axis is the normal coordinate t;
/// nodes are stored row-major with the last axis fastest.
///
/// Interior quadrature is trapezoidal (half weights at interval endpoints, full
/// weights on periodic axes), and each interval axis contributes its two faces
/// to the boundary.
class Grid {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit Grid(std::vector<Axis> axes);

  /// Convenience: `n - 1` periodic lateral axes plus an interval normal axis.
  static Grid half_torus(std::size_t n, std::size_t lateral_nodes, std::size_t normal_nodes,
                         double lateral_length = 1.0, double normal_length = 1.0);

  std::size_t dim() const { return axes_.size(); }
  std::size_t size() const { return size_; }
  const Axis& axis(std::size_t a) const { return axes_[a]; }
  const std::vector<Axis>& axes() const { return axes_; }
  double spacing(std::size_t a) const { return spacing_[a]; }
  double max_spacing() const;
  std::size_t stride(std::size_t a) const { return stride_[a]; }

  std::size_t index_along(std::size_t node, std::size_t a) const {
    return (node / stride_[a]) % axes_[a].nodes;
  }
  double coordinate(std::size_t node, std::size_t a) const {
    return static_cast<double>(index_along(node, a)) * spacing_[a];
  }
  std::vector<double> coordinates(std::size_t node) const;

  /// Neighbor one step along axis `a` (dir = +1 or -1); npos past an interval end.
  std::size_t neighbor(std::size_t node, std::size_t a, int dir) const;
  std::span<const std::size_t> forward_table() const { return forward_; }
  std::span<const std::size_t> backward_table() const { return backward_; }

  /// One-dimensional trapezoid weight of index `i` along axis `a`.
  double axis_weight(std::size_t a, std::size_t i) const;

  std::span<const double> weights() const { return weights_; }
  const std::vector<Face>& faces() const { return faces_; }
  std::size_t boundary_size() const { return boundary_size_; }
  /// Per node: sum of the face weights of every face containing it.
  std::span<const double> boundary_weights() const { return boundary_weights_; }
  bool on_boundary(std::size_t node) const { return boundary_weights_[node] > 0.0; }

  double volume() const;
  double boundary_area() const;

  /// Same node counts with every length multiplied by `factor`.
  Grid scaled(double factor) const;

  bool operator==(const Grid& other) const;

 private:
  std::vector<Axis> axes_;
  std::vector<double> spacing_;
  std::vector<std::size_t> stride_;
  std::size_t size_ = 0;
  std::vector<double> weights_;
  std::vector<Face> faces_;
  std::size_t boundary_size_ = 0;
  std::vector<double> boundary_weights_;
  std::vector<std::size_t> forward_;
  std::vector<std::size_t> backward_;
};

}  // namespace escobar
