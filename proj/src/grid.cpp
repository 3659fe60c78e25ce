#include "escobar/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "escobar/errors.hpp"

namespace escobar {

double Axis::spacing() const {
  const auto cells = topology == Topology::periodic ? nodes : nodes - 1;
  return length / static_cast<double>(cells);
}

Grid::Grid(std::vector<Axis> axes) : axes_(std::move(axes)) {
  if (axes_.size() < 3) {
    throw InvalidArgument("grid dimension must be at least 3, got " + std::to_string(axes_.size()));
  }
  if (axes_.back().topology != Topology::interval) {
    throw InvalidArgument("the normal (last) axis must be an interval");
  }
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    const auto& ax = axes_[a];
    if (!(ax.length > 0.0) || !std::isfinite(ax.length)) {
      throw InvalidArgument("axis " + std::to_string(a) + ": length must be positive");
    }
    const std::size_t min_nodes = ax.topology == Topology::interval ? 4 : 3;
    if (ax.nodes < min_nodes) {
      throw InvalidArgument("axis " + std::to_string(a) + ": needs at least " +
                            std::to_string(min_nodes) + " nodes");
    }
  }

  const std::size_t d = axes_.size();
  spacing_.resize(d);
  stride_.resize(d);
  size_ = 1;
  for (std::size_t a = d; a-- > 0;) {
    spacing_[a] = axes_[a].spacing();
    stride_[a] = size_;
    size_ *= axes_[a].nodes;
  }

  weights_.assign(size_, 1.0);
  for (std::size_t i = 0; i < size_; ++i) {
    double w = 1.0;
    for (std::size_t a = 0; a < d; ++a) w *= axis_weight(a, index_along(i, a));
    weights_[i] = w;
  }

  forward_.assign(size_ * d, npos);
  backward_.assign(size_ * d, npos);
  for (std::size_t i = 0; i < size_; ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      forward_[i * d + a] = neighbor(i, a, +1);
      backward_[i * d + a] = neighbor(i, a, -1);
    }
  }

  boundary_weights_.assign(size_, 0.0);
  for (std::size_t a = 0; a < d; ++a) {
    if (axes_[a].topology != Topology::interval) continue;
    for (bool high : {false, true}) {
      Face face;
      face.axis = a;
      face.high = high;
      face.offset = boundary_size_;
      const std::size_t target = high ? axes_[a].nodes - 1 : 0;
      for (std::size_t i = 0; i < size_; ++i) {
        if (index_along(i, a) != target) continue;
        double w = 1.0;
        for (std::size_t b = 0; b < d; ++b) {
          if (b != a) w *= axis_weight(b, index_along(i, b));
        }
        face.nodes.push_back(i);
        face.weights.push_back(w);
        boundary_weights_[i] += w;
      }
      boundary_size_ += face.nodes.size();
      faces_.push_back(std::move(face));
    }
  }
}

Grid Grid::half_torus(std::size_t n, std::size_t lateral_nodes, std::size_t normal_nodes,
                      double lateral_length, double normal_length) {
  std::vector<Axis> axes(n, Axis{lateral_nodes, lateral_length, Topology::periodic});
  if (n > 0) axes.back() = Axis{normal_nodes, normal_length, Topology::interval};
  return Grid(std::move(axes));
}

double Grid::max_spacing() const { return *std::max_element(spacing_.begin(), spacing_.end()); }

std::vector<double> Grid::coordinates(std::size_t node) const {
  std::vector<double> x(dim());
  for (std::size_t a = 0; a < dim(); ++a) x[a] = coordinate(node, a);
  return x;
}

std::size_t Grid::neighbor(std::size_t node, std::size_t a, int dir) const {
  const std::size_t n = axes_[a].nodes;
  const std::size_t i = index_along(node, a);
  if (axes_[a].topology == Topology::periodic) {
    const std::size_t j = dir > 0 ? (i + 1) % n : (i + n - 1) % n;
    return node + j * stride_[a] - i * stride_[a];
  }
  if (dir > 0) return i + 1 < n ? node + stride_[a] : npos;
  return i > 0 ? node - stride_[a] : npos;
}

double Grid::axis_weight(std::size_t a, std::size_t i) const {
  const double h = spacing_[a];
  if (axes_[a].topology == Topology::interval && (i == 0 || i + 1 == axes_[a].nodes)) return 0.5 * h;
  return h;
}

double Grid::volume() const {
  double v = 1.0;
  for (const auto& ax : axes_) v *= ax.length;
  return v;
}

double Grid::boundary_area() const {
  double total = 0.0;
  for (std::size_t a = 0; a < dim(); ++a) {
    if (axes_[a].topology != Topology::interval) continue;
    total += 2.0 * volume() / axes_[a].length;
  }
  return total;
}

Grid Grid::scaled(double factor) const {
  if (!(factor > 0.0)) throw InvalidArgument("grid scale factor must be positive");
  auto axes = axes_;
  for (auto& ax : axes) ax.length *= factor;
  return Grid(std::move(axes));
}

bool Grid::operator==(const Grid& other) const {
  if (dim() != other.dim()) return false;
  for (std::size_t a = 0; a < dim(); ++a) {
    const auto& x = axes_[a];
    const auto& y = other.axes_[a];
    if (x.nodes != y.nodes || x.length != y.length || x.topology != y.topology) return false;
  }
  return true;
}

}  // namespace escobar
