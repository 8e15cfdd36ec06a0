#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "vhp/stochastic/model.hpp"

namespace vhp::latentgraph {

using diffcore::Tensor;
using stochastic::VhpModel;

struct Edge {
  std::size_t to;
  double weight;
};

/// Undirected k-NN graph over latent points. Adjacency lists are sorted by neighbour id.
class LatentGraph {
 public:
  LatentGraph(std::size_t dim, std::size_t k);

  std::size_t dim() const { return dim_; }
  std::size_t k() const { return k_; }
  std::size_t size() const { return adjacency_.size(); }

  std::span<const double> point(std::size_t i) const;
  const std::vector<Edge>& neighbours(std::size_t i) const { return adjacency_.at(i); }
  std::size_t edge_count() const;

  /// Appends a node without edges; returns its id.
  std::size_t push_point(std::span<const double> p);
  /// Adds the undirected edge weighted by the Euclidean distance (no-op if present).
  void connect(std::size_t a, std::size_t b);

 private:
  std::size_t dim_;
  std::size_t k_;
  std::vector<double> coords_;
  std::vector<std::vector<Edge>> adjacency_;
};

double euclidean(std::span<const double> a, std::span<const double> b);

/// The k nearest nodes to `p` among ids [0, limit), by (distance, id); `exclude` is skipped.
std::vector<std::size_t> nearest(const LatentGraph& g, std::span<const double> p, std::size_t k, std::size_t limit,
                                 std::size_t exclude = static_cast<std::size_t>(-1));

/// Union of every point's k nearest neighbours (exact, brute force). Throws when n <= k.
LatentGraph build_graph(const Tensor& points, std::size_t k);
/// Nodes drawn from the model's hierarchical prior.
LatentGraph build_graph(const VhpModel& model, std::size_t n, std::size_t k, std::uint64_t seed);

/// Adds `p` as a node wired to its k nearest existing nodes.
std::size_t add_node(LatentGraph& g, std::span<const double> p);

/// Encodes both observations to posterior means and adds them in order, so the
/// second query may link to the first.
std::pair<std::size_t, std::size_t> insert_queries(LatentGraph& g, const VhpModel& model, std::span<const double> x_i,
                                                   std::span<const double> x_j);

struct PathResult {
  std::vector<std::size_t> nodes;
  Tensor latents;  // [nodes x dim]
  double length = 0.0;
};

/// A* with the Euclidean heuristic. Among equal-length routes fewer hops win, then the
/// lower-id predecessor. Throws NoPathError across components.
PathResult shortest_path(const LatentGraph& g, std::size_t a, std::size_t b);

/// Posterior means of a batch of observations, [n x dim_z].
Tensor encode_means(const VhpModel& model, const Tensor& x);
/// Decoder means for each row of `z`, [n x dim_x].
Tensor decode_latents(const VhpModel& model, const Tensor& z);
Tensor decode_path(const VhpModel& model, const PathResult& path);

/// `count` evenly spaced points from a to b inclusive.
Tensor straight_line(std::span<const double> a, std::span<const double> b, std::size_t count);

struct Smoothness {
  std::vector<double> per_feature;
  double aggregate = 0.0;  // mean over features
};

/// RMS over interior points of x[t+1] - 2 x[t] + x[t-1], per column of a [T x D] sequence.
Smoothness smoothness_factor(const Tensor& sequence);

/// Header "node,z0,z1,..." then one row per path node.
void write_path_csv(const PathResult& path, std::ostream& out);
/// Binary P5 strip: frames side by side, each `height x width`, values in [0, 1] scaled to 0..255.
void write_pgm_strip(const Tensor& frames, std::size_t height, std::size_t width, std::ostream& out);

}  // namespace vhp::latentgraph
