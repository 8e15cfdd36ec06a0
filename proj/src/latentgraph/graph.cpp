#include "vhp/latentgraph/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <queue>
#include <string>
#include <tuple>

#include "vhp/error.hpp"
#include "vhp/stochastic/objectives.hpp"

namespace vhp::latentgraph {

using diffcore::Shape;
using diffcore::Tape;

LatentGraph::LatentGraph(std::size_t dim, std::size_t k) : dim_(dim), k_(k) {
  if (dim == 0) throw DomainError("latent dimension must be positive");
  if (k == 0) throw DomainError("k must be at least 1");
}

std::span<const double> LatentGraph::point(std::size_t i) const {
  if (i >= size()) throw DomainError("node id " + std::to_string(i) + " out of range");
  return {coords_.data() + i * dim_, dim_};
}

std::size_t LatentGraph::edge_count() const {
  std::size_t twice = 0;
  for (const auto& adj : adjacency_) twice += adj.size();
  return twice / 2;
}

std::size_t LatentGraph::push_point(std::span<const double> p) {
  if (p.size() != dim_) throw ShapeError("point has " + std::to_string(p.size()) + " coordinates, graph has " + std::to_string(dim_));
  for (double v : p) {
    if (!std::isfinite(v)) throw NonFiniteError("graph node coordinates must be finite");
  }
  coords_.insert(coords_.end(), p.begin(), p.end());
  adjacency_.emplace_back();
  return adjacency_.size() - 1;
}

void LatentGraph::connect(std::size_t a, std::size_t b) {
  if (a == b) return;
  const double w = euclidean(point(a), point(b));
  auto insert = [&](std::size_t from, std::size_t to) {
    auto& adj = adjacency_[from];
    auto it = std::lower_bound(adj.begin(), adj.end(), to, [](const Edge& e, std::size_t id) { return e.to < id; });
    if (it == adj.end() || it->to != to) adj.insert(it, Edge{to, w});
  };
  insert(a, b);
  insert(b, a);
}

double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

std::vector<std::size_t> nearest(const LatentGraph& g, std::span<const double> p, std::size_t k, std::size_t limit,
                                 std::size_t exclude) {
  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(limit);
  for (std::size_t i = 0; i < limit; ++i) {
    if (i != exclude) cand.emplace_back(euclidean(p, g.point(i)), i);
  }
  const std::size_t take = std::min(k, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < take; ++i) out.push_back(cand[i].second);
  return out;
}

LatentGraph build_graph(const Tensor& points, std::size_t k) {
  if (points.rank() != 2) throw ShapeError("graph points must be an [n x d] matrix");
  const std::size_t n = points.rows();
  if (n <= k) throw DomainError("graph needs more nodes (" + std::to_string(n) + ") than neighbours (" + std::to_string(k) + ")");
  LatentGraph g(points.cols(), k);
  for (std::size_t i = 0; i < n; ++i) g.push_point(points.row(i));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : nearest(g, g.point(i), k, n, i)) g.connect(i, j);
  }
  return g;
}

LatentGraph build_graph(const VhpModel& model, std::size_t n, std::size_t k, std::uint64_t seed) {
  if (n <= k) throw DomainError("graph needs more nodes (" + std::to_string(n) + ") than neighbours (" + std::to_string(k) + ")");
  return build_graph(stochastic::prior_sample(model, n, seed).z, k);
}

std::size_t add_node(LatentGraph& g, std::span<const double> p) {
  const std::size_t existing = g.size();
  const std::size_t id = g.push_point(p);
  for (std::size_t j : nearest(g, p, g.k(), existing)) g.connect(id, j);
  return id;
}

std::pair<std::size_t, std::size_t> insert_queries(LatentGraph& g, const VhpModel& model, std::span<const double> x_i,
                                                   std::span<const double> x_j) {
  const std::size_t d = model.config().dim_x;
  if (x_i.size() != d || x_j.size() != d) throw ShapeError("query observations must have " + std::to_string(d) + " features");
  std::vector<double> both(x_i.begin(), x_i.end());
  both.insert(both.end(), x_j.begin(), x_j.end());
  const Tensor z = encode_means(model, Tensor(Shape{2, d}, std::move(both)));
  const std::size_t a = add_node(g, z.row(0));
  const std::size_t b = add_node(g, z.row(1));
  return {a, b};
}

PathResult shortest_path(const LatentGraph& g, std::size_t a, std::size_t b) {
  const std::size_t n = g.size();
  if (a >= n || b >= n) throw DomainError("path endpoints out of range");
  const double inf = std::numeric_limits<double>::infinity();
  constexpr std::size_t none = static_cast<std::size_t>(-1);
  std::vector<double> dist(n, inf);
  std::vector<std::size_t> hops(n, none);
  std::vector<std::size_t> pred(n, none);
  std::vector<bool> closed(n, false);
  const auto target = g.point(b);

  // (f, hops, id, g) ordered lexicographically, smallest first.
  using Entry = std::tuple<double, std::size_t, std::size_t, double>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  dist[a] = 0.0;
  hops[a] = 0;
  open.emplace(euclidean(g.point(a), target), 0, a, 0.0);

  auto better = [&](double d, std::size_t h, std::size_t p, std::size_t v) {
    if (d != dist[v]) return d < dist[v];
    if (h != hops[v]) return h < hops[v];
    return p < pred[v];
  };

  while (!open.empty()) {
    auto [f, h, u, du] = open.top();
    open.pop();
    if (du != dist[u] || h != hops[u]) continue;  // stale
    if (closed[u]) continue;
    closed[u] = true;
    if (u == b) break;
    for (const Edge& e : g.neighbours(u)) {
      const double nd = du + e.weight;
      const std::size_t nh = h + 1;
      if (dist[e.to] == inf || better(nd, nh, u, e.to)) {
        const bool improved_cost = nd < dist[e.to] || (nd == dist[e.to] && nh < hops[e.to]);
        dist[e.to] = nd;
        hops[e.to] = nh;
        pred[e.to] = u;
        // A rounding-level inconsistency of the heuristic can improve a closed node; reopen it.
        if (improved_cost) closed[e.to] = false;
        if (!closed[e.to]) open.emplace(nd + euclidean(g.point(e.to), target), nh, e.to, nd);
      }
    }
  }
  if (dist[b] == inf) throw NoPathError("no path between nodes " + std::to_string(a) + " and " + std::to_string(b));

  PathResult r;
  for (std::size_t v = b; v != none; v = pred[v]) r.nodes.push_back(v);
  std::reverse(r.nodes.begin(), r.nodes.end());
  r.length = dist[b];
  r.latents = Tensor(Shape{r.nodes.size(), g.dim()});
  for (std::size_t i = 0; i < r.nodes.size(); ++i) {
    const auto p = g.point(r.nodes[i]);
    std::copy(p.begin(), p.end(), r.latents.row(i).begin());
  }
  return r;
}

Tensor encode_means(const VhpModel& model, const Tensor& x) {
  Tape tape;
  stochastic::BoundModel m = stochastic::bind_outer(tape, model, false);
  return stochastic::encode(m, tape.constant(x)).mean.value();
}

Tensor decode_latents(const VhpModel& model, const Tensor& z) {
  Tape tape;
  stochastic::BoundModel m = stochastic::bind_outer(tape, model, false);
  return stochastic::decode(m, tape.constant(z)).mean.value();
}

Tensor decode_path(const VhpModel& model, const PathResult& path) { return decode_latents(model, path.latents); }

Tensor straight_line(std::span<const double> a, std::span<const double> b, std::size_t count) {
  if (a.size() != b.size()) throw ShapeError("straight_line endpoints differ in dimension");
  if (count < 2) throw DomainError("straight_line needs at least two points");
  Tensor out(Shape{count, a.size()});
  for (std::size_t t = 0; t < count; ++t) {
    const double u = static_cast<double>(t) / static_cast<double>(count - 1);
    for (std::size_t d = 0; d < a.size(); ++d) out(t, d) = (1.0 - u) * a[d] + u * b[d];
  }
  return out;
}

Smoothness smoothness_factor(const Tensor& seq) {
  if (seq.rank() != 2) throw ShapeError("smoothness needs a [T x D] sequence");
  const std::size_t T = seq.rows();
  if (T < 3) throw DomainError("smoothness needs at least 3 frames");
  Smoothness s;
  s.per_feature.assign(seq.cols(), 0.0);
  for (std::size_t d = 0; d < seq.cols(); ++d) {
    double acc = 0.0;
    for (std::size_t t = 1; t + 1 < T; ++t) {
      const double dd = seq(t + 1, d) - 2.0 * seq(t, d) + seq(t - 1, d);
      acc += dd * dd;
    }
    s.per_feature[d] = std::sqrt(acc / static_cast<double>(T - 2));
  }
  double total = 0.0;
  for (double v : s.per_feature) total += v;
  s.aggregate = total / static_cast<double>(seq.cols());
  return s;
}

void write_path_csv(const PathResult& path, std::ostream& out) {
  out << "node";
  for (std::size_t d = 0; d < path.latents.cols(); ++d) out << ",z" << d;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < path.nodes.size(); ++i) {
    out << path.nodes[i];
    for (std::size_t d = 0; d < path.latents.cols(); ++d) {
      std::snprintf(buf, sizeof buf, "%.17g", path.latents(i, d));
      out << ',' << buf;
    }
    out << '\n';
  }
}

void write_pgm_strip(const Tensor& frames, std::size_t height, std::size_t width, std::ostream& out) {
  if (frames.rank() != 2 || frames.cols() != height * width) {
    throw ShapeError("frames must be [n x " + std::to_string(height * width) + "]");
  }
  const std::size_t n = frames.rows();
  out << "P5\n" << n * width << ' ' << height << "\n255\n";
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t f = 0; f < n; ++f) {
      for (std::size_t x = 0; x < width; ++x) {
        const double v = std::clamp(frames(f, y * width + x), 0.0, 1.0);
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
    }
  }
}

}  // namespace vhp::latentgraph
