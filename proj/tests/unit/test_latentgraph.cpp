#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "vhp/error.hpp"
#include "vhp/latentgraph/graph.hpp"

using namespace vhp;
using namespace vhp::latentgraph;

namespace {

std::set<std::pair<std::size_t, std::size_t>> edge_set(const LatentGraph& g) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (const Edge& e : g.neighbours(i)) out.insert({std::min(i, e.to), std::max(i, e.to)});
  }
  return out;
}

void check_invariants(const LatentGraph& g) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (const Edge& e : g.neighbours(i)) {
      CHECK(e.to != i);
      CHECK(e.weight == euclidean(g.point(i), g.point(e.to)));
      bool back = false;
      for (const Edge& r : g.neighbours(e.to)) back = back || (r.to == i && r.weight == e.weight);
      CHECK(back);
    }
  }
}

// Clustered points so some random graphs split into components.
Tensor random_points(std::size_t n, std::size_t dim, Rng& rng) {
  Tensor p = oracle::random_matrix(n, dim, rng);
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.uniform() < 0.3) p(i, 0) += 10.0;
  }
  return p;
}

std::size_t pick(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

}  // namespace

TEST_CASE("collinear points with k = 1") {
  const LatentGraph g = build_graph(Tensor({3, 1}, {0.0, 1.0, 3.0}), 1);
  CHECK(edge_set(g) == std::set<std::pair<std::size_t, std::size_t>>{{0, 1}, {1, 2}});
  CHECK(g.neighbours(2).at(0).weight == 2.0);
  CHECK_THROWS(build_graph(Tensor({3, 1}, {0.0, 1.0, 3.0}), 3));
}

TEST_CASE("neighbour sets match the brute-force oracle") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const std::size_t n = 30 + seed, k = 1 + seed % 6;
    const Tensor pts = random_points(n, 2 + seed % 3, rng);
    const LatentGraph g = build_graph(pts, k);
    check_invariants(g);
    std::set<std::pair<std::size_t, std::size_t>> want;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j : oracle::brute_knn(pts, i, k, n)) want.insert({std::min(i, j), std::max(i, j)});
      CHECK(nearest(g, pts.row(i), k, n, i) == oracle::brute_knn(pts, i, k, n));
    }
    CHECK(edge_set(g) == want);
  }
}

TEST_CASE("distance ties in k-NN go to the lower id") {
  // Node 0 is equidistant from 1 and 2.
  const Tensor pts({4, 1}, {0.0, -1.0, 1.0, 5.0});
  const std::vector<std::size_t> got = nearest(build_graph(pts, 1), pts.row(0), 1, 4, 0);
  CHECK(got == std::vector<std::size_t>{1});
}

TEST_CASE("inserting nodes") {
  Rng rng(8);
  const Tensor pts = oracle::random_matrix(40, 2, rng);
  LatentGraph g = build_graph(pts, 4);
  const auto before = edge_set(g);

  const std::size_t id = add_node(g, pts.row(7));
  CHECK(id == 40);
  bool zero_edge = false;
  for (const Edge& e : g.neighbours(id)) zero_edge = zero_edge || (e.to == 7 && e.weight == 0.0);
  CHECK(zero_edge);

  std::vector<double> q{0.3, -0.2};
  const std::size_t id2 = add_node(g, q);
  Tensor all({42, 2});
  for (std::size_t i = 0; i < 42; ++i) {
    all(i, 0) = g.point(i)[0];
    all(i, 1) = g.point(i)[1];
  }
  std::set<std::size_t> got;
  for (const Edge& e : g.neighbours(id2)) got.insert(e.to);
  const auto want = oracle::brute_knn(all, id2, 4, id2);
  CHECK(got == std::set<std::size_t>(want.begin(), want.end()));

  auto after = edge_set(g);
  std::set<std::pair<std::size_t, std::size_t>> old_only;
  for (auto e : after) {
    if (e.first < 40 && e.second < 40) old_only.insert(e);
  }
  CHECK(old_only == before);
  check_invariants(g);
}

TEST_CASE("insert_queries encodes to posterior means") {
  stochastic::VhpModel model = oracle::tiny_model(2, false, stochastic::Likelihood::gaussian, 0.3, 2);
  LatentGraph g = build_graph(model, 30, 3, 5);
  CHECK(g.size() == 30);
  Rng rng(1);
  const Tensor x = oracle::random_matrix(2, model.config().dim_x, rng);
  const auto [a, b] = insert_queries(g, model, x.row(0), x.row(1));
  CHECK(a == 30);
  CHECK(b == 31);
  const Tensor means = encode_means(model, x);
  CHECK(g.point(a)[0] == means(0, 0));
  CHECK(g.point(b)[1] == means(1, 1));
  CHECK(g.neighbours(a).size() >= 3);
}

TEST_CASE("prior-sampled graphs are deterministic given the seed") {
  stochastic::VhpModel model = oracle::tiny_model(3, false, stochastic::Likelihood::gaussian, 0.3, 2);
  const LatentGraph a = build_graph(model, 50, 4, 9);
  const LatentGraph b = build_graph(model, 50, 4, 9);
  CHECK(edge_set(a) == edge_set(b));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.point(i)[0] == b.point(i)[0]);
  CHECK_THROWS(build_graph(model, 4, 4, 9));
}

TEST_CASE("shortest path examples") {
  const Tensor sq({4, 2}, {0, 0, 1, 0, 0, 1, 1, 1});
  const LatentGraph g = build_graph(sq, 2);
  const PathResult p = shortest_path(g, 0, 3);
  CHECK(p.length == 2.0);
  CHECK(p.nodes == std::vector<std::size_t>{0, 1, 3});
  CHECK(p.latents.rows() == 3);
  CHECK(p.latents(1, 0) == 1.0);

  const PathResult self = shortest_path(g, 2, 2);
  CHECK(self.nodes == std::vector<std::size_t>{2});
  CHECK(self.length == 0.0);

  LatentGraph split = build_graph(Tensor({4, 1}, {0.0, 0.1, 9.0, 9.1}), 1);
  CHECK_THROWS_AS(shortest_path(split, 0, 3), NoPathError);
  CHECK_THROWS(shortest_path(split, 0, 17));
}

TEST_CASE("A* equals Dijkstra on 100 random graphs") {
  std::size_t disconnected = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(1000 + seed);
    const std::size_t n = 20 + pick(rng, 60);
    const LatentGraph g = build_graph(random_points(n, 2 + seed % 3, rng), 1 + pick(rng, 5));
    for (int q = 0; q < 5; ++q) {
      const std::size_t a = pick(rng, n), b = pick(rng, n);
      const double want = oracle::dijkstra(g, a, b);
      if (std::isinf(want)) {
        ++disconnected;
        CHECK_THROWS_AS(shortest_path(g, a, b), NoPathError);
        continue;
      }
      const PathResult p = shortest_path(g, a, b);
      CHECK(p.length == want);
      CHECK(p.nodes.front() == a);
      CHECK(p.nodes.back() == b);
      double sum = 0.0;
      for (std::size_t i = 1; i < p.nodes.size(); ++i) {
        bool adjacent = false;
        for (const Edge& e : g.neighbours(p.nodes[i - 1])) adjacent = adjacent || e.to == p.nodes[i];
        CHECK(adjacent);
        sum += euclidean(g.point(p.nodes[i - 1]), g.point(p.nodes[i]));
      }
      CHECK(sum == doctest::Approx(p.length).epsilon(1e-12));
    }
  }
  // Make sure the no-path branch was exercised.
  CHECK(disconnected > 0);
}

TEST_CASE("path lengths obey the triangle inequality") {
  Rng rng(77);
  const LatentGraph g = build_graph(oracle::random_matrix(60, 2, rng), 5);
  for (int i = 0; i < 200; ++i) {
    const std::size_t a = pick(rng, 60), b = pick(rng, 60), c = pick(rng, 60);
    if (std::isinf(oracle::dijkstra(g, a, b)) || std::isinf(oracle::dijkstra(g, a, c)) ||
        std::isinf(oracle::dijkstra(g, c, b))) {
      continue;
    }
    CHECK(shortest_path(g, a, b).length <=
          shortest_path(g, a, c).length + shortest_path(g, c, b).length + 1e-9);
  }
}

TEST_CASE("decode_path") {
  stochastic::VhpModel model = oracle::tiny_model(4, false, stochastic::Likelihood::gaussian, 0.3, 2);
  const LatentGraph g = build_graph(model, 25, 3, 2);
  const PathResult single = shortest_path(g, 5, 5);
  const Tensor one = decode_path(model, single);
  CHECK(one.rows() == 1);
  CHECK(one.cols() == model.config().dim_x);

  const PathResult p = shortest_path(g, 0, 0);
  CHECK(decode_path(model, p) == decode_path(model, p));
  CHECK(decode_latents(model, single.latents) == one);

  stochastic::VhpModel bern = oracle::tiny_model(4, true, stochastic::Likelihood::bernoulli, 0.0, 2);
  const Tensor probs = decode_latents(bern, single.latents);
  for (double v : probs.data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("smoothness factor") {
  const Tensor line({4, 2}, {0, 5, 1, 3, 2, 1, 3, -1});
  const Smoothness s = smoothness_factor(line);
  CHECK(s.per_feature == std::vector<double>{0.0, 0.0});
  CHECK(s.aggregate == 0.0);

  CHECK(smoothness_factor(Tensor({3, 1}, {0, 1, 0})).aggregate == 2.0);

  Rng rng(6);
  const Tensor seq = oracle::random_matrix(9, 3, rng);
  Tensor shifted = seq;
  for (std::size_t t = 0; t < 9; ++t) {
    for (std::size_t d = 0; d < 3; ++d) shifted(t, d) += 4.0 * (d + 1);
  }
  const Smoothness a = smoothness_factor(seq), b = smoothness_factor(shifted);
  for (std::size_t d = 0; d < 3; ++d) CHECK(a.per_feature[d] == doctest::Approx(b.per_feature[d]).epsilon(1e-12));

  // Hand-computed: second differences of [0, 1, 3, 2] are 1 and -3.
  CHECK(smoothness_factor(Tensor({4, 1}, {0, 1, 3, 2})).aggregate == doctest::Approx(std::sqrt(5.0)).epsilon(1e-15));
  CHECK_THROWS(smoothness_factor(Tensor({2, 3})));
}

TEST_CASE("straight line endpoints and spacing") {
  const std::vector<double> a{0.0, 1.0}, b{2.0, -1.0};
  const Tensor l = straight_line(a, b, 5);
  CHECK(l.rows() == 5);
  CHECK(l(0, 0) == 0.0);
  CHECK(l(4, 1) == -1.0);
  CHECK(l(2, 0) == doctest::Approx(1.0));
  CHECK(smoothness_factor(l).aggregate == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("path CSV and PGM strip") {
  const LatentGraph g = build_graph(Tensor({4, 2}, {0, 0, 1, 0, 0, 1, 1, 1}), 2);
  std::ostringstream csv;
  write_path_csv(shortest_path(g, 0, 3), csv);
  CHECK(csv.str().rfind("node,z0,z1\n0,", 0) == 0);

  Tensor frames({2, 6}, {0, 0.5, 1, 0.25, 0.75, 1, 1, 1, 1, 0, 0, 0});
  std::ostringstream pgm;
  write_pgm_strip(frames, 2, 3, pgm);
  const std::string s = pgm.str();
  const std::string header = "P5\n6 2\n255\n";
  REQUIRE(s.rfind(header, 0) == 0);
  REQUIRE(s.size() == header.size() + 12);
  const auto px = [&](std::size_t r, std::size_t c) {
    return static_cast<unsigned char>(s[header.size() + r * 6 + c]);
  };
  CHECK(px(0, 0) == 0);
  CHECK(px(0, 2) == 255);
  CHECK(px(0, 3) == 255);
  CHECK(px(1, 3) == 0);
  CHECK(px(1, 1) == 191);
}
