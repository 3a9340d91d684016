#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "support.hpp"
#include "tuned/errors.hpp"
#include "tuned/graph.hpp"

using namespace tuned;

namespace {

/// Direct evaluation of the adaptive-neighbour weights for one row.
std::vector<double> can_row_oracle(const std::vector<double>& d, std::size_t self, std::size_t k) {
  std::vector<std::size_t> order;
  for (std::size_t j = 0; j < d.size(); ++j)
    if (j != self) order.push_back(j);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
  const double phi = d[order[k]];
  double denom = k * phi;
  for (std::size_t l = 0; l < k; ++l) denom -= d[order[l]];
  std::vector<double> w(d.size(), 0.0);
  for (std::size_t l = 0; l < k; ++l) {
    w[order[l]] = denom > 1e-12 * std::max(1.0, k * phi) ? std::max(0.0, (phi - d[order[l]]) / denom) : 1.0 / k;
  }
  return w;
}

Tensor2D random_cloud(nn::Rng& rng, std::size_t n, std::size_t dim) { return test::random_tensor(n, dim, rng, -3, 3); }

}  // namespace

TEST_CASE("squared distance reference values") {
  CHECK(graph::pairwise_sq_dist(Tensor2D{{0}, {3}}) == Tensor2D{{0, 9}, {9, 0}});
  CHECK(graph::pairwise_sq_dist(Tensor2D{{1, 1}, {1, 1}}) == Tensor2D(2, 2));
  CHECK(graph::pairwise_sq_dist(Tensor2D{{0, 0}, {3, 4}})(0, 1) == 25.0);
  CHECK_THROWS_AS(graph::pairwise_sq_dist(Tensor2D{{1, 2}}), InputError);
}

TEST_CASE("adaptive neighbour weights reference values") {
  const auto d = graph::pairwise_sq_dist(Tensor2D{{0}, {1}, {10}});
  const auto m = graph::can_weights(d, 1);
  CHECK(m.weights(0, 1) == doctest::Approx(1.0));
  CHECK(m.weights(0, 2) == 0.0);

  Tensor2D equal(4, 4, 1.0);
  for (std::size_t i = 0; i < 4; ++i) equal(i, i) = 0.0;
  const auto u = graph::can_weights(equal, 2);
  for (std::size_t i = 0; i < 4; ++i) {
    int half = 0;
    for (std::size_t j = 0; j < 4; ++j) half += u.weights(i, j) == 0.5;
    CHECK(half == 2);
  }
  CHECK_THROWS_AS(graph::can_weights(d, 2), ConfigError);
  CHECK_THROWS_AS(graph::can_weights(d, 0), ConfigError);
}

TEST_CASE("adaptive neighbour weights match the direct formula") {
  nn::Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + rng.index(48), k = 1 + rng.index(n - 2);
    const auto d = graph::pairwise_sq_dist(random_cloud(rng, n, 1 + rng.index(4)));
    const auto m = graph::can_weights(d, k);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row(d.row(i).begin(), d.row(i).end());
      const auto expected = can_row_oracle(row, i, k);
      for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(m.weights(i, j) - expected[j]) < 1e-12);
    }
  }
}

TEST_CASE("graph invariants on random point clouds") {
  nn::Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + rng.index(48), k = 1 + rng.index(std::min<std::size_t>(n - 2, 10));
    const auto x = random_cloud(rng, n, 1 + rng.index(5));
    const auto m = graph::can_weights(graph::pairwise_sq_dist(x), k);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t positive = 0;
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(m.weights(i, j) >= 0.0);
        positive += m.weights(i, j) > 0.0;
        total += m.weights(i, j);
      }
      CHECK(positive <= k);
      CHECK(std::abs(total - 1.0) < 1e-9);
      CHECK(m.weights(i, i) == 0.0);
    }
    const auto a = graph::symmetrize(m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) CHECK(a.weights(i, j) == a.weights(j, i));

    const auto norm = graph::normalize_adj(a);
    const auto deg = graph::self_loop_degrees(a);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double expected = ((i == j ? 1.0 : 0.0) + a.weights(i, j)) / std::sqrt(deg[i] * deg[j]);
        CHECK(std::abs(norm(i, j) - expected) < 1e-12);
      }
    }
  }
}

TEST_CASE("symmetrize and normalize reference values") {
  graph::AdjacencyMatrix m{Tensor2D{{0, 1}, {0, 0}}};
  CHECK(graph::symmetrize(m).weights == Tensor2D{{0, 0.5}, {0.5, 0}});
  graph::AdjacencyMatrix s{Tensor2D{{0, 0.3}, {0.3, 0}}};
  CHECK(graph::symmetrize(s) == s);
  CHECK(graph::normalize_adj(graph::AdjacencyMatrix{Tensor2D(2, 2)}) == Tensor2D::identity(2));
  const auto half = graph::normalize_adj(graph::AdjacencyMatrix{Tensor2D{{0, 1}, {1, 0}}});
  CHECK(max_abs_diff(half, Tensor2D{{0.5, 0.5}, {0.5, 0.5}}) < 1e-15);
}

TEST_CASE("sparse products agree with dense ones") {
  nn::Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    Tensor2D dense = test::random_tensor(1 + rng.index(7), 1 + rng.index(7), rng);
    for (auto& x : dense.values())
      if (rng.uniform() < 0.5) x = 0.0;
    const auto sparse = graph::SparseMatrix::from_dense(dense);
    CHECK(sparse.to_dense() == dense);
    const auto b = test::random_tensor(dense.cols(), 3, rng);
    CHECK(max_abs_diff(sparse.multiply(b), matmul(dense, b)) < 1e-12);
    const auto c = test::random_tensor(dense.rows(), 2, rng);
    CHECK(max_abs_diff(sparse.multiply_transposed(c), matmul_tn(dense, c)) < 1e-12);
  }
}

TEST_CASE("neighbour graph pipeline and csv export") {
  nn::Rng rng(24);
  const auto x = random_cloud(rng, 12, 3);
  const auto g = graph::build_neighbor_graph(x, 3);
  CHECK(g.k == 3);
  CHECK(max_abs_diff(g.normalized.to_dense(), graph::normalize_adj(g.adjacency)) < 1e-15);
  std::ostringstream csv;
  graph::write_adjacency_csv(csv, g.adjacency);
  const std::string text = csv.str();
  CHECK(text.rfind("row,col,weight\n", 0) == 0);
  std::size_t nonzero = 0;
  for (double w : g.adjacency.weights.values()) nonzero += w != 0.0;
  CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == nonzero + 1);
}

TEST_CASE("queries attach to the training graph") {
  nn::Rng rng(25);
  const auto train = random_cloud(rng, 15, 2);
  const auto queries = random_cloud(rng, 4, 2);
  const auto g = graph::build_neighbor_graph(train, 3);
  const auto attach = graph::attach_queries(train, queries, g.degrees, 3).to_dense();
  REQUIRE(attach.rows() == 4);
  REQUIRE(attach.cols() == 19);
  const auto d = graph::cross_sq_dist(queries, train);
  for (std::size_t t = 0; t < 4; ++t) {
    std::vector<double> row(d.row(t).begin(), d.row(t).end());
    row.push_back(-1.0);  // stand-in self entry, excluded by the oracle
    const auto m = can_row_oracle(row, row.size() - 1, 3);
    for (std::size_t j = 0; j < 15; ++j) CHECK(std::abs(attach(t, j) - m[j] / std::sqrt(2.0 * g.degrees[j])) < 1e-12);
    for (std::size_t s = 0; s < 4; ++s) CHECK(attach(t, 15 + s) == (s == t ? 0.5 : 0.0));
  }
}

TEST_CASE("gcn reference values") {
  graph::GcnLayer layer(Tensor2D::identity(2), nn::Activation::identity);
  const Tensor2D x{{1, 2}, {3, 6}};
  CHECK(graph::gcn_forward(layer, Tensor2D::identity(2), x) == x);
  const auto mean = graph::gcn_forward(layer, Tensor2D{{0.5, 0.5}, {0.5, 0.5}}, x);
  CHECK(mean == Tensor2D{{2, 4}, {2, 4}});
  graph::GcnLayer fresh(2, 2, nn::Activation::relu);
  CHECK_THROWS_AS(fresh.backward(Tensor2D(2, 2)), StateError);
  CHECK_THROWS_AS(graph::gcn_forward(layer, Tensor2D::identity(3), x), ShapeError);
}

TEST_CASE("gcn gradients match central differences") {
  for (const auto act : {nn::Activation::identity, nn::Activation::relu, nn::Activation::softplus}) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      nn::Rng rng(seed);
      const std::size_t n = 3 + rng.index(6), din = 1 + rng.index(8), dout = 1 + rng.index(8);
      const auto adj = graph::build_neighbor_graph(random_cloud(rng, n, 2), 1 + rng.index(n - 2)).normalized;
      graph::GcnLayer layer(din, dout, act);
      layer.initialize(rng);
      const auto x = test::random_tensor(n, din, rng), w = test::random_tensor(n, dout, rng);
      layer.zero_grad();
      layer.forward(adj, x);
      const auto g = layer.backward(w);
      const auto fx = [&](const Tensor2D& in) { return test::dot(w, layer.infer(adj, in)); };
      CHECK(test::max_rel_error(g.features, test::numeric_gradient(fx, x)) < 1e-4);
      const auto fw = [&](const Tensor2D& wt) {
        graph::GcnLayer probe(wt, act);
        return test::dot(w, probe.infer(adj, x));
      };
      CHECK(test::max_rel_error(g.weights, test::numeric_gradient(fw, layer.weights())) < 1e-4);
    }
  }
}
