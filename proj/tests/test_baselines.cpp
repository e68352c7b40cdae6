#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "cntm/baselines.hpp"
#include "cntm/harness.hpp"

using namespace cntm;
using namespace cntm::baselines;
using graphs::ConditionalGraph;
using graphs::numbered;

namespace {

ConditionalGraph make(std::vector<std::string> nodes, std::size_t conditions, std::vector<graphs::Edge> edges,
                      std::vector<std::size_t> finals) {
  ConditionalGraph g;
  g.id = "hand";
  g.nodes = std::move(nodes);
  g.conditions = numbered("c", conditions);
  g.edges = std::move(edges);
  g.finals = std::move(finals);
  g.canonicalize();
  return g;
}

}  // namespace

TEST(GraphDistance, StarCenterPicksNearestLeaf) {
  // n0 -> n1, n2, n3 ; n1 -> n4.
  auto g = make(numbered("n", 5), 3, {{0, 0, 1}, {0, 1, 2}, {0, 2, 3}, {1, 0, 4}}, {2, 3, 4});
  GraphDistancePredictor p(1);
  p.describe(g, {});
  const auto pick = p.query(std::string("n0"), "c0");
  ASSERT_TRUE(pick);
  EXPECT_EQ(*pick, "n1");
  EXPECT_EQ(p.rank(std::string("n1"), "c0"), "n4");
}

TEST(GraphDistance, ChainWithHeldOutMiddleLink) {
  // A -> B -> C -> D, with B -> C held out of the observed graph.
  auto full = make({"A", "B", "C", "D"}, 1, {{0, 0, 1}, {1, 0, 2}, {2, 0, 3}}, {3});
  graphs::LinkSplit split{{0, 2}, {1}};
  auto observed = graphs::observed_subgraph(full, split);
  GraphDistancePredictor p(1);
  p.describe(observed, {});
  EXPECT_EQ(p.query(std::string("B"), "c0"), std::optional<std::string>("C"));
}

TEST(GraphDistance, ShortestPathOracleOnRandomGraphs) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto g = graphs::generate_random_graph(8, seed);
    const std::size_t n = g.nodes.size();
    // Floyd-Warshall distances.
    const std::size_t inf = 1000;
    std::vector<std::vector<std::size_t>> d(n, std::vector<std::size_t>(n, inf));
    for (std::size_t v = 0; v < n; ++v) d[v][v] = 0;
    for (const auto& e : g.edges) d[e.source][e.target] = std::min<std::size_t>(d[e.source][e.target], 1);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
    GraphDistancePredictor p(seed);
    p.describe(g, {});
    for (std::size_t src = 0; src < n; ++src) {
      std::vector<bool> excluded(n, false);
      excluded[src] = true;
      for (const auto& e : g.edges)
        if (e.target == src) excluded[e.source] = true;
      std::optional<std::size_t> want;
      for (std::size_t v = 0; v < n; ++v)
        if (!excluded[v] && (!want || d[src][v] < d[src][*want])) want = v;
      if (!want) continue;
      EXPECT_EQ(p.rank(g.nodes[src], "c0"), g.nodes[*want]) << "seed " << seed << " src " << src;
    }
  }
}

TEST(GraphDistance, DeterministicAndFallsBackWithoutCurrent) {
  auto g = graphs::generate_random_graph(10, 3);
  GraphDistancePredictor a(5), b(5);
  a.describe(g, {});
  b.describe(g, {});
  for (int i = 0; i < 50; ++i) {
    const auto cur = i % 2 ? std::optional<std::string>(g.nodes[std::size_t(i) % 10]) : std::nullopt;
    EXPECT_EQ(a.query(cur, "c1"), b.query(cur, "c1"));
  }
  GraphDistancePredictor c(9);
  c.describe(g, {});
  const auto x = c.rank(std::string("not-a-node"), "c0");
  EXPECT_NE(std::find(g.nodes.begin(), g.nodes.end(), x), g.nodes.end());
}

TEST(Random, HitRateIsOneTenth) {
  auto g = make(numbered("n", 10), 1, {{0, 0, 1}}, {1});
  RandomPredictor p(11);
  p.describe(g, {});
  const int trials = 100000;
  int hits = 0;
  std::map<std::string, int> counts;
  for (int i = 0; i < trials; ++i) {
    const auto pick = *p.query(std::nullopt, "c0");
    hits += pick == "n1";
    ++counts[pick];
  }
  const double sigma = std::sqrt(trials * 0.1 * 0.9);
  EXPECT_LT(std::abs(hits - trials * 0.1), 3 * sigma);
  EXPECT_EQ(counts.size(), 10u);
}

TEST(Random, SeededRunsRepeat) {
  auto g = graphs::generate_random_graph(10, 1);
  RandomPredictor a(3), b(3), c(4);
  a.describe(g, {});
  b.describe(g, {});
  c.describe(g, {});
  std::vector<std::string> xa, xb, xc;
  for (int i = 0; i < 100; ++i) {
    xa.push_back(*a.query(std::nullopt, "c0"));
    xb.push_back(*b.query(std::nullopt, "c0"));
    xc.push_back(*c.query(std::nullopt, "c0"));
  }
  EXPECT_EQ(xa, xb);
  EXPECT_NE(xa, xc);
  RandomPredictor fresh(1);
  EXPECT_THROW(fresh.query(std::nullopt, "c0"), UsageError);
}

TEST(Lstm, FewerParametersThanCntmAtEqualWidths) {
  model::ModelConfig c;
  c.num_classes = 11;
  EXPECT_LT(model::param_layout(lstm_baseline_config(c)).scalar_count(), model::param_layout(c).scalar_count());
  c.controller_width = 8;
  c.head_width = 8;
  c.u_width = 8;
  c.memory_rows = 4;
  c.memory_width = 4;
  EXPECT_LT(model::param_layout(lstm_baseline_config(c)).scalar_count(), model::param_layout(c).scalar_count());
  EXPECT_FALSE(lstm_baseline_config(c).use_memory);
  EXPECT_EQ(lstm_baseline_config(c).head_width, c.head_width);
}

TEST(ModelPredictor, RepeatsAcrossDescribeCalls) {
  auto ds = graphs::generate_dataset(6, 2, 1, 1);
  model::ModelConfig c;
  c.controller_width = 6;
  c.head_width = 5;
  c.u_width = 4;
  c.memory_rows = 4;
  c.memory_width = 3;
  c.num_classes = ds.codebook.num_classes();
  auto params = model::init_params(c, 2);
  ModelPredictor p("cntm", params, c, ds.codebook);
  std::mt19937_64 rng(1);
  const auto& r = ds.records[0];
  auto desc = graphs::description_triples(r.graph, r.split, rng);
  auto observed = graphs::observed_subgraph(r.graph, r.split);
  std::vector<std::optional<std::string>> first, second;
  for (auto* out : {&first, &second}) {
    p.describe(observed, desc);
    out->push_back(p.query(std::string("n0"), "c3"));
    for (int i = 0; i < 5; ++i) out->push_back(p.query(std::nullopt, "c" + std::to_string(i)));
  }
  EXPECT_EQ(first, second);
}
